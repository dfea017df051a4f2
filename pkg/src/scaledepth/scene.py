"""Synthetic driving-scene renderer: ray-cast ground plane plus axis-aligned
boxes, procedural albedo with lane stripes, exact depth and poses.

The camera translates forward with a small yaw wiggle at a fixed height over
the ground, so the bottom-center rectangle of every frame images the ground,
and the rendered triplets come with exact metric ground truth.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from .camera import Intrinsics
from .fileio import write_intrinsics, write_pfm, write_poses, write_ppm


@dataclass(frozen=True)
class Box:
    """Axis-aligned box resting on the ground plane (world frame)."""

    x: float
    z: float
    size_x: float
    size_y: float
    size_z: float
    albedo: tuple[float, float, float]

    def bounds(self, ground_y: float):
        lo = np.array([self.x - self.size_x / 2, ground_y - self.size_y, self.z - self.size_z / 2])
        hi = np.array([self.x + self.size_x / 2, ground_y, self.z + self.size_z / 2])
        return lo, hi


@dataclass
class SceneSpec:
    height: int = 64
    width: int = 208
    cam_height: float = 1.65
    fx: float = 110.0
    fy: float = 110.0
    cx: float = 104.0
    cy: float = 32.0
    far_clip: float = 100.0
    checker_period: float = 1.6
    noise_octaves: int = 3
    noise_scale: float = 0.45
    texture_seed: int = 7
    lane_offsets: tuple[float, ...] = (-1.75, 1.75)
    lane_width: float = 0.14
    lane_period: float = 3.2
    lane_duty: float = 0.55
    lane_albedo: float = 0.95
    boxes: tuple[Box, ...] = ()
    forward_speed: float = 0.28
    yaw_rate: float = 0.0
    noise_sigma: float = 0.0

    def intrinsics(self) -> Intrinsics:
        return Intrinsics(self.fx, self.fy, self.cx, self.cy)


@dataclass
class Triplet:
    """Rendered frames with exact ground truth, all in the target frame."""

    prev: np.ndarray
    curr: np.ndarray
    next: np.ndarray
    depth: np.ndarray
    pose_prev: tuple[np.ndarray, np.ndarray]  # T_curr->prev as (R, t)
    pose_next: tuple[np.ndarray, np.ndarray]
    h_gt: float
    world_rotation: np.ndarray  # camera-to-world of the target frame
    world_center: np.ndarray


def _hash01(xi: np.ndarray, zi: np.ndarray, seed: float) -> np.ndarray:
    v = np.sin(xi * 127.1 + zi * 311.7 + seed * 74.7) * 43758.5453
    return v - np.floor(v)


def _value_noise(x: np.ndarray, z: np.ndarray, seed: float) -> np.ndarray:
    xi, zi = np.floor(x), np.floor(z)
    fx, fz = x - xi, z - zi
    ux = fx * fx * fx * (fx * (fx * 6 - 15) + 10)
    uz = fz * fz * fz * (fz * (fz * 6 - 15) + 10)
    h00 = _hash01(xi, zi, seed)
    h10 = _hash01(xi + 1, zi, seed)
    h01 = _hash01(xi, zi + 1, seed)
    h11 = _hash01(xi + 1, zi + 1, seed)
    return (h00 * (1 - ux) + h10 * ux) * (1 - uz) + (h01 * (1 - ux) + h11 * ux) * uz


def _smoothstep(edge: float, margin: float, v: np.ndarray) -> np.ndarray:
    t = np.clip((edge - v) / margin + 0.5, 0.0, 1.0)
    return t * t * (3 - 2 * t)


def ground_albedo(spec: SceneSpec, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Procedural road texture at world (x, z); returns (..., 3)."""
    p = spec.checker_period
    checker = np.tanh(3.0 * np.sin(np.pi * x / p) * np.sin(np.pi * z / p))
    base = 0.38 + 0.13 * checker
    amp, total = 1.0, 0.0
    for k in range(spec.noise_octaves):
        total = total + amp * (_value_noise(x * 0.7 * 2**k, z * 0.7 * 2**k, spec.texture_seed + k) - 0.5)
        amp *= 0.5
    base = base + spec.noise_scale * total

    lane = np.zeros_like(x)
    for x0 in spec.lane_offsets:
        across = _smoothstep(spec.lane_width / 2, 0.03, np.abs(x - x0))
        phase = (z / spec.lane_period) % 1.0
        along = _smoothstep(spec.lane_duty, 0.04, phase)
        lane = np.maximum(lane, across * along)

    tint = np.array([1.0, 0.97, 0.90])
    rgb = np.clip(base, 0.03, 0.97)[..., None] * tint
    return rgb * (1 - lane[..., None]) + spec.lane_albedo * lane[..., None]


def _box_albedo(spec: SceneSpec, box: Box, pts: np.ndarray) -> np.ndarray:
    wobble = _value_noise(
        3.1 * (pts[..., 0] + pts[..., 1]), 3.1 * (pts[..., 2] - pts[..., 1]), spec.texture_seed + 31
    )
    return np.clip(np.asarray(box.albedo) * (0.72 + 0.5 * wobble[..., None]), 0.0, 1.0)


def _sky_color(dirs_w: np.ndarray) -> np.ndarray:
    up = np.clip(-dirs_w[..., 1] / np.linalg.norm(dirs_w, axis=-1), 0.0, 1.0)
    base = np.array([0.55, 0.65, 0.85])
    return base[None, None] + 0.25 * up[..., None] * np.array([0.0, 0.05, 0.12])


def yaw_matrix(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def render_frame(spec: SceneSpec, rotation: np.ndarray, center: np.ndarray, rng=None):
    """Ray-cast one frame from a camera-to-world pose.

    Returns (image (3,H,W) in [0,1], depth (H,W)). Depth is the camera-frame
    z of the nearest hit from the pixel-center ray; albedo is averaged over a
    2x2 subpixel grid for a smoother photometric landscape. Sky and beyond
    far-clip hits take far_clip depth.
    """
    h, w = spec.height, spec.width
    k = spec.intrinsics()
    ground_y = spec.cam_height + center[1]

    def cast(du, dv, want_depth):
        u = np.arange(w, dtype=np.float64) + du
        v = np.arange(h, dtype=np.float64) + dv
        uu, vv = np.meshgrid(u, v)
        dirs_c = np.stack([(uu - k.cx) / k.fx, (vv - k.cy) / k.fy, np.ones_like(uu)], axis=-1)
        dirs_w = dirs_c @ rotation.T

        t_hit = np.full((h, w), np.inf)
        color = _sky_color(dirs_w).astype(np.float64).copy()
        color = np.broadcast_to(color, (h, w, 3)).copy()

        dy = dirs_w[..., 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_ground = (ground_y - center[1]) / dy
        ok = (dy > 1e-9) & (t_ground > 0) & (t_ground <= spec.far_clip)
        pts = center + t_ground[..., None] * dirs_w
        gcol = ground_albedo(spec, pts[..., 0], pts[..., 2])
        t_hit = np.where(ok, t_ground, t_hit)
        color = np.where(ok[..., None], gcol, color)

        for box in spec.boxes:
            lo, hi = box.bounds(ground_y)
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (lo - center) / dirs_w
                t2 = (hi - center) / dirs_w
            tmin = np.minimum(t1, t2).max(axis=-1)
            tmax = np.maximum(t1, t2).min(axis=-1)
            hit = (tmax >= tmin) & (tmin > 1e-6) & (tmin < t_hit) & (tmin <= spec.far_clip)
            if hit.any():
                pts = center + tmin[..., None] * dirs_w
                bcol = _box_albedo(spec, box, pts)
                t_hit = np.where(hit, tmin, t_hit)
                color = np.where(hit[..., None], bcol, color)

        depth = np.where(np.isfinite(t_hit), t_hit, spec.far_clip)
        return (depth, color) if want_depth else (None, color)

    depth, color = cast(0.0, 0.0, True)
    acc = color
    for du, dv in ((-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)):
        acc = acc + cast(du, dv, False)[1]
    image = (acc / 5.0).transpose(2, 0, 1)
    if spec.noise_sigma > 0 and rng is not None:
        image = image + rng.normal(0.0, spec.noise_sigma, image.shape)
    return np.clip(image, 0.0, 1.0).astype(np.float32), depth.astype(np.float64)


def _relative_pose(r_t, c_t, r_s, c_s):
    """T_target->source: maps target-camera points into the source camera."""
    return r_s.T @ r_t, r_s.T @ (c_t - c_s)


def sample_scene(base: SceneSpec, rng: np.random.Generator, start_z: float = 0.0) -> tuple[SceneSpec, float, float]:
    """Randomized boxes and trajectory for one triplet. Boxes keep a lateral
    margin from the camera path so the prior rectangle always images ground."""
    boxes = []
    for _ in range(int(rng.integers(2, 5))):
        side = 1.0 if rng.random() < 0.5 else -1.0
        boxes.append(
            Box(
                x=side * rng.uniform(1.9, 4.5),
                z=start_z + rng.uniform(5.0, 20.0),
                size_x=rng.uniform(0.4, 1.3),
                size_y=rng.uniform(0.5, 1.6),
                size_z=rng.uniform(0.4, 1.3),
                albedo=tuple(rng.uniform(0.25, 0.95, 3)),
            )
        )
    spec = replace(
        base,
        boxes=tuple(boxes),
        forward_speed=rng.uniform(0.22, 0.34),
        yaw_rate=rng.uniform(-0.008, 0.008),
    )
    yaw0 = rng.uniform(-0.03, 0.03)
    x0 = rng.uniform(-0.25, 0.25)
    return spec, yaw0, x0


def make_triplet(spec: SceneSpec, yaw0: float, x0: float, start_z: float, rng=None) -> Triplet:
    """Render three consecutive frames and package exact ground truth."""
    rotations, centers = [], []
    yaw = yaw0
    pos = np.array([x0, 0.0, start_z])
    for _ in range(3):
        r = yaw_matrix(yaw)
        rotations.append(r)
        centers.append(pos.copy())
        pos = pos + r @ np.array([0.0, 0.0, spec.forward_speed])
        yaw += spec.yaw_rate
    frames = [render_frame(spec, r, c, rng) for r, c in zip(rotations, centers)]
    return Triplet(
        prev=frames[0][0],
        curr=frames[1][0],
        next=frames[2][0],
        depth=frames[1][1],
        pose_prev=_relative_pose(rotations[1], centers[1], rotations[0], centers[0]),
        pose_next=_relative_pose(rotations[1], centers[1], rotations[2], centers[2]),
        h_gt=spec.cam_height,
        world_rotation=rotations[1],
        world_center=centers[1],
    )


def generate_dataset(base: SceneSpec, n_triplets: int, seed: int, out_dir) -> None:
    """Write n_triplets rendered triplets in the on-disk layout; byte-for-byte
    deterministic for a given seed."""
    if n_triplets < 1:
        raise ValueError("n_triplets must be at least 1")
    os.makedirs(out_dir, exist_ok=True)
    write_intrinsics(os.path.join(out_dir, "intrinsics.txt"), base.fx, base.fy, base.cx, base.cy)
    with open(os.path.join(out_dir, "h_gt.txt"), "w") as fh:
        fh.write(f"{base.cam_height!r}\n")
    for i in range(n_triplets):
        rng = np.random.default_rng([seed, i])
        spec, yaw0, x0 = sample_scene(base, rng, start_z=i * 37.0)
        trip = make_triplet(spec, yaw0, x0, start_z=i * 37.0, rng=rng)
        d = os.path.join(out_dir, f"{i:04d}")
        os.makedirs(d, exist_ok=True)
        write_ppm(os.path.join(d, "prev.ppm"), trip.prev)
        write_ppm(os.path.join(d, "curr.ppm"), trip.curr)
        write_ppm(os.path.join(d, "next.ppm"), trip.next)
        write_pfm(os.path.join(d, "depth.pfm"), trip.depth)
        write_poses(os.path.join(d, "poses.txt"), [trip.pose_prev, trip.pose_next])


def parse_scene_spec(path) -> SceneSpec:
    """key=value overrides of the SceneSpec defaults (boxes not settable)."""
    spec = SceneSpec()
    fields = {f: type(getattr(spec, f)) for f in vars(spec)}
    overrides = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in fields or key in ("boxes", "lane_offsets"):
                raise ValueError(f"unknown scene parameter {key!r}")
            caster = fields[key]
            overrides[key] = caster(val.strip()) if caster is not bool else val.strip().lower() in ("1", "true", "yes")
    return replace(spec, **overrides)
