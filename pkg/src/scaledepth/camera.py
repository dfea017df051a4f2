"""Pinhole camera model, rigid transforms, and differentiable view synthesis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DomainError, ShapeError, Tensor, _record, as_tensor

# z threshold below which a transformed point counts as behind the camera;
# such pixels are mapped far out of range so sampling clamps to the border.
EPS_Z = 1e-3


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise DomainError("focal lengths must be positive")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def inverse(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    def ray_dirs(self, h: int, w: int, dtype=np.float64) -> np.ndarray:
        """K^-1 (u, v, 1) per pixel: unit-z ray directions, shape (H, W, 3)."""
        u = np.arange(w, dtype=dtype)
        v = np.arange(h, dtype=dtype)
        uu, vv = np.meshgrid(u, v)
        return np.stack(
            [(uu - self.cx) / self.fx, (vv - self.cy) / self.fy, np.ones_like(uu)], axis=-1
        )

    def scaled(self, factor: float) -> "Intrinsics":
        return Intrinsics(self.fx * factor, self.fy * factor, self.cx * factor, self.cy * factor)


class PoseSE3:
    """Rigid transform: rotation Tensor (3,3) and translation Tensor (3,) in meters."""

    def __init__(self, rotation: Tensor, translation: Tensor):
        self.rotation = as_tensor(rotation)
        self.translation = as_tensor(translation)
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise ShapeError("pose needs a 3x3 rotation and a 3-vector translation")

    @classmethod
    def identity(cls, dtype=np.float32) -> "PoseSE3":
        return cls(Tensor(np.eye(3, dtype=dtype)), Tensor(np.zeros(3, dtype=dtype)))

    @classmethod
    def from_arrays(cls, r: np.ndarray, t: np.ndarray, dtype=None) -> "PoseSE3":
        return cls(Tensor(np.asarray(r), dtype=dtype), Tensor(np.asarray(t), dtype=dtype))

    def orthonormality_error(self) -> float:
        r = self.rotation.data
        return float(
            max(np.abs(r.T @ r - np.eye(3)).max(), abs(np.linalg.det(r) - 1.0))
        )

    def scaled_translation(self, s: float) -> "PoseSE3":
        return PoseSE3(self.rotation, self.translation * float(s))


# ---- axis-angle (Rodrigues) with gradients ----
#
# R = I + A(s) * S + B(s) * S^2 with S = skew(r), s = |r|^2,
# A = sin(t)/t and B = (1 - cos(t))/t^2 at t = sqrt(s). Both are analytic in
# s, so small angles use the even power series and theta = 0 stays smooth.

_SKEW_BASIS = np.zeros((9, 3))
_SKEW_BASIS[1, 2] = -1.0
_SKEW_BASIS[2, 1] = 1.0
_SKEW_BASIS[3, 2] = 1.0
_SKEW_BASIS[5, 0] = -1.0
_SKEW_BASIS[6, 1] = -1.0
_SKEW_BASIS[7, 0] = 1.0

_SERIES_CUTOFF = 1e-8


def _sin_ratio(s: Tensor) -> Tensor:
    """sin(sqrt(s))/sqrt(s) as a smooth function of s."""
    s = as_tensor(s)
    x = s.data
    small = x < _SERIES_CUTOFF
    t = np.sqrt(np.where(small, 1.0, x))
    val = np.where(small, 1.0 - x / 6.0 + x * x / 120.0, np.sin(t) / t)
    dval = np.where(
        small,
        -1.0 / 6.0 + x / 60.0,
        (t * np.cos(t) - np.sin(t)) / (2.0 * t**3),
    )

    def bw(g):
        return (g * dval,)

    return _record(val.astype(x.dtype), (s,), bw)


def _versine_ratio(s: Tensor) -> Tensor:
    """(1 - cos(sqrt(s)))/s as a smooth function of s."""
    s = as_tensor(s)
    x = s.data
    small = x < _SERIES_CUTOFF
    t = np.sqrt(np.where(small, 1.0, x))
    val = np.where(small, 0.5 - x / 24.0 + x * x / 720.0, (1.0 - np.cos(t)) / np.where(small, 1.0, x))
    dval = np.where(
        small,
        -1.0 / 24.0 + x / 360.0,
        (t * np.sin(t) - 2.0 * (1.0 - np.cos(t))) / (2.0 * np.where(small, 1.0, x) ** 2),
    )

    def bw(g):
        return (g * dval,)

    return _record(val.astype(x.dtype), (s,), bw)


def se3_from_axis_angle(params: Tensor) -> PoseSE3:
    """Rodrigues rotation from params[:3], translation copied from params[3:]."""
    params = as_tensor(params)
    if params.shape != (6,):
        raise ShapeError("axis-angle pose parameters must be a 6-vector")
    r = params[:3]
    t = params[3:]
    s = ad.tsum(r * r)
    skew = ad.reshape(ad.matmul(Tensor(_SKEW_BASIS.astype(params.dtype)), r), (3, 3))
    skew2 = ad.matmul(skew, skew)
    eye = Tensor(np.eye(3, dtype=params.dtype))
    rot = eye + _sin_ratio(s) * skew + _versine_ratio(s) * skew2
    return PoseSE3(rot, t)


# ---- projection pipeline ----


def backproject(depth: Tensor, intrinsics: Intrinsics) -> Tensor:
    """Depth map (H, W) to camera-frame points (H, W, 3): D * K^-1 (u, v, 1)."""
    depth = as_tensor(depth)
    if depth.ndim != 2:
        raise ShapeError("backproject expects an (H, W) depth map")
    if np.any(depth.data <= 0):
        raise DomainError("backproject requires strictly positive depth")
    h, w = depth.shape
    dirs = Tensor(intrinsics.ray_dirs(h, w, dtype=depth.dtype))
    return ad.reshape(depth, (h, w, 1)) * dirs


def project(points: Tensor, intrinsics: Intrinsics, pose: PoseSE3) -> Tensor:
    """Transform points (H, W, 3) by the pose and project to pixel coords (H, W, 2).

    Pixels whose transformed z falls below EPS_Z are mapped far out of range,
    so border clamping in the sampler takes over; no gradient flows there.
    """
    points = as_tensor(points)
    if points.ndim != 3 or points.shape[-1] != 3:
        raise ShapeError("project expects (H, W, 3) points")
    h, w, _ = points.shape
    cam = ad.matmul(points, ad.transpose(pose.rotation)) + pose.translation
    x = cam[:, :, 0]
    y = cam[:, :, 1]
    z = cam[:, :, 2]
    valid = z.data > EPS_Z
    z_safe = ad.where(valid, z, Tensor(np.ones_like(z.data)))
    u = x / z_safe * intrinsics.fx + intrinsics.cx
    v = y / z_safe * intrinsics.fy + intrinsics.cy
    far = Tensor(np.full_like(z.data, -1e4))
    u = ad.where(valid, u, far)
    v = ad.where(valid, v, far)
    return ad.concat([ad.reshape(u, (h, w, 1)), ad.reshape(v, (h, w, 1))], axis=2)


def synthesize_view(
    source: Tensor, depth: Tensor, pose: PoseSE3, intrinsics: Intrinsics
) -> Tensor:
    """Warp the source image into the target camera through depth and pose."""
    coords = project(backproject(depth, intrinsics), intrinsics, pose)
    return ad.bilinear_sample(source, coords)
