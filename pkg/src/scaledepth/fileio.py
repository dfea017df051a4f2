"""File formats: PFM depth maps, binary PPM images, intrinsics/pose text
files, network checkpoints, and the coplanar-mask PNG output."""

from __future__ import annotations

import os

import numpy as np

from .autodiff import Tensor, _read_tensor, _write_tensor, load_tensor


class DataError(Exception):
    """Malformed or missing on-disk data."""


# ---- PFM (single-channel float, little-endian, bottom-up rows) ----


def write_pfm(path, data: np.ndarray) -> None:
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 2:
        raise DataError("PFM writer expects a 2-d map")
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{w} {h}\n".encode())
        fh.write(b"-1.0\n")
        fh.write(np.ascontiguousarray(data[::-1], dtype="<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header != b"Pf":
            raise DataError(f"unsupported PFM header {header!r} (only grayscale 'Pf')")
        dims = fh.readline().split()
        w, h = int(dims[0]), int(dims[1])
        scale = float(fh.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(fh.read(4 * w * h), dtype=dtype).reshape(h, w)
    return data[::-1].astype(np.float32)


# ---- PPM (binary P6, 8-bit RGB) ----


def write_ppm(path, image: np.ndarray) -> None:
    """image is [3,H,W] float in [0,1] or [H,W,3] uint8."""
    if image.dtype != np.uint8:
        image = np.clip(np.asarray(image), 0.0, 1.0)
        if image.ndim == 3 and image.shape[0] == 3:
            image = image.transpose(1, 2, 0)
        image = np.round(image * 255.0).astype(np.uint8)
    h, w, _ = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(image.tobytes())


def read_ppm(path) -> np.ndarray:
    """Returns [3,H,W] float32 in [0,1]."""
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"P6":
            raise DataError("not a binary PPM")
        line = fh.readline()
        while line.startswith(b"#"):
            line = fh.readline()
        w, h = (int(v) for v in line.split())
        maxval = int(fh.readline())
        raw = np.frombuffer(fh.read(w * h * 3), dtype=np.uint8)
    img = raw.reshape(h, w, 3).astype(np.float32) / float(maxval)
    return img.transpose(2, 0, 1)


# ---- intrinsics / poses ----


def write_intrinsics(path, fx, fy, cx, cy) -> None:
    with open(path, "w") as fh:
        fh.write(f"{fx!r} {fy!r} {cx!r} {cy!r}\n")


def read_intrinsics(path):
    try:
        with open(path) as fh:
            vals = [float(v) for v in fh.read().split()]
    except (OSError, ValueError) as e:
        raise DataError(f"bad intrinsics file {path}: {e}") from None
    if len(vals) != 4:
        raise DataError(f"intrinsics file {path} must hold exactly fx fy cx cy")
    return tuple(vals)


def write_poses(path, poses) -> None:
    """Each pose serializes to 12 floats: row-major rotation then translation."""
    with open(path, "w") as fh:
        for r, t in poses:
            vals = np.concatenate([np.asarray(r).reshape(9), np.asarray(t).reshape(3)])
            fh.write(" ".join(repr(float(v)) for v in vals) + "\n")


def read_poses(path):
    poses = []
    try:
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                vals = np.array([float(v) for v in line.split()])
                if vals.size != 12:
                    raise DataError(f"pose line in {path} must hold 12 floats")
                poses.append((vals[:9].reshape(3, 3), vals[9:]))
    except (OSError, ValueError) as e:
        raise DataError(f"bad pose file {path}: {e}") from None
    return poses


# ---- checkpoints (text manifest + concatenated tensor blobs) ----


def save_checkpoint(path, named_params, extra: dict | None = None) -> None:
    """named_params: iterable of (name, Tensor). extra: flat str->str metadata."""
    items = [(name, p.data if isinstance(p, Tensor) else np.asarray(p)) for name, p in named_params]
    with open(path, "wb") as fh:
        fh.write(b"SDCKPT 1\n")
        for k, v in (extra or {}).items():
            fh.write(f"# {k}={v}\n".encode())
        for name, arr in items:
            shape = " ".join(str(s) for s in arr.shape)
            fh.write(f"{name} {arr.dtype.itemsize} {shape}\n".encode())
        fh.write(b"\n")
        for _, arr in items:
            _write_tensor(fh, arr)


def load_checkpoint(path):
    """Returns (dict name->array, dict extra)."""
    params: dict[str, np.ndarray] = {}
    extra: dict[str, str] = {}
    entries = []
    with open(path, "rb") as fh:
        if fh.readline() != b"SDCKPT 1\n":
            raise DataError(f"{path} is not a checkpoint file")
        while True:
            line = fh.readline()
            if not line or line == b"\n":
                break
            text = line.decode().strip()
            if text.startswith("#"):
                k, _, v = text[1:].strip().partition("=")
                extra[k.strip()] = v
                continue
            fields = text.split()
            entries.append((fields[0], int(fields[1])))
        for name, itemsize in entries:
            params[name] = _read_tensor(fh, itemsize=itemsize)
    return params, extra


# ---- mask PNG ----


def write_mask_png(path, mask: np.ndarray) -> None:
    from PIL import Image

    arr = (np.asarray(mask) > 0).astype(np.uint8) * 255
    Image.fromarray(arr, mode="L").save(path)


# ---- dataset directory layout ----


def load_depth_any(path) -> np.ndarray:
    """Read a depth map stored as PFM or as an SDTN tensor blob."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == b"SDTN":
        arr = load_tensor(path)
        if arr.ndim != 2:
            raise DataError("depth tensor must be 2-d")
        return arr.astype(np.float32)
    return read_pfm(path)


class TripletDataset:
    """Reader for the on-disk scene layout.

    scene/intrinsics.txt, scene/h_gt.txt, scene/NNNN/{prev,curr,next}.ppm,
    scene/NNNN/depth.pfm, scene/NNNN/poses.txt (T_curr->prev, T_curr->next).
    """

    def __init__(self, root):
        self.root = str(root)
        if not os.path.isdir(self.root):
            raise DataError(f"dataset directory {self.root} does not exist")
        self.fx, self.fy, self.cx, self.cy = read_intrinsics(os.path.join(self.root, "intrinsics.txt"))
        try:
            with open(os.path.join(self.root, "h_gt.txt")) as fh:
                self.h_gt = float(fh.read().strip())
        except (OSError, ValueError) as e:
            raise DataError(f"bad h_gt.txt: {e}") from None
        self.ids = sorted(
            d for d in os.listdir(self.root) if os.path.isdir(os.path.join(self.root, d)) and d.isdigit()
        )
        if not self.ids:
            raise DataError(f"no triplet directories under {self.root}")

    def __len__(self):
        return len(self.ids)

    def __getitem__(self, i: int) -> dict:
        d = os.path.join(self.root, self.ids[i])
        poses = read_poses(os.path.join(d, "poses.txt"))
        if len(poses) != 2:
            raise DataError(f"{d}/poses.txt must hold two poses")
        return {
            "prev": read_ppm(os.path.join(d, "prev.ppm")),
            "curr": read_ppm(os.path.join(d, "curr.ppm")),
            "next": read_ppm(os.path.join(d, "next.ppm")),
            "depth": read_pfm(os.path.join(d, "depth.pfm")),
            "pose_prev": poses[0],
            "pose_next": poses[1],
        }
