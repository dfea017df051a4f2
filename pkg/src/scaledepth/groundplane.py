"""Ground-plane scale anchor: rectangular prior mask, least-squares plane fit,
coplanar-point detection, camera-height map, and the absolute scale loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DomainError, EmptySelectionError, Tensor, as_tensor
from .camera import Intrinsics, backproject
from .losses import LossReport

DEFAULT_ALPHA_U = 0.075
DEFAULT_ALPHA_V = 0.875
DEFAULT_DELTA = 0.01
DEFAULT_LAMBDA_AS = 0.01
DEFAULT_H_GT = 1.65  # standard camera height over the road, meters

_PIVOT_TOL = 1e-12


class SingularFitError(DomainError):
    """Plane fit is rank deficient (collinear or degenerate points)."""


@dataclass
class PlaneModel:
    """Plane {P : P · n = 1}; height_origin is the camera-to-plane distance."""

    n: Tensor
    n_e: Tensor
    height_origin: Tensor

    @property
    def normal(self) -> np.ndarray:
        return self.n.data

    @property
    def height(self) -> float:
        return float(self.height_origin.data)


def rect_mask(h: int, w: int, alpha_u: float = DEFAULT_ALPHA_U, alpha_v: float = DEFAULT_ALPHA_V) -> np.ndarray:
    """Bottom-center rectangle prior over pixel centers; boolean (H, W).

    Pixel centers ((u+0.5)/W, (v+0.5)/H) make the strict inequalities select
    exactly round(2*alpha_u*W) columns and round((1-alpha_v)*H) rows.
    """
    if not 0.0 <= alpha_u <= 0.5:
        raise DomainError("alpha_u must lie in [0, 0.5]")
    if not 0.0 <= alpha_v <= 1.0:
        raise DomainError("alpha_v must lie in [0, 1]")
    u = (np.arange(w) + 0.5) / w
    v = (np.arange(h) + 0.5) / h
    cols = np.abs(0.5 - u) < alpha_u
    rows = v > alpha_v
    return rows[:, None] & cols[None, :]


def fit_plane(points) -> PlaneModel:
    """Least squares solution of P n = 1 through the 3x3 normal equations.

    Accepts an (N, 3) Tensor (differentiable through the solve) or array.
    """
    points = as_tensor(points)
    if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] < 3:
        raise DomainError("fit_plane needs at least three 3-d points")
    gram = ad.matmul(ad.transpose(points), points)
    sv = np.linalg.svd(gram.data, compute_uv=False)
    if sv[-1] < _PIVOT_TOL * max(sv[0], 1.0):
        raise SingularFitError("degenerate point set: normal equations are singular")
    rhs = ad.tsum(points, axis=0)
    n = ad.solve(gram, rhs)
    norm2 = ad.sqrt(ad.tsum(n * n))
    return PlaneModel(n=n, n_e=n / norm2, height_origin=1.0 / norm2)


def plane_from_l1(plane: PlaneModel) -> PlaneModel:
    """Variant normalizing n by its L1 norm (the literal text's convention)."""
    norm1 = ad.tsum(ad.absolute(plane.n))
    return PlaneModel(n=plane.n, n_e=plane.n / norm1, height_origin=plane.height_origin)


def coplanar_mask(points, plane: PlaneModel, delta: float = DEFAULT_DELTA) -> np.ndarray:
    """|P . n - 1| < delta over all pixels; non-differentiable boolean gate."""
    if delta <= 0:
        raise DomainError("delta must be positive")
    pts = points.data if isinstance(points, Tensor) else np.asarray(points)
    residual = np.abs(pts @ plane.n.data - 1.0)
    return residual < delta


def camera_height(points: Tensor, plane: PlaneModel) -> Tensor:
    """Per-pixel height P . n_e, differentiable w.r.t. the points (and the
    plane, when the fit was not detached)."""
    return ad.matmul(as_tensor(points), plane.n_e)


def absolute_scale_loss(height_map: Tensor, coplanar: np.ndarray, h_gt: float) -> Tensor:
    """Mean absolute camera-height error over detected ground pixels."""
    if h_gt <= 0:
        raise DomainError("h_gt must be positive")
    coplanar = np.asarray(coplanar, dtype=bool)
    if not coplanar.any():
        raise EmptySelectionError("no coplanar pixels detected")
    return ad.masked_mean(ad.absolute(height_map - h_gt), coplanar)


def total_loss(baseline: LossReport, scale_term: Tensor | None, lambda_as: float = DEFAULT_LAMBDA_AS) -> LossReport:
    """Attach the weighted absolute-scale term to a baseline report."""
    total = baseline.total if scale_term is None else baseline.total + lambda_as * scale_term
    return LossReport(
        photometric=baseline.photometric,
        smoothness=baseline.smoothness,
        total=total,
        lambda_sm=baseline.lambda_sm,
        absolute_scale=scale_term,
        lambda_as=lambda_as if scale_term is not None else 0.0,
        min_reprojection_map=baseline.min_reprojection_map,
        auto_mask=baseline.auto_mask,
        coplanar_mask=baseline.coplanar_mask,
    )


def scale_pipeline(
    depth: Tensor,
    intrinsics: Intrinsics,
    h_gt: float = DEFAULT_H_GT,
    alpha_u: float = DEFAULT_ALPHA_U,
    alpha_v: float = DEFAULT_ALPHA_V,
    delta: float = DEFAULT_DELTA,
    detach_fit: bool = True,
    l1_normal: bool = False,
):
    """Full per-image scale constraint: back-project, fit the prior-rectangle
    plane, detect coplanar pixels, and measure camera-height error.

    Returns (loss Tensor or None, coplanar mask, PlaneModel). The loss is
    None when no coplanar pixel survives (the term is skipped for that
    image). detach_fit stops gradients at the fitted normal so depth is
    only pulled through the per-pixel heights.
    """
    depth = as_tensor(depth)
    h, w = depth.shape
    prior = rect_mask(h, w, alpha_u, alpha_v)
    points = backproject(depth, intrinsics)
    flat = ad.reshape(points, (h * w, 3))
    picked = ad.take(flat, np.flatnonzero(prior.ravel()), axis=0)
    if detach_fit:
        picked = picked.detach()
    plane = fit_plane(picked)
    height_plane = plane_from_l1(plane) if l1_normal else plane
    coplanar = coplanar_mask(flat, plane, delta).reshape(h, w)
    heights = ad.reshape(camera_height(flat, height_plane), (h, w))
    try:
        loss = absolute_scale_loss(heights, coplanar, h_gt)
    except EmptySelectionError:
        loss = None
    return loss, coplanar, plane
