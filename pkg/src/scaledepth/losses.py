"""Baseline self-supervision objective: SSIM photometric error, per-pixel
minimum reprojection, auto-masking, edge-aware smoothness, and the
multi-scale combination."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import DomainError, EmptySelectionError, ShapeError, Tensor, as_tensor
from .camera import Intrinsics, PoseSE3, synthesize_view

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
DEFAULT_ALPHA = 0.85


@dataclass
class LossReport:
    """Per-term scalar losses plus diagnostic maps.

    The tensors stay attached to the gradient graph; use floats() for logging.
    total always equals photometric + lambda_sm*smoothness (+ lambda_as*absolute_scale).
    """

    photometric: Tensor
    smoothness: Tensor
    total: Tensor
    lambda_sm: float
    absolute_scale: Tensor | None = None
    lambda_as: float = 0.0
    min_reprojection_map: np.ndarray | None = None
    auto_mask: np.ndarray | None = None
    coplanar_mask: np.ndarray | None = None

    def floats(self) -> dict:
        return {
            "L_ph": float(self.photometric.data),
            "L_sm": float(self.smoothness.data),
            "L_as": float(self.absolute_scale.data) if self.absolute_scale is not None else 0.0,
            "total": float(self.total.data),
        }


def _mean_filter3(x: Tensor) -> Tensor:
    """3x3 uniform filter with reflection padding on (N, C, H, W)."""
    return ad.avg_pool2d(ad.pad_reflect2d(x, 1), 3, stride=1)


def ssim(a: Tensor, b: Tensor) -> Tensor:
    """Per-pixel SSIM map over 3x3 windows; same shape as the inputs."""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"ssim shapes differ: {a.shape} vs {b.shape}")
    squeeze = a.ndim == 3
    if squeeze:
        a = ad.reshape(a, (1, *a.shape))
        b = ad.reshape(b, (1, *b.shape))
    mu_a = _mean_filter3(a)
    mu_b = _mean_filter3(b)
    var_a = _mean_filter3(a * a) - mu_a * mu_a
    var_b = _mean_filter3(b * b) - mu_b * mu_b
    cov = _mean_filter3(a * b) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    out = num / den
    return ad.reshape(out, out.shape[1:]) if squeeze else out


def photometric_error(a: Tensor, b: Tensor, alpha: float = DEFAULT_ALPHA) -> Tensor:
    """alpha * L1 + (1 - alpha) * (1 - SSIM)/2, channel-averaged to an (H, W) map."""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"photometric_error shapes differ: {a.shape} vs {b.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise DomainError("alpha must lie in [0, 1]")
    l1 = ad.tmean(ad.absolute(a - b), axis=0)
    dssim = ad.tmean(ad.clamp((1.0 - ssim(a, b)) * 0.5, 0.0, 1.0), axis=0)
    return alpha * l1 + (1.0 - alpha) * dssim


def min_reprojection(target: Tensor, synthesized: list[Tensor], alpha: float = DEFAULT_ALPHA) -> Tensor:
    """Pointwise minimum photometric error over the synthesized views."""
    if not synthesized:
        raise EmptySelectionError("min_reprojection over an empty set")
    return ad.pointwise_min([photometric_error(target, s, alpha) for s in synthesized])


def auto_mask(
    target: Tensor,
    synthesized: list[Tensor],
    sources: list[Tensor],
    alpha: float = DEFAULT_ALPHA,
) -> np.ndarray:
    """Stationary-pixel gate: warped error strictly below unwarped error.

    Non-differentiable by construction; returns a boolean (H, W) array.
    """
    if len(synthesized) != len(sources):
        raise ShapeError("auto_mask needs aligned synthesized/source sets")
    with ad.no_grad():
        warped = min_reprojection(target, synthesized, alpha).data
        unwarped = min_reprojection(target, sources, alpha).data
    return warped < unwarped


def smoothness(disparity: Tensor, image: Tensor) -> Tensor:
    """Edge-aware gradient penalty on mean-normalized disparity."""
    disparity = as_tensor(disparity)
    image = as_tensor(image)
    if disparity.ndim != 2 or image.ndim != 3 or disparity.shape != image.shape[1:]:
        raise ShapeError("smoothness expects (H, W) disparity and matching (C, H, W) image")
    mean_d = ad.tmean(disparity)
    if float(mean_d.data) <= 0:
        raise DomainError("smoothness requires positive mean disparity")
    d = disparity / mean_d
    du = ad.absolute(d[:, 1:] - d[:, :-1])
    dv = ad.absolute(d[1:, :] - d[:-1, :])
    iu = ad.tmean(ad.absolute(image[:, :, 1:] - image[:, :, :-1]), axis=0)
    iv = ad.tmean(ad.absolute(image[:, 1:, :] - image[:, :-1, :]), axis=0)
    return ad.tmean(du * ad.exp(-iu)) + ad.tmean(dv * ad.exp(-iv))


def image_pyramid(image: Tensor, levels: int) -> list[Tensor]:
    """Image at 1/2^i resolution for i in [0, levels) via 2x2 average pooling."""
    image = as_tensor(image)
    batched = ad.reshape(image, (1, *image.shape))
    out = [image]
    for _ in range(1, levels):
        batched = ad.avg_pool2d(batched, 2)
        out.append(ad.reshape(batched, batched.shape[1:]))
    return out


def baseline_loss(
    disparities: list[Tensor],
    target: Tensor,
    sources: list[Tensor],
    poses: list[PoseSE3],
    intrinsics: Intrinsics,
    lambda_sm: float = 1e-3,
    alpha: float = DEFAULT_ALPHA,
) -> LossReport:
    """Multi-scale photometric + smoothness objective.

    disparities[i] lives at 1/2^i resolution; each is upsampled to full
    resolution for the photometric term, while smoothness is evaluated at the
    scale's own resolution against the correspondingly resized image. The
    auto-mask is computed once from the full-resolution (scale 0) syntheses
    and reused across scales. If the mask is empty (e.g. identity-pose
    initialization) the photometric term falls back to the unmasked mean.
    """
    if len(sources) != len(poses):
        raise ShapeError("need one pose per source image")
    target = as_tensor(target)
    c, h, w = target.shape
    pyramid = image_pyramid(target, len(disparities))

    photo_terms = []
    smooth_terms = []
    mask = None
    min_map = None
    for i, disp in enumerate(disparities):
        disp = as_tensor(disp)
        if disp.ndim != 2:
            raise ShapeError("disparities must be (H, W) maps")
        full = disp
        if disp.shape != (h, w):
            full = ad.reshape(
                ad.resize_bilinear(ad.reshape(disp, (1, 1, *disp.shape)), h, w), (h, w)
            )
        depth = 1.0 / full
        synthesized = [synthesize_view(src, depth, pose, intrinsics) for src, pose in zip(sources, poses)]
        reproj = min_reprojection(target, synthesized, alpha)
        if i == 0:
            mask = auto_mask(target, synthesized, sources, alpha)
            min_map = reproj.data.copy()
        if mask.any():
            photo_terms.append(ad.masked_mean(reproj, mask))
        else:
            photo_terms.append(ad.tmean(reproj))
        smooth_terms.append(smoothness(disp, pyramid[i]))

    n = float(len(disparities))
    photo = sum(photo_terms[1:], photo_terms[0]) / n
    smooth = sum(smooth_terms[1:], smooth_terms[0]) / n
    total = photo + lambda_sm * smooth
    return LossReport(
        photometric=photo,
        smoothness=smooth,
        total=total,
        lambda_sm=lambda_sm,
        min_reprojection_map=min_map,
        auto_mask=mask,
    )
