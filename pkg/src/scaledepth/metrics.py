"""Depth evaluation metrics, median scaling, and camera-height scale recovery."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import EmptySelectionError, Tensor
from .camera import Intrinsics
from .groundplane import scale_pipeline

MIN_EVAL_DEPTH = 1e-3
MAX_EVAL_DEPTH = 80.0


@dataclass
class MetricsRow:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float

    HEADER = "abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3"

    def as_csv(self) -> str:
        return ",".join(
            f"{v:.6f}"
            for v in (self.abs_rel, self.sq_rel, self.rmse, self.rmse_log, self.delta1, self.delta2, self.delta3)
        )

    def as_tuple(self):
        return (self.abs_rel, self.sq_rel, self.rmse, self.rmse_log, self.delta1, self.delta2, self.delta3)


def _resize_to(pred: np.ndarray, shape) -> np.ndarray:
    if pred.shape == tuple(shape):
        return pred
    with ad.no_grad():
        t = ad.resize_bilinear(Tensor(pred.reshape(1, 1, *pred.shape)), shape[0], shape[1])
    return t.data.reshape(shape)


def _valid_mask(gt: np.ndarray, min_d: float, max_d: float, crop_mask=None) -> np.ndarray:
    valid = (gt > min_d) & (gt < max_d)
    if crop_mask is not None:
        valid &= crop_mask
    if not valid.any():
        raise EmptySelectionError("no ground-truth pixels inside the evaluation range")
    return valid


def depth_metrics(
    pred: np.ndarray,
    gt: np.ndarray,
    min_d: float = MIN_EVAL_DEPTH,
    max_d: float = MAX_EVAL_DEPTH,
    crop_mask=None,
) -> MetricsRow:
    """Standard error/accuracy metrics over gt pixels within [min_d, max_d];
    pred is resized to the gt resolution and clamped to the range."""
    pred = _resize_to(np.asarray(pred, dtype=np.float64), gt.shape)
    gt = np.asarray(gt, dtype=np.float64)
    valid = _valid_mask(gt, min_d, max_d, crop_mask)
    p = np.clip(pred[valid], min_d, max_d)
    g = gt[valid]
    err = p - g
    ratio = np.maximum(p / g, g / p)
    return MetricsRow(
        abs_rel=float(np.mean(np.abs(err) / g)),
        sq_rel=float(np.mean(err**2 / g)),
        rmse=float(np.sqrt(np.mean(err**2))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25**2)),
        delta3=float(np.mean(ratio < 1.25**3)),
    )


def median_scale(
    pred: np.ndarray,
    gt: np.ndarray,
    min_d: float = MIN_EVAL_DEPTH,
    max_d: float = MAX_EVAL_DEPTH,
    crop_mask=None,
):
    """Scale pred by median(gt)/median(pred) over valid pixels."""
    pred = _resize_to(np.asarray(pred, dtype=np.float64), gt.shape)
    gt = np.asarray(gt, dtype=np.float64)
    valid = _valid_mask(gt, min_d, max_d, crop_mask)
    factor = float(np.median(gt[valid]) / np.median(pred[valid]))
    return pred * factor, factor


def height_scale_recovery(pred: np.ndarray, intrinsics: Intrinsics, h_gt: float, **pipeline_kwargs):
    """Scale pred by h_gt over the fitted camera height (no ground truth needed)."""
    with ad.no_grad():
        _, _, plane = scale_pipeline(Tensor(np.asarray(pred, dtype=np.float64)), intrinsics, h_gt, **pipeline_kwargs)
    factor = h_gt / plane.height
    return np.asarray(pred) * factor, factor
