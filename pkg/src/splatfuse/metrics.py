"""Reconstruction evaluation metrics.

Image metrics (per-channel mean L1 and PSNR with peak 1.0) compare rendered
views against captured views. The point-cloud metric matches predicted
points to ground-truth points spatially and averages per-channel absolute
color differences on the 0-255 scale; matching is either nearest-neighbor
(scalable, directional pred -> gt) or an exact minimum-cost one-to-one
assignment (small instances only).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .cloud import PointCloud
from .errors import ColorlessCloudError, InstanceTooLargeError
from .spatial import KdTree

PSNR_PEAK = 1.0
INFINITE_PSNR_MARKER = "infinite"
DEFAULT_HUNGARIAN_CAP = 5000


def _check_same_shape(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ValueError(f"image dimension mismatch: {a.shape} vs {b.shape}")


def image_l1(a, b) -> float:
    """Mean absolute difference over all pixels and channels ([0,1] images)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_shape(a, b)
    return float(np.mean(np.abs(a - b)))


def image_psnr(a, b) -> float:
    """10 log10(peak^2 / MSE) in dB with peak 1.0; inf for identical images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_shape(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return float(10.0 * np.log10(PSNR_PEAK**2 / mse))


def _psnr_json(value: float):
    return INFINITE_PSNR_MARKER if math.isinf(value) else value


@dataclass
class ImagePairMetrics:
    name: str
    l1: float
    psnr: float
    pixels: int


@dataclass
class ImageMetricReport:
    """Per-image L1/PSNR plus batch aggregates."""

    per_image: list[ImagePairMetrics] = field(default_factory=list)

    def add(self, name: str, a: np.ndarray, b: np.ndarray):
        self.per_image.append(
            ImagePairMetrics(name, image_l1(a, b), image_psnr(a, b), int(np.asarray(a).size // 3))
        )

    @property
    def mean_l1(self) -> float:
        return float(np.mean([m.l1 for m in self.per_image]))

    @property
    def mean_psnr(self) -> float:
        """Mean over finite per-image PSNRs; inf only when all are infinite."""
        finite = [m.psnr for m in self.per_image if math.isfinite(m.psnr)]
        if not finite:
            return math.inf
        return float(np.mean(finite))

    def to_json_dict(self) -> dict:
        return {
            "schema": 1,
            "psnr_peak": PSNR_PEAK,
            "images": [
                {
                    "name": m.name,
                    "l1": m.l1,
                    "psnr_db": _psnr_json(m.psnr),
                    "pixels": m.pixels,
                }
                for m in self.per_image
            ],
            "aggregate": {
                "count": len(self.per_image),
                "l1": self.mean_l1,
                "psnr_db": _psnr_json(self.mean_psnr),
            },
        }

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["name", "l1", "psnr_db", "pixels"])
            for m in self.per_image:
                writer.writerow([m.name, repr(m.l1), _psnr_json(m.psnr), m.pixels])
            writer.writerow(
                ["__aggregate__", repr(self.mean_l1), _psnr_json(self.mean_psnr), ""]
            )


@dataclass
class CloudMetricReport:
    """Color-L1-over-matched-pairs result, per-channel mean on the 0-255 scale."""

    mode: str  # "nn" or "hungarian"
    direction: str
    color_l1: float | None  # None when nothing matched
    matched: int
    pred_count: int
    gt_count: int
    unmatched_fraction: float
    mean_distance: float | None
    max_distance: float | None
    total_spatial_cost: float | None
    pred_colors_defaulted: bool
    gt_colors_defaulted: bool

    def to_json_dict(self) -> dict:
        return {
            "schema": 1,
            "color_scale": "0-255",
            "mode": self.mode,
            "direction": self.direction,
            "color_l1": self.color_l1,
            "matched": self.matched,
            "pred_count": self.pred_count,
            "gt_count": self.gt_count,
            "unmatched_fraction": self.unmatched_fraction,
            "mean_distance": self.mean_distance,
            "max_distance": self.max_distance,
            "total_spatial_cost": self.total_spatial_cost,
            "pred_colors_defaulted": self.pred_colors_defaulted,
            "gt_colors_defaulted": self.gt_colors_defaulted,
        }


def _require_colors(cloud: PointCloud, label: str) -> np.ndarray:
    if not cloud.has_colors:
        raise ColorlessCloudError(f"{label} cloud has no colors")
    return cloud.colors.astype(np.float64)


def _pair_color_l1(pred_colors, gt_colors) -> np.ndarray:
    return np.abs(pred_colors - gt_colors).mean(axis=1)


def cloud_color_l1_nn(
    pred: PointCloud, gt: PointCloud, max_dist: float = math.inf
) -> CloudMetricReport:
    """For each predicted point, color-L1 against its exact nearest GT point.

    Directional by construction (pred -> gt); points whose nearest GT point
    lies beyond max_dist count toward the unmatched fraction.
    """
    if not max_dist > 0:
        raise ValueError(f"max_dist must be positive, got {max_dist}")
    pred_colors = _require_colors(pred, "predicted")
    gt_colors = _require_colors(gt, "ground-truth")
    tree = KdTree(gt.positions)
    distances, indices = tree.query(pred.positions)
    matched = distances <= max_dist
    n_matched = int(matched.sum())
    if n_matched:
        per_point = _pair_color_l1(pred_colors[matched], gt_colors[indices[matched]])
        color_l1 = float(per_point.mean())
        mean_d = float(distances[matched].mean())
        max_d = float(distances[matched].max())
        total = float(distances[matched].sum())
    else:
        color_l1 = mean_d = max_d = total = None
    return CloudMetricReport(
        mode="nn",
        direction="pred_to_gt",
        color_l1=color_l1,
        matched=n_matched,
        pred_count=len(pred),
        gt_count=len(gt),
        unmatched_fraction=1.0 - n_matched / len(pred),
        mean_distance=mean_d,
        max_distance=max_d,
        total_spatial_cost=total,
        pred_colors_defaulted=pred.default_colors,
        gt_colors_defaulted=gt.default_colors,
    )


def cloud_color_l1_hungarian(
    pred: PointCloud, gt: PointCloud, size_cap: int = DEFAULT_HUNGARIAN_CAP
) -> CloudMetricReport:
    """Color L1 over the minimum-total-spatial-cost one-to-one assignment.

    Solved with a Jonker-Volgenant-class rectangular solver; cost grows
    cubically, so instances above size_cap are rejected. With unequal sizes
    the excess points of the larger side stay unmatched.
    """
    if len(pred) > size_cap or len(gt) > size_cap:
        raise InstanceTooLargeError(
            f"assignment instance {len(pred)}x{len(gt)} exceeds cap {size_cap}"
        )
    pred_colors = _require_colors(pred, "predicted")
    gt_colors = _require_colors(gt, "ground-truth")
    cost = cdist(pred.positions, gt.positions)
    rows, cols = linear_sum_assignment(cost)
    pair_d = cost[rows, cols]
    per_pair = _pair_color_l1(pred_colors[rows], gt_colors[cols])
    return CloudMetricReport(
        mode="hungarian",
        direction="bipartite",
        color_l1=float(per_pair.mean()),
        matched=len(rows),
        pred_count=len(pred),
        gt_count=len(gt),
        unmatched_fraction=1.0 - len(rows) / len(pred),
        mean_distance=float(pair_d.mean()),
        max_distance=float(pair_d.max()),
        total_spatial_cost=float(pair_d.sum()),
        pred_colors_defaulted=pred.default_colors,
        gt_colors_defaulted=gt.default_colors,
    )
