"""LiDAR-to-SfM registration.

The pipeline runs three stages and composes them into one similarity
transform mapping LiDAR coordinates into the SfM frame:

1. scale: ratio of robust cloud radii (SfM frames are scale-free, LiDAR is
   metric, and SfM clouds always contain stray far-out points, so the radius
   is a trimmed percentile rather than a max);
2. coarse: closed-form similarity alignment from manually picked point
   pairs, run on the pre-scaled cloud; the radius ratio is not exact under
   rotation (the trimmed percentile uses a coordinate-wise median), and the
   coarse fit absorbs that residual;
3. refine: trimmed point-to-point ICP, rigid-only, so the scale is settled
   before iteration starts and partial overlap cannot collapse it.

All percentile computations use the nearest-rank convention and sequential
reductions, so results are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cloud import PointCloud
from .errors import DegenerateGeometryError, MissingInputError, ParseError
from .spatial import KdTree
from .transforms import Sim3Transform, matrix_to_quat


def nearest_rank_percentile(values: np.ndarray, percentile: float) -> float:
    """p-th percentile by the nearest-rank rule (no interpolation)."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("percentile of empty array")
    if not 0.0 < percentile <= 100.0:
        raise ValueError(f"percentile must be in (0, 100], got {percentile}")
    ordered = np.sort(values, kind="stable")
    rank = math.ceil(percentile / 100.0 * values.size)
    return float(ordered[max(rank, 1) - 1])


def _coordinate_median(positions: np.ndarray) -> np.ndarray:
    return np.array(
        [nearest_rank_percentile(positions[:, axis], 50.0) for axis in range(3)]
    )


def robust_radius(
    positions: np.ndarray, percentile: float = 95.0, method: str = "percentile"
) -> float:
    """Trimmed radius of a cloud around its coordinate-wise median.

    Points beyond 5x the median center distance are discarded first; the
    radius is then either the nearest-rank percentile of the remaining
    distances (default) or their maximum (method="max").
    """
    if method not in ("percentile", "max"):
        raise ValueError(f"unknown radius method '{method}'")
    center = _coordinate_median(positions)
    distances = np.linalg.norm(positions - center, axis=1)
    median = nearest_rank_percentile(distances, 50.0)
    kept = distances[distances <= 5.0 * median]
    if kept.size == 0:
        kept = distances
    if method == "max":
        return float(kept.max())
    return nearest_rank_percentile(kept, percentile)


def estimate_scale(
    source: PointCloud,
    target: PointCloud,
    percentile: float = 95.0,
    method: str = "percentile",
) -> float:
    """Scale factor mapping the source cloud onto the target cloud's size."""
    if len(source) < 10 or len(target) < 10:
        raise DegenerateGeometryError(
            f"scale estimation needs >= 10 points per cloud, "
            f"got {len(source)} and {len(target)}"
        )
    r_source = robust_radius(source.positions, percentile, method)
    r_target = robust_radius(target.positions, percentile, method)
    if r_source <= 0.0 or r_target <= 0.0:
        raise DegenerateGeometryError("degenerate cloud: robust radius is zero")
    return r_target / r_source


@dataclass
class CorrespondenceSet:
    """Paired source/target points, e.g. manual picks between two clouds."""

    source: np.ndarray  # (n, 3)
    target: np.ndarray  # (n, 3)

    def __post_init__(self):
        self.source = np.ascontiguousarray(self.source, dtype=np.float64).reshape(-1, 3)
        self.target = np.ascontiguousarray(self.target, dtype=np.float64).reshape(-1, 3)
        if len(self.source) != len(self.target):
            raise ValueError(
                f"source/target pair count mismatch: "
                f"{len(self.source)} vs {len(self.target)}"
            )

    def __len__(self) -> int:
        return len(self.source)


def read_correspondence_file(path) -> CorrespondenceSet:
    """Parse 'sx sy sz tx ty tz' lines; '#' starts a comment."""
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"correspondence file not found: {path}")
    src, tgt = [], []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 6:
            raise ParseError(
                f"{path}:{lineno}: expected 6 values per correspondence, "
                f"got {len(parts)}"
            )
        try:
            values = [float(v) for v in parts]
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-numeric value") from None
        src.append(values[:3])
        tgt.append(values[3:])
    return CorrespondenceSet(np.array(src).reshape(-1, 3), np.array(tgt).reshape(-1, 3))


def umeyama_align(corr: CorrespondenceSet, with_scale: bool = True) -> Sim3Transform:
    """Closed-form least-squares similarity (or rigid) alignment.

    Minimizes sum ||s R p_i + t - q_i||^2 via the SVD of the cross-covariance
    with a determinant-sign guard against reflections.
    """
    n = len(corr)
    if n < 3:
        raise DegenerateGeometryError(
            f"alignment needs at least 3 correspondence pairs, got {n}"
        )
    mu_s = corr.source.mean(axis=0)
    mu_t = corr.target.mean(axis=0)
    X = corr.source - mu_s
    Y = corr.target - mu_t
    cov = Y.T @ X / n
    U, D, Vt = np.linalg.svd(cov)
    if D[1] <= 1e-12 * max(D[0], 1e-300):
        raise DegenerateGeometryError(
            "correspondences are collinear or coincident (rank < 2)"
        )
    sign = np.ones(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        sign[2] = -1.0
    R = (U * sign) @ Vt
    if with_scale:
        var_src = float((X * X).sum() / n)
        scale = float((D * sign).sum() / var_src)
        if not scale > 0:
            raise DegenerateGeometryError(f"non-positive estimated scale {scale}")
    else:
        scale = 1.0
    t = mu_t - scale * R @ mu_s
    return Sim3Transform(scale, matrix_to_quat(R), t)


@dataclass
class IcpParams:
    max_iterations: int = 50
    rel_tolerance: float = 1e-6
    keep_fraction: float = 0.9  # best fraction of matches kept each iteration
    max_correspondence_distance: float = math.inf

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ValueError("keep_fraction must be in (0, 1]")
        if not self.max_correspondence_distance > 0:
            raise ValueError("max_correspondence_distance must be positive")


@dataclass
class IcpReport:
    iterations: int  # rigid updates applied
    final_rms: float
    rms_history: list[float]  # trimmed RMS at each evaluation, non-increasing
    inlier_fraction: float  # source points within the match distance, last pass
    converged: bool

    def to_json_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_rms": self.final_rms,
            "rms_history": list(self.rms_history),
            "inlier_fraction": self.inlier_fraction,
            "converged": self.converged,
        }


def icp_refine(
    source: PointCloud,
    target: PointCloud,
    init: Sim3Transform,
    params: IcpParams | None = None,
) -> tuple[Sim3Transform, IcpReport]:
    """Trimmed point-to-point ICP from an initial transform.

    Each iteration matches transformed source points to their exact nearest
    target points, keeps the best fraction, and applies the closed-form rigid
    update; the scale component of the transform is never re-estimated. An
    update that would increase the trimmed RMS is reverted, so the reported
    history is non-increasing.
    """
    params = params or IcpParams()
    tree = KdTree(target.positions)
    rms_floor = 1e-12 * max(target.bounding_radius(), 1e-30)

    def evaluate(transform):
        pts = transform.apply(source.positions)
        distances, indices = tree.query(pts)
        surviving = distances <= params.max_correspondence_distance
        n_surviving = int(surviving.sum())
        if n_surviving == 0:
            raise DegenerateGeometryError(
                "no correspondences within the maximum match distance"
            )
        surv_idx = np.nonzero(surviving)[0]
        keep = max(3, math.ceil(params.keep_fraction * n_surviving))
        keep = min(keep, n_surviving)
        order = np.argsort(distances[surv_idx], kind="stable")[:keep]
        kept = surv_idx[order]
        rms = float(np.sqrt(np.mean(distances[kept] ** 2)))
        inlier_fraction = n_surviving / len(source)
        return rms, pts[kept], indices[kept], inlier_fraction

    current = init
    previous = init
    history: list[float] = []
    updates = 0
    converged = False
    inlier_fraction = 0.0

    while True:
        rms, matched_src, matched_tgt_idx, inlier_fraction = evaluate(current)
        if history and rms > history[-1] * (1.0 + 1e-12):
            current = previous  # update made the trimmed objective worse
            break
        history.append(rms)
        if rms <= rms_floor:
            converged = True
            break
        if len(history) >= 2 and abs(history[-2] - rms) <= params.rel_tolerance * history[-2]:
            converged = True
            break
        if updates >= params.max_iterations:
            break
        update = umeyama_align(
            CorrespondenceSet(matched_src, target.positions[matched_tgt_idx]),
            with_scale=False,
        )
        previous = current
        current = update.compose(current)
        updates += 1

    report = IcpReport(
        iterations=updates,
        final_rms=history[-1],
        rms_history=history,
        inlier_fraction=inlier_fraction,
        converged=converged,
    )
    return current, report


def filter_sfm_outliers(
    cloud: PointCloud,
    reproj_errors: np.ndarray | None = None,
    error_percentile: float = 90.0,
    distance_factor: float = 5.0,
) -> PointCloud:
    """Drop high-reprojection-error points, then points far from the center.

    SfM sparse clouds always contain stray far-out points; this makes the
    usual manual cleanup deterministic: points with reprojection error above
    the given percentile go first, then points beyond distance_factor times
    the median distance from the coordinate-wise median center.
    """
    kept = cloud
    if reproj_errors is not None:
        errors = np.asarray(reproj_errors, dtype=np.float64)
        if len(errors) != len(cloud):
            raise ValueError("reprojection error count does not match cloud size")
        threshold = nearest_rank_percentile(errors, error_percentile)
        kept = cloud.select(errors <= threshold)
    center = _coordinate_median(kept.positions)
    distances = np.linalg.norm(kept.positions - center, axis=1)
    median = nearest_rank_percentile(distances, 50.0)
    return kept.select(distances <= distance_factor * median)


@dataclass
class RegistrationParams:
    scale_percentile: float = 95.0
    scale_method: str = "percentile"
    icp: IcpParams = field(default_factory=IcpParams)


@dataclass
class RegistrationReport:
    """Composite transform plus each stage's transform for audit."""

    transform: Sim3Transform
    scale_stage: Sim3Transform
    coarse_stage: Sim3Transform
    icp_stage: Sim3Transform  # refinement applied on top of coarse o scale
    icp: IcpReport

    def to_json_dict(self) -> dict:
        return {
            "schema": 1,
            "transform": self.transform.to_json_dict(),
            "stages": {
                "scale": self.scale_stage.to_json_dict(),
                "coarse": self.coarse_stage.to_json_dict(),
                "icp": self.icp_stage.to_json_dict(),
            },
            "icp": self.icp.to_json_dict(),
        }


def register_pipeline(
    raw_lidar: PointCloud,
    sfm_points: PointCloud,
    corr: CorrespondenceSet,
    params: RegistrationParams | None = None,
) -> tuple[Sim3Transform, RegistrationReport]:
    """Scale, coarse-align, and ICP-refine the LiDAR cloud onto the SfM cloud.

    sfm_points should already be outlier-filtered (see filter_sfm_outliers).
    The returned transform is icp o coarse o scale as a single similarity;
    the report carries the per-stage transforms.
    """
    params = params or RegistrationParams()
    scale = estimate_scale(
        raw_lidar, sfm_points, params.scale_percentile, params.scale_method
    )
    scale_stage = Sim3Transform.from_scale(scale)
    coarse_stage = umeyama_align(
        CorrespondenceSet(scale_stage.apply(corr.source), corr.target),
        with_scale=True,
    )
    init = coarse_stage.compose(scale_stage)
    final, icp_report = icp_refine(raw_lidar, sfm_points, init, params.icp)
    icp_stage = final.compose(init.inverse())
    report = RegistrationReport(
        transform=final,
        scale_stage=scale_stage,
        coarse_stage=coarse_stage,
        icp_stage=icp_stage,
        icp=icp_report,
    )
    return final, report
