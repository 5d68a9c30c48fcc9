"""Exact nearest-neighbor queries and voxel-grid downsampling.

The KD-tree is backed by scipy's cKDTree but wrapped to guarantee the
contract the registration and metric code rely on: results are exactly the
brute-force nearest point, ties are broken deterministically by smallest
point index, and batch queries run single-threaded for reproducibility.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .cloud import PointCloud
from .errors import DegenerateGeometryError


class KdTree:
    """Immutable exact nearest-neighbor index over a fixed set of points."""

    def __init__(self, points: np.ndarray, leaf_size: int = 16):
        points = np.ascontiguousarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValueError(f"points must be (n, 3), got {points.shape}")
        if len(points) == 0:
            raise DegenerateGeometryError("cannot build a KD-tree over an empty cloud")
        self._points = points
        self._tree = cKDTree(points, leafsize=leaf_size)

    def __len__(self) -> int:
        return len(self._points)

    @property
    def points(self) -> np.ndarray:
        return self._points

    def nearest(self, query) -> tuple[int, float]:
        """Index and distance of the exact nearest point; ties -> smallest index."""
        distances, indices = self.query(np.asarray(query, dtype=np.float64).reshape(1, 3))
        return int(indices[0]), float(distances[0])

    def query(self, queries: np.ndarray, k: int = 1):
        """Batch exact k-nearest query.

        Returns (distances, indices), each of shape (m,) for k=1 or (m, k)
        otherwise, with ties resolved to the smallest point index.
        """
        queries = np.ascontiguousarray(queries, dtype=np.float64)
        squeeze = queries.ndim == 1
        queries = queries.reshape(-1, 3)
        if k < 1:
            raise ValueError("k must be >= 1")
        if k > 1:
            # Multi-neighbor results feed scale/seeding heuristics where the
            # ordering of exact ties cannot change any downstream value.
            d, i = self._tree.query(queries, k=k, workers=1)
            return d, i

        # Probe k=2 so exact ties for the nearest are visible, then resolve
        # affected queries against every point at the minimum distance.
        kk = min(2, len(self._points))
        d, i = self._tree.query(queries, k=kk, workers=1)
        if kk == 1:
            d = d.reshape(-1, 1)
            i = i.reshape(-1, 1)
        best_d = d[:, 0].copy()
        best_i = i[:, 0].copy()
        if kk == 2:
            tied = d[:, 0] == d[:, 1]
            for row in np.nonzero(tied)[0]:
                best_i[row] = self._resolve_tie(queries[row], best_d[row])
        if squeeze:
            return best_d[0], best_i[0]
        return best_d, best_i

    def _resolve_tie(self, query: np.ndarray, distance: float) -> int:
        radius = distance * (1.0 + 1e-9) + 1e-300
        candidates = np.asarray(
            self._tree.query_ball_point(query, radius, workers=1), dtype=np.int64
        )
        cand_d = np.linalg.norm(self._points[candidates] - query, axis=1)
        dmin = cand_d.min()
        return int(candidates[cand_d == dmin].min())


def build_kdtree(cloud: PointCloud, leaf_size: int = 16) -> KdTree:
    return KdTree(cloud.positions, leaf_size=leaf_size)


def nearest(tree: KdTree, query) -> tuple[int, float]:
    return tree.nearest(query)


def voxel_keys(positions: np.ndarray, edge_length: float) -> np.ndarray:
    """Integer cell key per point: floor(coordinate / edge) per axis.

    The grid is anchored at the global origin rather than the cloud's min
    corner: a content-dependent anchor shifts the grid between passes, which
    breaks re-downsampling idempotence (neighboring centroids can merge).
    """
    if not edge_length > 0:
        raise ValueError(f"edge_length must be positive, got {edge_length}")
    return np.floor(positions / edge_length).astype(np.int64)


def voxel_downsample(cloud: PointCloud, edge_length: float) -> PointCloud:
    """One point per occupied voxel: member centroid with per-channel mean color.

    Output points are ordered by lexicographically sorted cell key, so the
    result is deterministic for a given input.
    """
    keys = voxel_keys(cloud.positions, edge_length)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    n_cells = len(counts)

    centroids = np.zeros((n_cells, 3), dtype=np.float64)
    for axis in range(3):
        centroids[:, axis] = np.bincount(
            inverse, weights=cloud.positions[:, axis], minlength=n_cells
        )
    centroids /= counts[:, None]

    colors = None
    if cloud.has_colors:
        sums = np.zeros((n_cells, 3), dtype=np.float64)
        for channel in range(3):
            sums[:, channel] = np.bincount(
                inverse, weights=cloud.colors[:, channel].astype(np.float64),
                minlength=n_cells,
            )
        colors = np.rint(sums / counts[:, None]).astype(np.uint8)

    intensity = None
    if cloud.intensity is not None:
        intensity = (
            np.bincount(inverse, weights=cloud.intensity, minlength=n_cells) / counts
        )

    return PointCloud(
        centroids,
        colors=colors,
        intensity=intensity,
        default_colors=cloud.default_colors,
    )
