"""Point-cloud container shared by registration, fusion, and the metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_GRAY = (128, 128, 128)


@dataclass
class PointCloud:
    """Positions with optional per-point colors and intensity.

    Attributes
    ----------
    positions : ndarray of shape (n, 3), float64
        Point coordinates. Meters in the LiDAR frame; unitless in an SfM frame.
    colors : ndarray of shape (n, 3), uint8, optional
        RGB in [0, 255].
    intensity : ndarray of shape (n,), optional
        Per-point return intensity, when the source file carried one.
    default_colors : bool
        True when the colors were filled in at load time (source had none)
        rather than read from data. Lets color metrics flag the substitution.
    dropped_points : int
        Number of non-finite points rejected while loading.
    """

    positions: np.ndarray
    colors: np.ndarray | None = None
    intensity: np.ndarray | None = None
    default_colors: bool = False
    dropped_points: int = 0

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValueError(f"positions must be (n, 3), got {self.positions.shape}")
        if not np.isfinite(self.positions).all():
            raise ValueError("positions contain non-finite values")
        if self.colors is not None:
            self.colors = np.ascontiguousarray(self.colors, dtype=np.uint8)
            if self.colors.shape != self.positions.shape:
                raise ValueError(
                    f"colors shape {self.colors.shape} does not match "
                    f"positions shape {self.positions.shape}"
                )
        if self.intensity is not None:
            self.intensity = np.ascontiguousarray(self.intensity, dtype=np.float64)
            if self.intensity.shape != (len(self.positions),):
                raise ValueError("intensity must be one scalar per point")

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def has_colors(self) -> bool:
        return self.colors is not None

    def with_positions(self, positions: np.ndarray) -> "PointCloud":
        """Same attributes, new coordinates (used after transforms)."""
        return PointCloud(
            positions,
            colors=self.colors,
            intensity=self.intensity,
            default_colors=self.default_colors,
            dropped_points=self.dropped_points,
        )

    def select(self, mask_or_indices) -> "PointCloud":
        """Subset of points by boolean mask or index array."""
        return PointCloud(
            self.positions[mask_or_indices],
            colors=None if self.colors is None else self.colors[mask_or_indices],
            intensity=None if self.intensity is None else self.intensity[mask_or_indices],
            default_colors=self.default_colors,
        )

    def bounding_radius(self) -> float:
        """Max distance from the mean position; 0 for a single point."""
        if len(self) == 0:
            return 0.0
        center = self.positions.mean(axis=0)
        return float(np.linalg.norm(self.positions - center, axis=1).max())
