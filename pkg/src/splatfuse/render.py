"""Minimal deterministic CPU splat renderer.

Splats are projected through a pinhole camera (2-D covariance J W Sigma W^T
J^T with a low-pass floor on the diagonal), globally depth-sorted, and
composited front-to-back with alpha blending. This is a verification
renderer: clarity and bit-reproducibility outrank speed, so there is no
tiling and no approximation beyond the documented 3-sigma influence cutoff
and per-pixel transmittance early-out.

Pixel (row, col) samples the image plane at continuous coordinates
(x=col, y=row).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .colmap import SfmModel
from .errors import UnknownImageIdError
from .gaussians import GaussianSplat, SplatCloud, build_covariance, sh_to_color
from .transforms import quat_to_matrix

LOWPASS_FLOOR = 0.3  # px^2 added to the projected covariance diagonal
MAHALANOBIS_CUTOFF = 3.0
TRANSMITTANCE_FLOOR = 1e-4
DEFAULT_Z_NEAR = 0.01


@dataclass
class Camera:
    """Pinhole intrinsics plus world-to-camera pose."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    qvec: np.ndarray  # (4,) scalar-first unit quaternion, world -> camera
    tvec: np.ndarray  # (3,)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise ValueError("principal point outside the image")
        self.qvec = np.asarray(self.qvec, dtype=np.float64).reshape(4)
        self.qvec = self.qvec / np.linalg.norm(self.qvec)
        self.tvec = np.asarray(self.tvec, dtype=np.float64).reshape(3)

    @classmethod
    def from_sfm(cls, model: SfmModel, image_id: int) -> "Camera":
        if image_id not in model.images:
            raise UnknownImageIdError(f"image id {image_id} not in model")
        pose = model.images[image_id]
        cam = model.cameras[pose.camera_id]
        return cls(
            fx=cam.fx, fy=cam.fy, cx=cam.cx, cy=cam.cy,
            width=cam.width, height=cam.height,
            qvec=pose.qvec, tvec=pose.tvec,
        )

    @property
    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.qvec)

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        R = self.rotation_matrix
        return -R.T @ self.tvec


@dataclass
class Projected2DGaussian:
    mean2d: np.ndarray  # (2,) pixel coordinates
    cov2d: np.ndarray  # (2, 2) pixel-space covariance, low-pass floored
    color: np.ndarray  # (3,) view-evaluated RGB in [0, 1]
    opacity: float
    depth: float  # camera-space z


def _project(
    mean: np.ndarray,
    cov3d: np.ndarray,
    sh: np.ndarray,
    opacity: float,
    camera: Camera,
    z_near: float,
) -> Projected2DGaussian | None:
    R = camera.rotation_matrix
    t = R @ mean + camera.tvec
    z = t[2]
    if z <= z_near:
        return None
    mean2d = np.array(
        [camera.fx * t[0] / z + camera.cx, camera.fy * t[1] / z + camera.cy]
    )
    J = np.array(
        [
            [camera.fx / z, 0.0, -camera.fx * t[0] / (z * z)],
            [0.0, camera.fy / z, -camera.fy * t[1] / (z * z)],
        ]
    )
    M = J @ R
    cov2d = M @ cov3d @ M.T + LOWPASS_FLOOR * np.eye(2)
    if len(sh) == 1:
        color = sh_to_color(sh)
    else:
        direction = mean - camera.center
        color = sh_to_color(sh, direction / np.linalg.norm(direction))
    return Projected2DGaussian(mean2d, cov2d, color, float(opacity), float(z))


def project_splat(
    splat: GaussianSplat, camera: Camera, z_near: float = DEFAULT_Z_NEAR
) -> Projected2DGaussian | None:
    """Project one splat; returns None when culled behind the near plane."""
    return _project(
        splat.mean, splat.covariance(), splat.sh, splat.opacity, camera, z_near
    )


def _composite_order(projected: list[Projected2DGaussian]) -> np.ndarray:
    """Depth-ascending order with content-derived tie-breaks.

    Ties are broken by projected position, color, and opacity rather than
    input order, so permuting the input never changes the image.
    """
    depth = np.array([g.depth for g in projected])
    mx = np.array([g.mean2d[0] for g in projected])
    my = np.array([g.mean2d[1] for g in projected])
    colors = np.array([g.color for g in projected]).reshape(-1, 3)
    alpha = np.array([g.opacity for g in projected])
    return np.lexsort(
        (alpha, colors[:, 2], colors[:, 1], colors[:, 0], my, mx, depth)
    )


def render(
    splats: SplatCloud,
    camera: Camera,
    background=(0.0, 0.0, 0.0),
    z_near: float = DEFAULT_Z_NEAR,
) -> np.ndarray:
    """Render splats to an (height, width, 3) float image in [0, 1]."""
    if len(splats) == 0:
        raise ValueError("cannot render an empty splat cloud")
    projected = []
    for i in range(len(splats)):
        g = _project(
            splats.means[i],
            build_covariance(splats.scales[i], splats.rotations[i]),
            splats.sh[i],
            float(np.clip(splats.opacities[i], 0.0, 1.0)),
            camera,
            z_near,
        )
        if g is not None:
            projected.append(g)

    height, width = camera.height, camera.width
    image = np.zeros((height, width, 3), dtype=np.float64)
    transmittance = np.ones((height, width), dtype=np.float64)
    background = np.asarray(background, dtype=np.float64).reshape(3)

    cutoff_sq = MAHALANOBIS_CUTOFF**2
    for g_idx in _composite_order(projected):
        g = projected[g_idx]
        a, b, c = g.cov2d[0, 0], g.cov2d[0, 1], g.cov2d[1, 1]
        det = a * c - b * b
        assert det > 0.0, "low-pass floor guarantees an invertible 2-D covariance"
        lam_max = 0.5 * (a + c) + np.sqrt(0.25 * (a - c) ** 2 + b * b)
        radius = MAHALANOBIS_CUTOFF * np.sqrt(lam_max)
        x0 = max(0, int(np.ceil(g.mean2d[0] - radius)))
        x1 = min(width - 1, int(np.floor(g.mean2d[0] + radius)))
        y0 = max(0, int(np.ceil(g.mean2d[1] - radius)))
        y1 = min(height - 1, int(np.floor(g.mean2d[1] + radius)))
        if x0 > x1 or y0 > y1:
            continue
        inv00, inv01, inv11 = c / det, -b / det, a / det
        dx = np.arange(x0, x1 + 1, dtype=np.float64) - g.mean2d[0]
        dy = np.arange(y0, y1 + 1, dtype=np.float64) - g.mean2d[1]
        maha_sq = (
            inv00 * dx[None, :] ** 2
            + 2.0 * inv01 * dy[:, None] * dx[None, :]
            + inv11 * dy[:, None] ** 2
        )
        block_t = transmittance[y0 : y1 + 1, x0 : x1 + 1]
        hit = (maha_sq <= cutoff_sq) & (block_t >= TRANSMITTANCE_FLOOR)
        if not hit.any():
            continue
        alpha = g.opacity * np.exp(-0.5 * maha_sq[hit])
        weight = alpha * block_t[hit]
        image[y0 : y1 + 1, x0 : x1 + 1][hit] += weight[:, None] * g.color
        block_t[hit] *= 1.0 - alpha

    image += transmittance[:, :, None] * background
    return np.clip(image, 0.0, 1.0)


def save_image(image: np.ndarray, path) -> None:
    """Write a float [0,1] image; .png as 8-bit sRGB, .npy as float32 planar."""
    path = Path(path)
    image = np.asarray(image, dtype=np.float64)
    if path.suffix == ".png":
        data = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
        Image.fromarray(data, mode="RGB").save(path)
    elif path.suffix == ".npy":
        np.save(path, image.transpose(2, 0, 1).astype(np.float32))
    else:
        raise ValueError(f"unsupported image extension '{path.suffix}'")


def load_image(path) -> np.ndarray:
    """Read a .png or .npy image back to (h, w, 3) float64 in [0, 1]."""
    path = Path(path)
    if path.suffix == ".png":
        with Image.open(path) as img:
            data = np.asarray(img.convert("RGB"), dtype=np.float64)
        return data / 255.0
    if path.suffix == ".npy":
        planar = np.load(path)
        if planar.ndim != 3 or planar.shape[0] != 3:
            raise ValueError(f"expected (3, h, w) planar dump, got {planar.shape}")
        return planar.transpose(1, 2, 0).astype(np.float64)
    raise ValueError(f"unsupported image extension '{path.suffix}'")
