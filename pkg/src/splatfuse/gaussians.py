"""Gaussian splat representation and its covariance mathematics.

Covariances are never stored as free symmetric matrices on splats; splats
carry (scales, rotation) and the covariance R diag(scales^2) R^T is built on
demand, which keeps it positive semi-definite by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .cloud import PointCloud
from .errors import DegenerateGeometryError
from .splat_io import SplatCloudFile

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

# SH coefficient counts per degree: 3 * (deg + 1)^2 scalars
_SH_TRIPLES_TO_DEGREE = {1: 0, 4: 1, 9: 2, 16: 3}


def gaussian_pdf_1d(x, mu, sigma2):
    """Univariate normal density at x."""
    if not sigma2 > 0:
        raise ValueError(f"variance must be positive, got {sigma2}")
    x = np.asarray(x, dtype=np.float64)
    z = (x - mu) ** 2 / (2.0 * sigma2)
    return np.exp(-z) / np.sqrt(2.0 * np.pi * sigma2)


def gaussian_logpdf_nd(y, theta, Sigma):
    """Multivariate normal log-density via Cholesky (no explicit inverse)."""
    y = np.asarray(y, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    Sigma = np.asarray(Sigma, dtype=np.float64)
    k = y.shape[-1]
    if theta.shape[-1] != k or Sigma.shape != (k, k):
        raise ValueError(
            f"dimension mismatch: y has {k}, theta has {theta.shape[-1]}, "
            f"Sigma is {Sigma.shape}"
        )
    try:
        L = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        raise DegenerateGeometryError("covariance is not positive definite") from None
    w = solve_triangular(L, (y - theta).T, lower=True).T
    log_det = 2.0 * np.sum(np.log(np.diag(L)))
    maha = np.sum(w * w, axis=-1)
    return -0.5 * (k * np.log(2.0 * np.pi) + log_det + maha)


def gaussian_pdf_nd(y, theta, Sigma):
    """Multivariate normal density at y (strictly positive-definite Sigma)."""
    return np.exp(gaussian_logpdf_nd(y, theta, Sigma))


def sample_covariance(samples) -> np.ndarray:
    """Unbiased (n-1 denominator) sample covariance of (n, k) samples."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2:
        raise ValueError(f"samples must be 2-D (n, k), got shape {samples.shape}")
    n = samples.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    centered = samples - samples.mean(axis=0)
    return centered.T @ centered / (n - 1)


def build_covariance(scales, rotation) -> np.ndarray:
    """Sigma = R diag(scales^2) R^T for positive scales and a unit quaternion.

    Quaternions within 1e-3 of unit norm are renormalized; anything worse is
    rejected.
    """
    from .transforms import quat_to_matrix

    scales = np.asarray(scales, dtype=np.float64).reshape(3)
    if not (scales > 0).all():
        raise ValueError(f"scales must be positive, got {scales}")
    q = np.asarray(rotation, dtype=np.float64).reshape(4)
    norm = np.linalg.norm(q)
    if abs(norm - 1.0) > 1e-3:
        raise ValueError(f"quaternion norm {norm} too far from 1")
    R = quat_to_matrix(q / norm)
    return (R * scales**2) @ R.T


@dataclass
class EigenDecomposition:
    """Eigenvalues in descending order; eigenvectors as matching columns."""

    eigenvalues: np.ndarray  # (3,)
    eigenvectors: np.ndarray  # (3, 3), column i pairs with eigenvalues[i]

    def reconstruct(self) -> np.ndarray:
        Q = self.eigenvectors
        return (Q * self.eigenvalues) @ Q.T


def _apply_sign_convention(Q: np.ndarray) -> np.ndarray:
    Q = Q.copy()
    for j in range(Q.shape[1]):
        i = int(np.argmax(np.abs(Q[:, j])))
        if Q[i, j] < 0:
            Q[:, j] = -Q[:, j]
    return Q


def _eigh_descending(S: np.ndarray) -> EigenDecomposition:
    vals, vecs = np.linalg.eigh(S)
    order = np.argsort(-vals, kind="stable")
    return EigenDecomposition(vals[order], _apply_sign_convention(vecs[:, order]))


def _null_direction(M: np.ndarray) -> np.ndarray:
    """Best unit vector spanning the (near-)null space of a rank-2 symmetric M."""
    crosses = np.array(
        [
            np.cross(M[0], M[1]),
            np.cross(M[0], M[2]),
            np.cross(M[1], M[2]),
        ]
    )
    norms = np.linalg.norm(crosses, axis=1)
    best = int(np.argmax(norms))
    if norms[best] == 0.0:
        raise np.linalg.LinAlgError("degenerate null space")
    return crosses[best] / norms[best]


def eigen_decompose(Sigma) -> EigenDecomposition:
    """Eigen-decompose a symmetric 3x3 matrix.

    Uses the closed-form trigonometric solution for the eigenvalues and
    cross-product null vectors for the eigenvectors, falling back to an
    iterative solver when eigenvalues are nearly degenerate (relative gap
    below 1e-6). Each eigenvector's largest-magnitude component is made
    positive, so the decomposition is deterministic.
    """
    S = np.asarray(Sigma, dtype=np.float64)
    if S.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got {S.shape}")
    scale = max(1.0, float(np.abs(S).max()))
    if np.abs(S - S.T).max() > 1e-9 * scale:
        raise ValueError("matrix is not symmetric within 1e-9")
    S = 0.5 * (S + S.T)

    off = S[0, 1] ** 2 + S[0, 2] ** 2 + S[1, 2] ** 2
    if off == 0.0:
        diag = np.diag(S).copy()
        order = np.argsort(-diag, kind="stable")
        return EigenDecomposition(
            diag[order], _apply_sign_convention(np.eye(3)[:, order])
        )

    q = np.trace(S) / 3.0
    p2 = ((S[0, 0] - q) ** 2 + (S[1, 1] - q) ** 2 + (S[2, 2] - q) ** 2) + 2.0 * off
    p = np.sqrt(p2 / 6.0)
    B = (S - q * np.eye(3)) / p
    r = np.clip(np.linalg.det(B) / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    lam1 = q + 2.0 * p * np.cos(phi)
    lam3 = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    lam2 = 3.0 * q - lam1 - lam3

    gap = min(lam1 - lam2, lam2 - lam3)
    if gap < 1e-6 * max(abs(lam1), abs(lam3), 1e-300):
        return _eigh_descending(S)

    try:
        v1 = _null_direction(S - lam1 * np.eye(3))
        v2 = _null_direction(S - lam2 * np.eye(3))
    except np.linalg.LinAlgError:
        return _eigh_descending(S)
    v2 = v2 - v1 * (v1 @ v2)
    n2 = np.linalg.norm(v2)
    if n2 < 1e-12:
        return _eigh_descending(S)
    v2 /= n2
    v3 = np.cross(v1, v2)
    Q = np.column_stack([v1, v2, v3])
    # Rayleigh-quotient refinement: second-order accurate in the eigenvector
    # error, which tightens the trigonometric eigenvalues near modest gaps
    values = np.einsum("ij,jk,ik->i", Q.T, S, Q.T)
    order = np.argsort(-values, kind="stable")
    return EigenDecomposition(values[order], _apply_sign_convention(Q[:, order]))


@dataclass
class QuadraticFormReport:
    trials: int
    min_value: float
    max_value: float
    lambda_top: float
    lambda_bottom: float
    violations: int

    @property
    def passed(self) -> bool:
        return self.violations == 0


def quadratic_form_bound_check(Sigma, trials: int = 100_000, seed: int = 0) -> QuadraticFormReport:
    """Monte-Carlo check that y^T Sigma y stays within [lambda_3, lambda_1]
    for unit vectors y, up to 1e-9 * lambda_1 slack."""
    S = np.asarray(Sigma, dtype=np.float64)
    decomp = eigen_decompose(S)
    lam_top = float(decomp.eigenvalues[0])
    lam_bottom = float(decomp.eigenvalues[-1])
    rng = np.random.default_rng(seed)
    y = rng.standard_normal((trials, 3))
    y /= np.linalg.norm(y, axis=1, keepdims=True)
    values = np.einsum("ij,jk,ik->i", y, S, y)
    eps = 1e-9 * abs(lam_top)
    violations = int(((values < lam_bottom - eps) | (values > lam_top + eps)).sum())
    return QuadraticFormReport(
        trials=trials,
        min_value=float(values.min()),
        max_value=float(values.max()),
        lambda_top=lam_top,
        lambda_bottom=lam_bottom,
        violations=violations,
    )


def sh_degree(sh: np.ndarray) -> int:
    n_triples = sh.shape[0]
    if n_triples not in _SH_TRIPLES_TO_DEGREE:
        raise ValueError(
            f"SH coefficient count {3 * n_triples} is not 3*(deg+1)^2 for deg <= 3"
        )
    return _SH_TRIPLES_TO_DEGREE[n_triples]


def sh_to_color(sh, view_dir=None) -> np.ndarray:
    """Evaluate real spherical harmonics to an RGB color clamped to [0, 1].

    Band 0 contributes 0.5 + SH_C0 * f_dc per channel. Higher bands (up to
    degree 3) need a unit view direction.
    """
    sh = np.asarray(sh, dtype=np.float64).reshape(-1, 3)
    degree = sh_degree(sh)
    color = 0.5 + SH_C0 * sh[0]
    if degree >= 1:
        if view_dir is None:
            raise ValueError("view_dir required when higher SH bands are present")
        d = np.asarray(view_dir, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(d) - 1.0) > 1e-6:
            raise ValueError("view_dir must be unit-norm")
        x, y, z = d
        color = color - SH_C1 * y * sh[1] + SH_C1 * z * sh[2] - SH_C1 * x * sh[3]
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        xy, yz, xz = x * y, y * z, x * z
        color = (
            color
            + SH_C2[0] * xy * sh[4]
            + SH_C2[1] * yz * sh[5]
            + SH_C2[2] * (2.0 * zz - xx - yy) * sh[6]
            + SH_C2[3] * xz * sh[7]
            + SH_C2[4] * (xx - yy) * sh[8]
        )
    if degree >= 3:
        color = (
            color
            + SH_C3[0] * y * (3.0 * xx - yy) * sh[9]
            + SH_C3[1] * xy * z * sh[10]
            + SH_C3[2] * y * (4.0 * zz - xx - yy) * sh[11]
            + SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy) * sh[12]
            + SH_C3[4] * x * (4.0 * zz - xx - yy) * sh[13]
            + SH_C3[5] * z * (xx - yy) * sh[14]
            + SH_C3[6] * x * (xx - 3.0 * yy) * sh[15]
        )
    return np.clip(color, 0.0, 1.0)


def color_to_sh_dc(rgb01) -> np.ndarray:
    """Invert the band-0 map: f_dc such that 0.5 + SH_C0 * f_dc = rgb01."""
    rgb01 = np.asarray(rgb01, dtype=np.float64)
    return (rgb01 - 0.5) / SH_C0


@dataclass
class GaussianSplat:
    """One splat: mean, principal-axis standard deviations, rotation,
    opacity, and SH color coefficients (band 0 mandatory)."""

    mean: np.ndarray  # (3,)
    scales: np.ndarray  # (3,) positive std-devs
    rotation: np.ndarray  # (4,) unit quaternion, scalar-first
    opacity: float  # in [0, 1]
    sh: np.ndarray  # (n_triples, 3)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(3)
        self.scales = np.asarray(self.scales, dtype=np.float64).reshape(3)
        if not (self.scales > 0).all():
            raise ValueError(f"scales must be positive, got {self.scales}")
        q = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        norm = np.linalg.norm(q)
        if abs(norm - 1.0) > 1e-3:
            raise ValueError(f"quaternion norm {norm} too far from 1")
        self.rotation = q / norm
        self.opacity = float(self.opacity)
        if not 0.0 <= self.opacity <= 1.0:
            raise ValueError(f"opacity must be in [0, 1], got {self.opacity}")
        self.sh = np.asarray(self.sh, dtype=np.float64).reshape(-1, 3)
        sh_degree(self.sh)

    def covariance(self) -> np.ndarray:
        return build_covariance(self.scales, self.rotation)

    def color(self, view_dir=None) -> np.ndarray:
        if len(self.sh) == 1:
            return sh_to_color(self.sh)
        return sh_to_color(self.sh, view_dir)


@dataclass
class SplatCloud:
    """Batch of splats with activated values (std-dev scales, [0,1] opacity)."""

    means: np.ndarray  # (n, 3)
    scales: np.ndarray  # (n, 3)
    rotations: np.ndarray  # (n, 4) unit, scalar-first
    opacities: np.ndarray  # (n,)
    sh: np.ndarray  # (n, n_triples, 3)

    def __post_init__(self):
        self.means = np.ascontiguousarray(self.means, dtype=np.float64).reshape(-1, 3)
        n = len(self.means)
        self.scales = np.ascontiguousarray(self.scales, dtype=np.float64).reshape(n, 3)
        self.rotations = np.ascontiguousarray(self.rotations, dtype=np.float64).reshape(n, 4)
        self.opacities = np.ascontiguousarray(self.opacities, dtype=np.float64).reshape(n)
        self.sh = np.ascontiguousarray(self.sh, dtype=np.float64)
        if self.sh.ndim != 3 or self.sh.shape[0] != n or self.sh.shape[2] != 3:
            raise ValueError(f"sh must be (n, n_triples, 3), got {self.sh.shape}")
        sh_degree(self.sh[0] if n else np.zeros((1, 3)))
        norms = np.linalg.norm(self.rotations, axis=1)
        if (norms < 1e-6).any():
            raise DegenerateGeometryError("zero-norm rotation quaternion")
        # normalize only rows that need it, so construction is idempotent
        # (renormalizing an already-unit row would perturb its bits)
        needs = np.abs(norms - 1.0) > 1e-12
        if needs.any():
            self.rotations[needs] = self.rotations[needs] / norms[needs, None]

    def __len__(self) -> int:
        return len(self.means)

    def splat(self, i: int) -> GaussianSplat:
        return GaussianSplat(
            self.means[i], self.scales[i], self.rotations[i],
            float(np.clip(self.opacities[i], 0.0, 1.0)), self.sh[i],
        )

    @classmethod
    def from_file(cls, record: SplatCloudFile) -> "SplatCloud":
        n = len(record)
        n_rest = 0 if record.f_rest is None else record.f_rest.shape[1] // 3
        sh = np.zeros((n, 1 + n_rest, 3), dtype=np.float64)
        sh[:, 0, :] = record.f_dc.astype(np.float64)
        if n_rest:
            # f_rest is stored channel-planar: all R coefficients, then G, then B
            rest = record.f_rest.astype(np.float64).reshape(n, 3, n_rest)
            sh[:, 1:, :] = rest.transpose(0, 2, 1)
        return cls(
            means=record.means.astype(np.float64),
            scales=record.scales(),
            rotations=record.rotations.astype(np.float64),
            opacities=record.opacities(),
            sh=sh,
        )

    def to_file(self) -> SplatCloudFile:
        opacities = np.clip(self.opacities, 1e-7, 1.0 - 1e-7)
        f_rest = None
        if self.sh.shape[1] > 1:
            f_rest = (
                self.sh[:, 1:, :].transpose(0, 2, 1).reshape(len(self), -1)
            ).astype(np.float32)
        return SplatCloudFile(
            means=self.means.astype(np.float32),
            f_dc=self.sh[:, 0, :].astype(np.float32),
            opacity_logits=np.log(opacities / (1.0 - opacities)).astype(np.float32),
            log_scales=np.log(self.scales).astype(np.float32),
            rotations=self.rotations.astype(np.float32),
            f_rest=f_rest,
        )


CANONICAL_VIEW_DIR = np.array([0.0, 0.0, 1.0])


def splat_cloud_to_points(splats: SplatCloud) -> PointCloud:
    """Means with SH colors evaluated at the canonical +z view, as a cloud.

    Ground-truth LiDAR colors are view-independent, so the cloud metric pins
    one view direction for reproducibility.
    """
    n = len(splats)
    colors = np.empty((n, 3), dtype=np.uint8)
    band0_only = splats.sh.shape[1] == 1
    for i in range(n):
        rgb = sh_to_color(splats.sh[i], None if band0_only else CANONICAL_VIEW_DIR)
        colors[i] = np.rint(rgb * 255.0).astype(np.uint8)
    return PointCloud(splats.means.copy(), colors=colors)
