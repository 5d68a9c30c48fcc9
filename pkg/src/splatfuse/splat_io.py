"""Gaussian-splat PLY files (the common 3DGS export layout).

On disk a splat record holds its mean, log-scales, a scalar-first rotation
quaternion, an opacity logit, and SH coefficients (f_dc band plus optional
f_rest higher bands). This module keeps those raw float32 values so that
write -> read round-trips are bit-exact; activated values (exp of scales,
sigmoid of opacity) are exposed as accessors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParseError
from .ply import _check_only_vertex_data, _read_vertex_records, parse_ply_header

MANDATORY_PROPERTIES = (
    "x",
    "y",
    "z",
    "f_dc_0",
    "f_dc_1",
    "f_dc_2",
    "opacity",
    "scale_0",
    "scale_1",
    "scale_2",
    "rot_0",
    "rot_1",
    "rot_2",
    "rot_3",
)


@dataclass
class SplatCloudFile:
    """Raw on-disk splat fields, float32, one row per splat."""

    means: np.ndarray  # (n, 3)
    f_dc: np.ndarray  # (n, 3)
    opacity_logits: np.ndarray  # (n,)
    log_scales: np.ndarray  # (n, 3)
    rotations: np.ndarray  # (n, 4) scalar-first, as stored (not normalized)
    f_rest: np.ndarray | None = None  # (n, m), m divisible by 3

    def __post_init__(self):
        self.means = np.ascontiguousarray(self.means, dtype=np.float32).reshape(-1, 3)
        n = len(self.means)
        self.f_dc = np.ascontiguousarray(self.f_dc, dtype=np.float32).reshape(n, 3)
        self.opacity_logits = np.ascontiguousarray(
            self.opacity_logits, dtype=np.float32
        ).reshape(n)
        self.log_scales = np.ascontiguousarray(self.log_scales, dtype=np.float32).reshape(n, 3)
        self.rotations = np.ascontiguousarray(self.rotations, dtype=np.float32).reshape(n, 4)
        if self.f_rest is not None:
            self.f_rest = np.ascontiguousarray(self.f_rest, dtype=np.float32).reshape(n, -1)
            if self.f_rest.shape[1] % 3 != 0:
                raise ValueError("f_rest column count must be divisible by 3")

    def __len__(self) -> int:
        return len(self.means)

    def scales(self) -> np.ndarray:
        """Activated standard deviations, exp of the stored log-scales."""
        return np.exp(self.log_scales.astype(np.float64))

    def opacities(self) -> np.ndarray:
        """Activated opacities in (0, 1), sigmoid of the stored logits."""
        x = self.opacity_logits.astype(np.float64)
        return 1.0 / (1.0 + np.exp(-x))

    def property_names(self) -> list[str]:
        names = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"]
        if self.f_rest is not None:
            names += [f"f_rest_{i}" for i in range(self.f_rest.shape[1])]
        names += ["opacity", "scale_0", "scale_1", "scale_2"]
        names += [f"rot_{i}" for i in range(4)]
        return names


def _collect_f_rest_names(available: set[str]) -> list[str]:
    indices = []
    for name in available:
        if name.startswith("f_rest_"):
            suffix = name[len("f_rest_"):]
            if not suffix.isdigit():
                raise ParseError(f"malformed SH property name '{name}'")
            indices.append(int(suffix))
    if not indices:
        return []
    indices.sort()
    if indices != list(range(len(indices))):
        raise ParseError("f_rest_* property indices are not contiguous from 0")
    if len(indices) % 3 != 0:
        raise ParseError(f"f_rest_* count {len(indices)} is not divisible by 3")
    return [f"f_rest_{i}" for i in indices]


def read_splat_ply(path) -> SplatCloudFile:
    """Read a splat PLY; property order follows the header, not an assumed order."""
    with open(path, "rb") as fh:
        header = parse_ply_header(fh)
        vertex = _check_only_vertex_data(header)
        by_name = {p.name: p for p in vertex.properties}
        for name in MANDATORY_PROPERTIES:
            if name not in by_name:
                raise ParseError(f"splat PLY missing mandatory property '{name}'")
            if by_name[name].type_name != "float32":
                raise ParseError(
                    f"property type mismatch: '{name}' is {by_name[name].type_name}, "
                    "expected float32"
                )
        rest_names = _collect_f_rest_names(set(by_name))
        for name in rest_names:
            if by_name[name].type_name != "float32":
                raise ParseError(f"property type mismatch: '{name}' must be float32")
        records = _read_vertex_records(fh, header, vertex)

    def stack(names):
        return np.column_stack([records[n] for n in names]).astype(np.float32)

    return SplatCloudFile(
        means=stack(["x", "y", "z"]),
        f_dc=stack(["f_dc_0", "f_dc_1", "f_dc_2"]),
        opacity_logits=records["opacity"].astype(np.float32),
        log_scales=stack(["scale_0", "scale_1", "scale_2"]),
        rotations=stack(["rot_0", "rot_1", "rot_2", "rot_3"]),
        f_rest=stack(rest_names) if rest_names else None,
    )


def write_splat_ply(splats: SplatCloudFile, path) -> None:
    """Write a splat PLY (binary little-endian float32), canonical property order."""
    if len(splats) == 0:
        raise ValueError("cannot write an empty splat file")
    names = splats.property_names()
    header_lines = (
        ["ply", "format binary_little_endian 1.0", f"element vertex {len(splats)}"]
        + [f"property float {n}" for n in names]
        + ["end_header"]
    )
    records = np.zeros(len(splats), dtype=[(n, "<f4") for n in names])
    records["x"], records["y"], records["z"] = (splats.means[:, i] for i in range(3))
    for i in range(3):
        records[f"f_dc_{i}"] = splats.f_dc[:, i]
        records[f"scale_{i}"] = splats.log_scales[:, i]
    if splats.f_rest is not None:
        for i in range(splats.f_rest.shape[1]):
            records[f"f_rest_{i}"] = splats.f_rest[:, i]
    records["opacity"] = splats.opacity_logits
    for i in range(4):
        records[f"rot_{i}"] = splats.rotations[:, i]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header_lines) + "\n").encode("ascii"))
        fh.write(records.tobytes())
