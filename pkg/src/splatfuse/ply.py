"""PLY 1.0 point-cloud reader and writer (ascii and binary_little_endian).

Only vertex elements are in scope; files declaring non-empty face or other
elements are rejected. Unknown vertex properties are skipped by stride.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .cloud import DEFAULT_GRAY, PointCloud
from .errors import ParseError, TruncatedFileError

# canonical name -> (numpy little-endian dtype, byte size)
PLY_SCALAR_TYPES = {
    "int8": ("<i1", 1),
    "uint8": ("<u1", 1),
    "int16": ("<i2", 2),
    "uint16": ("<u2", 2),
    "int32": ("<i4", 4),
    "uint32": ("<u4", 4),
    "float32": ("<f4", 4),
    "float64": ("<f8", 8),
}

PLY_TYPE_ALIASES = {
    "char": "int8",
    "uchar": "uint8",
    "short": "int16",
    "ushort": "uint16",
    "int": "int32",
    "uint": "uint32",
    "float": "float32",
    "double": "float64",
}


def _canonical_type(name: str) -> str:
    t = PLY_TYPE_ALIASES.get(name, name)
    if t not in PLY_SCALAR_TYPES:
        raise ParseError(f"unsupported PLY property type '{name}'")
    return t


@dataclass
class PlyProperty:
    name: str
    type_name: str  # canonical scalar type


@dataclass
class PlyElement:
    name: str
    count: int
    properties: list[PlyProperty]

    @property
    def stride(self) -> int:
        return sum(PLY_SCALAR_TYPES[p.type_name][1] for p in self.properties)

    def numpy_dtype(self) -> np.dtype:
        return np.dtype(
            [(p.name, PLY_SCALAR_TYPES[p.type_name][0]) for p in self.properties]
        )


@dataclass
class PlyHeader:
    fmt: str  # "ascii" or "binary_little_endian"
    elements: list[PlyElement]
    data_offset: int

    def element(self, name: str) -> PlyElement:
        for e in self.elements:
            if e.name == name:
                return e
        raise ParseError(f"PLY file has no '{name}' element")


def parse_ply_header(fh) -> PlyHeader:
    """Parse the header of an open binary file positioned at byte 0."""
    magic = fh.readline()
    if magic.strip() != b"ply":
        raise ParseError("not a PLY file (missing 'ply' magic)")
    fmt = None
    elements: list[PlyElement] = []
    while True:
        raw = fh.readline()
        if not raw:
            raise TruncatedFileError("PLY header ended before end_header")
        line = raw.decode("ascii", errors="replace").strip()
        if not line or line.startswith("comment") or line.startswith("obj_info"):
            continue
        if line == "end_header":
            break
        parts = line.split()
        if parts[0] == "format":
            if len(parts) != 3 or parts[2] != "1.0":
                raise ParseError(f"malformed format line: '{line}'")
            if parts[1] not in ("ascii", "binary_little_endian"):
                raise ParseError(f"unsupported PLY format '{parts[1]}'")
            fmt = parts[1]
        elif parts[0] == "element":
            if len(parts) != 3:
                raise ParseError(f"malformed element line: '{line}'")
            try:
                count = int(parts[2])
            except ValueError:
                raise ParseError(f"bad element count in '{line}'") from None
            if count < 0:
                raise ParseError(f"negative element count in '{line}'")
            elements.append(PlyElement(parts[1], count, []))
        elif parts[0] == "property":
            if not elements:
                raise ParseError("property declared before any element")
            if len(parts) >= 2 and parts[1] == "list":
                raise ParseError(
                    f"list property '{parts[-1]}' not supported for "
                    f"element '{elements[-1].name}'"
                )
            if len(parts) != 3:
                raise ParseError(f"malformed property line: '{line}'")
            elements[-1].properties.append(PlyProperty(parts[2], _canonical_type(parts[1])))
        else:
            raise ParseError(f"unrecognized header line: '{line}'")
    if fmt is None:
        raise ParseError("PLY header missing format line")
    return PlyHeader(fmt, elements, fh.tell())


def _check_only_vertex_data(header: PlyHeader) -> PlyElement:
    vertex = header.element("vertex")
    for e in header.elements:
        if e.name != "vertex" and e.count > 0:
            raise ParseError(f"unsupported non-empty element '{e.name}'")
    return vertex


def _read_vertex_records(fh, header: PlyHeader, vertex: PlyElement) -> np.ndarray:
    """Return a structured array of all vertex records, strictly sized."""
    if header.fmt == "binary_little_endian":
        expected = vertex.count * vertex.stride
        body = fh.read()
        if len(body) < expected:
            raise TruncatedFileError(
                f"vertex data truncated: expected {expected} bytes, got {len(body)}"
            )
        if len(body) > expected:
            raise ParseError(
                f"element count mismatch: {len(body) - expected} trailing bytes "
                f"after {vertex.count} declared vertices"
            )
        return np.frombuffer(body, dtype=vertex.numpy_dtype(), count=vertex.count)

    tokens = fh.read().decode("ascii", errors="replace").split()
    n_props = len(vertex.properties)
    expected = vertex.count * n_props
    if len(tokens) < expected:
        raise TruncatedFileError(
            f"vertex data truncated: expected {expected} values, got {len(tokens)}"
        )
    if len(tokens) > expected:
        raise ParseError(
            f"element count mismatch: {len(tokens) - expected} extra values "
            f"after {vertex.count} declared vertices"
        )
    try:
        flat = np.array(tokens, dtype=np.float64).reshape(vertex.count, n_props)
    except ValueError as exc:
        raise ParseError(f"non-numeric vertex data: {exc}") from None
    records = np.zeros(vertex.count, dtype=vertex.numpy_dtype())
    for j, prop in enumerate(vertex.properties):
        col = flat[:, j]
        if prop.type_name not in ("float32", "float64"):
            info = np.iinfo(PLY_SCALAR_TYPES[prop.type_name][0])
            if ((col < info.min) | (col > info.max)).any():
                raise ParseError(
                    f"value out of range for {prop.type_name} property '{prop.name}'"
                )
        records[prop.name] = col
    return records


def read_ply(path) -> PointCloud:
    """Read a point cloud from an ascii or binary_little_endian PLY file.

    x/y/z must be present as float32/float64. Colors are populated when
    red/green/blue uint8 properties exist; otherwise mid-gray is filled in
    and ``default_colors`` is set. Non-finite points are dropped with a
    counted warning.
    """
    with open(path, "rb") as fh:
        header = parse_ply_header(fh)
        vertex = _check_only_vertex_data(header)
        names = {p.name: p for p in vertex.properties}
        for axis in ("x", "y", "z"):
            if axis not in names:
                raise ParseError(f"PLY vertex element missing '{axis}' property")
            if names[axis].type_name not in ("float32", "float64"):
                raise ParseError(
                    f"property type mismatch: '{axis}' is {names[axis].type_name}, "
                    "expected float32 or float64"
                )
        has_rgb = all(c in names for c in ("red", "green", "blue"))
        if has_rgb:
            for c in ("red", "green", "blue"):
                if names[c].type_name != "uint8":
                    raise ParseError(
                        f"property type mismatch: '{c}' is {names[c].type_name}, "
                        "expected uint8"
                    )
        records = _read_vertex_records(fh, header, vertex)

    positions = np.column_stack(
        [records["x"], records["y"], records["z"]]
    ).astype(np.float64)
    finite = np.isfinite(positions).all(axis=1)
    dropped = int(len(positions) - finite.sum())
    if dropped:
        warnings.warn(f"dropped {dropped} non-finite points from {path}", stacklevel=2)
        positions = positions[finite]

    if has_rgb:
        colors = np.column_stack(
            [records["red"], records["green"], records["blue"]]
        ).astype(np.uint8)[finite]
        default = False
    else:
        colors = np.full((len(positions), 3), DEFAULT_GRAY, dtype=np.uint8)
        default = True

    intensity = None
    if "intensity" in names:
        intensity = records["intensity"].astype(np.float64)[finite]

    return PointCloud(
        positions,
        colors=colors,
        intensity=intensity,
        default_colors=default,
        dropped_points=dropped,
    )


def write_ply(cloud: PointCloud, path, fmt: str = "binary_little_endian") -> None:
    """Write a point cloud as PLY. Binary output is float32 xyz + uint8 rgb."""
    if len(cloud) == 0:
        raise ValueError("cannot write an empty point cloud")
    if fmt not in ("binary_little_endian", "ascii"):
        raise ValueError(f"unsupported PLY output format '{fmt}'")

    props = [("x", "float"), ("y", "float"), ("z", "float")]
    if cloud.has_colors:
        props += [("red", "uchar"), ("green", "uchar"), ("blue", "uchar")]
    if cloud.intensity is not None:
        props.append(("intensity", "float"))

    header_lines = ["ply", f"format {fmt} 1.0", f"element vertex {len(cloud)}"]
    header_lines += [f"property {t} {n}" for n, t in props]
    header_lines.append("end_header")
    header = ("\n".join(header_lines) + "\n").encode("ascii")

    pos32 = cloud.positions.astype(np.float32)
    with open(path, "wb") as fh:
        fh.write(header)
        if fmt == "binary_little_endian":
            dtype = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
            if cloud.has_colors:
                dtype += [("red", "<u1"), ("green", "<u1"), ("blue", "<u1")]
            if cloud.intensity is not None:
                dtype.append(("intensity", "<f4"))
            records = np.zeros(len(cloud), dtype=dtype)
            records["x"], records["y"], records["z"] = pos32[:, 0], pos32[:, 1], pos32[:, 2]
            if cloud.has_colors:
                records["red"] = cloud.colors[:, 0]
                records["green"] = cloud.colors[:, 1]
                records["blue"] = cloud.colors[:, 2]
            if cloud.intensity is not None:
                records["intensity"] = cloud.intensity.astype(np.float32)
            fh.write(records.tobytes())
        else:
            columns = [pos32[:, 0], pos32[:, 1], pos32[:, 2]]
            formats = ["%.9g", "%.9g", "%.9g"]
            if cloud.has_colors:
                columns += [cloud.colors[:, 0], cloud.colors[:, 1], cloud.colors[:, 2]]
                formats += ["%d", "%d", "%d"]
            if cloud.intensity is not None:
                columns.append(cloud.intensity.astype(np.float32))
                formats.append("%.9g")
            lines = []
            for row in zip(*columns):
                lines.append(" ".join(f % v for f, v in zip(formats, row)))
            fh.write(("\n".join(lines) + "\n").encode("ascii"))
