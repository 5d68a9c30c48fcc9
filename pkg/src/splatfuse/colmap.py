"""COLMAP sparse-model reader (binary and text) and points3D writer.

Binary layouts:
  cameras.bin   u64 count; per camera: u32 id, i32 model id, u64 width,
                u64 height, model-dependent f64 params.
  images.bin    u64 count; per image: u32 id, 4xf64 qvec (scalar-first),
                3xf64 tvec, u32 camera id, null-terminated name, u64 number
                of 2-D points, then (f64 x, f64 y, u64 point3D id) triples.
  points3D.bin  u64 count; per point: u64 id, 3xf64 xyz, 3xu8 rgb, f64 error,
                u64 track length, then (u32 image id, u32 point2D idx) pairs.

A u64 point3D id of 2^64-1 (COLMAP's int64 -1) marks an unmatched 2-D point.
When both .bin and .txt forms of a file are present the binary wins and a
warning is emitted.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cloud import PointCloud
from .errors import MissingInputError, ParseError, TruncatedFileError

# model id -> (name, parameter count); other ids are rejected
CAMERA_MODELS = {
    0: ("SIMPLE_PINHOLE", 3),
    1: ("PINHOLE", 4),
    2: ("SIMPLE_RADIAL", 4),
    4: ("OPENCV", 8),
}
CAMERA_MODEL_IDS = {name: mid for mid, (name, _) in CAMERA_MODELS.items()}
CAMERA_MODEL_PARAMS = {name: n for _, (name, n) in CAMERA_MODELS.items()}

INVALID_POINT3D_ID = 2**64 - 1


@dataclass
class PinholeCamera:
    """Calibrated camera intrinsics; distortion params are carried but unused."""

    model: str
    width: int
    height: int
    params: np.ndarray

    def __post_init__(self):
        if self.model not in CAMERA_MODEL_PARAMS:
            raise ParseError(f"unknown camera model '{self.model}'")
        self.params = np.asarray(self.params, dtype=np.float64)
        if len(self.params) != CAMERA_MODEL_PARAMS[self.model]:
            raise ParseError(
                f"camera model {self.model} expects "
                f"{CAMERA_MODEL_PARAMS[self.model]} params, got {len(self.params)}"
            )

    @property
    def fx(self) -> float:
        return float(self.params[0])

    @property
    def fy(self) -> float:
        if self.model in ("SIMPLE_PINHOLE", "SIMPLE_RADIAL"):
            return float(self.params[0])
        return float(self.params[1])

    @property
    def cx(self) -> float:
        if self.model in ("SIMPLE_PINHOLE", "SIMPLE_RADIAL"):
            return float(self.params[1])
        return float(self.params[2])

    @property
    def cy(self) -> float:
        if self.model in ("SIMPLE_PINHOLE", "SIMPLE_RADIAL"):
            return float(self.params[2])
        return float(self.params[3])


@dataclass
class ImagePose:
    """World-to-camera pose of one registered image."""

    qvec: np.ndarray  # (4,) scalar-first unit quaternion
    tvec: np.ndarray  # (3,)
    camera_id: int
    name: str

    def __post_init__(self):
        self.qvec = np.asarray(self.qvec, dtype=np.float64).reshape(4)
        self.tvec = np.asarray(self.tvec, dtype=np.float64).reshape(3)
        norm = float(np.linalg.norm(self.qvec))
        if abs(norm - 1.0) > 1e-6:
            raise ParseError(f"image '{self.name}' quaternion norm {norm} not unit")
        self.qvec = self.qvec / norm


@dataclass
class SfmModel:
    cameras: dict[int, PinholeCamera]
    images: dict[int, ImagePose]
    points: PointCloud
    reproj_errors: np.ndarray  # (n,)
    track_lengths: np.ndarray  # (n,) int64

    def __post_init__(self):
        for image_id, pose in self.images.items():
            if pose.camera_id not in self.cameras:
                raise ParseError(
                    f"image {image_id} references missing camera {pose.camera_id}"
                )


class _Reader:
    """Strict byte reader that names the offending element on truncation."""

    def __init__(self, data: bytes, element: str):
        self.data = data
        self.offset = 0
        self.element = element

    def unpack(self, fmt: str, context: str):
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise TruncatedFileError(f"{self.element} truncated in {context}")
        values = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return values

    def read_cstring(self, context: str) -> str:
        end = self.data.find(b"\x00", self.offset)
        if end < 0:
            raise TruncatedFileError(f"{self.element} truncated in {context}")
        s = self.data[self.offset:end].decode("utf-8", errors="replace")
        self.offset = end + 1
        return s

    def finish(self):
        if self.offset != len(self.data):
            raise ParseError(
                f"{self.element} has {len(self.data) - self.offset} trailing bytes "
                "after the declared records"
            )


def _read_cameras_bin(path: Path) -> dict[int, PinholeCamera]:
    r = _Reader(path.read_bytes(), "cameras.bin")
    (count,) = r.unpack("<Q", "count")
    cameras = {}
    for i in range(count):
        cam_id, model_id, width, height = r.unpack("<iiQQ", f"camera record {i}")
        if model_id not in CAMERA_MODELS:
            raise ParseError(f"unknown camera model id {model_id}")
        name, n_params = CAMERA_MODELS[model_id]
        params = r.unpack(f"<{n_params}d", f"camera record {i} params")
        cameras[cam_id] = PinholeCamera(name, int(width), int(height), np.array(params))
    r.finish()
    return cameras


def _read_images_bin(path: Path) -> dict[int, ImagePose]:
    r = _Reader(path.read_bytes(), "images.bin")
    (count,) = r.unpack("<Q", "count")
    images = {}
    for i in range(count):
        (image_id,) = r.unpack("<I", f"image record {i}")
        qvec = r.unpack("<4d", f"image record {i} qvec")
        tvec = r.unpack("<3d", f"image record {i} tvec")
        (camera_id,) = r.unpack("<I", f"image record {i} camera id")
        name = r.read_cstring(f"image record {i} name")
        (n_points,) = r.unpack("<Q", f"image record {i} point count")
        r.unpack(f"<{'ddQ' * n_points}", f"image record {i} 2-D points")
        images[image_id] = ImagePose(np.array(qvec), np.array(tvec), camera_id, name)
    r.finish()
    return images


def _read_points3d_bin(path: Path):
    r = _Reader(path.read_bytes(), "points3D.bin")
    (count,) = r.unpack("<Q", "count")
    positions = np.empty((count, 3), dtype=np.float64)
    colors = np.empty((count, 3), dtype=np.uint8)
    errors = np.empty(count, dtype=np.float64)
    track_lengths = np.empty(count, dtype=np.int64)
    for i in range(count):
        values = r.unpack("<QdddBBBd", f"points3D record {i}")
        positions[i] = values[1:4]
        colors[i] = values[4:7]
        errors[i] = values[7]
        (track_len,) = r.unpack("<Q", f"points3D record {i} track length")
        track_lengths[i] = track_len
        r.unpack(f"<{2 * track_len}I", f"points3D record {i} track")
    r.finish()
    return positions, colors, errors, track_lengths


def _strip_comment_lines(path: Path) -> list[str]:
    lines = []
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if line and not line.startswith("#"):
            lines.append(line)
    return lines


def _read_cameras_txt(path: Path) -> dict[int, PinholeCamera]:
    cameras = {}
    for line in _strip_comment_lines(path):
        parts = line.split()
        if len(parts) < 4:
            raise ParseError(f"malformed cameras.txt line: '{line}'")
        cam_id, model = int(parts[0]), parts[1]
        if model not in CAMERA_MODEL_PARAMS:
            raise ParseError(f"unknown camera model '{model}'")
        params = np.array([float(p) for p in parts[4:]])
        cameras[cam_id] = PinholeCamera(model, int(parts[2]), int(parts[3]), params)
    return cameras


def _read_images_txt(path: Path) -> dict[int, ImagePose]:
    # two lines per image: pose header, then the 2-D point row (may be blank)
    lines = [
        ln.strip() for ln in path.read_text().splitlines() if not ln.lstrip().startswith("#")
    ]
    images = {}
    i = 0
    while i < len(lines):
        if not lines[i]:
            i += 1
            continue
        parts = lines[i].split()
        if len(parts) < 10:
            raise ParseError(f"malformed images.txt line: '{lines[i]}'")
        image_id = int(parts[0])
        qvec = np.array([float(v) for v in parts[1:5]])
        tvec = np.array([float(v) for v in parts[5:8]])
        images[image_id] = ImagePose(qvec, tvec, int(parts[8]), parts[9])
        if i + 1 >= len(lines):
            raise ParseError(f"images.txt missing the 2-D point row for image {image_id}")
        i += 2
    return images


def _read_points3d_txt(path: Path):
    lines = _strip_comment_lines(path)
    n = len(lines)
    positions = np.empty((n, 3), dtype=np.float64)
    colors = np.empty((n, 3), dtype=np.uint8)
    errors = np.empty(n, dtype=np.float64)
    track_lengths = np.empty(n, dtype=np.int64)
    for i, line in enumerate(lines):
        parts = line.split()
        if len(parts) < 8 or (len(parts) - 8) % 2 != 0:
            raise ParseError(f"malformed points3D.txt line: '{line}'")
        positions[i] = [float(v) for v in parts[1:4]]
        rgb = [int(v) for v in parts[4:7]]
        if any(c < 0 or c > 255 for c in rgb):
            raise ParseError(f"color out of range in points3D.txt line: '{line}'")
        colors[i] = rgb
        errors[i] = float(parts[7])
        track_lengths[i] = (len(parts) - 8) // 2
    return positions, colors, errors, track_lengths


def _pick_form(directory: Path, stem: str) -> Path:
    bin_path = directory / f"{stem}.bin"
    txt_path = directory / f"{stem}.txt"
    if bin_path.exists() and txt_path.exists():
        warnings.warn(
            f"both {stem}.bin and {stem}.txt present in {directory}; binary wins",
            stacklevel=3,
        )
        return bin_path
    if bin_path.exists():
        return bin_path
    if txt_path.exists():
        return txt_path
    raise MissingInputError(f"{directory} has neither {stem}.bin nor {stem}.txt")


def read_colmap_model(directory) -> SfmModel:
    """Read a COLMAP sparse model from a directory of .bin or .txt files."""
    directory = Path(directory)
    if not directory.is_dir():
        raise MissingInputError(f"not a directory: {directory}")

    cameras_path = _pick_form(directory, "cameras")
    images_path = _pick_form(directory, "images")
    points_path = _pick_form(directory, "points3D")

    cameras = (
        _read_cameras_bin(cameras_path)
        if cameras_path.suffix == ".bin"
        else _read_cameras_txt(cameras_path)
    )
    images = (
        _read_images_bin(images_path)
        if images_path.suffix == ".bin"
        else _read_images_txt(images_path)
    )
    positions, colors, errors, track_lengths = (
        _read_points3d_bin(points_path)
        if points_path.suffix == ".bin"
        else _read_points3d_txt(points_path)
    )
    points = PointCloud(positions, colors=colors)
    return SfmModel(cameras, images, points, errors, track_lengths)


def write_points3d_bin(cloud: PointCloud, path, errors: np.ndarray | None = None) -> None:
    """Write points3D.bin with fresh sequential ids and empty tracks.

    Trainers reading the file for initialization ignore reprojection errors
    and tracks, so errors default to 0 and no tracks are fabricated.
    """
    if len(cloud) == 0:
        raise ValueError("cannot export an empty point cloud")
    if not cloud.has_colors:
        from .errors import ColorlessCloudError

        raise ColorlessCloudError("points3D export needs per-point colors")
    n = len(cloud)
    if errors is None:
        errors = np.zeros(n, dtype=np.float64)
    records = np.zeros(
        n,
        dtype=[
            ("id", "<u8"),
            ("x", "<f8"),
            ("y", "<f8"),
            ("z", "<f8"),
            ("r", "<u1"),
            ("g", "<u1"),
            ("b", "<u1"),
            ("error", "<f8"),
            ("track_len", "<u8"),
        ],
    )
    records["id"] = np.arange(1, n + 1, dtype=np.uint64)
    records["x"], records["y"], records["z"] = (cloud.positions[:, i] for i in range(3))
    records["r"], records["g"], records["b"] = (cloud.colors[:, i] for i in range(3))
    records["error"] = np.asarray(errors, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", n))
        fh.write(records.tobytes())
