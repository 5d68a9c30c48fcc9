import numpy as np
import pytest

from splatfuse.cloud import PointCloud
from splatfuse.errors import ParseError, TruncatedFileError
from splatfuse.ply import read_ply, write_ply


def ascii_ply(vertices, extra_props=(), colors=True):
    lines = ["ply", "format ascii 1.0", f"element vertex {len(vertices)}"]
    lines += ["property float x", "property float y", "property float z"]
    if colors:
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
    lines += [f"property {t} {n}" for n, t in extra_props]
    lines.append("end_header")
    for v in vertices:
        lines.append(" ".join(str(x) for x in v))
    return "\n".join(lines) + "\n"


def test_ascii_three_vertices_exact(tmp_path):
    path = tmp_path / "tri.ply"
    path.write_text(
        ascii_ply(
            [
                [1.0, 2.0, 3.0, 255, 0, 0],
                [-1.5, 0.25, 9.0, 0, 255, 0],
                [0.0, 0.0, -4.5, 0, 0, 255],
            ]
        )
    )
    cloud = read_ply(path)
    assert len(cloud) == 3
    np.testing.assert_array_equal(
        cloud.positions, [[1.0, 2.0, 3.0], [-1.5, 0.25, 9.0], [0.0, 0.0, -4.5]]
    )
    np.testing.assert_array_equal(cloud.colors, [[255, 0, 0], [0, 255, 0], [0, 0, 255]])
    assert not cloud.default_colors


def test_binary_round_trip_identity(tmp_path):
    rng = np.random.default_rng(1)
    cloud = PointCloud(
        rng.standard_normal((257, 3)).astype(np.float32),
        colors=rng.integers(0, 256, (257, 3)).astype(np.uint8),
        intensity=rng.random(257).astype(np.float32),
    )
    path = tmp_path / "cloud.ply"
    write_ply(cloud, path)
    back = read_ply(path)
    np.testing.assert_array_equal(back.positions, cloud.positions)
    np.testing.assert_array_equal(back.colors, cloud.colors)
    np.testing.assert_array_equal(back.intensity, cloud.intensity)


def test_write_float32_quantization(tmp_path):
    cloud = PointCloud([[0.1, 0.2, 0.3]], colors=[[1, 2, 3]])
    path = tmp_path / "one.ply"
    write_ply(cloud, path)
    header = path.read_bytes().split(b"end_header")[0].decode()
    assert "element vertex 1" in header
    back = read_ply(path)
    np.testing.assert_allclose(back.positions, cloud.positions, atol=1e-7)


def test_ascii_output_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    cloud = PointCloud(
        rng.standard_normal((20, 3)).astype(np.float32),
        colors=rng.integers(0, 256, (20, 3)).astype(np.uint8),
    )
    path = tmp_path / "a.ply"
    write_ply(cloud, path, fmt="ascii")
    back = read_ply(path)
    np.testing.assert_array_equal(back.positions, cloud.positions)
    np.testing.assert_array_equal(back.colors, cloud.colors)


def test_declared_ten_contains_nine(tmp_path):
    text = ascii_ply([[float(i), 0.0, 0.0, 1, 2, 3] for i in range(9)])
    text = text.replace("element vertex 9", "element vertex 10")
    path = tmp_path / "short.ply"
    path.write_text(text)
    with pytest.raises(TruncatedFileError):
        read_ply(path)


def test_extra_rows_rejected(tmp_path):
    text = ascii_ply([[float(i), 0.0, 0.0, 1, 2, 3] for i in range(5)])
    text = text.replace("element vertex 5", "element vertex 4")
    path = tmp_path / "long.ply"
    path.write_text(text)
    with pytest.raises(ParseError, match="count mismatch"):
        read_ply(path)


def test_binary_truncation_and_trailing(tmp_path):
    cloud = PointCloud(np.arange(30, dtype=np.float64).reshape(10, 3))
    path = tmp_path / "b.ply"
    write_ply(cloud, path)
    data = path.read_bytes()
    truncated = tmp_path / "trunc.ply"
    truncated.write_bytes(data[:-5])
    with pytest.raises(TruncatedFileError):
        read_ply(truncated)
    padded = tmp_path / "padded.ply"
    padded.write_bytes(data + b"\x00\x00")
    with pytest.raises(ParseError, match="count mismatch"):
        read_ply(padded)


def test_unknown_properties_skipped_by_stride(tmp_path):
    lines = [
        "ply",
        "format ascii 1.0",
        "element vertex 2",
        "property float nx",
        "property float x",
        "property double weird",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "property ushort tag",
        "end_header",
        "9 1 7.5 2 3 10 20 30 77",
        "9 4 7.5 5 6 40 50 60 77",
    ]
    path = tmp_path / "extra.ply"
    path.write_text("\n".join(lines) + "\n")
    cloud = read_ply(path)
    np.testing.assert_array_equal(cloud.positions, [[1, 2, 3], [4, 5, 6]])
    np.testing.assert_array_equal(cloud.colors, [[10, 20, 30], [40, 50, 60]])


def test_missing_colors_filled_gray_with_flag(tmp_path):
    path = tmp_path / "nocolor.ply"
    path.write_text(ascii_ply([[1.0, 2.0, 3.0]], colors=False))
    cloud = read_ply(path)
    assert cloud.default_colors
    np.testing.assert_array_equal(cloud.colors, [[128, 128, 128]])


def test_nonfinite_points_dropped_with_count(tmp_path):
    path = tmp_path / "nan.ply"
    path.write_text(
        ascii_ply(
            [
                [1.0, 2.0, 3.0, 1, 1, 1],
                ["nan", 0.0, 0.0, 2, 2, 2],
                [0.0, "inf", 0.0, 3, 3, 3],
                [4.0, 5.0, 6.0, 4, 4, 4],
            ]
        )
    )
    with pytest.warns(UserWarning, match="2 non-finite"):
        cloud = read_ply(path)
    assert len(cloud) == 2
    assert cloud.dropped_points == 2
    np.testing.assert_array_equal(cloud.colors, [[1, 1, 1], [4, 4, 4]])


def test_big_endian_rejected(tmp_path):
    path = tmp_path / "be.ply"
    path.write_text(
        "ply\nformat binary_big_endian 1.0\nelement vertex 0\n"
        "property float x\nproperty float y\nproperty float z\nend_header\n"
    )
    with pytest.raises(ParseError, match="unsupported"):
        read_ply(path)


def test_missing_xyz_property(tmp_path):
    path = tmp_path / "noz.ply"
    path.write_text(
        "ply\nformat ascii 1.0\nelement vertex 1\n"
        "property float x\nproperty float y\nend_header\n1 2\n"
    )
    with pytest.raises(ParseError, match="missing 'z'"):
        read_ply(path)


def test_property_type_mismatch(tmp_path):
    path = tmp_path / "intx.ply"
    path.write_text(
        "ply\nformat ascii 1.0\nelement vertex 1\n"
        "property int x\nproperty float y\nproperty float z\nend_header\n1 2 3\n"
    )
    with pytest.raises(ParseError, match="type mismatch"):
        read_ply(path)
    path2 = tmp_path / "floatred.ply"
    path2.write_text(
        "ply\nformat ascii 1.0\nelement vertex 1\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property float red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n1 2 3 0.5 1 2\n"
    )
    with pytest.raises(ParseError, match="type mismatch"):
        read_ply(path2)


def test_nonempty_face_element_rejected(tmp_path):
    path = tmp_path / "mesh.ply"
    path.write_text(
        "ply\nformat ascii 1.0\nelement vertex 1\n"
        "property float x\nproperty float y\nproperty float z\n"
        "element face 2\nend_header\n1 2 3\n0\n0\n"
    )
    with pytest.raises(ParseError, match="face"):
        read_ply(path)


def test_empty_write_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_ply(PointCloud(np.zeros((0, 3))), tmp_path / "x.ply")


def test_round_trip_second_write_byte_identical(tmp_path):
    rng = np.random.default_rng(3)
    cloud = PointCloud(
        rng.standard_normal((64, 3)).astype(np.float32),
        colors=rng.integers(0, 256, (64, 3)).astype(np.uint8),
    )
    first = tmp_path / "first.ply"
    second = tmp_path / "second.ply"
    write_ply(cloud, first)
    write_ply(read_ply(first), second)
    assert first.read_bytes() == second.read_bytes()
