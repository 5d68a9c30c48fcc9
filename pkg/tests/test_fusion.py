import numpy as np
import pytest

from conftest import brute_force_nearest, random_colored_cloud, random_sim3
from splatfuse.cloud import PointCloud
from splatfuse.colmap import _read_points3d_bin
from splatfuse.errors import ColorlessCloudError
from splatfuse.fusion import (
    FusionConfig,
    export_colmap_points,
    fuse_prior,
    mean_knn_distances,
    seed_splats_from_points,
)
from splatfuse.gaussians import SH_C0
from splatfuse.splat_io import write_splat_ply
from splatfuse.transforms import Sim3Transform


def grid_cloud(spacing, count_per_axis, rng=None):
    axes = [np.arange(count_per_axis) * spacing] * 3
    positions = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    rng = rng or np.random.default_rng(0)
    colors = rng.integers(0, 256, (len(positions), 3)).astype(np.uint8)
    return PointCloud(positions, colors=colors)


class TestFusePrior:
    def test_grid_downsample_count_matches_cell_oracle(self):
        cloud = grid_cloud(0.1, 10)  # 1000 points, 0.1 m apart
        config = FusionConfig(voxel_edge_m=0.2)
        down, splats = fuse_prior(cloud, Sim3Transform.identity(), config)
        cells = {
            tuple(int(np.floor(c / 0.2)) for c in p) for p in cloud.positions
        }
        assert len(down) == len(cells)
        assert len(splats) == len(down)
        # spacing respected: no two output points share a voxel
        d, _ = brute_force_nearest(
            down.positions, down.positions + 1e-12
        )
        assert len(down) < len(cloud)

    def test_sparse_cloud_positions_unchanged_and_seed_scales(self):
        rng = np.random.default_rng(1)
        cloud = grid_cloud(1.0, 4, rng)  # already sparser than the voxel edge
        config = FusionConfig(voxel_edge_m=0.5)
        down, splats = fuse_prior(cloud, Sim3Transform.identity(), config)
        assert {tuple(p) for p in down.positions} == {tuple(p) for p in cloud.positions}

        # seed scales equal per-point mean 3-NN distance (unclamped here)
        expected = []
        for p in down.positions:
            d = np.linalg.norm(down.positions - p, axis=1)
            expected.append(np.sort(d)[1:4].mean())
        expected = np.clip(expected, 0.5 / 4.0, 0.5 * 4.0)
        np.testing.assert_allclose(
            splats.scales(), np.repeat(np.asarray(expected)[:, None], 3, axis=1),
            rtol=1e-6,
        )

    def test_transform_applied_exactly(self):
        rng = np.random.default_rng(2)
        cloud = grid_cloud(1.0, 3, rng)
        t = random_sim3(rng, scale_range=(0.01, 0.01), translation_scale=0.5)
        down, _ = fuse_prior(cloud, t, FusionConfig(voxel_edge_m=0.5))
        expected = t.apply(cloud.positions)
        assert {tuple(p) for p in down.positions} == {tuple(p) for p in expected}

    def test_metric_edge_converted_by_scale(self):
        # 0.2 m spacing cloud, scale 0.01: a 0.3 m edge merges neighbors
        cloud = grid_cloud(0.2, 6)
        t = Sim3Transform.from_scale(0.01)
        down_fine, _ = fuse_prior(cloud, t, FusionConfig(voxel_edge_m=0.15))
        down_coarse, _ = fuse_prior(cloud, t, FusionConfig(voxel_edge_m=0.45))
        assert len(down_fine) == len(cloud)
        assert len(down_coarse) < len(cloud)

    def test_seed_splat_fields(self):
        rng = np.random.default_rng(3)
        cloud = random_colored_cloud(rng, 200, extent=2.0)
        config = FusionConfig(voxel_edge_m=0.4, initial_opacity=0.1)
        down, splats = fuse_prior(cloud, Sim3Transform.identity(), config)
        np.testing.assert_allclose(splats.opacities(), 0.1, rtol=1e-6)
        np.testing.assert_array_equal(
            splats.rotations, np.tile([1, 0, 0, 0], (len(splats), 1)).astype(np.float32)
        )
        # band-0 SH inverts back to the downsampled colors
        recovered = np.clip(
            np.rint((0.5 + SH_C0 * splats.f_dc.astype(np.float64)) * 255.0), 0, 255
        )
        np.testing.assert_array_equal(recovered, down.colors)
        # scales clamped to [edge/4, 4 edge]
        assert (splats.scales() >= 0.4 / 4 - 1e-9).all()
        assert (splats.scales() <= 0.4 * 4 + 1e-9).all()

    def test_point_cap_deterministic(self):
        rng = np.random.default_rng(4)
        cloud = random_colored_cloud(rng, 5000, extent=5.0)
        config = FusionConfig(voxel_edge_m=0.1, point_cap=64)
        down1, _ = fuse_prior(cloud, Sim3Transform.identity(), config)
        down2, _ = fuse_prior(cloud, Sim3Transform.identity(), config)
        assert len(down1) == 64
        np.testing.assert_array_equal(down1.positions, down2.positions)

    def test_outputs_near_transformed_input(self):
        rng = np.random.default_rng(5)
        cloud = random_colored_cloud(rng, 3000, extent=3.0)
        t = random_sim3(rng, scale_range=(0.5, 2.0))
        config = FusionConfig(voxel_edge_m=0.3)
        down, _ = fuse_prior(cloud, t, config)
        edge = 0.3 * t.scale
        transformed = t.apply(cloud.positions)
        d, _ = brute_force_nearest(transformed, down.positions)
        assert d.max() <= np.sqrt(3.0) / 2.0 * edge + 1e-12

    def test_colorless_rejected(self):
        with pytest.raises(ColorlessCloudError):
            fuse_prior(PointCloud(np.zeros((5, 3))), Sim3Transform.identity())

    def test_byte_identical_outputs(self, tmp_path):
        rng = np.random.default_rng(6)
        cloud = random_colored_cloud(rng, 2000, extent=2.0)
        t = random_sim3(rng)
        paths = []
        for name in ("a.ply", "b.ply"):
            _, splats = fuse_prior(cloud, t, FusionConfig(voxel_edge_m=0.25))
            path = tmp_path / name
            write_splat_ply(splats, path)
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_config_validation(self):
        with pytest.raises(ValueError):
            FusionConfig(voxel_edge_m=0.0)
        with pytest.raises(ValueError):
            FusionConfig(point_cap=0)
        with pytest.raises(ValueError):
            FusionConfig(initial_opacity=1.0)


class TestKnnDistances:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        positions = rng.uniform(0, 1, (100, 3))
        result = mean_knn_distances(positions, k=3)
        for i in (0, 13, 99):
            d = np.sort(np.linalg.norm(positions - positions[i], axis=1))
            assert result[i] == pytest.approx(d[1:4].mean(), rel=1e-12)

    def test_tiny_clouds(self):
        assert mean_knn_distances(np.zeros((1, 3)))[0] == 0.0
        two = np.array([[0.0, 0, 0], [1.0, 0, 0]])
        np.testing.assert_allclose(mean_knn_distances(two), [1.0, 1.0])


class TestExport:
    def test_three_point_export_parses_back(self, tmp_path):
        cloud = PointCloud(
            [[1.0, 2, 3], [4.0, 5, 6], [7.0, 8, 9]],
            colors=[[10, 20, 30], [40, 50, 60], [70, 80, 90]],
        )
        export_colmap_points(cloud, tmp_path / "sparse")
        positions, colors, errors, tracks = _read_points3d_bin(
            tmp_path / "sparse" / "points3D.bin"
        )
        np.testing.assert_array_equal(positions, cloud.positions)
        np.testing.assert_array_equal(colors, cloud.colors)
        assert (errors == 0).all()
        assert (tracks == 0).all()

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            export_colmap_points(
                PointCloud(np.zeros((0, 3)), colors=np.zeros((0, 3), np.uint8)),
                tmp_path,
            )

    def test_colorless_rejected(self, tmp_path):
        with pytest.raises(ColorlessCloudError):
            export_colmap_points(PointCloud(np.zeros((3, 3))), tmp_path)

    def test_large_export_round_trip(self, tmp_path):
        rng = np.random.default_rng(8)
        cloud = random_colored_cloud(rng, 100_000, extent=100.0)
        export_colmap_points(cloud, tmp_path)
        positions, colors, _, _ = _read_points3d_bin(tmp_path / "points3D.bin")
        np.testing.assert_array_equal(positions, cloud.positions)
        np.testing.assert_array_equal(colors, cloud.colors)


class TestSeedSplatsStandalone:
    def test_unclamped_scale_rule(self):
        rng = np.random.default_rng(9)
        cloud = random_colored_cloud(rng, 50, extent=1.0)
        splats = seed_splats_from_points(cloud, opacity=0.25)
        expected = mean_knn_distances(cloud.positions)
        np.testing.assert_allclose(splats.scales()[:, 0], expected, rtol=1e-6)
        np.testing.assert_allclose(splats.opacities(), 0.25, rtol=1e-6)
