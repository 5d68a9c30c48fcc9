"""
Point-cloud color evaluation: nearest-match and exact assignment
================================================================

Image metrics only see a reconstruction through its renders; comparing
splat centers against the surveyed cloud measures the 3-D structure
directly. Each predicted point is matched to a ground-truth point spatially
and the per-channel color difference is averaged on the 0-255 scale. The
scalable mode matches each prediction to its exact nearest neighbor; the
assignment mode solves the minimum-cost one-to-one matching and serves as
the oracle on small instances.
"""

import numpy as np

from splatfuse import (
    PointCloud,
    SplatCloud,
    cloud_color_l1_hungarian,
    cloud_color_l1_nn,
    splat_cloud_to_points,
)

rng = np.random.default_rng(21)

# --- ground truth: a colored surface patch
n = 4000
gt_positions = np.column_stack(
    [rng.uniform(0, 10, n), rng.uniform(0, 10, n), rng.uniform(0, 0.3, n)]
)
gt_colors = np.column_stack(
    [
        (gt_positions[:, 0] / 10 * 255).astype(np.uint8),
        (gt_positions[:, 1] / 10 * 255).astype(np.uint8),
        np.full(n, 60, dtype=np.uint8),
    ]
)
gt = PointCloud(gt_positions, colors=gt_colors)

# --- a "reconstruction": jittered positions, colors drifted a little
drift = rng.normal(0.0, 6.0, (n, 3))
pred_colors = np.clip(gt_colors.astype(float) + drift, 0, 255).astype(np.uint8)
pred = PointCloud(gt_positions + rng.normal(0, 0.03, (n, 3)), colors=pred_colors)

nn = cloud_color_l1_nn(pred, gt)
print("nearest-match metric (pred -> gt):")
print(f"  color L1          {nn.color_l1:.2f}  (0-255 scale)")
print(f"  matched           {nn.matched}/{nn.pred_count}")
print(f"  mean/max distance {nn.mean_distance:.4f} / {nn.max_distance:.4f}")

# direction matters: matching gt against pred is a different question
reverse = cloud_color_l1_nn(gt, pred)
print(f"  reversed direction color L1: {reverse.color_l1:.2f}")

# --- on a small instance the assignment mode is exact and agrees
small_pred = pred.select(np.arange(300))
small_gt = gt.select(np.arange(300))
exact = cloud_color_l1_hungarian(small_pred, small_gt)
approx = cloud_color_l1_nn(small_pred, small_gt)
print("\n300-point instance:")
print(f"  assignment color L1    {exact.color_l1:.2f} "
      f"(total spatial cost {exact.total_spatial_cost:.3f})")
print(f"  nearest-match color L1 {approx.color_l1:.2f} "
      f"(total spatial cost {approx.total_spatial_cost:.3f})")

# --- splat reconstructions evaluate through their means and band-0 colors
splats = SplatCloud(
    means=gt_positions[:500],
    scales=np.full((500, 3), 0.05),
    rotations=np.tile([1.0, 0, 0, 0], (500, 1)),
    opacities=np.full(500, 0.8),
    sh=((gt_colors[:500] / 255.0 - 0.5) / 0.28209479177387814)[:, None, :],
)
as_points = splat_cloud_to_points(splats)
print("\nsplat centers vs survey:",
      f"color L1 = {cloud_color_l1_nn(as_points, gt).color_l1:.3f}")
