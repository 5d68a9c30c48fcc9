"""
Registering a metric LiDAR cloud into an SfM frame
===================================================

SfM reconstructions live in an arbitrary scale-free frame while LiDAR is
metric, so alignment needs a full similarity transform. This demo builds a
synthetic scan (ground plane plus box buildings), derives a scale-free
"SfM" counterpart of it, and recovers the transform in the three pipeline
stages: robust scale, coarse alignment from picked pairs, trimmed ICP.
"""

import numpy as np

from splatfuse import (
    CorrespondenceSet,
    PointCloud,
    Sim3Transform,
    estimate_scale,
    filter_sfm_outliers,
    register_pipeline,
)
from splatfuse.transforms import quat_from_axis_angle, quat_multiply

rng = np.random.default_rng(7)

# --- synthetic survey: a flat site with a few buildings, sampled on surfaces
n_ground = 12000
ground = np.column_stack(
    [rng.uniform(-40, 40, n_ground), rng.uniform(-40, 40, n_ground), np.zeros(n_ground)]
)
walls = []
for _ in range(8):
    cx, cy = rng.uniform(-30, 30, 2)
    w, d, h = rng.uniform(5, 12), rng.uniform(5, 12), rng.uniform(6, 25)
    u = rng.uniform(0, 1, (1500, 3))
    face = rng.integers(0, 5, 1500)
    x = cx - w / 2 + u[:, 0] * w
    y = cy - d / 2 + u[:, 1] * d
    z = u[:, 2] * h
    x[face == 1] = cx - w / 2
    x[face == 2] = cx + w / 2
    y[face == 3] = cy - d / 2
    y[face == 4] = cy + d / 2
    z[face == 0] = h
    walls.append(np.column_stack([x, y, z]))
lidar = PointCloud(
    np.vstack([ground] + walls),
    colors=rng.integers(0, 256, (n_ground + 8 * 1500, 3)).astype(np.uint8),
)
print(f"LiDAR cloud: {len(lidar)} points, metric frame")

# --- the "SfM" cloud: a subset of the survey in a small arbitrary frame,
#     with a few percent of the stray far-out points SfM always produces
truth = Sim3Transform(
    scale=0.02,
    rotation=quat_from_axis_angle([0.2, -0.3, 1.0], np.radians(25.0)),
    translation=[0.4, -0.1, 1.3],
)
sfm_positions = truth.apply(lidar.positions[::5])
stray = sfm_positions.mean(axis=0) + rng.uniform(-1, 1, (300, 3)) * 50.0
sfm = PointCloud(np.vstack([sfm_positions, stray]))
print(f"SfM cloud: {len(sfm)} points (including {len(stray)} strays)")

# --- stage 0: drop the strays before anything else
sfm_clean = filter_sfm_outliers(sfm)
print(f"after outlier filtering: {len(sfm_clean)} points")

# --- stage 1: the clouds' robust radii fix the scale
scale = estimate_scale(lidar, sfm_clean)
print(f"estimated scale {scale:.6f} (truth {truth.scale})")

# --- stage 2 + 3: six manual picks, then the full pipeline.
#     The picks mimic a user clicking matching landmarks, slightly off.
picked = rng.choice(len(lidar), 6, replace=False)
click_noise = Sim3Transform(
    1.0, quat_from_axis_angle(rng.standard_normal(3), np.radians(3.0)), [0.01, 0, -0.01]
)
corr = CorrespondenceSet(
    lidar.positions[picked],
    click_noise.compose(truth).apply(lidar.positions[picked]),
)
transform, report = register_pipeline(lidar, sfm_clean, corr)

relative = quat_multiply(
    transform.rotation,
    [truth.rotation[0], -truth.rotation[1], -truth.rotation[2], -truth.rotation[3]],
)
rotation_error = np.degrees(2 * np.arccos(min(1.0, abs(float(relative[0])))))
print(f"\npipeline result after {report.icp.iterations} ICP iterations "
      f"(converged={report.icp.converged}):")
print(f"  scale error       {abs(transform.scale - truth.scale) / truth.scale:.2e}")
print(f"  rotation error    {rotation_error:.4f} deg")
print(f"  translation error {np.linalg.norm(transform.translation - truth.translation):.2e}")
print(f"  trimmed RMS history: {['%.4g' % v for v in report.icp.rms_history[:6]]} ...")
