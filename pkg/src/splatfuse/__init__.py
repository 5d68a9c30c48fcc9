"""splatfuse: register metric LiDAR clouds into SfM frames, build
Gaussian-splat initialization priors, and evaluate reconstructions."""

from .cloud import PointCloud
from .colmap import (
    ImagePose,
    PinholeCamera,
    SfmModel,
    read_colmap_model,
    write_points3d_bin,
)
from .fusion import FusionConfig, export_colmap_points, fuse_prior, seed_splats_from_points
from .gaussians import (
    EigenDecomposition,
    GaussianSplat,
    SplatCloud,
    build_covariance,
    color_to_sh_dc,
    eigen_decompose,
    gaussian_logpdf_nd,
    gaussian_pdf_1d,
    gaussian_pdf_nd,
    quadratic_form_bound_check,
    sample_covariance,
    sh_to_color,
    splat_cloud_to_points,
)
from .metrics import (
    CloudMetricReport,
    ImageMetricReport,
    cloud_color_l1_hungarian,
    cloud_color_l1_nn,
    image_l1,
    image_psnr,
)
from .ply import read_ply, write_ply
from .registration import (
    CorrespondenceSet,
    IcpParams,
    IcpReport,
    RegistrationParams,
    RegistrationReport,
    estimate_scale,
    filter_sfm_outliers,
    icp_refine,
    read_correspondence_file,
    register_pipeline,
    umeyama_align,
)
from .render import Camera, Projected2DGaussian, load_image, project_splat, render, save_image
from .spatial import KdTree, build_kdtree, nearest, voxel_downsample
from .splat_io import SplatCloudFile, read_splat_ply, write_splat_ply
from .transforms import Sim3Transform

__version__ = "0.1.0"

__all__ = [
    "Camera",
    "CloudMetricReport",
    "CorrespondenceSet",
    "EigenDecomposition",
    "FusionConfig",
    "GaussianSplat",
    "IcpParams",
    "IcpReport",
    "ImageMetricReport",
    "ImagePose",
    "KdTree",
    "PinholeCamera",
    "PointCloud",
    "Projected2DGaussian",
    "RegistrationParams",
    "RegistrationReport",
    "SfmModel",
    "Sim3Transform",
    "SplatCloud",
    "SplatCloudFile",
    "build_covariance",
    "build_kdtree",
    "cloud_color_l1_hungarian",
    "cloud_color_l1_nn",
    "color_to_sh_dc",
    "eigen_decompose",
    "estimate_scale",
    "export_colmap_points",
    "filter_sfm_outliers",
    "fuse_prior",
    "gaussian_logpdf_nd",
    "gaussian_pdf_1d",
    "gaussian_pdf_nd",
    "icp_refine",
    "image_l1",
    "image_psnr",
    "load_image",
    "nearest",
    "project_splat",
    "quadratic_form_bound_check",
    "read_colmap_model",
    "read_correspondence_file",
    "read_ply",
    "read_splat_ply",
    "register_pipeline",
    "render",
    "sample_covariance",
    "save_image",
    "seed_splats_from_points",
    "sh_to_color",
    "splat_cloud_to_points",
    "umeyama_align",
    "voxel_downsample",
    "write_ply",
    "write_points3d_bin",
    "write_splat_ply",
]
