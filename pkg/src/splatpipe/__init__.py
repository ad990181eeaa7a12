"""Geometry and rendering pipeline for feed-forward Gaussian splatting on unconstrained photo collections."""

from ._kernels import BACKEND
from .camera import (DepthMap, ImageBuffer, PinholeCamera, PointMap, RayMap, depth_to_points,
                     pose_distance_angle, project, ray_points, unproject)
from .errors import (BehindCameraError, DegenerateError, DimensionMismatchError, EmptyMaskError,
                     FormatError, NoModelFoundError, SplatError)
from .gaussians import (AppearanceEmbedding, ConvHeadWeights, ConvLayer, GaussianSet, RawHeadOutputs,
                        activate_params, appearance_head, assemble_gaussians, conv2d_forward,
                        interpolate_embedding)
from .render import RenderOutput, masked_mse, psnr, rasterize

__version__ = "0.1.0"
