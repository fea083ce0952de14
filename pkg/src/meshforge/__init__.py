"""meshforge: text- or image-guided 3D asset generation.

Optimizes a subdivision control mesh, texture map and normal map through a
differentiable soft rasterizer against either target images or a remote
image-text scorer, and exports game-ready OBJ/PNG assets.
"""

__version__ = "0.1.0"

from .cameras import CameraPose, ViewConfig, ViewSample, camera_pose, make_background, sample_view  # noqa: F401
from .loss import LambdaSchedule, LaplacianEnergy, RemoteScorer, TargetImageScorer, lambda_step, laplacian_loss, similarity_loss, total_objective  # noqa: F401
from .mesh import ControlMesh, ManifoldReport, load_obj, make_primitive, one_ring, save_assets, validate_manifold  # noqa: F401
from .optimize import RunConfig, adam_step, initialize_parameters, run, select_primitive  # noqa: F401
from .raster import Image, RenderConfig, TexelMap, compute_tangent_frames, render, render_backward, sample_bilinear, soft_coverage  # noqa: F401
from .subdiv import SubdivisionOperator, build_operator, loop_beta  # noqa: F401
