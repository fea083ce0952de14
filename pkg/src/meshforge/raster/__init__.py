from .kernels import USING_COMPILED  # noqa: F401
from .render import (  # noqa: F401
    Image,
    RenderConfig,
    RenderTape,
    compute_tangent_frames,
    render,
    render_backward,
    soft_coverage,
)
from .texel import TexelMap, sample_bilinear  # noqa: F401
