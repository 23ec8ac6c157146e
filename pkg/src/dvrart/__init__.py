"""CPU direct volume rendering with artifact remedies and quality metrics."""

from .errors import ConfigurationError, DimensionError, ParameterError
from .volcore import (
    MipPyramid,
    PhantomSpec,
    ScalarVolume,
    VolumeMeta,
    build_mip_pyramid,
    load_raw_volume,
    make_phantom,
    save_raw_volume,
    voxel_fetch,
)
from .interp import (
    CoefficientVolume,
    InterpolationMode,
    prefilter_bspline_coefficients,
    sample_nearest,
    sample_tricubic_bspline,
    sample_trilinear,
)
from .transfer import (
    PreintegrationTable,
    TransferFunction,
    build_preintegration_table,
    classify,
    correct_opacity,
    lookup_preintegrated,
    smooth_transfer_function,
)
from .raycast import (
    Camera,
    Framebuffer,
    Ray,
    RenderSettings,
    Scene,
    SegmentSample,
    composite_front_to_back,
    generate_ray,
    integrate_ray,
    jitter_offset,
    ray_box_intersect,
    render_frame,
)

__version__ = "0.1.0"
