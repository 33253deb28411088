"""Image stylization by aligning convolutional feature distributions.

Style is treated as the distribution of a layer's activation vectors across
spatial positions; stylization minimizes a distribution mismatch (Gram,
kernel MMD or channel-statistics) plus a feature-space content term, by
gradient descent on the image itself.
"""

from .image_io import (
    RgbImage,
    fit_long_side,
    load_png,
    postprocess,
    preprocess,
    resize_bilinear,
    save_png,
)
from .losses import (
    BNStats,
    FusionSpec,
    GaussianKernel,
    GaussianMMD,
    Gram,
    LinearKernel,
    LinearMMD,
    PolyKernel,
    PolyMMD,
    bn_stats,
    bn_style_loss_and_grad,
    content_loss_and_grad,
    fused_style_loss_and_grad,
    gaussian_mmd_sampled_and_grad,
    gram,
    gram_style_loss_and_grad,
    mmd_biased,
    mmd_style_loss_and_grad,
    style_loss_and_grad,
    to_feature_matrix,
)
from .network import (
    ActivationCache,
    LayerSpec,
    NetworkSpec,
    backward_to_image,
    build_vgg19,
    forward_capture,
)
from .optimize import (
    CalibrationDegenerateError,
    CalibrationResult,
    TraceRow,
    TransferConfig,
    calibrate_beta_prime,
    run_transfer,
    total_loss_and_image_grad,
    trace_to_csv,
)
from .tensor import ConvParams, ShapeError, Tensor4
from .weights_io import (
    ContainerFormatError,
    TensorEntry,
    WeightContainer,
    load_container,
    read_container,
    save_container,
    write_container,
)

__version__ = "0.1.0"
