"""lfcodec: a two-lane convolutional autoencoder codec for 9x9 light fields."""

from .augment import (
    AugmentConfig,
    AugmentingSampler,
    FixedSampler,
    adjust_brightness,
    adjust_saturation,
    bilinear_resize,
    flip_horizontal,
    random_crop_resize,
    sample_augmented,
)
from .codec_io import read_checkpoint, read_encoded, write_checkpoint, write_encoded
from .errors import (
    CheckpointIOError,
    CodecError,
    ConfigError,
    CorruptedFileError,
    DatasetError,
    IncompatibleEncodingError,
    LfcError,
    ShapeError,
    UnsupportedFormatError,
)
from .gradcheck import GradCheckResult, grad_check
from .layers import (
    batchnorm_backward,
    batchnorm_eval,
    batchnorm_train,
    concat_channels,
    conv2d,
    conv2d_backward,
    conv_transpose2d,
    conv_transpose2d_backward,
    relu,
    relu_backward,
    split_channels,
)
from .lightfield import (
    DatasetLayout,
    LightField,
    center_view,
    list_light_fields,
    load_light_field,
    save_light_field,
    stack_views,
    unstack_views,
)
from .metrics import QualityReport, QualityRow, evaluate, mse, psnr, ssim, ssim_light_field
from .model import (
    EncodedLightField,
    Model,
    ModelConfig,
    build_model,
    compression_ratio,
    decode,
    encode,
    forward,
    parameter_count,
)
from .synthetic import synthetic_dataset, synthetic_light_field
from .tensor import BatchNormParams, ConvParams, Tensor
from .train import (
    AdamState,
    TrainConfig,
    TrainHistory,
    adam_step,
    lr_for_epoch,
    mse_loss,
    train,
    train_iteration,
)

__version__ = "0.1.0"
