from .encoder import (
    AlignmentAdapter,
    EncoderConfig,
    SpatialAdapter,
    TagsImageEncoder,
    stage_residual,
)
from .decoder import DecoderConfig, MaskDecoder, encode_points
from .net import NumericalError, ParameterPartition, TagsNet, parameter_partition

__all__ = [
    "EncoderConfig",
    "TagsImageEncoder",
    "AlignmentAdapter",
    "SpatialAdapter",
    "stage_residual",
    "DecoderConfig",
    "MaskDecoder",
    "encode_points",
    "TagsNet",
    "ParameterPartition",
    "parameter_partition",
    "NumericalError",
]
