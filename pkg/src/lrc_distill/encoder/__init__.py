from .checkpoint import load_checkpoint, save_checkpoint
from .model import EncoderModel, forward, init_params, param_count, parameter_shapes
from .models import EncoderConfig, ForwardTrace

__all__ = [
    "EncoderConfig",
    "EncoderModel",
    "ForwardTrace",
    "forward",
    "init_params",
    "load_checkpoint",
    "param_count",
    "parameter_shapes",
    "save_checkpoint",
]
