"""
RegCal - Command Line Interface
"""

from .main import build_parser, cmd_apply, cmd_eval, cmd_fit, cmd_match, cmd_synth, main
from .model_file import FORMAT_VERSION, ModelFile, load_model, save_model

__all__ = [
    "main",
    "build_parser",
    "cmd_fit",
    "cmd_apply",
    "cmd_eval",
    "cmd_match",
    "cmd_synth",
    "ModelFile",
    "FORMAT_VERSION",
    "load_model",
    "save_model",
]
