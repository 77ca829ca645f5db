"""Synthetic anti-money-laundering transaction network generator."""
from .config import ConfigError, SimulationConfig, load_config, load_config_file, preset_document
from .kernels import BACKEND
from .simulation import run_pipeline

__version__ = "0.1.0"

__all__ = ["BACKEND", "ConfigError", "SimulationConfig", "load_config", "load_config_file",
           "preset_document", "run_pipeline", "__version__"]
