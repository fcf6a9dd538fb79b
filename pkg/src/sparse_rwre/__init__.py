"""Random walks in moderately sparse random environments: simulation and checks."""

from .env import EnvSpec, EnvRealization, build_env_spec, classify_regime, sample_env
from .errors import SparseRWREError

__all__ = ["EnvSpec", "EnvRealization", "SparseRWREError", "build_env_spec", "classify_regime", "sample_env"]
__version__ = "0.1.0"
