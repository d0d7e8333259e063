from .config import RunConfig, load_config  # noqa: F401
from .model import AsmModel, ModelConfig, build, build_baseline  # noqa: F401
from .trainer import TrainConfig, fit  # noqa: F401

__all__ = ["AsmModel", "ModelConfig", "RunConfig", "TrainConfig", "build", "build_baseline", "fit", "load_config"]
