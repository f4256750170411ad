"""From-scratch LSTM stock forecasting: four architectures, sentiment and
fundamentals features, a benchmark harness and returns-to-volatility advisories."""

from .models import ARCHITECTURES, ModelParams, ModelSpec, init_params
from .train import TrainConfig, train

__all__ = ["ARCHITECTURES", "ModelParams", "ModelSpec", "TrainConfig", "init_params", "train"]
__version__ = "0.1.0"
