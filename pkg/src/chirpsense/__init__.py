"""LoRa chirp synthesis, (BW, SF) inference from instantaneous frequency,
and reactive-jamming simulation."""

__version__ = "0.1.0"

from .config import LoRaConfig, all_configs
from .features import IFTransformer
from .classifier import ChirpClassifier, MlpModel, TrainConfig, load_model, save_model

__all__ = [
    "LoRaConfig", "all_configs", "IFTransformer", "ChirpClassifier",
    "MlpModel", "TrainConfig", "load_model", "save_model",
]
