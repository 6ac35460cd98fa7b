"""Similarity modeling on content-rich heterogeneous networks by reinforcement-learned path discovery."""

from .hetnet import LabelSet, Network, NodeTypeMeta, PairSet, load_network, save_network
from .trainer import Hyperparams, Model, train

__version__ = "0.1.0"

__all__ = [
    "Hyperparams",
    "LabelSet",
    "Model",
    "Network",
    "NodeTypeMeta",
    "PairSet",
    "load_network",
    "save_network",
    "train",
]
