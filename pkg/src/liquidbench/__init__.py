"""Liquid time-constant and closed-form continuous-time recurrent cells,
benchmarked against an LSTM baseline at desk scale."""

from liquidbench.autograd import Tape, Tensor
from liquidbench.cells import CellParams, CellState, init_cell
from liquidbench.model import Model, ModelConfig, build_model

__all__ = [
    "CellParams",
    "CellState",
    "Model",
    "ModelConfig",
    "Tape",
    "Tensor",
    "build_model",
    "init_cell",
]

__version__ = "0.1.0"
