"""Minimal numpy-only neural network substrate.

Hand-derived gradients for every layer, double precision throughout, no
autodiff. Every backward pass is protected by the finite-difference checker
in :mod:`quadfault.nn.gradcheck`.
"""

from quadfault.nn.layers import Conv2D, Dense, Flatten, MaxPool2, ReLU, Sequential, glorot_uniform
from quadfault.nn.lstm import LSTM, LstmCellWeights, lstm_cell_forward
from quadfault.nn.losses import mse, softmax_xent
from quadfault.nn.optim import SGD, Adam, make_optimizer
from quadfault.nn.gradcheck import check_gradients
from quadfault.nn.checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Conv2D",
    "Dense",
    "Flatten",
    "MaxPool2",
    "ReLU",
    "Sequential",
    "LSTM",
    "LstmCellWeights",
    "lstm_cell_forward",
    "glorot_uniform",
    "mse",
    "softmax_xent",
    "SGD",
    "Adam",
    "make_optimizer",
    "check_gradients",
    "save_checkpoint",
    "load_checkpoint",
]
