"""Builders for the four desk-scale networks.

A and C train with the window in place (developmental); B and D train a plain
layer that is only windowed at evaluation time (disorganized), so that layer
has no bias.  ``network.target`` is the index of the layer a window targets.
"""
from __future__ import annotations

from .layers import Conv2D, Dense, Dropout, Flatten, MaxPool2x2, Network, Relu
from .window import WindowSpec, build_window

MNIST_SHAPE = (28, 28, 1)
CIFAR_SHAPE = (32, 32, 3)


def _window(spec, n_x, n_y):
    return None if spec is None else build_window(spec, n_x, n_y)


def network_a(window: WindowSpec | None = None, hidden: int = 512, input_shape=MNIST_SHAPE) -> Network:
    n_in = input_shape[0] * input_shape[1] * input_shape[2]
    layers = [
        Flatten(),
        Dense(n_in, hidden, window=_window(window, n_in, hidden)),
        Relu(),
        Dense(hidden, 10, init="glorot"),
    ]
    net = Network(input_shape, layers, name="A")
    net.target = 1
    return net


def network_b(hidden: int = 512, input_shape=MNIST_SHAPE) -> Network:
    n_in = input_shape[0] * input_shape[1] * input_shape[2]
    layers = [
        Flatten(),
        Dense(n_in, hidden),
        Relu(),
        Dense(hidden, hidden, use_bias=False),
        Relu(),
        Dense(hidden, 10, init="glorot"),
    ]
    net = Network(input_shape, layers, name=f"B{hidden}")
    net.target = 3
    return net


def _conv_stack():
    return [
        Conv2D(3, 3, 3, 32, padding="zero"), Relu(),
        Conv2D(3, 3, 32, 32, padding="none"), Relu(),
        MaxPool2x2(), Dropout(0.25),
        Conv2D(3, 3, 32, 64, padding="zero"), Relu(),
        Conv2D(3, 3, 64, 64, padding="none"), Relu(),
        MaxPool2x2(), Dropout(0.25),
        Flatten(),
    ]


def network_c(window: WindowSpec | None = None, l1: float = 0.0, hidden: int = 512) -> Network:
    layers = _conv_stack() + [
        Dense(2304, hidden, window=_window(window, 2304, hidden), l1=l1),
        Relu(),
        Dense(hidden, 10, init="glorot"),
    ]
    net = Network(CIFAR_SHAPE, layers, name="C")
    net.target = len(layers) - 3
    return net


def network_d(hidden: int = 512) -> Network:
    layers = _conv_stack() + [
        Dense(2304, hidden, use_bias=False),
        Relu(),
        Dense(hidden, 10, init="glorot"),
    ]
    net = Network(CIFAR_SHAPE, layers, name="D")
    net.target = len(layers) - 3
    return net


def build(name: str, window: WindowSpec | None = None, hidden: int | None = None, l1: float = 0.0) -> Network:
    name = name.upper()
    if name == "A":
        return network_a(window, hidden or 512)
    if name == "B":
        return network_b(hidden or 512)
    if name == "C":
        return network_c(window, l1, hidden or 512)
    if name == "D":
        return network_d(hidden or 512)
    raise ValueError(f"unknown network {name!r}")
