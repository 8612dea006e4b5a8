"""Layers with explicit forward/backward passes and a sequential container."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .tensor import col2im, conv_output_hw, im2col, maxpool2x2, maxpool2x2_backward
from .window import WindowMatrix, window_factor


def he_init(shape, fan_in: int, rng: np.random.Generator, dtype=np.float64) -> np.ndarray:
    """Normal draws with standard deviation ``sqrt(2 / fan_in)``."""
    if fan_in < 1:
        raise ValueError("fan_in must be >= 1")
    return (rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)).astype(dtype)


def glorot_uniform(shape, fan_in: int, fan_out: int, rng: np.random.Generator, dtype=np.float64):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape).astype(dtype)


class Layer:
    trainable = False

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return {}

    def output_shape(self, input_shape: tuple) -> tuple:
        return input_shape

    def param_count(self) -> int:
        return sum(p.size for p in self.params().values())

    def astype(self, dtype):
        return self


class _Windowed(Layer):
    """Shared handling for layers whose ``(n_x, n_y)`` weight view can be windowed."""

    trainable = True
    window: WindowMatrix | None

    def __init__(self, use_bias, window, l1):
        self.use_bias = use_bias
        self.window = window
        self.l1 = l1
        self.W = None
        self.b = None
        self.dW = None
        self.db = None
        self._cache = None

    @property
    def window_shape(self) -> tuple[int, int]:
        raise NotImplementedError

    def set_window(self, window: WindowMatrix | None):
        if window is not None and window.values.shape != self.window_shape:
            raise ValueError(f"window {window.values.shape} does not fit layer {self.window_shape}")
        self.window = window

    def effective_weights(self) -> np.ndarray:
        if self.window is None:
            return self.W
        return self.W * window_factor(self.window, self.W.dtype)

    def zero_masked(self):
        """Zero stored weights wherever the window factor is exactly 0."""
        if self.window is not None:
            self.W *= (self.window.values != 0).astype(self.W.dtype)

    def params(self):
        p = {"W": self.W}
        if self.use_bias:
            p["b"] = self.b
        return p

    def grads(self):
        g = {"W": self.dW}
        if self.use_bias:
            g["b"] = self.db
        return g

    def astype(self, dtype):
        self.W = self.W.astype(dtype)
        if self.b is not None:
            self.b = self.b.astype(dtype)
        return self


class Dense(_Windowed):
    """Fully connected layer ``y = x @ W + b``.

    With a window attached the effective weights are ``apply_window(W, F)``,
    which is the distance-windowed connection layer.
    """

    def __init__(self, n_in: int, n_out: int, use_bias: bool = True,
                 window: WindowMatrix | None = None, l1: float = 0.0, init: str = "he"):
        super().__init__(use_bias, None, l1)
        self.n_in, self.n_out, self.init = n_in, n_out, init
        self.W = np.zeros((n_in, n_out))
        self.b = np.zeros(n_out) if use_bias else None
        self.set_window(window)

    @property
    def window_shape(self):
        return (self.n_in, self.n_out)

    def initialize(self, rng, dtype=np.float64):
        if self.init == "glorot":
            self.W = glorot_uniform((self.n_in, self.n_out), self.n_in, self.n_out, rng, dtype)
        else:
            self.W = he_init((self.n_in, self.n_out), self.n_in, rng, dtype)
        self.b = np.zeros(self.n_out, dtype=dtype) if self.use_bias else None

    def output_shape(self, input_shape):
        if input_shape != (self.n_in,):
            raise ValueError(f"Dense expects input ({self.n_in},), got {input_shape}")
        return (self.n_out,)

    def forward(self, x, training=False):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ValueError(f"Dense expects (batch, {self.n_in}) input, got {x.shape}")
        w = self.effective_weights()
        self._cache = (x, w)
        y = x @ w
        if self.use_bias:
            y += self.b
        return y

    def backward(self, grad):
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        x, w = self._cache
        dW = x.T @ grad
        if self.window is not None:
            dW *= window_factor(self.window, dW.dtype)
        self.dW = dW
        if self.use_bias:
            self.db = grad.sum(axis=0)
        return grad @ w.T

    def __repr__(self):
        tag = f", window={self.window.kind}@{self.window.achieved_reduction:.3f}" if self.window is not None else ""
        return f"Dense({self.n_in}->{self.n_out}, bias={self.use_bias}{tag})"


class Conv2D(_Windowed):
    """Stride-1 convolution over ``(batch, h, w, c)`` inputs.

    A window is a single ``(c_in, c_out)`` matrix shared by every spatial
    offset of the kernel, so masking acts along channels only.
    """

    def __init__(self, kh: int, kw: int, c_in: int, c_out: int, padding: str = "zero",
                 use_bias: bool = True, window: WindowMatrix | None = None):
        super().__init__(use_bias, None, 0.0)
        if padding not in ("zero", "none"):
            raise ValueError(f"unknown padding mode {padding!r}")
        self.kh, self.kw, self.c_in, self.c_out, self.padding = kh, kw, c_in, c_out, padding
        self.W = np.zeros((kh, kw, c_in, c_out))
        self.b = np.zeros(c_out) if use_bias else None
        self.set_window(window)

    @property
    def window_shape(self):
        return (self.c_in, self.c_out)

    def initialize(self, rng, dtype=np.float64):
        self.W = he_init(self.W.shape, self.kh * self.kw * self.c_in, rng, dtype)
        self.b = np.zeros(self.c_out, dtype=dtype) if self.use_bias else None

    def output_shape(self, input_shape):
        h, w, c = input_shape
        if c != self.c_in:
            raise ValueError(f"Conv2D expects {self.c_in} channels, got {c}")
        ho, wo = conv_output_hw(h, w, self.kh, self.kw, self.padding)
        return (ho, wo, self.c_out)

    def forward(self, x, training=False):
        if x.ndim != 4 or x.shape[3] != self.c_in:
            raise ValueError(f"Conv2D expects (batch, h, w, {self.c_in}) input, got {x.shape}")
        k = self.effective_weights()
        kmat = k.reshape(-1, self.c_out)
        cols = im2col(x, self.kh, self.kw, self.padding)
        n, h, w, _ = x.shape
        ho, wo = conv_output_hw(h, w, self.kh, self.kw, self.padding)
        y = cols @ kmat
        if self.use_bias:
            y += self.b
        self._cache = (x.shape, cols, kmat)
        return y.reshape(n, ho, wo, self.c_out)

    def backward(self, grad):
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        x_shape, cols, kmat = self._cache
        g = grad.reshape(-1, self.c_out)
        dW = (cols.T @ g).reshape(self.W.shape)
        if self.window is not None:
            dW *= window_factor(self.window, dW.dtype)
        self.dW = dW
        if self.use_bias:
            self.db = g.sum(axis=0)
        return col2im(g @ kmat.T, x_shape, self.kh, self.kw, self.padding)

    def __repr__(self):
        tag = f", window={self.window.kind}@{self.window.achieved_reduction:.3f}" if self.window is not None else ""
        return f"Conv2D({self.kh}x{self.kw}, {self.c_in}->{self.c_out}, {self.padding}{tag})"


class MaxPool2x2(Layer):
    def output_shape(self, input_shape):
        h, w, c = input_shape
        return (h // 2, w // 2, c)

    def forward(self, x, training=False):
        y, idx = maxpool2x2(x)
        self._cache = (idx, x.shape)
        return y

    def backward(self, grad):
        idx, shape = self._cache
        return maxpool2x2_backward(grad, idx, shape)

    def __repr__(self):
        return "MaxPool2x2()"


def dropout_forward(x, rate: float, rng: np.random.Generator, training: bool):
    """Inverted dropout; returns the output and the scaled keep-mask (None when inactive)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * mask, mask


class Dropout(Layer):
    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = np.random.default_rng(0)
        self._mask = None

    def forward(self, x, training=False):
        y, self._mask = dropout_forward(x, self.rate, self.rng, training)
        return y

    def backward(self, grad):
        return grad if self._mask is None else grad * self._mask

    def __repr__(self):
        return f"Dropout({self.rate})"


class Relu(Layer):
    def forward(self, x, training=False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad):
        return grad * self._mask

    def __repr__(self):
        return "Relu()"


class Flatten(Layer):
    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)

    def __repr__(self):
        return "Flatten()"


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_crossentropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of softmax(logits) and its gradient w.r.t. the logits."""
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,) or labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ValueError(f"labels must be {n} integers in 0..{k - 1}")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(logsum - z[rows, labels]))
    grad = np.exp(z - logsum[:, None])
    grad[rows, labels] -= 1.0
    grad /= n
    return loss, grad


class Network:
    """Ordered stack of layers ending in logits; the loss is softmax cross-entropy."""

    def __init__(self, input_shape: tuple, layers: list[Layer], name: str = "net"):
        self.input_shape = tuple(input_shape)
        self.layers = list(layers)
        self.name = name
        self.dtype = np.dtype(np.float64)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        self.output_shape_ = shape

    def initialize(self, seed_or_rng, dtype=np.float32):
        """He-initialise every trainable layer, then zero window-masked weights."""
        rng = np.random.default_rng(seed_or_rng)
        self.dtype = np.dtype(dtype)
        for layer in self.layers:
            if layer.trainable:
                layer.initialize(rng, self.dtype)
                layer.zero_masked()
        self.reseed_dropout(rng)
        return self

    def reseed_dropout(self, seed_or_rng):
        rng = np.random.default_rng(seed_or_rng)
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.rng = np.random.default_rng(rng.integers(2**63))

    def astype(self, dtype):
        self.dtype = np.dtype(dtype)
        for layer in self.layers:
            layer.astype(self.dtype)
        return self

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != self.input_shape:
            x = x.reshape((x.shape[0], *self.input_shape))
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def loss_and_grads(self, x, y, training=True):
        logits = self.forward(x, training)
        loss, g = softmax_crossentropy(logits, y)
        self.backward(g)
        return loss, logits

    def predict(self, x, batch_size=1000):
        out = [self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros((0,) + self.output_shape_)

    def trainable_layers(self):
        return [layer for layer in self.layers if layer.trainable]

    def windowed_layers(self):
        return [layer for layer in self.trainable_layers() if layer.window is not None]

    def param_count(self) -> int:
        return sum(layer.param_count() for layer in self.layers)

    def summary(self) -> list[tuple[str, tuple, int]]:
        rows, shape = [], self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
            rows.append((repr(layer), shape, layer.param_count()))
        return rows

    def state(self) -> list[dict[str, np.ndarray]]:
        return [{k: v.copy() for k, v in layer.params().items()} for layer in self.layers]

    def load_state(self, state):
        for layer, params in zip(self.layers, state):
            for k, v in params.items():
                setattr(layer, k, v.copy())

    def __repr__(self):
        return f"Network({self.name}: " + " -> ".join(map(repr, self.layers)) + ")"


def write_filters_ppm(layer: Conv2D, out_dir, prefix: str = "filter") -> list[Path]:
    """Write each output filter of a 3-channel conv layer as a ``kh x kw`` binary PPM.

    Input channels map to R, G, B; values are min-max scaled per filter.
    """
    if layer.c_in != 3:
        raise ValueError(f"filter export needs c_in == 3, layer has {layer.c_in}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    k = layer.effective_weights().astype(np.float64)
    paths = []
    for f in range(layer.c_out):
        img = k[:, :, :, f]
        lo, hi = img.min(), img.max()
        scaled = np.zeros_like(img) if hi == lo else (img - lo) / (hi - lo)
        pix = np.rint(255.0 * scaled).astype(np.uint8)
        path = out_dir / f"{prefix}_{f:03d}.ppm"
        with open(path, "wb") as fh:
            fh.write(f"P6\n{layer.kw} {layer.kh}\n255\n".encode("ascii"))
            fh.write(pix.tobytes())
        paths.append(path)
    return paths
