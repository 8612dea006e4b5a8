"""Training loop, evaluation, L1 baseline and finite-difference gradient checks."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .layers import Network, softmax_crossentropy
from .optim import AdamConfig, RMSpropConfig, make_optimizer
from .tensor import NonFiniteError, dtype_for
from .window import WindowMatrix

log = logging.getLogger(__name__)

REGIMES = ("developmental", "disorganized")
L1_ZERO_CUTOFF = 1e-4


@dataclass(frozen=True)
class TrainConfig:
    optimizer: AdamConfig | RMSpropConfig = field(default_factory=AdamConfig)
    batch_size: int = 32
    epochs: int = 1
    seed: int = 0
    regime: str = "developmental"
    precision: str = "single"

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        dtype_for(self.precision)


@dataclass
class MetricsRecord:
    session: int
    epoch: int
    split: str
    loss: float
    error_pct: float
    reduction_target: float
    reduction_achieved: float
    window: str
    seed: int


def l1_penalty(layers, lam: float | None = None, add_grads: bool = True) -> float:
    """Add ``lam * sum|W|`` for each layer (``layer.l1`` when ``lam`` is None).

    When ``add_grads`` is set, ``lam * sign(W)`` is added to the layer's
    weight gradient in place.
    """
    total = 0.0
    for layer in layers:
        lam_i = layer.l1 if lam is None else lam
        if lam_i < 0:
            raise ValueError("L1 lambda must be >= 0")
        if not lam_i:
            continue
        total += lam_i * float(np.abs(layer.W).sum())
        if add_grads and layer.dW is not None:
            layer.dW += (lam_i * np.sign(layer.W)).astype(layer.dW.dtype)
    return total


def zero_fraction(weights: np.ndarray, cutoff: float = L1_ZERO_CUTOFF) -> float:
    """Fraction of weights with magnitude below ``cutoff``."""
    return float(np.mean(np.abs(weights) < cutoff))


def _target_layer(network):
    idx = getattr(network, "target", None)
    if idx is None:
        windowed = network.windowed_layers()
        return windowed[0] if windowed else None
    return network.layers[idx]


def _default_tags(network) -> dict:
    layer = _target_layer(network)
    if layer is not None and getattr(layer, "window", None) is not None:
        w = layer.window
        return {"window": w.kind, "reduction_target": w.target_reduction,
                "reduction_achieved": w.achieved_reduction}
    return {"window": "none", "reduction_target": 0.0, "reduction_achieved": 0.0}


def evaluate(network: Network, dataset: Dataset, window_override=None,
             batch_size: int = 1000) -> tuple[float, float]:
    """Mean loss and percent error on ``dataset``.

    ``window_override`` (a WindowMatrix for ``network.target`` or a
    ``{layer_index: WindowMatrix}`` dict) is attached only for this call; the
    stored weights are never modified.
    """
    if isinstance(window_override, WindowMatrix):
        window_override = {network.target: window_override}
    saved = {}
    try:
        for idx, w in (window_override or {}).items():
            layer = network.layers[idx]
            saved[idx] = layer.window
            layer.set_window(w)
        n = len(dataset)
        if n == 0:
            return 0.0, 0.0
        loss_sum, wrong = 0.0, 0
        for i in range(0, n, batch_size):
            logits = network.forward(dataset.images[i:i + batch_size], training=False)
            y = dataset.labels[i:i + batch_size]
            loss, _ = softmax_crossentropy(logits.astype(np.float64), y)
            loss_sum += loss * len(y)
            wrong += int(np.count_nonzero(logits.argmax(axis=1) != y))
        return loss_sum / n, 100.0 * wrong / n
    finally:
        for idx, w in saved.items():
            network.layers[idx].window = w


def fit(network: Network, train: Dataset, val: Dataset | None, config: TrainConfig,
        session: int = 0, tags: dict | None = None, initialize: bool = True,
        on_epoch=None) -> list[MetricsRecord]:
    """Train ``network`` and return one train and one val record per epoch.

    In the developmental regime the network's windows are active for every
    pass.  In the disorganized regime the network must carry no windows; they
    are attached later through :func:`evaluate`.
    """
    if config.regime == "disorganized" and network.windowed_layers():
        raise ValueError("disorganized training expects a network without windows")
    rng = np.random.default_rng(config.seed)
    if initialize:
        network.initialize(rng, dtype_for(config.precision))
    else:
        network.reseed_dropout(rng)
    opt = make_optimizer(config.optimizer)
    layers = network.trainable_layers()
    l1_layers = [layer for layer in layers if getattr(layer, "l1", 0.0)]
    base = _default_tags(network)
    base.update(tags or {})
    records = []
    n = len(train)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        loss_sum, wrong = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            y = train.labels[idx]
            loss, logits = network.loss_and_grads(train.images[idx], y, training=True)
            if l1_layers:
                loss += l1_penalty(l1_layers)
            if not np.isfinite(loss):
                raise NonFiniteError(f"non-finite training loss at epoch {epoch} (session {session})")
            opt.step(layers)
            loss_sum += loss * len(idx)
            wrong += int(np.count_nonzero(logits.argmax(axis=1) != y))
        achieved = base["reduction_achieved"]
        if l1_layers:
            achieved = zero_fraction(l1_layers[0].W)
        common = dict(session=session, epoch=epoch, reduction_target=base["reduction_target"],
                      reduction_achieved=achieved, window=base["window"], seed=config.seed)
        records.append(MetricsRecord(split="train", loss=loss_sum / max(n, 1),
                                     error_pct=100.0 * wrong / max(n, 1), **common))
        if val is not None:
            vloss, verr = evaluate(network, val)
            if not np.isfinite(vloss):
                raise NonFiniteError(f"non-finite validation loss at epoch {epoch} (session {session})")
            records.append(MetricsRecord(split="val", loss=vloss, error_pct=verr, **common))
        log.debug("session %d epoch %d: %s", session, epoch, records[-1])
        if on_epoch is not None:
            on_epoch(epoch, records)
    return records


@dataclass
class GradientReport:
    max_rel_error: float
    per_param: dict
    n_checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def rel_error(a, b, floor: float = 1e-8):
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    return np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), floor)


def gradient_check(network: Network, x, y, tolerance: float = 1e-4, max_per_param: int | None = None,
                   seed: int = 0) -> GradientReport:
    """Compare analytic parameter gradients with central differences.

    The step for a weight ``w`` is ``1e-5 * max(1, |w|)``.  Dropout is off.
    ``max_per_param`` limits the check to a random subset of each tensor.
    """
    if network.dtype != np.float64:
        raise ValueError("gradient_check needs a float64 network")
    x = np.asarray(x, np.float64)
    rng = np.random.default_rng(seed)
    l1_layers = [layer for layer in network.trainable_layers() if getattr(layer, "l1", 0.0)]

    def loss_at():
        loss, _ = softmax_crossentropy(network.forward(x, training=False), y)
        return loss + l1_penalty(l1_layers, add_grads=False)

    network.loss_and_grads(x, y, training=False)
    l1_penalty(l1_layers)
    analytic = [{k: g.copy() for k, g in layer.grads().items()} for layer in network.layers]
    worst, per, count = 0.0, {}, 0
    for li, layer in enumerate(network.layers):
        for name, p in layer.params().items():
            flat = p.reshape(-1)
            idxs = np.arange(flat.size)
            if max_per_param is not None and flat.size > max_per_param:
                idxs = rng.choice(flat.size, size=max_per_param, replace=False)
            num = np.empty(len(idxs))
            for t, i in enumerate(idxs):
                old = flat[i]
                h = 1e-5 * max(1.0, abs(old))
                flat[i] = old + h
                lp = loss_at()
                flat[i] = old - h
                lm = loss_at()
                flat[i] = old
                num[t] = (lp - lm) / (2 * h)
            ana = analytic[li][name].reshape(-1)[idxs]
            err = float(rel_error(ana, num).max()) if len(idxs) else 0.0
            per[f"{li}:{type(layer).__name__}.{name}"] = err
            worst = max(worst, err)
            count += len(idxs)
    return GradientReport(worst, per, count, tolerance)


def input_gradient_check(network: Network, x, y, tolerance: float = 1e-4) -> GradientReport:
    """Central-difference check of d(loss)/d(input)."""
    x = np.array(x, np.float64)
    logits = network.forward(x, training=False)
    _, g = softmax_crossentropy(logits, y)
    gx = network.backward(g).reshape(x.shape)
    flat = x.reshape(-1)
    num = np.empty(flat.size)
    for i in range(flat.size):
        old = flat[i]
        h = 1e-5 * max(1.0, abs(old))
        flat[i] = old + h
        lp = softmax_crossentropy(network.forward(x, training=False), y)[0]
        flat[i] = old - h
        lm = softmax_crossentropy(network.forward(x, training=False), y)[0]
        flat[i] = old
        num[i] = (lp - lm) / (2 * h)
    err = float(rel_error(gx.reshape(-1), num).max())
    return GradientReport(err, {"input": err}, flat.size, tolerance)
