"""Distance-based weight windows.

A window ``F`` has one factor ``f_ij`` in [0, 1] per weight connecting input
node ``i`` to output node ``j``.  Band-shaped windows are built from the
distance between element ``(i, j)`` and the line ``j = r * i`` with
``r = n_y / n_x``.  ``reduction`` throughout this module means
``1 - sum(F) / (n_x * n_y)``, so 0 is a fully connected layer.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KINDS = ("full", "diagonal", "gaussian", "stripe", "centered", "random")
BINARY_KINDS = ("full", "diagonal", "stripe", "centered", "random")


@dataclass(frozen=True)
class WindowSpec:
    kind: str = "diagonal"
    target_reduction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown window kind {self.kind!r}; expected one of {KINDS}")
        if not 0.0 <= self.target_reduction < 1.0:
            raise ValueError(f"target_reduction must be in [0, 1), got {self.target_reduction}")
        if self.kind == "full":
            object.__setattr__(self, "target_reduction", 0.0)


@dataclass(frozen=True, eq=False)
class WindowMatrix:
    """A realised window; ``values`` has shape ``(n_x, n_y)``."""

    values: np.ndarray
    kind: str
    target_reduction: float = 0.0
    params: dict = field(default_factory=dict)

    @property
    def n_x(self) -> int:
        return self.values.shape[0]

    @property
    def n_y(self) -> int:
        return self.values.shape[1]

    @property
    def achieved_reduction(self) -> float:
        return reduction_ratio(self)

    @property
    def kept(self) -> float:
        return float(self.values.sum())

    def is_full(self) -> bool:
        return bool(np.all(self.values == 1.0))


def _distance_numerators(n_x: int, n_y: int) -> np.ndarray:
    # |r*i - j| * n_x == |n_y*i - n_x*j|; integer form keeps ties exact
    i = np.arange(n_x, dtype=np.int64)[:, None]
    j = np.arange(n_y, dtype=np.int64)[None, :]
    return np.abs(n_y * i - n_x * j)


def distance_matrix(n_x: int, n_y: int) -> np.ndarray:
    """All node distances ``d_ij`` as an ``(n_x, n_y)`` array."""
    if n_x < 1 or n_y < 1:
        raise ValueError("n_x and n_y must be >= 1")
    return _distance_numerators(n_x, n_y) / math.hypot(n_x, n_y)


def node_distance(i: int, j: int, n_x: int, n_y: int) -> float:
    """Distance from weight element ``(i, j)`` to the line ``j = (n_y/n_x) * i``."""
    if n_x < 1 or n_y < 1:
        raise ValueError("n_x and n_y must be >= 1")
    r = n_y / n_x
    return abs(r * i - j) / math.sqrt(r * r + 1.0)


def solve_diagonal_threshold(n_x: int, n_y: int, target_reduction: float) -> tuple[float, float]:
    """Pick the distance threshold that keeps ``round((1 - rho) * n_x * n_y)`` elements.

    Every element at the threshold distance is kept, so ties can push the
    achieved reduction slightly below the target.
    """
    thr, _, achieved = _diagonal(n_x, n_y, target_reduction)
    return thr, achieved


def _diagonal(n_x, n_y, target_reduction):
    if not 0.0 <= target_reduction < 1.0:
        raise ValueError(f"target_reduction must be in [0, 1), got {target_reduction}")
    num = _distance_numerators(n_x, n_y)
    total = n_x * n_y
    k = min(total, max(1, int(round((1.0 - target_reduction) * total))))
    thr_num = np.partition(num.ravel(), k - 1)[k - 1]
    mask = num <= thr_num
    achieved = 1.0 - mask.sum() / total
    return float(thr_num / math.hypot(n_x, n_y)), mask, float(achieved)


def gaussian_values(n_x: int, n_y: int, sigma: float) -> np.ndarray:
    d = distance_matrix(n_x, n_y)
    if math.isinf(sigma):
        return np.ones_like(d)
    return np.exp(-(d * d) / (2.0 * sigma * sigma))


def solve_gaussian_sigma(n_x: int, n_y: int, target_reduction: float,
                         tol: float = 1e-5, max_iter: int = 200) -> tuple[float, float]:
    """Bisect on the Gaussian width until the window's reduction matches the target."""
    if not 0.0 < target_reduction < 1.0:
        raise ValueError("gaussian window needs 0 < target_reduction < 1 (use kind='full' for 0)")
    d2 = distance_matrix(n_x, n_y) ** 2
    total = d2.size

    def reduction(sigma):
        return 1.0 - np.exp(-d2 / (2.0 * sigma * sigma)).sum() / total

    # sigma -> 0 keeps only the elements lying exactly on the line
    floor_reduction = 1.0 - np.count_nonzero(d2 == 0) / total
    if target_reduction >= floor_reduction:
        raise ValueError(f"target_reduction {target_reduction} unreachable for a "
                         f"{n_x}x{n_y} gaussian window (max {floor_reduction:.6f})")
    lo, hi = 1e-6, 1.0
    while reduction(hi) > target_reduction:
        lo, hi = hi, hi * 2.0
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)
        red = reduction(mid)
        if abs(red - target_reduction) <= tol:
            return mid, float(red)
        if red > target_reduction:
            lo = mid
        else:
            hi = mid
    mid = math.sqrt(lo * hi)
    return mid, float(reduction(mid))


def _stripe(n_x, n_y, target_reduction):
    keep_frac = 1.0 - target_reduction
    best = None
    for m in range(1, n_x + 1):
        k = max(1, int(round(keep_frac * m)))
        if k > m:
            continue
        rows = (np.arange(n_x) % m) < k
        err = abs(rows.mean() - keep_frac)
        if best is None or err < best[0] - 1e-15:
            best = (err, m, k, rows)
        if err <= 0.005:
            break
    _, m, k, rows = best
    values = np.repeat(rows[:, None].astype(np.float64), n_y, axis=1)
    return values, {"period": m, "kept_per_period": k}


def _centered(n_x, n_y, target_reduction):
    s = math.sqrt(1.0 - target_reduction)
    a = min(n_x, max(1, int(round(s * n_x))))
    b = min(n_y, max(1, int(round(s * n_y))))
    top, left = (n_x - a) // 2, (n_y - b) // 2
    values = np.zeros((n_x, n_y))
    values[top:top + a, left:left + b] = 1.0
    return values, {"block": (a, b)}


def _random(n_x, n_y, target_reduction, seed):
    total = n_x * n_y
    k = max(1, int(math.floor((1.0 - target_reduction) * total)))
    rng = np.random.default_rng(seed)
    flat = np.zeros(total)
    flat[rng.choice(total, size=k, replace=False)] = 1.0
    return flat.reshape(n_x, n_y), {"seed": seed}


def build_window(spec: WindowSpec, n_x: int, n_y: int) -> WindowMatrix:
    """Realise ``spec`` for an ``n_x`` by ``n_y`` weight matrix.

    A target reduction of 0 yields the all-ones window for every kind.
    """
    if n_x < 1 or n_y < 1:
        raise ValueError("n_x and n_y must be >= 1")
    rho = spec.target_reduction
    if spec.kind == "full" or rho == 0.0:
        return WindowMatrix(np.ones((n_x, n_y)), spec.kind, 0.0,
                            {"sigma": math.inf} if spec.kind == "gaussian" else {})
    if spec.kind == "diagonal":
        thr, mask, _ = _diagonal(n_x, n_y, rho)
        values, params = mask.astype(np.float64), {"threshold": thr}
    elif spec.kind == "gaussian":
        sigma, _ = solve_gaussian_sigma(n_x, n_y, rho)
        values, params = gaussian_values(n_x, n_y, sigma), {"sigma": sigma}
    elif spec.kind == "stripe":
        values, params = _stripe(n_x, n_y, rho)
    elif spec.kind == "centered":
        values, params = _centered(n_x, n_y, rho)
    else:
        values, params = _random(n_x, n_y, rho, spec.seed)
    values.setflags(write=False)
    return WindowMatrix(values, spec.kind, rho, params)


def reduction_ratio(window) -> float:
    values = window.values if isinstance(window, WindowMatrix) else np.asarray(window)
    return float(1.0 - values.sum() / values.size)


def apply_window(weights: np.ndarray, window: WindowMatrix) -> np.ndarray:
    """Mask ``weights`` element-wise and rescale so the total weight is preserved.

    ``weights`` may carry leading axes (e.g. the spatial offsets of a conv
    kernel); the window is broadcast over them.
    """
    if weights.shape[-2:] != window.values.shape:
        raise ValueError(f"weights {weights.shape} do not end with window shape {window.values.shape}")
    return weights * window_factor(window, weights.dtype)


def window_factor(window: WindowMatrix, dtype=np.float64) -> np.ndarray:
    """``F * N / sum(F)``, the multiplier :func:`apply_window` uses."""
    s = window.values.sum()
    if s == 0:
        raise ValueError("window has no kept elements (sum of f_ij is 0)")
    return (window.values * (window.values.size / s)).astype(dtype)


def write_pgm(window: WindowMatrix, path) -> Path:
    """Render a window as a binary PGM, one pixel per element, row ``i`` as image row.

    Factor 1 is drawn black and 0 white, as in the usual band-matrix figures.
    """
    path = Path(path)
    pixels = 255 - np.rint(255.0 * window.values).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{window.n_y} {window.n_x}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None:
        raise ValueError(f"{path}: not a binary PGM")
    width, height, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM supported")
    body = data[m.end():]
    if len(body) != width * height:
        raise ValueError(f"{path}: expected {width * height} pixel bytes, got {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width)
