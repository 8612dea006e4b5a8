"""Distance-windowed neural network layers in NumPy."""

__version__ = "0.1.0"

from .layers import Conv2D, Dense, Dropout, Flatten, MaxPool2x2, Network, Relu  # noqa: E402
from .window import WindowMatrix, WindowSpec, apply_window, build_window, reduction_ratio  # noqa: E402

__all__ = [
    "Conv2D", "Dense", "Dropout", "Flatten", "MaxPool2x2", "Network", "Relu",
    "WindowMatrix", "WindowSpec", "apply_window", "build_window", "reduction_ratio",
]
