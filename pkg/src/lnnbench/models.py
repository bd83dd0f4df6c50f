"""Linear regression and width-1 linear networks (chains of scalar affine maps)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Union

import numpy as np

InitScheme = Literal["uniform", "normal"]
INIT_SCHEMES = ("uniform", "normal")


@dataclass(frozen=True)
class LinearParams:
    slope: float
    intercept: float

    def __post_init__(self):
        if not (math.isfinite(self.slope) and math.isfinite(self.intercept)):
            raise ValueError(f"non-finite line parameters: ({self.slope}, {self.intercept})")
        object.__setattr__(self, "slope", float(self.slope))
        object.__setattr__(self, "intercept", float(self.intercept))


@dataclass(frozen=True)
class LnnParams:
    """Layers ``(weight, bias)`` applied first to last: ``z_k = w_k * z_{k-1} + b_k``."""

    layers: tuple[tuple[float, float], ...]

    def __post_init__(self):
        layers = tuple((float(w), float(b)) for w, b in self.layers)
        if not layers:
            raise ValueError("an LNN needs at least one layer")
        if not all(math.isfinite(w) and math.isfinite(b) for w, b in layers):
            raise ValueError("non-finite layer parameters")
        object.__setattr__(self, "layers", layers)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def weights(self) -> list[float]:
        return [w for w, _ in self.layers]

    @property
    def biases(self) -> list[float]:
        return [b for _, b in self.layers]

    def flat(self) -> np.ndarray:
        """Parameters as ``[w_1, b_1, w_2, b_2, ...]``."""
        return np.array(self.layers, dtype=np.float64).ravel()

    @classmethod
    def from_flat(cls, values) -> "LnnParams":
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0 or values.size % 2:
            raise ValueError(f"flat LNN parameters need an even, non-zero length, got {values.shape}")
        return cls(tuple(map(tuple, values.reshape(-1, 2).tolist())))


Params = Union[LinearParams, LnnParams]


def forward_linear(params: LinearParams, inputs) -> np.ndarray:
    return params.slope * np.asarray(inputs, dtype=np.float64) + params.intercept


def forward_lnn(params: LnnParams, inputs) -> np.ndarray:
    z = np.asarray(inputs, dtype=np.float64)
    for w, b in params.layers:
        z = w * z + b
    return z


def collapse(params: LnnParams) -> LinearParams:
    """Effective line of the chain: ``m <- w_k*m``, ``c <- w_k*c + b_k``."""
    (m, c), *rest = params.layers
    for w, b in rest:
        m, c = w * m, w * c + b
    return LinearParams(m, c)


def as_line(params: Params) -> LinearParams:
    return params if isinstance(params, LinearParams) else collapse(params)


def init_lnn(depth: int, scheme: InitScheme = "uniform", rng: np.random.Generator | None = None) -> LnnParams:
    """Random layers; ``uniform`` draws from U[-1, 1], ``normal`` from N(0, 1).

    Row ``k`` of the draw is ``(w_k, b_k)``.
    """
    if isinstance(depth, bool) or int(depth) != depth or depth < 1:
        raise ValueError(f"depth must be a positive integer, got {depth!r}")
    if rng is None:
        raise ValueError("init_lnn needs an explicit random generator")
    if scheme == "uniform":
        draws = rng.uniform(-1.0, 1.0, size=(int(depth), 2))
    elif scheme == "normal":
        draws = rng.standard_normal((int(depth), 2))
    else:
        raise ValueError(f"unknown init scheme {scheme!r}; expected one of {INIT_SCHEMES}")
    return LnnParams(tuple(map(tuple, draws.tolist())))


def format_params(params: Params) -> str:
    """``layer_index,weight,bias`` rows (1-based); a line is written as one layer."""
    layers = [(params.slope, params.intercept)] if isinstance(params, LinearParams) else params.layers
    rows = ["layer_index,weight,bias"] + [f"{k},{w!r},{b!r}" for k, (w, b) in enumerate(layers, 1)]
    return "\n".join(rows) + "\n"


def write_params(params: Params, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(format_params(params))
    except OSError as exc:
        raise OSError(f"cannot write parameters to {path}: {exc}") from exc
    return path


def parse_params(text: str) -> LnnParams:
    lines = [ln for ln in text.strip().splitlines() if ln]
    if not lines or lines[0].strip() != "layer_index,weight,bias":
        raise ValueError("expected a 'layer_index,weight,bias' header")
    layers = []
    for k, line in enumerate(lines[1:], 1):
        idx, w, b = line.split(",")
        if int(idx) != k:
            raise ValueError(f"layer indices must run 1..L in order, got {idx} at row {k}")
        layers.append((float(w), float(b)))
    return LnnParams(tuple(layers))
