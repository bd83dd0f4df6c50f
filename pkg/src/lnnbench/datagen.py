"""Seeded synthetic datasets: standard-normal inputs, a random line, scaled noise.

Random streams
--------------
Every consumer of randomness gets its own ``numpy.random.Generator`` built
from ``SeedSequence(entropy=seed, spawn_key=(purpose, *keys))``. The purpose
code separates the generating line, the train split, the test split and the
model initializer, so adding draws to one consumer never shifts another.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# purpose codes for derived streams
PARAMS_STREAM = 0
TRAIN_STREAM = 1
TEST_STREAM = 2
INIT_STREAM = 3


def stream(seed: int, purpose: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``purpose`` under ``seed`` and extra integer keys."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(purpose), *map(int, keys)))
    return np.random.default_rng(seq)


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    true_weight: float
    true_bias: float
    noise_coefficient: float

    def __post_init__(self):
        inputs = np.array(self.inputs, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.float64)
        if inputs.ndim != 1 or labels.shape != inputs.shape:
            raise ValueError(
                f"inputs and labels must be 1-d of equal length, got {inputs.shape} and {labels.shape}"
            )
        if inputs.size == 0:
            raise ValueError("dataset must contain at least one point")
        if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(labels))):
            raise ValueError("dataset entries must be finite")
        if not self.noise_coefficient >= 0:
            raise ValueError(f"noise_coefficient must be >= 0, got {self.noise_coefficient}")
        inputs.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.inputs.size

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.inputs, other.inputs)
            and np.array_equal(self.labels, other.labels)
            and self.true_weight == other.true_weight
            and self.true_bias == other.true_bias
            and self.noise_coefficient == other.noise_coefficient
        )

    __hash__ = None


def sample_true_params(rng: np.random.Generator) -> tuple[float, float]:
    """Draw the generating slope and intercept, each from N(0, 1)."""
    a, b = rng.standard_normal(2)
    return float(a), float(b)


def generate_dataset(n: int, a: float, b: float, beta: float, rng: np.random.Generator) -> Dataset:
    """Noisy samples of the line ``a*x + b``.

    Inputs are standard normal. Each label is perturbed by
    ``beta * eps_i * mean(a*x + b)`` with ``eps_i ~ N(0, 1)``, where the mean
    is taken over the clean labels of this sample. Inputs are drawn before
    the noise, both from ``rng``.
    """
    if isinstance(n, bool) or int(n) != n or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n!r}")
    for name, value in (("a", a), ("b", b), ("beta", beta)):
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")
    if beta < 0:
        raise ValueError(f"beta must be non-negative, got {beta!r}")
    n = int(n)
    x = rng.standard_normal(n)
    clean = a * x + b
    eps = rng.standard_normal(n)
    labels = clean + beta * eps * clean.mean()
    return Dataset(x, labels, float(a), float(b), float(beta))


def write_dataset_csv(data: Dataset, path: str | Path, seed: int | None = None) -> Path:
    """Write ``x,y`` rows behind a comment line recording a, b, beta and seed."""
    path = Path(path)
    lines = [
        f"# a={data.true_weight!r},b={data.true_bias!r},"
        f"beta={data.noise_coefficient!r},seed={seed if seed is not None else ''}",
        "x,y",
    ]
    lines += [f"{x!r},{y!r}" for x, y in zip(data.inputs.tolist(), data.labels.tolist())]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write dataset to {path}: {exc}") from exc
    return path


def read_dataset_csv(path: str | Path) -> tuple[Dataset, int | None]:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing metadata comment line")
        meta = dict(item.split("=", 1) for item in header[1:].strip().split(","))
        if fh.readline().strip() != "x,y":
            raise ValueError(f"{path}: expected 'x,y' column header")
        rows = np.loadtxt(fh, delimiter=",", ndmin=2)
    seed = int(meta["seed"]) if meta.get("seed") else None
    data = Dataset(rows[:, 0], rows[:, 1], float(meta["a"]), float(meta["b"]), float(meta["beta"]))
    return data, seed
