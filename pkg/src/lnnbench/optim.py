"""MSE objective, analytic gradients and full-batch gradient descent."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from lnnbench.datagen import Dataset
from lnnbench.models import INIT_SCHEMES, InitScheme, LinearParams, LnnParams, Params, forward_linear, forward_lnn
from lnnbench.oracle import deviation, normal_equation

# relative loss change is measured against max(previous loss, this)
_LOSS_SCALE_FLOOR = 1.0


class Status(str, enum.Enum):
    CONVERGED = "converged"
    BUDGET_EXHAUSTED = "budget_exhausted"
    DIVERGED = "diverged"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class TrainConfig:
    """Gradient descent settings.

    Training stops as converged when the train loss changes by less than
    ``convergence_tol`` (relative to ``max(loss, 1)``) for ``convergence_window``
    consecutive steps, or when the gradient norm drops to ``gradient_tol``.
    It stops as diverged when the loss exceeds ``divergence_threshold`` or any
    value goes non-finite. A zero learning rate is allowed; the loss-change
    test is then disabled, since a frozen loss says nothing about optimality.
    """

    learning_rate: float = 1e-3
    max_iterations: int = 100_000
    convergence_tol: float = 1e-10
    convergence_window: int = 20
    divergence_threshold: float = 1e12
    gradient_tol: float = 1e-10
    init_scheme: InitScheme = "uniform"

    def __post_init__(self):
        if not (math.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise ValueError(f"learning_rate must be finite and >= 0, got {self.learning_rate!r}")
        for name in ("max_iterations", "convergence_window"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        for name in ("convergence_tol", "divergence_threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if not self.gradient_tol >= 0:
            raise ValueError(f"gradient_tol must be >= 0, got {self.gradient_tol!r}")
        if self.init_scheme not in INIT_SCHEMES:
            raise ValueError(f"init_scheme must be one of {INIT_SCHEMES}, got {self.init_scheme!r}")


@dataclass(frozen=True)
class Trace:
    iteration: np.ndarray
    train_mse: np.ndarray
    test_mse: np.ndarray
    deviation: np.ndarray

    def __len__(self) -> int:
        return self.iteration.size

    def rows(self):
        return zip(
            self.iteration.tolist(), self.train_mse.tolist(), self.test_mse.tolist(), self.deviation.tolist()
        )


@dataclass(frozen=True)
class RunResult:
    final_params: Params
    status: Status
    trace: Trace
    iterations_used: int

    @property
    def final_train_mse(self) -> float:
        return float(self.trace.train_mse[-1])

    @property
    def final_test_mse(self) -> float:
        return float(self.trace.test_mse[-1])

    @property
    def final_deviation(self) -> float:
        return float(self.trace.deviation[-1])


def mse(predictions, labels) -> float:
    predictions = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if predictions.shape != labels.shape:
        raise ValueError(f"length mismatch: {predictions.shape} vs {labels.shape}")
    if predictions.size == 0:
        raise ValueError("mse of an empty vector")
    r = predictions - labels
    return float(r @ r) / r.size


def grad_linear(params: LinearParams, data: Dataset) -> tuple[float, float]:
    """``(dJ/dm, dJ/db) = (2/N) * (sum r_i x_i, sum r_i)`` with ``r = yhat - y``."""
    r = forward_linear(params, data.inputs) - data.labels
    n = r.size
    return 2.0 * float(r @ data.inputs) / n, 2.0 * float(r.sum()) / n


def grad_lnn(params: LnnParams, data: Dataset) -> np.ndarray:
    """All partials ``[dJ/dw_1, dJ/db_1, ..., dJ/dw_L, dJ/db_L]`` by reverse accumulation."""
    activations = [data.inputs]
    for w, b in params.layers:
        activations.append(w * activations[-1] + b)
    upstream = 2.0 * (activations[-1] - data.labels) / data.inputs.size
    grads = np.empty(2 * params.depth)
    for k in range(params.depth - 1, -1, -1):
        grads[2 * k] = float(upstream @ activations[k])
        grads[2 * k + 1] = float(upstream.sum())
        upstream = upstream * params.layers[k][0]
    return grads


def gd_step(params: Params, grads: Sequence[float], learning_rate: float) -> Params:
    """One simultaneous update ``p - learning_rate * dJ/dp``."""
    grads = np.asarray(grads, dtype=np.float64).ravel()
    if isinstance(params, LinearParams):
        if grads.size != 2:
            raise ValueError(f"a line has 2 parameters, got {grads.size} partials")
        return LinearParams(params.slope - learning_rate * grads[0], params.intercept - learning_rate * grads[1])
    flat = params.flat()
    if grads.size != flat.size:
        raise ValueError(f"{flat.size} parameters but {grads.size} partials")
    return LnnParams.from_flat(flat - learning_rate * grads)


@dataclass(frozen=True)
class LineLoss:
    """MSE of any line ``m*x + c`` on a fixed dataset, from its first two moments.

    ``J(m, c) = var_x*(m - m_ls)**2 + (m*mean_x + c - mean_y)**2 + floor`` where
    ``m_ls`` is the least-squares slope and ``floor`` its residual MSE. Each term
    is non-negative, so small losses do not suffer cancellation.
    """

    mean_x: float
    mean_y: float
    var_x: float
    best_slope: float
    floor: float

    @classmethod
    def from_dataset(cls, data: Dataset) -> "LineLoss":
        x, y = data.inputs, data.labels
        xc = x - x.mean()
        var_x = float(xc @ xc) / x.size if np.ptp(x) > 0 else 0.0
        if var_x > 0:
            best = normal_equation(data)
            floor = mse(forward_linear(best, x), y)
            slope = best.slope
        else:
            slope = 0.0
            floor = mse(np.full_like(y, y.mean()), y)
        return cls(float(x.mean()), float(y.mean()), var_x, slope, floor)

    def value(self, m: float, c: float) -> float:
        d = m - self.best_slope
        e = m * self.mean_x + c - self.mean_y
        return self.var_x * d * d + e * e + self.floor

    def grad(self, m: float, c: float) -> tuple[float, float]:
        e = m * self.mean_x + c - self.mean_y
        return 2.0 * (self.var_x * (m - self.best_slope) + self.mean_x * e), 2.0 * e


def train(
    initial: Params,
    train_data: Dataset,
    test_data: Dataset,
    config: TrainConfig,
    oracle_params: LinearParams,
) -> RunResult:
    """Full-batch gradient descent from ``initial`` until convergence, budget or divergence.

    The trace holds the starting state (iteration 0) and the state after each
    step. A line is trained as a one-layer chain and returned as a line.
    """
    if not isinstance(config, TrainConfig):
        raise TypeError(f"config must be a TrainConfig, got {type(config).__name__}")
    layers = [(initial.slope, initial.intercept)] if isinstance(initial, LinearParams) else list(initial.layers)
    w = [p[0] for p in layers]
    b = [p[1] for p in layers]
    depth = len(w)

    tr = LineLoss.from_dataset(train_data)
    te = LineLoss.from_dataset(test_data)
    lr = config.learning_rate
    tol = config.convergence_tol
    window = config.convergence_window
    ceiling = config.divergence_threshold
    grad_tol_sq = config.gradient_tol**2
    a_opt, b_opt = oracle_params.slope, oracle_params.intercept

    # line entering layer k: z_{k-1} = pm[k]*x + pc[k]
    pm = [1.0] * depth
    pc = [0.0] * depth

    def forward() -> tuple[float, float]:
        m, c = w[0], b[0]
        for k in range(1, depth):
            pm[k] = m
            pc[k] = c
            m, c = w[k] * m, w[k] * c + b[k]
        return m, c

    its, train_hist, test_hist, dev_hist = [], [], [], []

    def record(t: int, m: float, c: float, loss: float) -> None:
        its.append(t)
        train_hist.append(loss)
        test_hist.append(te.value(m, c))
        dev_hist.append(abs(m - a_opt) + abs(c - b_opt))

    m, c = forward()
    loss = tr.value(m, c)
    record(0, m, c, loss)
    it = 0
    calm = 0
    status = None
    if not math.isfinite(loss) or loss > ceiling:
        status = Status.DIVERGED
    gw = [0.0] * depth
    gb = [0.0] * depth
    while status is None:
        gm, gc = tr.grad(m, c)
        suffix = 1.0
        norm_sq = 0.0
        for k in range(depth - 1, -1, -1):
            gw[k] = gwk = suffix * (gm * pm[k] + gc * pc[k])
            gb[k] = gbk = suffix * gc
            norm_sq += gwk * gwk + gbk * gbk
            suffix *= w[k]
        if norm_sq <= grad_tol_sq:
            status = Status.CONVERGED
            break
        if it >= config.max_iterations:
            status = Status.BUDGET_EXHAUSTED
            break
        prev_w, prev_b = w[:], b[:]
        for k in range(depth):
            w[k] -= lr * gw[k]
            b[k] -= lr * gb[k]
        it += 1
        m, c = forward()
        new_loss = tr.value(m, c)
        if not (math.isfinite(new_loss) and math.isfinite(sum(w) + sum(b))):
            w, b = prev_w, prev_b
            status = Status.DIVERGED
            break
        record(it, m, c, new_loss)
        if new_loss > ceiling:
            status = Status.DIVERGED
            break
        if lr > 0:
            if abs(loss - new_loss) < tol * max(loss, _LOSS_SCALE_FLOOR):
                calm += 1
                if calm >= window:
                    status = Status.CONVERGED
            else:
                calm = 0
        loss = new_loss

    if isinstance(initial, LinearParams):
        final: Params = LinearParams(w[0], b[0])
    else:
        final = LnnParams(tuple(zip(w, b)))
    trace = Trace(
        np.asarray(its, dtype=np.int64),
        np.asarray(train_hist, dtype=np.float64),
        np.asarray(test_hist, dtype=np.float64),
        np.asarray(dev_hist, dtype=np.float64),
    )
    return RunResult(final, status, trace, it)


def format_trace(result: RunResult) -> str:
    lines = ["iteration,train_mse,test_mse,deviation"]
    lines += [f"{t},{j!r},{jt!r},{d!r}" for t, j, jt, d in result.trace.rows()]
    return "\n".join(lines) + "\n"


def write_trace_csv(result: RunResult, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(format_trace(result))
    except OSError as exc:
        raise OSError(f"cannot write trace to {path}: {exc}") from exc
    return path


def read_trace_csv(path: str | Path) -> Trace:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Trace(rows[:, 0].astype(np.int64), rows[:, 1].copy(), rows[:, 2].copy(), rows[:, 3].copy())
