"""Experiment grid: models x noise levels x repeated runs, summaries, tables and plots.

Each run ``i`` of noise level ``beta`` samples its own generating line and its
own train/test splits; every depth trains on those same splits, so models
are compared on paired data. Only the initializer stream depends on depth.
Results are a pure function of the config: runs may execute in worker
processes, but aggregation always happens in run-index order.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from lnnbench.datagen import INIT_STREAM, Dataset, PARAMS_STREAM, TEST_STREAM, TRAIN_STREAM, generate_dataset, sample_true_params, stream
from lnnbench.models import LinearParams, init_lnn
from lnnbench.optim import RunResult, Status, TrainConfig, train, write_trace_csv
from lnnbench.oracle import normal_equation

log = logging.getLogger(__name__)

TABLE_COLUMNS = ("model", "beta", "mean_test_mse", "std_test_mse", "mean_final_D", "divergence_count")
DEFAULT_BETAS = (0.05, 0.15, 0.30, 0.50)
DEFAULT_DEPTHS = tuple(range(1, 11))


@dataclass(frozen=True)
class ExperimentConfig:
    noise_coefficients: tuple[float, ...] = DEFAULT_BETAS
    depths: tuple[int, ...] = DEFAULT_DEPTHS
    runs_per_cell: int = 100
    train_size: int = 1000
    test_size: int = 200
    train_config: TrainConfig = field(default_factory=TrainConfig)
    master_seed: int = 0

    def __post_init__(self):
        betas = tuple(float(b) for b in self.noise_coefficients)
        depths = tuple(self.depths)
        if not betas:
            raise ValueError("noise_coefficients must not be empty")
        if not depths:
            raise ValueError("depths must not be empty")
        if any(not (math.isfinite(b) and b >= 0) for b in betas):
            raise ValueError(f"noise coefficients must be finite and >= 0, got {betas}")
        if any(isinstance(d, bool) or int(d) != d or d < 1 for d in depths):
            raise ValueError(f"depths must be positive integers, got {depths}")
        depths = tuple(int(d) for d in depths)
        if len(set(depths)) != len(depths) or len({beta_key(b) for b in betas}) != len(betas):
            raise ValueError("depths and noise coefficients must not repeat")
        for name in ("runs_per_cell", "train_size", "test_size"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.train_size < 2 or self.test_size < 2:
            raise ValueError("train_size and test_size must be at least 2")
        if not isinstance(self.train_config, TrainConfig):
            raise TypeError("train_config must be a TrainConfig")
        object.__setattr__(self, "noise_coefficients", betas)
        object.__setattr__(self, "depths", depths)
        object.__setattr__(self, "master_seed", int(self.master_seed))

    def cells(self) -> list[tuple[int, float]]:
        return [(d, b) for d in sorted(self.depths) for b in sorted(self.noise_coefficients)]


@dataclass(frozen=True)
class CellSummary:
    depth: int
    noise_coefficient: float
    mean_test_mse: float
    std_test_mse: float
    mean_final_D: float
    divergence_count: int
    mean_D_curve: np.ndarray = field(repr=False, compare=False)
    runs: int = 0
    converged_count: int = 0
    mean_train_mse: float = float("nan")

    @property
    def model(self) -> str:
        return model_label(self.depth)

    @property
    def cell_id(self) -> str:
        return cell_id(self.depth, self.noise_coefficient)


@dataclass
class ExperimentResult:
    summaries: list[CellSummary]
    failures: dict[str, str] = field(default_factory=dict)
    traces: dict[tuple[str, int], RunResult] = field(default_factory=dict)

    def __iter__(self):
        return iter(self.summaries)

    def __len__(self) -> int:
        return len(self.summaries)

    def __getitem__(self, i):
        return self.summaries[i]


def model_label(depth: int) -> str:
    return "LinReg" if depth == 1 else f"LNN-{depth}"


def beta_key(beta: float) -> int:
    """Integer stream key for a noise level (micro-units)."""
    return int(round(float(beta) * 1_000_000))


def cell_id(depth: int, beta: float) -> str:
    return f"{model_label(depth)}_beta{float(beta):g}"


def parse_cell_id(text: str) -> tuple[int, float]:
    label, sep, beta = text.partition("_beta")
    if not sep:
        raise ValueError(f"cell id must look like 'LNN-3_beta0.05' or 'LinReg_beta0.05', got {text!r}")
    if label == "LinReg":
        depth = 1
    elif label.startswith("LNN-") and label[4:].isdigit() and int(label[4:]) >= 1:
        depth = int(label[4:])
    else:
        raise ValueError(f"unknown model label {label!r} in cell id {text!r}")
    return depth, float(beta)


def run_data(beta: float, run_index: int, config: ExperimentConfig) -> tuple[Dataset, Dataset, LinearParams]:
    """Train split, test split and least-squares oracle of run ``run_index`` at ``beta``."""
    key = (beta_key(beta), int(run_index))
    seed = config.master_seed
    a, b = sample_true_params(stream(seed, PARAMS_STREAM, *key))
    train_data = generate_dataset(config.train_size, a, b, beta, stream(seed, TRAIN_STREAM, *key))
    test_data = generate_dataset(config.test_size, a, b, beta, stream(seed, TEST_STREAM, *key))
    return train_data, test_data, normal_equation(train_data)


def simulate_run(depth: int, beta: float, run_index: int, config: ExperimentConfig) -> RunResult:
    """One complete run: data and oracle, then a fresh initialization, then training."""
    train_data, test_data, oracle = run_data(beta, run_index, config)
    key = (beta_key(beta), int(run_index), int(depth))
    init = init_lnn(depth, config.train_config.init_scheme, stream(config.master_seed, INIT_STREAM, *key))
    initial = LinearParams(*init.layers[0]) if depth == 1 else init
    return train(initial, train_data, test_data, config.train_config, oracle)


def _simulate_task(args) -> RunResult:
    return simulate_run(*args)


def summarize(depth: int, beta: float, results: list[RunResult]) -> CellSummary:
    if not results:
        raise ValueError("cannot summarize a cell without runs")
    test = np.array([r.final_test_mse for r in results])
    length = max(len(r.trace) for r in results)
    curves = np.empty((len(results), length))
    for row, r in zip(curves, results):
        d = r.trace.deviation
        row[: d.size] = d
        row[d.size :] = d[-1]
    return CellSummary(
        depth=depth,
        noise_coefficient=float(beta),
        mean_test_mse=float(test.mean()),
        std_test_mse=float(test.std()),
        mean_final_D=float(np.mean([r.final_deviation for r in results])),
        divergence_count=sum(r.status is Status.DIVERGED for r in results),
        mean_D_curve=curves.mean(axis=0),
        runs=len(results),
        converged_count=sum(r.status is Status.CONVERGED for r in results),
        mean_train_mse=float(np.mean([r.final_train_mse for r in results])),
    )


def _resolve_workers(workers: int | None) -> int:
    if workers is None:
        return os.cpu_count() or 1
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    return workers


def run_cell(depth: int, beta: float, config: ExperimentConfig, workers: int | None = 1):
    """All runs of one (depth, beta) cell; returns ``(summary, results)``."""
    if isinstance(depth, bool) or int(depth) != depth or depth < 1:
        raise ValueError(f"depth must be a positive integer, got {depth!r}")
    tasks = [(int(depth), float(beta), i, config) for i in range(config.runs_per_cell)]
    n = _resolve_workers(workers)
    if n == 1:
        results = [_simulate_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_simulate_task, tasks))
    return summarize(int(depth), float(beta), results), results


def run_experiment(
    config: ExperimentConfig, workers: int | None = None, keep_traces: int | None = 1
) -> ExperimentResult:
    """Every cell of the grid, sorted by depth then beta.

    ``keep_traces`` bounds how many full run results per cell are retained
    (the first ones by run index); ``None`` keeps all. A cell whose runs
    raise is recorded in ``failures`` and the rest of the grid continues.
    """
    n = _resolve_workers(workers)
    cells = config.cells()
    runs = config.runs_per_cell
    out = ExperimentResult(summaries=[])

    def finish(depth, beta, gather):
        cid = cell_id(depth, beta)
        try:
            results = gather()
            out.summaries.append(summarize(depth, beta, results))
        except Exception as exc:  # noqa: BLE001 - one bad cell must not sink the grid
            log.error("cell %s failed: %s", cid, exc)
            out.failures[cid] = f"{type(exc).__name__}: {exc}"
            return
        limit = runs if keep_traces is None else min(keep_traces, runs)
        for i in range(limit):
            out.traces[(cid, i)] = results[i]
        log.info("cell %s done", cid)

    if n == 1:
        for depth, beta in cells:
            finish(depth, beta, lambda d=depth, b=beta: [simulate_run(d, b, i, config) for i in range(runs)])
        return out

    with ProcessPoolExecutor(max_workers=n) as pool:
        pending = [
            (depth, beta, [pool.submit(simulate_run, depth, beta, i, config) for i in range(runs)])
            for depth, beta in cells
        ]
        for depth, beta, futures in pending:
            finish(depth, beta, lambda fs=futures: [f.result() for f in fs])
    return out


# ---------------------------------------------------------------- emitters


def _write_text(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def emit_table(summaries, destination: str | Path) -> Path:
    """Table of final test MSE statistics; one row per cell."""
    summaries = list(summaries)
    if not summaries:
        raise ValueError("no summaries to write")
    lines = [",".join(TABLE_COLUMNS)]
    for s in summaries:
        lines.append(
            f"{s.model},{s.noise_coefficient!r},{s.mean_test_mse!r},{s.std_test_mse!r},"
            f"{s.mean_final_D!r},{s.divergence_count}"
        )
    return _write_text(Path(destination), "\n".join(lines) + "\n")


def read_table(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in ("beta", "mean_test_mse", "std_test_mse", "mean_final_D"):
            row[key] = float(row[key])
        row["divergence_count"] = int(row["divergence_count"])
    return rows


def _plot_indices(length: int, max_points: int = 2000) -> np.ndarray:
    if length <= max_points:
        return np.arange(length)
    return np.unique(np.concatenate(([0], np.geomspace(1, length - 1, max_points).astype(int))))


def emit_plots(summaries, destination: str | Path) -> list[Path]:
    """D-versus-iteration plots per beta and a test-MSE-versus-depth plot, SVG plus CSV data."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    summaries = list(summaries)
    if not summaries:
        raise ValueError("no summaries to plot")
    dest = Path(destination)
    written: list[Path] = []
    plt.rcParams["svg.hashsalt"] = "lnnbench"
    svg_meta = {"Date": None}

    by_beta: dict[float, list[CellSummary]] = {}
    for s in summaries:
        by_beta.setdefault(s.noise_coefficient, []).append(s)

    for beta, cells in sorted(by_beta.items()):
        cells = sorted(cells, key=lambda s: s.depth)
        length = max(s.mean_D_curve.size for s in cells)
        lines = ["iteration," + ",".join(s.model for s in cells)]
        for t in range(length):
            vals = [repr(float(s.mean_D_curve[t])) if t < s.mean_D_curve.size else "" for s in cells]
            lines.append(f"{t}," + ",".join(vals))
        written.append(_write_text(dest / f"fig1_beta_{beta:g}.csv", "\n".join(lines) + "\n"))

        fig, ax = plt.subplots(figsize=(6, 4))
        for s in cells:
            idx = _plot_indices(s.mean_D_curve.size)
            ax.plot(idx + 1, s.mean_D_curve[idx], label=s.model, linewidth=1.2)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("iteration + 1")
        ax.set_ylabel("mean deviation D")
        ax.set_title(f"Mean optimal-parameter deviation, beta = {beta:g}")
        ax.legend(fontsize=7, ncol=2)
        fig.tight_layout()
        path = dest / f"fig1_beta_{beta:g}.svg"
        try:
            fig.savefig(path, format="svg", metadata=svg_meta)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        finally:
            plt.close(fig)
        written.append(path)

    lines = ["beta,depth,model,mean_test_mse,std_test_mse"]
    for s in sorted(summaries, key=lambda s: (s.noise_coefficient, s.depth)):
        lines.append(f"{s.noise_coefficient!r},{s.depth},{s.model},{s.mean_test_mse!r},{s.std_test_mse!r}")
    written.append(_write_text(dest / "fig2.csv", "\n".join(lines) + "\n"))

    fig, ax = plt.subplots(figsize=(6, 4))
    for beta, cells in sorted(by_beta.items()):
        cells = sorted(cells, key=lambda s: s.depth)
        ax.plot([s.depth for s in cells], [s.mean_test_mse for s in cells], marker="o", label=f"beta = {beta:g}")
    ax.set_xlabel("layers (1 = linear regression)")
    ax.set_ylabel("mean test MSE")
    ax.set_title("Test MSE versus depth")
    ax.legend()
    fig.tight_layout()
    path = dest / "fig2.svg"
    try:
        fig.savefig(path, format="svg", metadata=svg_meta)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    finally:
        plt.close(fig)
    written.append(path)
    return written


def trace_path(destination: str | Path, cid: str, run_index: int) -> Path:
    return Path(destination) / "runs" / cid / f"{run_index:03d}.csv"


def config_to_dict(config: ExperimentConfig) -> dict:
    d = asdict(config)
    d["noise_coefficients"] = list(config.noise_coefficients)
    d["depths"] = list(config.depths)
    return d


def write_results(result: ExperimentResult, config: ExperimentConfig, destination: str | Path) -> list[Path]:
    """Write the whole results directory for a finished experiment."""
    dest = Path(destination)
    written: list[Path] = []
    if result.summaries:
        written.append(emit_table(result.summaries, dest / "table.csv"))
        written += emit_plots(result.summaries, dest)
    for (cid, i), run in sorted(result.traces.items()):
        written.append(write_trace_csv(run, trace_path(dest, cid, i)))
    meta = {
        "config": config_to_dict(config),
        "failures": result.failures,
        "notes": {
            "diverged_runs": "included in mean/std test MSE (last finite value) and in mean D curves",
            "D_curve_alignment": "each run's final D is carried forward to the longest run in its cell",
            "std": "population standard deviation over runs",
            "data_pairing": "all depths share the generating line and splits of a given (beta, run)",
        },
    }
    written.append(_write_text(dest / "metadata.json", json.dumps(meta, indent=2, sort_keys=True) + "\n"))
    return written


def format_table_text(summaries) -> str:
    """Rows per model, columns per beta, cells ``mean +/- std`` of the test MSE."""
    summaries = list(summaries)
    betas = sorted({s.noise_coefficient for s in summaries})
    depths = sorted({s.depth for s in summaries})
    grid = {(s.depth, s.noise_coefficient): s for s in summaries}
    header = ["Model"] + [f"beta={b:g}" for b in betas]
    rows = [header]
    for d in depths:
        row = [model_label(d)]
        for b in betas:
            s = grid.get((d, b))
            if s is None:
                row.append("failed")
            else:
                cell = f"{s.mean_test_mse:.4g} ±{s.std_test_mse:.4g}"
                if s.divergence_count:
                    cell += f" ({s.divergence_count} div)"
                row.append(cell)
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)
