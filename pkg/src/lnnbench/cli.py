"""Command-line entry point: ``lnnbench generate | train | experiment``.

Exit codes: 0 success (diverged runs included), 1 usage error, 2 runtime failure.
The default output directory comes from ``$LNNBENCH_OUTPUT_DIR`` (else ``results``).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from lnnbench import __version__
from lnnbench.datagen import PARAMS_STREAM, TRAIN_STREAM, generate_dataset, sample_true_params, stream, write_dataset_csv
from lnnbench.harness import (
    DEFAULT_BETAS,
    DEFAULT_DEPTHS,
    ExperimentConfig,
    beta_key,
    cell_id,
    format_table_text,
    parse_cell_id,
    run_experiment,
    simulate_run,
    write_results,
)
from lnnbench.models import INIT_SCHEMES, format_params
from lnnbench.optim import TrainConfig, format_trace, write_trace_csv
from lnnbench.oracle import normal_equation

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

OUTPUT_ENV = "LNNBENCH_OUTPUT_DIR"

USAGE_ERROR = 1
RUNTIME_ERROR = 2

_TC = TrainConfig()
# flag name -> default; config-file keys use the same names
DEFAULTS = {
    "runs": 100,
    "betas": DEFAULT_BETAS,
    "depths": DEFAULT_DEPTHS,
    "train-size": 1000,
    "test-size": 200,
    "lr": _TC.learning_rate,
    "max-iter": _TC.max_iterations,
    "tol": _TC.convergence_tol,
    "window": _TC.convergence_window,
    "divergence-threshold": _TC.divergence_threshold,
    "grad-tol": _TC.gradient_tol,
    "init": _TC.init_scheme,
    "seed": 0,
    "workers": None,
    "keep-traces": "1",
    "output": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _float_list(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text) -> tuple[int, ...]:
    """``1,2,3`` or ranges like ``2-10``."""
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    out: list[int] = []
    try:
        for part in str(text).split(","):
            part = part.strip()
            if not part:
                continue
            if "-" in part[1:]:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers or ranges, got {text!r}") from None
    return tuple(out)


def _default_output() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "results"))


def _add_training_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training")
    g.add_argument("--train-size", type=int, help=f"training points per run (default {DEFAULTS['train-size']})")
    g.add_argument("--test-size", type=int, help=f"test points per run (default {DEFAULTS['test-size']})")
    g.add_argument("--lr", type=float, help=f"learning rate (default {DEFAULTS['lr']})")
    g.add_argument("--max-iter", type=int, help=f"iteration budget (default {DEFAULTS['max-iter']})")
    g.add_argument("--tol", type=float, help=f"relative loss-change tolerance (default {DEFAULTS['tol']})")
    g.add_argument("--window", type=int, help=f"consecutive calm steps to converge (default {DEFAULTS['window']})")
    g.add_argument(
        "--divergence-threshold", type=float, help=f"loss ceiling (default {DEFAULTS['divergence-threshold']:g})"
    )
    g.add_argument("--grad-tol", type=float, help=f"gradient-norm stop (default {DEFAULTS['grad-tol']:g})")
    g.add_argument("--init", choices=INIT_SCHEMES, help=f"initializer (default {DEFAULTS['init']})")
    g.add_argument("--seed", type=int, help=f"master seed (default {DEFAULTS['seed']})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lnnbench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("generate", help="write one synthetic dataset as CSV")
    gen.add_argument("--n", type=int, default=1000, help="number of points (default 1000)")
    gen.add_argument("--beta", type=float, default=0.05, help="noise coefficient (default 0.05)")
    gen.add_argument("--seed", type=int, default=0, help="seed (default 0)")
    gen.add_argument("--a", type=float, help="generating slope (default: sampled)")
    gen.add_argument("--b", type=float, help="generating intercept (default: sampled)")
    gen.add_argument("-o", "--output", type=Path, help="CSV path (default <output dir>/dataset.csv)")

    tr = sub.add_parser("train", help="run a single training run and print its outcome")
    tr.add_argument("--depth", type=int, default=1, help="layers; 1 is linear regression (default 1)")
    tr.add_argument("--beta", type=float, default=0.05, help="noise coefficient (default 0.05)")
    _add_training_flags(tr)
    tr.add_argument("--trace", type=Path, help="trace CSV path (default <output dir>/trace_<cell>_seed<seed>.csv)")
    tr.add_argument("--params", type=Path, help="also write final parameters to this path")

    ex = sub.add_parser("experiment", help="run the full grid and write the results directory")
    ex.add_argument("--config", type=Path, help="TOML file of flag-named keys; flags override it")
    ex.add_argument("--runs", type=int, help=f"runs per cell (default {DEFAULTS['runs']})")
    ex.add_argument("--betas", type=_float_list, help="noise coefficients (default 0.05,0.15,0.3,0.5)")
    ex.add_argument("--depths", type=_int_list, help="depths, 1 = linear regression (default 1-10)")
    _add_training_flags(ex)
    ex.add_argument("--workers", type=int, help="worker processes (default: available cores)")
    ex.add_argument("--keep-traces", help="run traces written per cell, or 'all' (default 1)")
    ex.add_argument("-o", "--output", type=Path, help=f"results directory (default ${OUTPUT_ENV} or ./results)")
    ex.add_argument(
        "--replay",
        nargs=2,
        metavar=("CELL", "RUN"),
        help="regenerate one run's trace (e.g. LNN-3_beta0.05 7) and print it to stdout",
    )
    return parser


def _load_config_file(path: Path) -> dict:
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"invalid config file {path}: {exc}") from exc
    values = {}
    for key, value in raw.items():
        name = key.replace("_", "-")
        if name not in DEFAULTS:
            raise UsageError(f"{path}: unknown key {key!r}")
        if isinstance(value, dict):
            raise UsageError(f"{path}: config is flat; {key!r} must not be a table")
        values[name] = value
    return values


def _settings(args: argparse.Namespace) -> dict:
    merged = dict(DEFAULTS)
    if getattr(args, "config", None) is not None:
        merged.update(_load_config_file(args.config))
    for name in DEFAULTS:
        value = getattr(args, name.replace("-", "_"), None)
        if value is not None:
            merged[name] = value
    return merged


def _train_config(s: dict) -> TrainConfig:
    return TrainConfig(
        learning_rate=float(s["lr"]),
        max_iterations=s["max-iter"],
        convergence_tol=float(s["tol"]),
        convergence_window=s["window"],
        divergence_threshold=float(s["divergence-threshold"]),
        gradient_tol=float(s["grad-tol"]),
        init_scheme=s["init"],
    )


def _experiment_config(s: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig(
            noise_coefficients=_float_list(s["betas"]),
            depths=_int_list(s["depths"]),
            runs_per_cell=s["runs"],
            train_size=s["train-size"],
            test_size=s["test-size"],
            train_config=_train_config(s),
            master_seed=s["seed"],
        )
    except (ValueError, TypeError, argparse.ArgumentTypeError) as exc:
        raise UsageError(str(exc)) from exc


def cmd_generate(args) -> int:
    try:
        if args.n < 2:
            raise ValueError(f"--n must be at least 2, got {args.n}")
        a, b = sample_true_params(stream(args.seed, PARAMS_STREAM, beta_key(args.beta), 0))
        a = a if args.a is None else args.a
        b = b if args.b is None else args.b
        data = generate_dataset(args.n, a, b, args.beta, stream(args.seed, TRAIN_STREAM, beta_key(args.beta), 0))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    path = args.output or _default_output() / "dataset.csv"
    write_dataset_csv(data, path, seed=args.seed)
    opt = normal_equation(data)
    print(f"wrote {len(data)} points to {path}")
    print(f"sampled a={a:.6f} b={b:.6f}")
    print(f"oracle  a*={opt.slope:.6f} b*={opt.intercept:.6f}")
    return 0


def cmd_train(args) -> int:
    s = _settings(args)
    s["betas"] = (args.beta,)
    s["depths"] = (args.depth,)
    s["runs"] = 1
    config = _experiment_config(s)
    result = simulate_run(args.depth, args.beta, 0, config)
    cid = cell_id(args.depth, args.beta)
    path = args.trace or _default_output() / f"trace_{cid}_seed{config.master_seed}.csv"
    write_trace_csv(result, path)
    if args.params is not None:
        args.params.parent.mkdir(parents=True, exist_ok=True)
        args.params.write_text(format_params(result.final_params))
    print(
        f"{cid} seed={config.master_seed}: status={result.status} iterations={result.iterations_used} "
        f"train_mse={result.final_train_mse:.6g} test_mse={result.final_test_mse:.6g} "
        f"D={result.final_deviation:.6g}"
    )
    print(f"trace written to {path}")
    return 0


def cmd_experiment(args) -> int:
    s = _settings(args)
    config = _experiment_config(s)
    workers = s["workers"]
    if workers is not None and workers < 1:
        raise UsageError(f"--workers must be >= 1, got {workers}")

    if args.replay:
        try:
            depth, beta = parse_cell_id(args.replay[0])
            run_index = int(args.replay[1])
            if run_index < 0:
                raise ValueError(f"run index must be >= 0, got {run_index}")
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        result = simulate_run(depth, beta, run_index, config)
        sys.stdout.write(format_trace(result))
        return 0

    keep = str(s["keep-traces"])
    if keep == "all":
        keep_traces = None
    else:
        try:
            keep_traces = int(keep)
            if keep_traces < 0:
                raise ValueError
        except ValueError:
            raise UsageError(f"--keep-traces must be a non-negative integer or 'all', got {keep!r}") from None

    dest = Path(s["output"]) if s["output"] is not None else _default_output()
    result = run_experiment(config, workers=workers, keep_traces=keep_traces)
    for cid, msg in result.failures.items():
        print(f"cell {cid} failed: {msg}", file=sys.stderr)
    write_results(result, config, dest)
    if not result.summaries:
        print("every cell failed", file=sys.stderr)
        return RUNTIME_ERROR
    print(format_table_text(result.summaries))
    print(f"results written to {dest}")
    return 0


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "experiment": cmd_experiment}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else USAGE_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"lnnbench {args.command}: error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (OSError, RuntimeError) as exc:
        print(f"lnnbench {args.command}: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
