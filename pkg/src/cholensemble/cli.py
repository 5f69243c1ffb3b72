"""Command-line entry point: ``cholensemble {estimate,simulate,backtest}``.

Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._parallel import THREADS_ENV, resolve_threads
from .errors import CholEnsembleError, InvalidInput, NumericalError, StageError
from .io_csv import fmt, read_labeled_csv, write_matrix_csv
from .linalg_core import Permutation
from .mcd import DataMatrix, LassoConfig
from .portfolio import ESTIMATORS, EstimatorConfig, backtest, read_returns_csv
from .simlab import SAMPLER_KINDS, ExperimentSetup, run_experiment
from .wae_ensemble import METHODS, estimate, xi_grid

log = logging.getLogger("cholensemble")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


@dataclass
class RunConfig:
    seed: int = 0
    threads: str | None = None  # unset: $CHOLENSEMBLE_THREADS, then 1
    orderings: int = 30
    xi_start: float = 0.01
    xi_stop: float = 3.0
    xi_step: float = 0.05
    path_length: int = 100
    lambda_min_ratio: str = "auto"
    cv_folds: int = 5
    max_iter: int = 10000
    coord_tol: float = 1e-7
    standardize: bool = True
    cv_seed: int = 0
    output_format: str = "csv"

    def __post_init__(self):
        if self.orderings < 1:
            raise InvalidInput("orderings must be >= 1")
        if self.output_format not in ("csv", "json"):
            raise InvalidInput("output_format must be csv or json")
        if self.threads is not None:
            self.threads = str(self.threads).strip().lower()
            if self.threads != "auto" and not (self.threads.isdigit() and int(self.threads) >= 1):
                raise InvalidInput(f"threads must be a positive integer or auto, got {self.threads!r}")
        self.lasso()
        self.grid()

    def lasso(self) -> LassoConfig:
        ratio = None
        if str(self.lambda_min_ratio) != "auto":
            ratio = _coerce(float, self.lambda_min_ratio, "lambda_min_ratio")
        return LassoConfig(self.path_length, ratio, self.cv_folds, self.max_iter, self.coord_tol,
                           self.standardize, self.cv_seed)

    def grid(self):
        return xi_grid(self.xi_start, self.xi_stop, self.xi_step)

    def thread_count(self) -> int:
        try:
            return resolve_threads(self.threads)
        except ValueError as exc:
            raise InvalidInput(f"{THREADS_ENV}: {exc}") from None

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            if f.name.startswith("_"):
                continue
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, overrides: dict | None = None) -> RunConfig:
        """Parse ``key=value`` lines (``#`` comments allowed); ``overrides`` win."""
        types = {f.name: f.type for f in dataclasses.fields(cls) if not f.name.startswith("_")}
        values: dict = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidInput(f"config line {lineno}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in types:
                raise InvalidInput(f"config line {lineno}: unknown key {key!r}")
            values[key] = val
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        kwargs = {}
        for key, val in values.items():
            kwargs[key] = _coerce(types[key], val, key)
        return cls(**kwargs)


def _coerce(typ, val, key):
    try:
        if typ in ("bool", bool):
            if isinstance(val, bool):
                return val
            low = str(val).strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(val)
        if typ in ("int", int):
            return int(val)
        if typ in ("float", float):
            return float(val)
        return str(val)
    except ValueError:
        raise InvalidInput(f"bad value for {key}: {val!r}") from None


CONFIG_FLAGS = {
    "seed": int, "threads": str, "orderings": int, "xi_start": float, "xi_stop": float,
    "xi_step": float, "path_length": int, "lambda_min_ratio": str, "cv_folds": int,
    "max_iter": int, "coord_tol": float, "cv_seed": int, "output_format": str,
}


def _add_common(p: argparse.ArgumentParser):
    g = p.add_argument_group("configuration (flags override --config)")
    g.add_argument("--config", type=Path, help="flat key=value configuration file")
    for name, typ in CONFIG_FLAGS.items():
        g.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
    g.add_argument("--no-standardize", dest="standardize", action="store_const", const=False,
                   default=None)
    g.add_argument("-v", "--verbose", action="store_true")


def _config(args) -> RunConfig:
    text = args.config.read_text() if args.config else ""
    overrides = {k: getattr(args, k, None) for k in (*CONFIG_FLAGS, "standardize")}
    return RunConfig.from_text(text, overrides)


def _methods(text: str, allowed) -> tuple[str, ...]:
    methods = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in methods if m not in allowed]
    if not methods or bad:
        raise InvalidInput(f"methods must be a comma list from {allowed}, got {text!r}")
    return methods


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def cmd_estimate(args) -> int:
    cfg = _config(args)
    t0 = time.perf_counter()
    values, _, labels = read_labeled_csv(args.input.read_text())
    data = DataMatrix(values, tuple(labels))
    orderings = None
    if args.debug_identity_ordering:
        orderings = [Permutation.identity(data.p)] * cfg.orderings
    res = estimate(data, args.method, cfg.orderings, cfg.seed, cfg.lasso(), grid=cfg.grid(),
                   orderings=orderings, threads=cfg.thread_count())
    prefix = args.out
    prefix.parent.mkdir(parents=True, exist_ok=True)
    if cfg.output_format == "csv":
        Path(f"{prefix}.csv").write_text(write_matrix_csv(res.sigma_hat, data.labels))
    else:
        Path(f"{prefix}.sigma.json").write_text(_dump_json(
            {"labels": list(data.labels), "sigma": res.sigma_hat.tolist()}))
    side = {
        "method": res.method,
        "weights": [float(w) for w in res.weights.weights],
        "xi": res.xi_selected,
        "nonzero_weight_count": res.nonzero_weight_count,
        "orderings": cfg.orderings,
        "orderings_seed": cfg.seed,
        "n": data.n,
        "p": data.p,
    }
    if args.timing:
        side["wall_time_s"] = time.perf_counter() - t0
    Path(f"{prefix}.json").write_text(_dump_json(side))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    setup = ExperimentSetup(
        scenario=args.scenario, case=args.case, n=args.n, p=args.p,
        M=args.M if args.M is not None else cfg.orderings,
        methods=_methods(args.methods, METHODS), replications=args.reps, seed=cfg.seed,
        lasso=cfg.lasso(), xi_grid=cfg.grid(), l2_abs=args.l2_abs,
        scenario_seed=args.scenario_seed,
    )
    report = run_experiment(setup, threads=cfg.thread_count())
    args.out.parent.mkdir(parents=True, exist_ok=True)
    if cfg.output_format == "csv":
        args.out.write_text(report.to_csv())
    else:
        args.out.write_text(_dump_json(report.rows()))
    print(f"scenario {setup.scenario}, case {setup.case}, (n, p, M) = "
          f"({setup.n}, {setup.p}, {setup.M}), {setup.replications} replications")
    print(report.table())
    return EXIT_OK


def cmd_backtest(args) -> int:
    cfg = _config(args)
    series = read_returns_csv(args.input.read_text())
    if series.T <= args.window:
        raise InvalidInput(f"need more periods than the window ({series.T} <= {args.window})")
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    combined: dict[str, list[float]] = {}
    periods: list[str] = []
    for method in _methods(args.methods, ESTIMATORS):
        est = EstimatorConfig(method, cfg.orderings, cfg.seed, cfg.lasso(), cfg.grid())
        rep = backtest(series, est, args.window, compound=args.compound,
                       threads=cfg.thread_count())
        (out / f"backtest_{method}.json").write_text(_dump_json(rep.to_json_dict()))
        lines = ["period,cumulative_return"]
        lines += [f"{per},{fmt(v)}" for per, v in zip(rep.period_labels, rep.cumulative_returns)]
        (out / f"cumulative_{method}.csv").write_text("\n".join(lines) + "\n")
        combined[method] = list(rep.cumulative_returns)
        periods = rep.period_labels
        print(f"{method:>12}  AWR {rep.awr:.4f}  SE {rep.se:.4f}  "
              f"AWR/SE {'inf' if rep.zero_variance else format(rep.info_ratio, '.4f')}")
    lines = ["period," + ",".join(combined)]
    for i, per in enumerate(periods):
        lines.append(per + "," + ",".join(fmt(v[i]) for v in combined.values()))
    (out / "cumulative_all.csv").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cholensemble",
                                     description="Weighted-average Cholesky ensemble covariance tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate a covariance matrix from a data CSV")
    p.add_argument("input", type=Path)
    p.add_argument("--method", choices=METHODS, default="wae")
    p.add_argument("--out", type=Path, required=True, help="output path prefix")
    p.add_argument("--timing", action="store_true", help="record wall time in the sidecar")
    p.add_argument("--debug-identity-ordering", action="store_true", help=argparse.SUPPRESS)
    _add_common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="replicated simulation study")
    p.add_argument("--scenario", type=int, required=True, choices=range(1, 8))
    p.add_argument("--case", choices=SAMPLER_KINDS, default="normal")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--p", type=int, default=50)
    p.add_argument("--M", type=int, default=None, help="orderings (default: config value)")
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--methods", default="equal,wae,wae_star")
    p.add_argument("--scenario-seed", type=int, default=None)
    p.add_argument("--l2-abs", action="store_true", help="use max |eigenvalue| for L2")
    p.add_argument("--out", type=Path, required=True, help="report file")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("backtest", help="minimum-variance portfolio backtest")
    p.add_argument("input", type=Path)
    p.add_argument("--methods", default="equal,wae,wae_star")
    p.add_argument("--window", type=int, default=52)
    p.add_argument("--compound", action="store_true", help="multiplicative cumulation")
    p.add_argument("--out-dir", type=Path, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_backtest)
    return parser


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        return _exit_code(exc.cause)
    if isinstance(exc, (InvalidInput, OSError)):
        return EXIT_INPUT
    if isinstance(exc, (NumericalError, CholEnsembleError, np.linalg.LinAlgError)):
        return EXIT_NUMERIC
    return EXIT_NUMERIC


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CholEnsembleError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
