"""Experiment runner: NA baseline, NET with fixed parameters, and source-validated NET."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from scipy import linalg

from .data import (
    DataError,
    LabeledDomain,
    PreprocessSpec,
    load_dataset,
    make_shifted_gaussians,
    preprocess,
    save_dataset,
)
from .eigsolve import EigenSolveError
from .kernel import KernelSpec
from .kmm import KmmError, kmm_weights, select_validation
from .modelsel import GridSpec, KmmConfig, make_task, search
from .net import HyperParams, NetFitError, NetModel, na_baseline, net_fit

logger = logging.getLogger("netda")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

DEFAULT_PARAMS = HyperParams(alpha=1.0, beta=1.0, gamma=1.0, k=20, iterations=10)


class ConfigError(ValueError):
    pass


def format_accuracy(acc: Optional[float]) -> Optional[float]:
    """Fraction correct -> percentage with two decimals (0.7539 -> 75.39)."""
    return None if acc is None else round(100.0 * float(acc), 2)


@dataclass(frozen=True)
class SyntheticSpec:
    n_s: int = 300
    n_t: int = 300
    classes: int = 2
    dim: int = 2
    shift: float = 1.5
    rotation: float = 0.0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class ExperimentConfig:
    sources: Sequence[str] = ()
    targets: Sequence[str] = ()
    label_column: Optional[str] = None
    target_label_column: Optional[str] = None
    synthetic: Optional[SyntheticSpec] = None
    hide_target_labels: bool = False
    preprocess: PreprocessSpec = PreprocessSpec()
    kernel: KernelSpec = KernelSpec()
    params: Optional[HyperParams] = None
    grid: Optional[GridSpec] = None
    kmm: KmmConfig = KmmConfig()
    seed: int = 0
    output_path: Optional[str] = None
    jobs: int = 1

    def validate(self) -> None:
        if (self.params is None) == (self.grid is None):
            raise ConfigError("exactly one of fixed parameters or a parameter grid must be given")
        if self.synthetic is None:
            if not self.sources or len(self.sources) != len(self.targets):
                raise ConfigError("give matching --source and --target paths, or --synthetic")
            if self.label_column is None:
                raise ConfigError("--labels is required for file input")
        elif self.sources or self.targets:
            raise ConfigError("--synthetic cannot be combined with --source/--target")
        if self.params is not None and len(self.sources) > 1:
            raise ConfigError("several domain pairs are only supported in grid mode")
        if self.jobs < 1:
            raise ConfigError("--jobs must be >= 1")

    def to_dict(self) -> dict:
        return {
            "sources": list(self.sources),
            "targets": list(self.targets),
            "label_column": self.label_column,
            "target_label_column": self.target_label_column,
            "synthetic": None if self.synthetic is None else self.synthetic.to_dict(),
            "preprocess": {"standardize": self.preprocess.standardize,
                           "pca_dims": self.preprocess.pca_dims,
                           "fit_on": self.preprocess.fit_on},
            "kernel": self.kernel.to_dict(),
            "params": None if self.params is None else self.params.to_dict(),
            "grid": None if self.grid is None else self.grid.to_dict(),
            "kmm": self.kmm.to_dict(),
            "seed": self.seed,
        }


@dataclass
class RunReport:
    config: Dict[str, Any]
    status: str = "ok"
    pairs: List[Dict[str, Any]] = field(default_factory=list)
    selection: Optional[Dict[str, Any]] = None
    timings: Dict[str, float] = field(default_factory=dict)
    error: Optional[Dict[str, Any]] = None

    def to_dict(self) -> dict:
        out = {"status": self.status, "config": self.config, "pairs": self.pairs}
        if self.selection is not None:
            out["selection"] = self.selection
        if self.error is not None:
            out["error"] = self.error
        out["timings"] = self.timings
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(
            config=d["config"],
            status=d["status"],
            pairs=d.get("pairs", []),
            selection=d.get("selection"),
            timings=d.get("timings", {}),
            error=d.get("error"),
        )

    def exit_code(self) -> int:
        return EXIT_OK if self.error is None else int(self.error["exit_code"])


def _drop_none(d: dict) -> dict:
    return {k: v for k, v in d.items() if v is not None}


def report_text(report: RunReport) -> str:
    return json.dumps(report.to_dict(), indent=2) + "\n"


def emit_report(report: RunReport, path) -> None:
    """Write the report as indented JSON; ``path=None`` or ``"-"`` writes to stdout."""
    text = report_text(report)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    Path(path).write_text(text, encoding="utf-8")


def parse_report(text: str) -> RunReport:
    return RunReport.from_dict(json.loads(text))


def _history(model: NetModel) -> List[dict]:
    return [
        _drop_none({
            "iteration": i,
            "accuracy": format_accuracy(rec.accuracy),
            "changed": rec.changed,
            "mmd_cost": rec.mmd_cost,
            "embedding_cost": rec.embedding_cost,
            "frobenius": rec.frobenius,
            "objective": rec.objective,
        })
        for i, rec in enumerate(model.history, start=1)
    ]


def load_pairs(config: ExperimentConfig):
    if config.synthetic is not None:
        s = config.synthetic
        source, target = make_shifted_gaussians(config.seed, s.n_s, s.n_t, s.classes, s.dim,
                                                s.shift, s.rotation)
        if config.hide_target_labels:
            target = target.without_labels()
        pairs = [(source, target)]
    else:
        pairs = []
        for src, tgt in zip(config.sources, config.targets):
            source = load_dataset(src, config.label_column)
            if not source.has_labels:
                raise DataError(f"{src}: source domain needs labels")
            target = _load_target(tgt, config.target_label_column or config.label_column)
            if config.hide_target_labels:
                target = target.without_labels()
            pairs.append((source, target))
    return [preprocess(s, t, config.preprocess) for s, t in pairs]


def _load_target(path, label_column):
    # A target file without the label column is simply unlabeled.
    if label_column is not None and not str(label_column).lstrip("-").isdigit():
        with open(path, encoding="utf-8") as fh:
            header = fh.readline()
        if label_column not in [h.strip() for h in header.replace("\t", ",").split(",")]:
            label_column = None
    return load_dataset(path, label_column)


def _pair_entry(name: str, source: LabeledDomain, target: LabeledDomain, na_acc, model: NetModel) -> dict:
    return _drop_none({
        "name": name,
        "n_source": source.n,
        "n_target": target.n,
        "na_accuracy": format_accuracy(na_acc),
        "net_accuracy": format_accuracy(model.accuracy),
        "params": model.params.to_dict(),
        "kernel": model.kernel_spec.to_dict(),
        "history": _history(model),
        "target_predictions": [int(v) for v in model.target_labels],
    })


def _error_record(exc: BaseException) -> dict:
    if isinstance(exc, (ConfigError, KmmError)):
        code = EXIT_CONFIG
    elif isinstance(exc, (DataError, OSError)):
        code = EXIT_DATA
    elif isinstance(exc, (NetFitError, EigenSolveError, linalg.LinAlgError, RuntimeError, FloatingPointError)):
        code = EXIT_NUMERICAL
    elif isinstance(exc, ValueError):
        code = EXIT_CONFIG
    else:
        code = EXIT_NUMERICAL
    record = {"type": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, NetFitError):
        record["iteration"] = exc.iteration
    return record


def run(config: ExperimentConfig) -> RunReport:
    """Run NA, then NET (fixed parameters) or source-validated NET (grid)."""
    report = RunReport(config=config.to_dict())
    try:
        config.validate()
        t0 = time.perf_counter()
        pairs = load_pairs(config)
        report.timings["load"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        na = [na_baseline(s, t)[1] for s, t in pairs]
        report.timings["na"] = time.perf_counter() - t0

        params = config.params
        if config.grid is not None:
            t0 = time.perf_counter()
            tasks, kmm_info = [], []
            for s, t in pairs:
                task, res, split = make_task(s, t, config.kernel, config.kmm)
                tasks.append(task)
                kmm_info.append({
                    "objective": res.objective,
                    "iterations": res.iterations_used,
                    "converged": res.converged,
                    "feasible": res.feasible,
                    "B": res.B,
                    "epsilon": res.epsilon,
                    "validation_indices": [int(i) for i in split.validation_indices],
                })
            report.timings["kmm"] = time.perf_counter() - t0
            t0 = time.perf_counter()
            sel = search(tasks, config.kernel, config.grid, config.jobs)
            report.timings["selection"] = time.perf_counter() - t0
            report.selection = {
                "mode": sel.mode,
                "best_params": sel.best_params.to_dict(),
                "best_score": format_accuracy(sel.best_score),
                "scores": [
                    _drop_none({**r.to_dict(), "score": format_accuracy(r.score)}) for r in sel.scores
                ],
                "kmm": kmm_info,
            }
            params = sel.best_params

        t0 = time.perf_counter()
        for (s, t), na_acc in zip(pairs, na):
            model = net_fit(s, t, config.kernel, params)
            report.pairs.append(_pair_entry(f"{s.name}->{t.name}", s, t, na_acc, model))
        report.timings["net"] = time.perf_counter() - t0
    except Exception as exc:
        logger.debug("run failed", exc_info=True)
        report.status = "error"
        report.error = _error_record(exc)
    return report


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_data_args(p):
    p.add_argument("--source", nargs="+", default=[], help="labeled source table(s)")
    p.add_argument("--target", nargs="+", default=[], help="target table(s), paired with --source")
    p.add_argument("--labels", help="label column name or 0-based index")
    p.add_argument("--target-labels", help="label column in the target table, if different")
    p.add_argument("--synthetic", action="store_true", help="use a generated shifted-Gaussian pair")
    p.add_argument("--n-s", type=int, default=300)
    p.add_argument("--n-t", type=int, default=300)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--shift", type=float, default=1.5)
    p.add_argument("--rotation", type=float, default=0.0, help="radians")
    p.add_argument("--hide-target-labels", action="store_true",
                   help="drop target labels before fitting (accuracies are then omitted)")
    p.add_argument("--standardize", choices=["none", "source", "pooled"], default="none")
    p.add_argument("--pca", type=int, default=None, help="reduce to this many principal components")
    p.add_argument("--seed", type=int, default=0)


def _add_kernel_args(p):
    p.add_argument("--kernel", choices=["linear", "rbf", "poly"], default="rbf")
    p.add_argument("--bandwidth", default="median", help="rbf length scale or 'median'")
    p.add_argument("--degree", type=int, default=2)
    p.add_argument("--offset", type=float, default=1.0)


def _add_kmm_args(p):
    p.add_argument("--kmm-b", type=float, default=1000.0)
    p.add_argument("--kmm-eps", default="auto", help="sum slack or 'auto' for (sqrt(n_s)-1)/sqrt(n_s)")
    p.add_argument("--val-fraction", type=float, default=0.3)


def _add_param_args(p):
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--iters", type=int, default=10)


def _add_grid_args(p):
    p.add_argument("--k-grid", type=_int_list)
    p.add_argument("--weight-grid", type=_float_list)
    p.add_argument("--search", choices=["full", "coordinate"])
    p.add_argument("--jobs", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="netda", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="NA baseline plus NET (fixed parameters) or NET_v (grid flags)")
    _add_data_args(p), _add_kernel_args(p), _add_kmm_args(p), _add_param_args(p), _add_grid_args(p)
    p.add_argument("--out", default=None)

    p = sub.add_parser("gridsearch", help="NET_v: select parameters on a KMM validation split")
    _add_data_args(p), _add_kernel_args(p), _add_kmm_args(p), _add_grid_args(p)
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--out", default=None)

    p = sub.add_parser("synth", help="write a synthetic shifted-Gaussian pair as CSV files")
    _add_data_args(p)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("kmm", help="KMM weights and validation split only")
    _add_data_args(p), _add_kernel_args(p), _add_kmm_args(p)
    p.add_argument("--out", default=None)
    return parser


def _kernel_from_args(args) -> KernelSpec:
    bandwidth = None
    if args.bandwidth != "median":
        try:
            bandwidth = float(args.bandwidth)
        except ValueError:
            raise ConfigError(f"--bandwidth must be a number or 'median', got {args.bandwidth!r}") from None
    try:
        return KernelSpec(args.kernel, bandwidth, args.degree, args.offset)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _kmm_from_args(args) -> KmmConfig:
    eps = None if args.kmm_eps == "auto" else float(args.kmm_eps)
    if not 0.0 < args.val_fraction < 1.0:
        raise ConfigError("--val-fraction must lie in (0, 1)")
    return KmmConfig(B=args.kmm_b, epsilon=eps, fraction=args.val_fraction)


def _synthetic_from_args(args) -> Optional[SyntheticSpec]:
    if not args.synthetic:
        return None
    return SyntheticSpec(args.n_s, args.n_t, args.classes, args.dim, args.shift, args.rotation)


def config_from_args(args) -> ExperimentConfig:
    param_flags = [getattr(args, n, None) for n in ("alpha", "beta", "gamma", "k")]
    grid_flags = [getattr(args, n, None) for n in ("k_grid", "weight_grid", "search")]
    want_grid = args.command == "gridsearch" or any(v is not None for v in grid_flags)
    want_params = any(v is not None for v in param_flags)
    if want_grid and want_params:
        raise ConfigError("fixed parameters (--alpha/--beta/--gamma/--k) and grid flags are mutually exclusive")
    try:
        params = grid = None
        if want_grid:
            defaults = GridSpec()
            grid = GridSpec(
                k_grid=tuple(args.k_grid) if args.k_grid else defaults.k_grid,
                weight_grid=tuple(args.weight_grid) if args.weight_grid else defaults.weight_grid,
                search_mode=args.search or defaults.search_mode,
                iterations=args.iters,
            )
        else:
            d = DEFAULT_PARAMS
            params = HyperParams(
                alpha=d.alpha if args.alpha is None else args.alpha,
                beta=d.beta if args.beta is None else args.beta,
                gamma=d.gamma if args.gamma is None else args.gamma,
                k=d.k if args.k is None else args.k,
                iterations=args.iters,
            )
        prep = PreprocessSpec(
            standardize=args.standardize != "none",
            pca_dims=args.pca,
            fit_on="pooled" if args.standardize == "pooled" else "source",
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return ExperimentConfig(
        sources=tuple(args.source),
        targets=tuple(args.target),
        label_column=args.labels,
        target_label_column=args.target_labels,
        synthetic=_synthetic_from_args(args),
        hide_target_labels=args.hide_target_labels,
        preprocess=prep,
        kernel=_kernel_from_args(args),
        params=params,
        grid=grid,
        kmm=_kmm_from_args(args),
        seed=args.seed,
        output_path=args.out,
        jobs=getattr(args, "jobs", 1),
    )


def _cmd_synth(args) -> int:
    spec = _synthetic_from_args(args) or SyntheticSpec(args.n_s, args.n_t, args.classes, args.dim,
                                                       args.shift, args.rotation)
    source, target = make_shifted_gaussians(args.seed, spec.n_s, spec.n_t, spec.classes, spec.dim,
                                            spec.shift, spec.rotation)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(source, out / "source.csv")
    save_dataset(target if not args.hide_target_labels else target.without_labels(), out / "target.csv")
    return EXIT_OK


def _cmd_kmm(args) -> int:
    config = ExperimentConfig(
        sources=tuple(args.source), targets=tuple(args.target), label_column=args.labels,
        target_label_column=args.target_labels, synthetic=_synthetic_from_args(args),
        hide_target_labels=args.hide_target_labels,
        preprocess=PreprocessSpec(standardize=args.standardize != "none", pca_dims=args.pca,
                                  fit_on="pooled" if args.standardize == "pooled" else "source"),
        kernel=_kernel_from_args(args), params=DEFAULT_PARAMS, kmm=_kmm_from_args(args),
        seed=args.seed,
    )
    config.validate()
    out = []
    for source, target in load_pairs(config):
        res = kmm_weights(source.features, target.features, config.kernel, config.kmm.B, config.kmm.epsilon)
        split = select_validation(source, res.weights, config.kmm.fraction)
        out.append({
            "weights": [float(w) for w in res.weights],
            "objective": res.objective,
            "iterations": res.iterations_used,
            "converged": res.converged,
            "feasible": res.feasible,
            "B": res.B,
            "epsilon": res.epsilon,
            "validation_indices": [int(i) for i in split.validation_indices],
            "train_indices": [int(i) for i in split.train_indices],
        })
    text = json.dumps({"status": "ok", "pairs": out}, indent=2) + "\n"
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    out_path = None
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        out_path = getattr(args, "out", None)
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "kmm":
            return _cmd_kmm(args)
        config = config_from_args(args)
    except Exception as exc:
        record = _error_record(exc)
        sys.stderr.write(f"netda: {record['message']}\n")
        if out_path not in (None, "-"):
            Path(out_path).write_text(json.dumps({"status": "error", "error": record}, indent=2) + "\n",
                                      encoding="utf-8")
        return record["exit_code"]
    report = run(config)
    emit_report(report, config.output_path)
    if report.error is not None:
        sys.stderr.write(f"netda: {report.error['message']}\n")
    return report.exit_code()


if __name__ == "__main__":
    sys.exit(main())
