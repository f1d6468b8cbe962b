"""Source-side validation: KMM-selected validation split and (alpha, beta, gamma, k) search."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .data import LabeledDomain
from .kernel import KernelSpec
from .kmm import KmmResult, kmm_weights, select_validation
from .net import HyperParams, NetModel, NetSystem, net_fit, prepare_system

logger = logging.getLogger(__name__)

DEFAULT_K_GRID = (10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 200)
DEFAULT_WEIGHT_GRID = (0.0, 0.0001, 0.0005, 0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0)
SEARCH_MODES = ("full", "coordinate")
COORDINATE_PASSES = 2
# coordinate search starts from the nearest grid point to these (k, alpha, beta, gamma)
COORDINATE_START = (20, 1.0, 1.0, 1.0)

Key = Tuple[int, float, float, float]


@dataclass(frozen=True)
class GridSpec:
    k_grid: Tuple[int, ...] = DEFAULT_K_GRID
    weight_grid: Tuple[float, ...] = DEFAULT_WEIGHT_GRID
    search_mode: str = "coordinate"
    iterations: int = 10

    def __post_init__(self):
        if not self.k_grid or not self.weight_grid:
            raise ValueError("grids must be nonempty")
        if self.search_mode not in SEARCH_MODES:
            raise ValueError(f"search_mode must be one of {SEARCH_MODES}")
        if any(int(k) != k or k < 1 for k in self.k_grid):
            raise ValueError("k grid entries must be positive integers")
        if any(w < 0 for w in self.weight_grid):
            raise ValueError("weight grid entries must be nonnegative")
        if max(self.weight_grid) <= 0:
            raise ValueError("weight grid needs at least one positive value")
        object.__setattr__(self, "k_grid", tuple(sorted({int(k) for k in self.k_grid})))
        object.__setattr__(self, "weight_grid", tuple(sorted({float(w) for w in self.weight_grid})))

    def to_dict(self) -> dict:
        return {"k_grid": list(self.k_grid), "weight_grid": list(self.weight_grid),
                "search_mode": self.search_mode, "iterations": self.iterations}


@dataclass(frozen=True)
class KmmConfig:
    B: float = 1000.0
    epsilon: Optional[float] = None
    fraction: float = 0.3

    def to_dict(self) -> dict:
        return {"B": self.B, "epsilon": self.epsilon, "fraction": self.fraction}


@dataclass(frozen=True)
class ScoreRow:
    k: int
    alpha: float
    beta: float
    gamma: float
    score: Optional[float]
    error: Optional[str] = None

    @property
    def key(self) -> Key:
        return (self.k, self.alpha, self.beta, self.gamma)

    def to_dict(self) -> dict:
        out = {"k": self.k, "alpha": self.alpha, "beta": self.beta, "gamma": self.gamma,
               "score": self.score}
        if self.error is not None:
            out["error"] = self.error
        return out


@dataclass
class SelectionReport:
    best_params: HyperParams
    best_score: float
    scores: List[ScoreRow]
    mode: str
    validation_indices: Optional[np.ndarray] = None
    kmm: Optional[KmmResult] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "best_params": self.best_params.to_dict(),
            "best_score": self.best_score,
            "scores": [r.to_dict() for r in self.scores],
        }
        if self.validation_indices is not None:
            out["validation_indices"] = [int(i) for i in self.validation_indices]
        return out


@dataclass
class SelectionTask:
    """One (train, validation, target) triple.

    Validation points are stacked in front of the target and fitted as
    unlabeled samples; their labels are used only to score predictions.
    """

    train: LabeledDomain
    validation: LabeledDomain
    target: LabeledDomain
    _system: Optional[NetSystem] = field(default=None, repr=False)

    def __post_init__(self):
        if not self.train.has_labels or not self.validation.has_labels:
            raise ValueError("train and validation must be labeled")
        self.stacked = LabeledDomain(
            np.vstack([self.validation.features, self.target.features]), None, "validation+target"
        )

    def system(self, spec: KernelSpec) -> NetSystem:
        if self._system is None:
            self._system = prepare_system(self.train, self.stacked, spec)
        return self._system

    def score(self, spec: KernelSpec, params: HyperParams) -> float:
        model = net_fit(self.train, self.stacked, spec, params, system=self.system(spec))
        pred = model.target_labels[: self.validation.n]
        return float(np.mean(pred == self.validation.labels))


def _tie_key(score: float, key: Key):
    return (-score, key)


def _best(rows: Sequence[ScoreRow]) -> Optional[ScoreRow]:
    scored = [r for r in rows if r.score is not None]
    if not scored:
        return None
    return min(scored, key=lambda r: _tie_key(r.score, r.key))


# Worker-side state for process pools; set once per worker by _init_worker.
_WORKER: Dict[str, object] = {}


def _init_worker(tasks, spec, iterations):
    _WORKER.update(tasks=tasks, spec=spec, iterations=iterations)


def _evaluate(key: Key) -> ScoreRow:
    tasks: List[SelectionTask] = _WORKER["tasks"]
    spec: KernelSpec = _WORKER["spec"]
    k, a, b, g = key
    try:
        params = HyperParams(alpha=a, beta=b, gamma=g, k=k, iterations=_WORKER["iterations"])
        score = float(np.mean([t.score(spec, params) for t in tasks]))
    except Exception as exc:  # recorded per configuration; the search goes on
        logger.debug("configuration %s failed: %s", key, exc)
        return ScoreRow(k, a, b, g, None, f"{type(exc).__name__}: {exc}")
    return ScoreRow(k, a, b, g, score)


class _Evaluator:
    def __init__(self, tasks, spec, iterations, jobs):
        self.cache: Dict[Key, ScoreRow] = {}
        self.jobs = max(1, int(jobs))
        self.pool = None
        if self.jobs > 1:
            self.pool = ProcessPoolExecutor(self.jobs, initializer=_init_worker,
                                            initargs=(tasks, spec, iterations))
        else:
            _init_worker(tasks, spec, iterations)

    def __call__(self, keys: Sequence[Key]) -> List[ScoreRow]:
        todo = [k for k in dict.fromkeys(keys) if k not in self.cache]
        results = self.pool.map(_evaluate, todo) if self.pool else map(_evaluate, todo)
        for key, row in zip(todo, results):
            self.cache[key] = row
        return [self.cache[k] for k in keys]

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()


def _nearest(grid, value):
    return min(grid, key=lambda g: (abs(g - value), g))


def _coordinate_search(grid: GridSpec, evaluate) -> None:
    current = list(
        [_nearest(grid.k_grid, COORDINATE_START[0])]
        + [_nearest(grid.weight_grid, v) for v in COORDINATE_START[1:]]
    )
    for _ in range(COORDINATE_PASSES):
        for pos in range(4):
            values = grid.k_grid if pos == 0 else grid.weight_grid
            keys = []
            for v in values:
                cand = list(current)
                cand[pos] = v
                keys.append(tuple(cand))
            best = _best(evaluate(keys))
            if best is not None:
                current = list(best.key)


def search(tasks: Sequence[SelectionTask], spec: KernelSpec, grid: GridSpec, jobs: int = 1) -> SelectionReport:
    """Score configurations by mean validation accuracy over ``tasks``.

    ``full`` mode scores every (k, alpha, beta, gamma) combination.
    ``coordinate`` mode sweeps k, alpha, beta, gamma in turn, holding the
    others at the current best, for two passes. The winner is the highest
    score; ties go to smaller k, then smaller (alpha, beta, gamma).
    """
    evaluator = _Evaluator(list(tasks), spec, grid.iterations, jobs)
    try:
        if grid.search_mode == "full":
            w = grid.weight_grid
            evaluator([(k, a, b, g) for k in grid.k_grid for a in w for b in w for g in w])
        else:
            _coordinate_search(grid, evaluator)
    finally:
        evaluator.close()
    rows = [evaluator.cache[k] for k in sorted(evaluator.cache)]
    best = _best(rows)
    if best is None:
        raise RuntimeError("every configuration in the grid failed")
    params = HyperParams(alpha=best.alpha, beta=best.beta, gamma=best.gamma, k=best.k,
                         iterations=grid.iterations)
    return SelectionReport(best_params=params, best_score=best.score, scores=rows, mode=grid.search_mode)


def grid_search(
    train_source: LabeledDomain,
    validation_source: LabeledDomain,
    target: LabeledDomain,
    spec: KernelSpec,
    grid: GridSpec,
    jobs: int = 1,
) -> SelectionReport:
    task = SelectionTask(train_source, validation_source, target.without_labels())
    return search([task], spec, grid, jobs)


def make_task(source: LabeledDomain, target: LabeledDomain, spec: KernelSpec, kmm: KmmConfig):
    """KMM-weight the source against the target and split off the validation set."""
    result = kmm_weights(source.features, target.features, spec, kmm.B, kmm.epsilon)
    split = select_validation(source, result.weights, kmm.fraction)
    task = SelectionTask(
        source.subset(split.train_indices, "train"),
        source.subset(split.validation_indices, "validation"),
        target.without_labels(),
    )
    return task, result, split


def validate_pipeline(
    source: LabeledDomain,
    target: LabeledDomain,
    spec: KernelSpec,
    grid: GridSpec,
    kmm_config: KmmConfig = KmmConfig(),
    jobs: int = 1,
) -> Tuple[SelectionReport, NetModel]:
    """KMM weights, validation split, grid search, then a refit on the full source."""
    if not source.has_labels:
        raise ValueError("source domain must be labeled")
    task, result, split = make_task(source, target, spec, kmm_config)
    report = search([task], spec, grid, jobs)
    report.validation_indices = split.validation_indices
    report.kmm = result
    model = net_fit(source, target, spec, report.best_params)
    return report, model


def validate_pipeline_multi(
    pairs: Sequence[Tuple[LabeledDomain, LabeledDomain]],
    spec: KernelSpec,
    grid: GridSpec,
    kmm_config: KmmConfig = KmmConfig(),
    jobs: int = 1,
) -> Tuple[SelectionReport, List[NetModel]]:
    """One parameter set for several domain pairs: validation accuracy is averaged over pairs."""
    tasks = [make_task(s, t, spec, kmm_config)[0] for s, t in pairs]
    report = search(tasks, spec, grid, jobs)
    models = [net_fit(s, t, spec, report.best_params) for s, t in pairs]
    return report, models
