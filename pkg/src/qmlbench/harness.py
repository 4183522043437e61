"""Grid search, benchmark sweeps, rankings and the analysis utilities.

Results are plain JSON documents (one per benchmark cell) plus an aggregate
CSV per benchmark. Analysis outputs are numeric grids meant for external
plotting.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .autodiff import DEFAULT_MAX_STEPS
from .classical import KernelError, rbf_kernel
from .datagen import DataError, Dataset, benchmark_datasets, write_dataset
from .models import Classifier, ModelError, ModelSpec, grid_configurations, make_model
from .models.catalog import GRIDS
from .models.kernels import KernelModel
from .sim import MAX_STATE_QUBITS, SimulationError


class HarnessError(RuntimeError):
    pass


class GridSearchFailed(HarnessError):
    """No configuration produced a single converged fold."""


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------


def stratified_folds(y, k: int = 5, seed: int = 0) -> list[np.ndarray]:
    """Validation index sets of ``k`` stratified folds, shuffled with ``seed``."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    for c in (-1, 1):
        idx = np.flatnonzero(y == c)
        if 0 < len(idx) < k:
            raise HarnessError(f"class {c} has {len(idx)} points, fewer than {k} folds")
        rng.shuffle(idx)
        for f, part in enumerate(np.array_split(idx, k)):
            folds[f].extend(part)
    return [np.sort(np.array(f, dtype=int)) for f in folds]


@dataclass
class ConfigResult:
    hyperparameters: dict
    fold_accuracies: list[float]
    fold_converged: list[bool]

    @property
    def kept(self) -> list[float]:
        return [a for a, c in zip(self.fold_accuracies, self.fold_converged) if c]

    @property
    def eligible(self) -> bool:
        return len(self.kept) > 0

    @property
    def mean(self) -> float:
        return float(np.mean(self.kept)) if self.eligible else float("nan")

    @property
    def std(self) -> float:
        return float(np.std(self.kept)) if self.eligible else float("nan")

    def to_dict(self) -> dict:
        return {"hyperparameters": _jsonable(self.hyperparameters), "fold_accuracies": self.fold_accuracies,
                "fold_converged": self.fold_converged, "mean": self.mean, "std": self.std}


@dataclass
class GridSearchResult:
    kind: str
    variant: str | None
    configs: list[ConfigResult]
    best_index: int
    train_accuracy: float | None = None
    test_accuracy: float | None = None
    model: Classifier | None = field(default=None, repr=False)

    @property
    def best(self) -> ConfigResult:
        return self.configs[self.best_index]

    @property
    def best_hyperparameters(self) -> dict:
        return self.best.hyperparameters


def _fold_job(kind, hp, variant, seed, max_steps, X_tr, y_tr, X_val, y_val):
    model = make_model(ModelSpec(kind, hp, variant, seed), max_steps=max_steps)
    model.fit(X_tr, y_tr)
    return model.score(X_val, y_val), bool(model.converged_)


def select_winner(configs: list[ConfigResult]) -> int:
    """Highest mean validation accuracy over converged folds; first in grid order on ties."""
    best, best_mean = -1, -np.inf
    for i, cfg in enumerate(configs):
        if cfg.eligible and cfg.mean > best_mean:
            best, best_mean = i, cfg.mean
    if best < 0:
        raise GridSearchFailed("every fold of every configuration failed to converge")
    return best


def grid_search_cv(kind: str, dataset: Dataset, grid: dict | list | None = None, k: int = 5, seed: int = 0,
                   variant: str | None = None, max_steps: int = DEFAULT_MAX_STEPS, n_workers: int = 1,
                   refit: bool = True) -> GridSearchResult:
    """Full grid search with stratified ``k``-fold cross-validation on the training split.

    ``grid`` is a name -> values mapping or an explicit list of assignments.
    Folds whose training run did not converge are left out of the mean. The
    winner is refit on the whole training split and scored on the test split.
    """
    configs = grid if isinstance(grid, list) else grid_configurations(kind, grid)
    if not configs:
        raise HarnessError("empty hyperparameter grid")
    X, y = dataset.X_train, dataset.y_train
    folds = stratified_folds(y, k, seed)
    jobs = []
    for hp in configs:
        for val in folds:
            tr = np.setdiff1d(np.arange(len(y)), val)
            jobs.append((kind, hp, variant, seed, max_steps, X[tr], y[tr], X[val], y[val]))
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            outcomes = list(pool.map(_fold_job, *zip(*jobs)))
    else:
        outcomes = [_fold_job(*job) for job in jobs]
    results = []
    for i, hp in enumerate(configs):
        chunk = outcomes[i * k:(i + 1) * k]
        results.append(ConfigResult(dict(hp), [float(a) for a, _ in chunk], [c for _, c in chunk]))
    out = GridSearchResult(kind, variant, results, select_winner(results))
    if refit:
        model = make_model(ModelSpec(kind, out.best_hyperparameters, variant, seed), max_steps=max_steps)
        model.fit(X, y)
        out.model = model
        out.train_accuracy = model.score(X, y)
        out.test_accuracy = model.score(dataset.X_test, dataset.y_test)
    return out


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


@dataclass(frozen=True)
class BenchmarkRecord:
    """One (dataset, model) cell of a benchmark sweep."""

    model: str
    variant: str | None
    benchmark: str
    dataset: dict
    dataset_name: str
    seed: int
    status: str = "ok"
    reason: str = ""
    hyperparameters: dict = field(default_factory=dict)
    fold_accuracies: list = field(default_factory=list)
    validation_accuracy: float | None = None
    train_accuracy: float | None = None
    test_accuracy: float | None = None
    wall_time: float = 0.0
    started: str = ""
    finished: str = ""

    def __post_init__(self):
        for acc in (self.train_accuracy, self.test_accuracy, self.validation_accuracy):
            if acc is not None and not 0.0 <= acc <= 1.0:
                raise HarnessError(f"accuracy {acc} outside [0, 1]")

    @property
    def label(self) -> str:
        return model_label(self.model, self.variant)

    def to_json(self) -> str:
        return json.dumps(_jsonable(asdict(self)), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "BenchmarkRecord":
        return cls(**json.loads(text))


def model_label(kind: str, variant: str | None) -> str:
    return kind if variant is None else f"{kind}:{variant}"


def parse_model(label: str) -> tuple[str, str | None]:
    kind, _, variant = label.partition(":")
    return kind, (variant or None)


def record_path(out_dir, rec_or_benchmark, dataset_name=None, label=None) -> Path:
    if isinstance(rec_or_benchmark, BenchmarkRecord):
        r = rec_or_benchmark
        return record_path(out_dir, r.benchmark, r.dataset_name, r.label)
    return Path(out_dir) / rec_or_benchmark / f"{dataset_name}__{label.replace(':', '-')}.json"


def write_record(out_dir, record: BenchmarkRecord) -> Path:
    path = record_path(out_dir, record)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(record.to_json())
    tmp.replace(path)
    return path


def read_records(in_dir) -> list[BenchmarkRecord]:
    return [BenchmarkRecord.from_json(p.read_text()) for p in sorted(Path(in_dir).rglob("*.json"))
            if p.parent.name != "data"]


SWEEP_KEYS = {"linearly_separable": "d", "bars_and_stripes": "width", "hidden_manifold": "d",
              "hidden_manifold_diff": "m", "two_curves": "d", "two_curves_diff": "degree",
              "hyperplanes_diff": "k", "mnist_pca": "d", "mnist_pca_minus": "d", "mnist_cg": "H"}

CSV_COLUMNS = ["model", "variant", "dataset", "sweep_value", "status", "validation_accuracy",
               "train_accuracy", "test_accuracy", "wall_time", "hyperparameters", "reason"]


def records_csv(records: list[BenchmarkRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in sorted(records, key=lambda r: (r.label, _sweep_value(r))):
        writer.writerow([r.model, r.variant or "", r.dataset_name, _sweep_value(r), r.status,
                         _fmt(r.validation_accuracy), _fmt(r.train_accuracy), _fmt(r.test_accuracy),
                         f"{r.wall_time:.3f}", json.dumps(_jsonable(r.hyperparameters), sort_keys=True), r.reason])
    return buf.getvalue()


def _fmt(v):
    return "" if v is None else repr(float(v))


def _sweep_value(r: BenchmarkRecord):
    return r.dataset.get(SWEEP_KEYS.get(r.benchmark, "d"), "")


@dataclass
class RunSummary:
    records: list[BenchmarkRecord]

    @property
    def skipped(self) -> list[BenchmarkRecord]:
        return [r for r in self.records if r.status != "ok"]

    @property
    def exit_code(self) -> int:
        return 2 if self.skipped else 0


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run_cell(benchmark: str, dataset: Dataset, label: str, seed: int = 0, max_qubits: int = MAX_STATE_QUBITS,
             max_steps: int = DEFAULT_MAX_STEPS, n_workers: int = 1, grid=None, k: int = 5,
             model_dir=None) -> BenchmarkRecord:
    kind, variant = parse_model(label)
    base = dict(model=kind, variant=variant, benchmark=benchmark, dataset=dict(dataset.config),
                dataset_name=dataset.name, seed=seed)
    started = _now()
    t0 = time.perf_counter()
    probe = make_model(ModelSpec(kind, {}, variant, seed))
    need = probe.required_qubits(dataset.n_features)
    if need > max_qubits:
        return BenchmarkRecord(**base, status="skipped", reason=f"needs {need} qubits, cap is {max_qubits}",
                               started=started, finished=_now())
    try:
        result = grid_search_cv(kind, dataset, grid if grid is not None else GRIDS[kind], k=k, seed=seed,
                                variant=variant, max_steps=max_steps, n_workers=n_workers)
    except GridSearchFailed as err:
        return BenchmarkRecord(**base, status="failed", reason=str(err), wall_time=time.perf_counter() - t0,
                               started=started, finished=_now())
    except (ModelError, SimulationError, KernelError, DataError) as err:
        return BenchmarkRecord(**base, status="skipped", reason=f"{type(err).__name__}: {err}",
                               wall_time=time.perf_counter() - t0, started=started, finished=_now())
    if model_dir is not None:
        Path(model_dir).mkdir(parents=True, exist_ok=True)
        result.model.save(Path(model_dir) / f"{dataset.name}__{label.replace(':', '-')}.pkl")
    return BenchmarkRecord(**base, hyperparameters=_jsonable(result.best_hyperparameters),
                           fold_accuracies=result.best.fold_accuracies,
                           validation_accuracy=result.best.mean, train_accuracy=result.train_accuracy,
                           test_accuracy=result.test_accuracy, wall_time=time.perf_counter() - t0,
                           started=started, finished=_now())


def run_benchmark(benchmark: str, models: list[str], out_dir, seed: int = 0, values=None,
                  max_qubits: int = MAX_STATE_QUBITS, max_steps: int = DEFAULT_MAX_STEPS, n_workers: int = 1,
                  grids: dict | None = None, mnist_dir=None, save_models: bool = True,
                  log=None) -> RunSummary:
    """Grid-search every model on every dataset of a sweep, persisting each cell as it finishes.

    Cells already on disk with status ``ok`` or ``failed`` are loaded rather
    than recomputed, so an interrupted run resumes where it stopped.
    ``models`` entries are kinds, optionally suffixed ``:variant``.
    """
    out = Path(out_dir)
    datasets = benchmark_datasets(benchmark, seed, values, mnist_dir)
    records = []
    for ds in datasets:
        write_dataset(ds, out / "data")
        for label in models:
            path = record_path(out, benchmark, ds.name, label)
            if path.exists():
                rec = BenchmarkRecord.from_json(path.read_text())
                if rec.status != "skipped":
                    records.append(rec)
                    continue
            kind, _ = parse_model(label)
            rec = run_cell(benchmark, ds, label, seed, max_qubits, max_steps, n_workers,
                           None if grids is None else grids.get(kind),
                           model_dir=out / benchmark / "models" if save_models else None)
            write_record(out, rec)
            records.append(rec)
            if log is not None:
                log(f"{ds.name} {label}: {rec.status} test={rec.test_accuracy} ({rec.wall_time:.1f}s)")
    (out / f"{benchmark}.csv").write_text(records_csv(
        [r for r in read_records(out / benchmark) if r.benchmark == benchmark]))
    return RunSummary(records)


# ---------------------------------------------------------------------------
# Ranking
# ---------------------------------------------------------------------------


@dataclass
class RankTable:
    entries: dict[str, list[tuple[str, float, int]]]

    def expected(self, model: str) -> float:
        rows = self.entries[model]
        return float(np.mean([rank / size for _, rank, size in rows]))

    def normalised(self, model: str, benchmark: str) -> float:
        for b, rank, size in self.entries[model]:
            if b == benchmark:
                return rank / size
        raise KeyError(benchmark)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["model", "benchmarks", "expected_normalised_rank"])
        for m in sorted(self.entries, key=lambda m: (self.expected(m), m)):
            writer.writerow([m, len(self.entries[m]), repr(self.expected(m))])
        return buf.getvalue()


def tied_ranks(scores: dict[str, float]) -> dict[str, float]:
    """Rank 1 for the highest score; tied models share the mean of their positions."""
    ordered = sorted(scores.values(), reverse=True)
    ranks = {}
    for m, s in scores.items():
        positions = [i + 1 for i, v in enumerate(ordered) if v == s]
        ranks[m] = float(np.mean(positions))
    return ranks


def rank_scores(scores: dict[str, dict[str, float]]) -> RankTable:
    """``scores[benchmark][model]`` -> per-model normalised ranks."""
    entries: dict[str, list] = {}
    for bench, field_scores in scores.items():
        size = len(field_scores)
        for m, r in tied_ranks(field_scores).items():
            entries.setdefault(m, []).append((bench, r, size))
    if not entries:
        raise HarnessError("no results to rank")
    return RankTable(entries)


def rank_models(records: list[BenchmarkRecord]) -> RankTable:
    """Rank by test accuracy averaged over each benchmark's datasets."""
    ok = [r for r in records if r.status == "ok"]
    if not ok:
        raise HarnessError("no completed records to rank")
    grouped: dict[str, dict[str, list[float]]] = {}
    for r in ok:
        grouped.setdefault(r.benchmark, {}).setdefault(r.label, []).append(r.test_accuracy)
    return rank_scores({b: {m: float(np.mean(v)) for m, v in ms.items()} for b, ms in grouped.items()})


# ---------------------------------------------------------------------------
# Gram matrices and landscapes
# ---------------------------------------------------------------------------


def rescale_unit(G) -> np.ndarray:
    """Min-max rescale to [0, 1]; a constant matrix is only clipped into [0, 1]."""
    G = np.asarray(G, dtype=float)
    lo, hi = G.min(), G.max()
    if hi == lo:
        return np.clip(G, 0.0, 1.0)
    return (G - lo) / (hi - lo)


def gram_difference(G1, G2) -> float:
    """Mean squared entrywise difference of the two rescaled Gram matrices."""
    G1, G2 = np.asarray(G1, dtype=float), np.asarray(G2, dtype=float)
    if G1.shape != G2.shape:
        raise HarnessError(f"Gram shapes differ: {G1.shape} vs {G2.shape}")
    return float(np.mean((rescale_unit(G1) - rescale_unit(G2)) ** 2))


def model_gram(model: Classifier, X) -> np.ndarray:
    """Training Gram matrix of a kernel model (or the Gaussian SVC) after fitting preprocessing."""
    if isinstance(model, KernelModel):
        if not model.fitted_:
            raise HarnessError("kernel model must be fitted")
        return model.kernel_values(X, X)
    if model.kind == "SVC":
        return rbf_kernel(np.asarray(X, dtype=float), np.asarray(X, dtype=float), model.gamma)
    raise HarnessError(f"{model.kind} does not define a kernel")


def _grid_points(low, high, resolution):
    axis = np.linspace(low, high, resolution)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def kernel_landscape(model: Classifier, resolution: int = 51, fixed=(np.pi / 2, np.pi / 2),
                     bounds=(0.0, np.pi)) -> np.ndarray:
    """Rows ``(x, y, k(fixed, (x, y)))`` on a regular grid over the model's input space.

    Points are given directly in the embedding's input space (after
    preprocessing), so ``fixed`` is an angle pair. The Gaussian SVC has no
    preprocessing and is evaluated in raw input space.
    """
    is_svc = getattr(model, "kind", None) == "SVC"
    if not (isinstance(model, KernelModel) or is_svc) or not model.fitted_:
        raise HarnessError("landscapes need a fitted kernel model")
    if model.n_features_ != 2:
        raise HarnessError("landscapes are defined for 2d inputs")
    pts = _grid_points(*bounds, resolution)
    fixed = np.asarray([fixed], dtype=float)
    if is_svc:
        k = rbf_kernel(fixed, pts, model.gamma)[0]
    else:
        k = model._kernel(model._embed(fixed), model._embed(pts))[0]
    return np.column_stack([pts, k])


def decision_grid(model: Classifier, bounds=(-1.0, 1.0), resolution: int = 100) -> np.ndarray:
    """Rows ``(x, y, predicted label)`` over raw input space."""
    if getattr(model, "n_features_", None) != 2:
        raise HarnessError("decision grids are defined for 2d inputs")
    pts = _grid_points(*bounds, resolution)
    return np.column_stack([pts, model.predict(pts)])


def grid_csv(rows: np.ndarray, header) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format(float(v), ".17g") for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Input scaling and selection bias
# ---------------------------------------------------------------------------


@dataclass
class ScalingResult:
    model: str
    dataset_name: str
    scale: float
    accuracies: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))


def scaling_sweep(winners: dict[str, dict], datasets: list[Dataset], scales, n_seeds: int = 5,
                  max_steps: int = DEFAULT_MAX_STEPS) -> list[ScalingResult]:
    """Retrain each winning configuration with features multiplied by each scale factor.

    ``winners`` maps a model label to its selected hyperparameters. Scaling is
    applied after the model's own preprocessing.
    """
    out = []
    for label, hp in winners.items():
        if hp is None:
            raise HarnessError(f"no winning configuration for {label}")
        kind, variant = parse_model(label)
        for ds in datasets:
            for s in scales:
                accs = []
                for seed in range(n_seeds):
                    model = make_model(ModelSpec(kind, hp, variant, seed), max_steps=max_steps, scaling=s)
                    accs.append(model.fit(ds.X_train, ds.y_train).score(ds.X_test, ds.y_test))
                out.append(ScalingResult(label, ds.name, float(s), accs))
    return out


def winners_from_records(records: list[BenchmarkRecord], dataset_name: str | None = None) -> dict[str, dict]:
    """Winning hyperparameters per model label (restricted to one dataset if given)."""
    found = {}
    for r in records:
        if r.status == "ok" and (dataset_name is None or r.dataset_name == dataset_name):
            found.setdefault(r.label, r.hyperparameters)
    return found


def positivity_bias_sim(n_researchers: int = 100, n_candidates: int = 20, q_mean: float = 0.55,
                        q_std: float = 0.1, c_mean: float = 0.65, c_std: float = 0.07,
                        seed: int = 0) -> tuple[float, float]:
    """Each researcher reports the best of ``n_candidates`` quantum scores against one classical score.

    Returns the means of the reported quantum and classical scores.
    """
    if n_researchers < 1 or n_candidates < 1 or min(q_std, c_std) < 0:
        raise HarnessError("counts must be positive and standard deviations non-negative")
    rng = np.random.default_rng(seed)
    # standardised draws, so a zero spread reports the mean exactly
    best = rng.standard_normal((n_researchers, n_candidates)).max(axis=1)
    classical = rng.standard_normal(n_researchers)
    return float(q_mean + q_std * best.mean()), float(c_mean + c_std * classical.mean())
