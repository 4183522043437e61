"""Command line entry point: ``qmlbench <subcommand> ...``.

Exit codes: 0 success, 2 partial (some cells skipped or failed), 1 failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .autodiff import DEFAULT_MAX_STEPS
from .classical import KernelError
from .datagen import BENCHMARKS, DataError, benchmark_datasets, read_dataset, write_dataset
from .models import Classifier, ModelError, ModelSpec, make_model
from .sim import MAX_STATE_QUBITS, SimulationError


def _list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _numbers(text: str) -> list:
    return [json.loads(t) for t in _list(text)]


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)


def cmd_gen_data(args) -> int:
    for ds in benchmark_datasets(args.benchmark, args.seed, args.values, args.mnist_dir):
        paths = write_dataset(ds, args.out)
        print(paths["train"])
    return 0


def cmd_run(args) -> int:
    grids = json.loads(Path(args.grids).read_text()) if args.grids else None
    summary = harness.run_benchmark(
        args.benchmark, _list(args.models), args.out, seed=args.seed, values=args.values,
        max_qubits=args.max_qubits, max_steps=args.max_steps, n_workers=args.workers, grids=grids,
        mnist_dir=args.mnist_dir, log=lambda msg: print(msg, flush=True))
    for r in summary.skipped:
        print(f"{r.status}: {r.dataset_name} {r.label}: {r.reason}", file=sys.stderr)
    return summary.exit_code


def cmd_rank(args) -> int:
    table = harness.rank_models(harness.read_records(args.input))
    _emit(table.to_csv(), args.out)
    return 0


def _fit_for_gram(label: str, ds, seed: int) -> Classifier:
    kind, variant = harness.parse_model(label)
    return make_model(ModelSpec(kind, {}, variant, seed)).fit(ds.X_train, ds.y_train)


def cmd_gram_diff(args) -> int:
    ds = read_dataset(args.dataset)
    labels = _list(args.models)
    grams = {m: harness.model_gram(_fit_for_gram(m, ds, args.seed), ds.X_train) for m in labels}
    lines = ["model_a,model_b,difference"]
    for i, a in enumerate(labels):
        for b in labels[i + 1:]:
            lines.append(f"{a},{b},{harness.gram_difference(grams[a], grams[b])!r}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_landscape(args) -> int:
    model = Classifier.load(args.model)
    rows = harness.kernel_landscape(model, args.resolution, bounds=tuple(args.bounds))
    _emit(harness.grid_csv(rows, ["x", "y", "kernel"]), args.out)
    return 0


def cmd_decision_grid(args) -> int:
    model = Classifier.load(args.model)
    rows = harness.decision_grid(model, tuple(args.bounds), args.resolution)
    _emit(harness.grid_csv(rows, ["x", "y", "label"]), args.out)
    return 0


def cmd_scaling_sweep(args) -> int:
    datasets = [read_dataset(p) for p in args.dataset]
    labels = _list(args.models)
    if args.records:
        found = harness.winners_from_records(harness.read_records(args.records))
        winners = {m: found.get(m) for m in labels}
    else:
        winners = {m: {} for m in labels}
    results = harness.scaling_sweep(winners, datasets, args.scales, args.seeds, args.max_steps)
    lines = ["model,dataset,scale,mean_accuracy,accuracies"]
    for r in results:
        lines.append(f"{r.model},{r.dataset_name},{r.scale!r},{r.mean!r},"
                     + '"' + json.dumps(r.accuracies) + '"')
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_bias_sim(args) -> int:
    q, c = harness.positivity_bias_sim(args.researchers, args.candidates, seed=args.seed)
    print(f"reported_quantum_mean,{q!r}\nreported_classical_mean,{c!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qmlbench", description="Benchmark suite for quantum ML classifiers.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write the datasets of a benchmark as CSV + JSON")
    g.add_argument("benchmark", choices=BENCHMARKS)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--values", type=_numbers, help="restrict the swept variable, e.g. 2,3,4")
    g.add_argument("--mnist-dir")
    g.set_defaults(func=cmd_gen_data)

    r = sub.add_parser("run", help="grid-search models on every dataset of a benchmark")
    r.add_argument("benchmark", choices=BENCHMARKS)
    r.add_argument("--models", required=True, help="comma-separated kinds, optionally Kind:variant")
    r.add_argument("--out", required=True)
    r.add_argument("--max-qubits", type=int, default=MAX_STATE_QUBITS)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--values", type=_numbers)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--max-steps", type=int, default=DEFAULT_MAX_STEPS)
    r.add_argument("--grids", help="JSON file mapping kind -> grid, overriding the defaults")
    r.add_argument("--mnist-dir")
    r.set_defaults(func=cmd_run)

    k = sub.add_parser("rank", help="expected normalised rank per model")
    k.add_argument("--in", dest="input", required=True)
    k.add_argument("--out")
    k.set_defaults(func=cmd_rank)

    d = sub.add_parser("gram-diff", help="pairwise Gram-matrix differences on a dataset")
    d.add_argument("--models", required=True)
    d.add_argument("--dataset", required=True, help="a *_train.csv file")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out")
    d.set_defaults(func=cmd_gram_diff)

    for name, func, bounds, res in (("landscape", cmd_landscape, [0.0, np.pi], 51),
                                    ("decision-grid", cmd_decision_grid, [-1.0, 1.0], 100)):
        s = sub.add_parser(name, help=f"{name} of a saved model as CSV")
        s.add_argument("--model", required=True, help="pickled fitted model")
        s.add_argument("--resolution", type=int, default=res)
        s.add_argument("--bounds", type=float, nargs=2, default=bounds)
        s.add_argument("--out")
        s.set_defaults(func=func)

    c = sub.add_parser("scaling-sweep", help="retrain winners with rescaled inputs")
    c.add_argument("--models", required=True)
    c.add_argument("--dataset", required=True, nargs="+", help="*_train.csv files")
    c.add_argument("--scales", type=_numbers, default=[0.1, 0.5, 1.0, 2.0])
    c.add_argument("--seeds", type=int, default=5)
    c.add_argument("--records", help="results directory holding the winning hyperparameters")
    c.add_argument("--max-steps", type=int, default=DEFAULT_MAX_STEPS)
    c.add_argument("--out")
    c.set_defaults(func=cmd_scaling_sweep)

    b = sub.add_parser("bias-sim", help="selection-bias simulation")
    b.add_argument("--researchers", type=int, default=100)
    b.add_argument("--candidates", type=int, default=20)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bias_sim)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (harness.HarnessError, DataError, ModelError, SimulationError, KernelError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
