"""Command line front end.

Subcommands:

* ``run``      execute a model file on a dataset file, report accuracy + cost
* ``dotbench`` accuracy of the approximate dot product vs hash length
* ``tune``     per-layer hash-length selection on a calibration subset
* ``cost``     cost report from geometry alone, no data needed

Exit codes: 0 success, 1 validation/usage error, 2 I/O error, 3 internal
error. The cost table can be overridden with ``--cost-table PATH`` or the
``DEEPCAM_COST_TABLE`` environment variable (the flag wins).

Outputs are deterministic: running the same spec twice produces byte
identical CSV/JSON files.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .camarray import CamConfig, CamError, ROW_CHOICES
from .costmodel import (CostModelError, CostTable, compare, fold_trace,
                        report_to_csv)
from .modelio import FormatError, load_dataset, load_model
from .netexec import (ExecutionPlan, NetworkError, baseline_cycles,
                      run_network, schedule_trace, top1_accuracy)
from .tuner import (TuneConfig, tune_hash_lengths, tune_result_from_json,
                    tune_result_to_json)
from . import geodot

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_INTERNAL = 3

COST_TABLE_ENV = "DEEPCAM_COST_TABLE"

# Reference pair for dotbench: algebraic product 2.0765 (to report precision),
# a handy fixed point for eyeballing approximation quality.
REFERENCE_X = (0.6012, 0.8383, 0.6859, 0.5712)
REFERENCE_Y = (0.9044, 0.5352, 0.8110, 0.9243)

_DATAFLOW_NAMES = {
    "ws": "weight_stationary",
    "as": "activation_stationary",
    "weight_stationary": "weight_stationary",
    "activation_stationary": "activation_stationary",
}


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):      # argparse would sys.exit(2); we map to 1
        raise UsageError(message)


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def _resolve_dataflow(name: str) -> str:
    try:
        return _DATAFLOW_NAMES[name]
    except KeyError:
        raise UsageError(f"unknown dataflow {name!r}") from None


def _resolve_hash_lengths(spec: str, dot_layers: list[int]) -> dict[int, int]:
    """Parse ``uniform:K``, ``list:K1,K2,...``, or ``tune:result.json``."""
    mode, _, payload = spec.partition(":")
    if not payload:
        raise UsageError(f"bad hash spec {spec!r}: expected mode:payload")
    if mode == "uniform":
        try:
            bits = int(payload)
        except ValueError:
            raise UsageError(f"bad hash length {payload!r}") from None
        return {idx: bits for idx in dot_layers}
    if mode == "list":
        try:
            values = [int(p) for p in payload.split(",")]
        except ValueError:
            raise UsageError(f"bad hash list {payload!r}") from None
        if len(values) != len(dot_layers):
            raise UsageError(
                f"hash list has {len(values)} entries, model has "
                f"{len(dot_layers)} dot layers")
        return dict(zip(dot_layers, values))
    if mode == "tune":
        with open(payload, "r", encoding="utf-8") as fh:
            result = tune_result_from_json(fh.read())
        if sorted(result.hash_lengths) != dot_layers:
            raise UsageError("tune result does not match this model's layers")
        return dict(result.hash_lengths)
    raise UsageError(f"unknown hash spec mode {mode!r}")


def _load_cost_table(args) -> CostTable:
    path = getattr(args, "cost_table", None) or os.environ.get(COST_TABLE_ENV)
    if path:
        return CostTable.from_file(path)
    return CostTable.default()


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _ensure_plot_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _import_matplotlib():
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        return plt
    except ImportError:
        raise UsageError(
            "--plot needs matplotlib (pip install camdot[plot])") from None


def _add_common_model_args(p: _Parser, with_data: bool) -> None:
    p.add_argument("--model", required=True, help="model container (.dcam)")
    if with_data:
        p.add_argument("--data", required=True, help="dataset container (.dcds)")
    p.add_argument("--rows", type=int, default=64, choices=ROW_CHOICES,
                   help="CAM rows (default 64)")
    p.add_argument("--dataflow", default="as",
                   choices=sorted(_DATAFLOW_NAMES),
                   help="ws/weight_stationary or as/activation_stationary")
    p.add_argument("--hash", default="uniform:1024",
                   help="uniform:K | list:K1,K2,... | tune:result.json")
    p.add_argument("--seed", type=int, default=7,
                   help="projection seed (default 7)")
    p.add_argument("--cost-table", default=None,
                   help=f"cost table override (or ${COST_TABLE_ENV})")


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def cmd_run(args) -> int:
    model = load_model(args.model)
    dataset = load_dataset(args.data, limit=args.limit)
    if len(dataset) == 0:
        raise UsageError("dataset selection is empty")
    dots = model.dot_layer_indices()
    plan = ExecutionPlan(
        dataflow=_resolve_dataflow(args.dataflow),
        cam=CamConfig(rows=args.rows),
        hash_lengths=_resolve_hash_lengths(args.hash, dots),
        seed=args.seed,
        exact_dot=args.exact,
    )
    table = _load_cost_table(args)
    result = run_network(model, plan, dataset.images, threads=args.threads)
    accuracy = top1_accuracy(result.predictions, dataset.labels)
    report = fold_trace(result.trace, table)
    # baseline covers the same workload: per-image cycles times image count
    baseline = {k: v * len(dataset)
                for k, v in baseline_cycles(model).items()}
    ratio = compare(report, baseline)

    csv_path = f"{args.out_prefix}_cost.csv"
    _write_text(csv_path, report_to_csv(report, plan.dataflow, baseline))
    summary = {
        "images": len(dataset),
        "top1_percent": accuracy,
        "dataflow": plan.dataflow,
        "rows": args.rows,
        "hash_lengths": {str(k): v for k, v in sorted(plan.hash_lengths.items())},
        "exact_dot": plan.exact_dot,
        "seed": args.seed,
        "searches": report.searches,
        "writes": report.writes,
        "search_cycles": report.search_cycles,
        "write_cycles": report.write_cycles,
        "cycles": report.cycles,
        "utilization": report.utilization,
        "utilization_paper": report.utilization_paper,
        "energy_pj": report.energy_pj,
        "baseline_cycles": ratio.baseline_cycles,
        "speedup_vs_baseline": ratio.speedup,
    }
    json_path = f"{args.out_prefix}_summary.json"
    _write_text(json_path, json.dumps(summary, indent=2, sort_keys=True) + "\n")

    print(f"images          {len(dataset)}")
    print(f"top-1           {accuracy:.2f}%")
    print(f"cycles          {report.cycles:.0f} "
          f"(search {report.search_cycles:.0f}, write {report.write_cycles:.0f})")
    print(f"utilization     {report.utilization * 100:.1f}% exact, "
          f"{report.utilization_paper * 100:.1f}% paper accounting")
    print(f"energy          {report.energy_pj:.1f} pJ")
    print(f"baseline        {ratio.baseline_cycles} MAC-array cycles, "
          f"speedup {ratio.speedup:.1f}x")
    print(f"wrote           {csv_path}, {json_path}")

    if args.plot:
        plt = _import_matplotlib()
        out = os.path.join(_ensure_plot_dir(args.plot), "run_cost.png")
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
        layers = [lc.layer for lc in report.layers if lc.searches]
        cam = [lc.search_cycles + lc.write_cycles for lc in report.layers if lc.searches]
        base = [baseline.get(lc.layer, 0) for lc in report.layers if lc.searches]
        x = np.arange(len(layers))
        ax1.bar(x - 0.2, cam, width=0.4, label="CAM search+write")
        ax1.bar(x + 0.2, base, width=0.4, label="MAC array")
        ax1.set_xticks(x, [str(l) for l in layers])
        ax1.set_xlabel("layer")
        ax1.set_ylabel("cycles")
        ax1.set_yscale("log")
        ax1.legend()
        util = [lc.utilization * 100 for lc in report.layers if lc.searches]
        ax2.bar(x, util)
        ax2.set_xticks(x, [str(l) for l in layers])
        ax2.set_xlabel("layer")
        ax2.set_ylabel("utilization %")
        fig.tight_layout()
        fig.savefig(out, dpi=120)
        print(f"plot            {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# dotbench
# ---------------------------------------------------------------------------

BENCH_COLUMNS = ("label", "hash_length", "cosine", "trials", "algebraic",
                 "approx_median", "abs_err_median", "abs_err_p95",
                 "rel_err_median", "rel_err_p95")


def _bench_stats(exact: np.ndarray, approx: np.ndarray) -> tuple[float, float, float, float]:
    abs_err = np.abs(approx - exact)
    rel_err = abs_err / np.maximum(np.abs(exact), 1e-12)
    return (float(np.median(abs_err)), float(np.percentile(abs_err, 95)),
            float(np.median(rel_err)), float(np.percentile(rel_err, 95)))


def dotbench_rows(lengths: list[int], trials: int, dim: int, seed: int) -> list[dict]:
    """Error statistics per hash length plus labeled reference-pair rows."""
    if trials < 0:
        raise UsageError("trials must be non-negative")
    if dim < 1:
        raise UsageError("dim must be positive")
    for bits in lengths:
        if bits < 1:
            raise UsageError("hash lengths must be positive")
    rows: list[dict] = []
    if trials == 0:
        return rows
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((trials, dim))
    y = rng.standard_normal((trials, dim))
    exact = np.einsum("ij,ij->i", x, y)
    norm_x = geodot.mf8_decode_array(
        geodot.mf8_encode_array(np.sqrt(np.einsum("ij,ij->i", x, x))))
    norm_y = geodot.mf8_decode_array(
        geodot.mf8_encode_array(np.sqrt(np.einsum("ij,ij->i", y, y))))
    for bits in lengths:
        proj = geodot.ProjectionMatrix.generate(
            geodot.derive_seed(seed, bits), dim, bits)
        bx = (x @ proj.entries >= 0.0)
        by = (y @ proj.entries >= 0.0)
        hd = (bx != by).sum(axis=1)
        angles = np.pi * hd / bits
        for cosine, cos_vals in (
                ("piecewise", geodot.approx_cosine_array(angles)),
                ("exact", np.cos(angles))):
            approx = norm_x * norm_y * cos_vals
            a_med, a_p95, r_med, r_p95 = _bench_stats(exact, approx)
            rows.append({
                "label": "random", "hash_length": bits, "cosine": cosine,
                "trials": trials, "algebraic": "",
                "approx_median": float(np.median(approx)),
                "abs_err_median": a_med, "abs_err_p95": a_p95,
                "rel_err_median": r_med, "rel_err_p95": r_p95,
            })
    rows.extend(reference_pair_rows(max(lengths), seeds=100))
    return rows


def reference_pair_rows(bits: int, seeds: int = 100) -> list[dict]:
    """Median approximate product of the fixed reference pair over seeds."""
    x = np.asarray(REFERENCE_X)
    y = np.asarray(REFERENCE_Y)
    exact = geodot.algebraic_dot(x, y)
    piecewise = []
    true_cos = []
    for s in range(seeds):
        proj = geodot.ProjectionMatrix.generate(
            geodot.derive_seed(1_000_003, s), x.size, bits)
        cx = geodot.build_context(x, proj)
        cy = geodot.build_context(y, proj)
        piecewise.append(geodot.approx_dot(cx, cy))
        true_cos.append(geodot.approx_dot_exact_cos(cx, cy))
    rows = []
    for cosine, vals in (("piecewise", piecewise), ("exact", true_cos)):
        med = float(np.median(vals))
        rows.append({
            "label": "reference", "hash_length": bits, "cosine": cosine,
            "trials": seeds, "algebraic": exact,
            "approx_median": med,
            "abs_err_median": abs(med - exact),
            "abs_err_p95": "",
            "rel_err_median": abs(med - exact) / abs(exact),
            "rel_err_p95": "",
        })
    return rows


def _bench_csv(rows: list[dict]) -> str:
    def fmt(v):
        return repr(v) if isinstance(v, float) else str(v)
    lines = [",".join(BENCH_COLUMNS)]
    for row in rows:
        lines.append(",".join(fmt(row[c]) for c in BENCH_COLUMNS))
    return "\n".join(lines) + "\n"


def cmd_dotbench(args) -> int:
    try:
        lengths = [int(p) for p in args.lengths.split(",")]
    except ValueError:
        raise UsageError(f"bad length list {args.lengths!r}") from None
    rows = dotbench_rows(lengths, args.trials, args.dim, args.seed)
    _write_text(args.out, _bench_csv(rows))
    print(f"wrote {args.out} ({len(rows)} rows)")
    for row in rows:
        if row["label"] == "reference":
            print(f"reference pair  {row['cosine']:<10} "
                  f"algebraic {row['algebraic']:.4f}  "
                  f"approx median {row['approx_median']:.4f}")
    if args.plot:
        if not rows:
            raise UsageError("nothing to plot with trials=0")
        plt = _import_matplotlib()
        out = os.path.join(_ensure_plot_dir(args.plot), "dotbench_error.png")
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for cosine in ("piecewise", "exact"):
            pts = [(r["hash_length"], r["rel_err_median"]) for r in rows
                   if r["label"] == "random" and r["cosine"] == cosine]
            ax.loglog([p[0] for p in pts], [p[1] for p in pts],
                      marker="o", label=cosine)
        ax.set_xlabel("hash length (bits)")
        ax.set_ylabel("median relative error")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out, dpi=120)
        print(f"plot {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# tune
# ---------------------------------------------------------------------------

def cmd_tune(args) -> int:
    model = load_model(args.model)
    dataset = load_dataset(args.data, limit=args.limit)
    if len(dataset) == 0:
        raise UsageError("dataset selection is empty")
    plan = ExecutionPlan(
        dataflow=_resolve_dataflow(args.dataflow),
        cam=CamConfig(rows=args.rows),
        hash_lengths={i: 1024 for i in model.dot_layer_indices()},
        seed=args.seed,
    )
    config = TuneConfig(tolerance=args.tolerance,
                        calibration_size=args.calibration)
    result = tune_hash_lengths(model, plan, dataset.images, dataset.labels,
                               config, threads=args.threads)
    _write_text(args.out, tune_result_to_json(result))
    if args.sensitivity_csv:
        lines = ["layer,hash_length,accuracy"]
        for layer, row in sorted(result.sensitivity.items()):
            for bits, acc in sorted(row.items()):
                lines.append(f"{layer},{bits},{repr(acc)}")
        _write_text(args.sensitivity_csv, "\n".join(lines) + "\n")
    print(f"baseline        {result.baseline_accuracy:.2f}% "
          f"(calibration, {min(args.calibration, len(dataset))} images)")
    print(f"achieved        {result.achieved_accuracy:.2f}% "
          f"(tolerance {result.tolerance})")
    if result.holdout_accuracy is not None:
        print(f"hold-out        {result.holdout_accuracy:.2f}%")
    chosen = ", ".join(f"layer {k}: {v}" for k, v in sorted(result.hash_lengths.items()))
    print(f"hash lengths    {chosen}")
    print(f"total bits      {result.total_bits} "
          f"(uniform max {result.uniform_max_bits})")
    print(f"evaluations     {result.evaluations}")
    print(f"wrote           {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# cost
# ---------------------------------------------------------------------------

def cmd_cost(args) -> int:
    model = load_model(args.model)
    dots = model.dot_layer_indices()
    plan = ExecutionPlan(
        dataflow=_resolve_dataflow(args.dataflow),
        cam=CamConfig(rows=args.rows),
        hash_lengths=_resolve_hash_lengths(args.hash, dots),
        seed=args.seed,
    )
    table = _load_cost_table(args)
    trace = schedule_trace(model, plan, images=args.limit)
    report = fold_trace(trace, table)
    baseline = baseline_cycles(model)
    scaled_baseline = {k: v * args.limit for k, v in baseline.items()}
    ratio = compare(report, scaled_baseline)
    _write_text(args.out, report_to_csv(report, plan.dataflow, scaled_baseline))
    print(f"images          {args.limit}")
    print(f"cycles          {report.cycles:.0f} "
          f"(search {report.search_cycles:.0f}, write {report.write_cycles:.0f})")
    print(f"utilization     {report.utilization * 100:.1f}% exact, "
          f"{report.utilization_paper * 100:.1f}% paper accounting")
    print(f"energy          {report.energy_pj:.1f} pJ")
    print(f"baseline        {ratio.baseline_cycles} MAC-array cycles, "
          f"speedup {ratio.speedup:.1f}x")
    print(f"wrote           {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(
        prog="camdot",
        description="CAM-based CNN inference simulator",
        epilog=f"Cost table override: --cost-table or ${COST_TABLE_ENV}.",
    )
    parser.add_argument("--version", action="version",
                        version=f"camdot {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a model on a dataset")
    _add_common_model_args(p_run, with_data=True)
    p_run.add_argument("--limit", type=int, default=None,
                       help="use only the first N samples")
    p_run.add_argument("--exact", action="store_true",
                       help="float64 dot products instead of CAM approximation")
    p_run.add_argument("--threads", type=int, default=1,
                       help="worker threads; output is identical for any value")
    p_run.add_argument("--out-prefix", default="run",
                       help="prefix for _summary.json and _cost.csv")
    p_run.add_argument("--plot", default=None, metavar="DIR",
                       help="also write PNG charts into DIR")
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("dotbench",
                             help="approximate dot product error vs hash length")
    p_bench.add_argument("--lengths", default="64,128,256,512,1024",
                         help="comma-separated hash lengths")
    p_bench.add_argument("--trials", type=int, default=1000,
                         help="random pairs per length (0: header-only CSV)")
    p_bench.add_argument("--dim", type=int, default=64,
                         help="vector dimensionality (default 64)")
    p_bench.add_argument("--seed", type=int, default=1)
    p_bench.add_argument("--out", default="dotbench.csv")
    p_bench.add_argument("--plot", default=None, metavar="DIR")
    p_bench.set_defaults(func=cmd_dotbench)

    p_tune = sub.add_parser("tune", help="choose per-layer hash lengths")
    _add_common_model_args(p_tune, with_data=True)
    p_tune.add_argument("--limit", type=int, default=None,
                        help="tuning pool size (calibration + hold-out)")
    p_tune.add_argument("--tolerance", type=float, default=1.0,
                        help="allowed accuracy drop in points (default 1.0)")
    p_tune.add_argument("--calibration", type=int, default=200,
                        help="calibration subset size (default 200)")
    p_tune.add_argument("--threads", type=int, default=1)
    p_tune.add_argument("--out", default="tune.json")
    p_tune.add_argument("--sensitivity-csv", default=None,
                        help="also write the per-layer sensitivity table")
    p_tune.set_defaults(func=cmd_tune)

    p_cost = sub.add_parser("cost", help="cost report without running data")
    _add_common_model_args(p_cost, with_data=False)
    p_cost.add_argument("--limit", type=int, default=1,
                        help="number of modeled images (default 1)")
    p_cost.add_argument("--out", default="cost.csv")
    p_cost.set_defaults(func=cmd_cost)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"camdot: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:       # --help / --version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, NetworkError, CamError, CostModelError,
            FormatError) as exc:
        print(f"camdot: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"camdot: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:        # noqa: BLE001  internal faults map to 3
        print(f"camdot: internal error: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
