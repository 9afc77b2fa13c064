"""Pick per-layer hash lengths that hold accuracy at minimum bit cost.

Longer hashes estimate angles better but cost more CAM bits, energy, and
transform work. Layers differ in how much angle noise they tolerate, so a
uniform length wastes bits. The tuner measures that tolerance on a
calibration set and shrinks each layer greedily.

Protocol: baseline accuracy is measured with every dot layer at the maximum
candidate length. Layers are then visited first to last; for each, candidate
lengths are tried in ascending order with earlier layers frozen at their
chosen lengths and later layers at the maximum, and the smallest length
whose calibration accuracy stays within ``tolerance`` points of baseline is
kept. The maximum length always satisfies the bound by construction, so the
greedy pass cannot fail.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .camarray import WORD_CHOICES
from .netexec import ExecutionPlan, NetworkModel, NetworkError, run_network, top1_accuracy

__all__ = ["TuneConfig", "TuneResult", "evaluate_accuracy", "sensitivity_scan",
           "tune_hash_lengths", "tune_result_from_json", "tune_result_to_json"]


@dataclass(frozen=True)
class TuneConfig:
    tolerance: float = 1.0                      # accuracy points of slack
    calibration_size: int = 200
    candidates: tuple[int, ...] = WORD_CHOICES  # ascending hash lengths

    def __post_init__(self) -> None:
        if self.tolerance < 0:
            raise NetworkError("tolerance must be non-negative")
        if self.calibration_size < 1:
            raise NetworkError("calibration_size must be positive")
        if not self.candidates:
            raise NetworkError("need at least one candidate length")
        if list(self.candidates) != sorted(set(self.candidates)):
            raise NetworkError("candidates must be strictly ascending")
        for c in self.candidates:
            if c not in WORD_CHOICES:
                raise NetworkError(f"candidate {c} not in {WORD_CHOICES}")


@dataclass
class TuneResult:
    hash_lengths: dict[int, int]           # layer index -> chosen bits
    baseline_accuracy: float               # all layers at max candidate
    achieved_accuracy: float               # chosen config, calibration set
    holdout_accuracy: float | None         # chosen config, remaining samples
    tolerance: float
    total_bits: int
    uniform_max_bits: int
    sensitivity: dict[int, dict[int, float]] = field(default_factory=dict)
    evaluations: int = 0


def evaluate_accuracy(model: NetworkModel, plan: ExecutionPlan,
                      images: np.ndarray, labels: np.ndarray,
                      threads: int = 1) -> float:
    result = run_network(model, plan, images, threads=threads)
    return top1_accuracy(result.predictions, labels)


def _plan_with(plan: ExecutionPlan, lengths: dict[int, int]) -> ExecutionPlan:
    return replace(plan, hash_lengths=dict(lengths))


def sensitivity_scan(model: NetworkModel, plan: ExecutionPlan,
                     images: np.ndarray, labels: np.ndarray,
                     config: TuneConfig = TuneConfig(),
                     threads: int = 1) -> dict[int, dict[int, float]]:
    """Accuracy per (layer, candidate) with every other layer at max.

    One-factor-at-a-time: isolates how sensitive each layer is to hash
    shortening. Skips re-running the all-max corner per layer.
    """
    dots = model.dot_layer_indices()
    top = config.candidates[-1]
    base = {i: top for i in dots}
    base_acc = evaluate_accuracy(model, _plan_with(plan, base), images, labels,
                                 threads=threads)
    table: dict[int, dict[int, float]] = {}
    for idx in dots:
        table[idx] = {}
        for cand in config.candidates:
            if cand == top:
                table[idx][cand] = base_acc
                continue
            trial = dict(base)
            trial[idx] = cand
            table[idx][cand] = evaluate_accuracy(
                model, _plan_with(plan, trial), images, labels, threads=threads)
    return table


def tune_hash_lengths(model: NetworkModel, plan: ExecutionPlan,
                      images: np.ndarray, labels: np.ndarray,
                      config: TuneConfig = TuneConfig(),
                      threads: int = 1,
                      scan: bool = True) -> TuneResult:
    """Greedy per-layer shrink; deterministic for fixed inputs and seed.

    images/labels are the tuning pool: the first ``calibration_size``
    samples drive decisions, the rest (if any) report a hold-out number.
    """
    model.validate()
    plan.validate(model)
    images = np.asarray(images)
    labels = np.asarray(labels)
    if images.shape[0] != labels.shape[0]:
        raise NetworkError("images and labels must pair up")
    if images.shape[0] < 1:
        raise NetworkError("tuning pool is empty")
    calib_n = min(config.calibration_size, images.shape[0])
    calib_x, calib_y = images[:calib_n], labels[:calib_n]
    hold_x, hold_y = images[calib_n:], labels[calib_n:]

    dots = model.dot_layer_indices()
    top = config.candidates[-1]
    evaluations = 0

    def accuracy(lengths: dict[int, int]) -> float:
        nonlocal evaluations
        evaluations += 1
        return evaluate_accuracy(model, _plan_with(plan, lengths),
                                 calib_x, calib_y, threads=threads)

    baseline = accuracy({i: top for i in dots})
    floor = baseline - config.tolerance

    chosen: dict[int, int] = {}
    achieved = baseline
    for idx in dots:
        for cand in config.candidates:
            if cand == top:
                # the max-length trial equals the previously accepted
                # configuration, already measured and within tolerance
                chosen[idx] = top
                break
            trial = {i: chosen.get(i, top) for i in dots}
            trial[idx] = cand
            acc = accuracy(trial)
            if acc >= floor:
                chosen[idx] = cand
                achieved = acc
                break

    sensitivity = {}
    if scan:
        sens_plan = _plan_with(plan, {i: top for i in dots})
        sensitivity = sensitivity_scan(model, sens_plan, calib_x, calib_y,
                                       config, threads=threads)
        evaluations += 1 + sum(len(v) - 1 for v in sensitivity.values())

    holdout = None
    if hold_x.shape[0]:
        holdout = evaluate_accuracy(model, _plan_with(plan, chosen),
                                    hold_x, hold_y, threads=threads)
        evaluations += 1

    return TuneResult(
        hash_lengths=chosen,
        baseline_accuracy=baseline,
        achieved_accuracy=achieved,
        holdout_accuracy=holdout,
        tolerance=config.tolerance,
        total_bits=sum(chosen.values()),
        uniform_max_bits=top * len(dots),
        sensitivity=sensitivity,
        evaluations=evaluations,
    )


# ---------------------------------------------------------------------------
# serialization for the CLI
# ---------------------------------------------------------------------------

def tune_result_to_json(result: TuneResult) -> str:
    payload = {
        "hash_lengths": {str(k): v for k, v in sorted(result.hash_lengths.items())},
        "baseline_accuracy": result.baseline_accuracy,
        "achieved_accuracy": result.achieved_accuracy,
        "holdout_accuracy": result.holdout_accuracy,
        "tolerance": result.tolerance,
        "total_bits": result.total_bits,
        "uniform_max_bits": result.uniform_max_bits,
        "evaluations": result.evaluations,
        "sensitivity": {
            str(layer): {str(k): acc for k, acc in sorted(row.items())}
            for layer, row in sorted(result.sensitivity.items())
        },
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def tune_result_from_json(text: str) -> TuneResult:
    try:
        payload = json.loads(text)
        lengths = {int(k): int(v) for k, v in payload["hash_lengths"].items()}
        return TuneResult(
            hash_lengths=lengths,
            baseline_accuracy=float(payload["baseline_accuracy"]),
            achieved_accuracy=float(payload["achieved_accuracy"]),
            holdout_accuracy=(None if payload.get("holdout_accuracy") is None
                              else float(payload["holdout_accuracy"])),
            tolerance=float(payload["tolerance"]),
            total_bits=int(payload["total_bits"]),
            uniform_max_bits=int(payload["uniform_max_bits"]),
            sensitivity={
                int(layer): {int(k): float(a) for k, a in row.items()}
                for layer, row in payload.get("sensitivity", {}).items()
            },
            evaluations=int(payload.get("evaluations", 0)),
        )
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise NetworkError(f"malformed tune result: {exc}") from exc
