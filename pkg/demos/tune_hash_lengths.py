"""Shrink per-layer hash lengths until accuracy budget resists."""
import pathlib

from camdot import camarray, modelio, netexec, tuner

ROOT = pathlib.Path(__file__).resolve().parent.parent
model = modelio.load_model(str(ROOT / "fixtures" / "lenet5.dcam"))
data = modelio.load_dataset(str(ROOT / "fixtures" / "mnist1k.dcds"), limit=300)
dots = model.dot_layer_indices()

plan = netexec.ExecutionPlan(
    dataflow="activation_stationary", cam=camarray.CamConfig(rows=64),
    hash_lengths={i: 1024 for i in dots}, seed=7)

result = tuner.tune_hash_lengths(
    model, plan, data.images, data.labels,
    tuner.TuneConfig(tolerance=1.0, calibration_size=200), scan=False)

print("layer  bits")
for idx, bits in sorted(result.hash_lengths.items()):
    print(f"{idx:>5d}  {bits}")
print(f"\nbaseline (all 1024)   {result.baseline_accuracy:5.1f}%")
print(f"calibration, tuned    {result.achieved_accuracy:5.1f}%")
print(f"hold-out, tuned       {result.holdout_accuracy:5.1f}%")
print(f"total bits            {result.total_bits} of {result.uniform_max_bits}")
print(f"network evaluations   {result.evaluations}")
