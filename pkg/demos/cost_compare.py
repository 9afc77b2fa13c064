"""Price the fixture network per dataflow and hash length, no data needed."""
import pathlib

from camdot import camarray, costmodel, modelio, netexec

ROOT = pathlib.Path(__file__).resolve().parent.parent
model = modelio.load_model(str(ROOT / "fixtures" / "lenet5.dcam"))
dots = model.dot_layer_indices()


def report(dataflow, bits):
    plan = netexec.ExecutionPlan(
        dataflow=dataflow, cam=camarray.CamConfig(rows=64),
        hash_lengths={i: bits for i in dots}, seed=7)
    return costmodel.fold_trace(netexec.schedule_trace(model, plan))


print("dataflow                bits   cycles      energy_pj   utilization")
for dataflow in ("weight_stationary", "activation_stationary"):
    for bits in (256, 1024):
        r = report(dataflow, bits)
        print(f"{dataflow:<22s}  {bits:<5d}  {r.cycles:<10.0f}  "
              f"{r.energy_pj:<10.0f}  {r.utilization:.3f}")

best = report("activation_stationary", 1024)
cmp = costmodel.compare(best, netexec.baseline_cycles(model))
print(f"\nMAC-array baseline {cmp.baseline_cycles:.0f} cycles, "
      f"CAM {cmp.cam_cycles:.0f}: speedup {cmp.speedup:.1f}x")
print("per layer:")
for row in cmp.layers:
    print(f"  layer {row.layer}: {row.speedup:5.1f}x")
