"""Fixture network: exact dots versus the CAM approximation at several k."""
import pathlib
import time

from camdot import camarray, modelio, netexec

ROOT = pathlib.Path(__file__).resolve().parent.parent
model = modelio.load_model(str(ROOT / "fixtures" / "lenet5.dcam"))
data = modelio.load_dataset(str(ROOT / "fixtures" / "mnist1k.dcds"), limit=300)
dots = model.dot_layer_indices()


def plan(bits, exact=False):
    return netexec.ExecutionPlan(
        dataflow="activation_stationary", cam=camarray.CamConfig(rows=64),
        hash_lengths={i: bits for i in dots}, seed=7, exact_dot=exact)


res = netexec.run_network(model, plan(1024, exact=True), data.images)
print(f"exact float64     {netexec.top1_accuracy(res.predictions, data.labels):5.1f}%")
for bits in (256, 512, 1024):
    t0 = time.perf_counter()
    res = netexec.run_network(model, plan(bits), data.images)
    acc = netexec.top1_accuracy(res.predictions, data.labels)
    print(f"hashed k={bits:<4d}     {acc:5.1f}%   ({time.perf_counter() - t0:.1f}s)")
