"""Nearest neighbor by angle: hash vectors, store them, search the CAM."""
import numpy as np

from camdot import camarray, geodot

rng = np.random.default_rng(0)
stored = rng.standard_normal((8, 16))
query = stored[3] + 0.15 * rng.standard_normal(16)      # noisy copy of row 3

proj = geodot.ProjectionMatrix.generate(seed=1, input_dim=16, hash_length=256)
_, bits = geodot.build_context_batch(stored, proj)

cam = camarray.CamState(camarray.CamConfig(rows=64))
cam.set_word_length(256)
cam.write_rows(bits)
print(f"{cam.stored_count} rows stored, word length {cam.word_bits} bits\n")

qhash = geodot.sign_hash(query, proj)
print("row  hamming  est.angle  true angle")
best, best_hd = -1, 10**9
for row, hd in cam.search(qhash.bits):
    est = geodot.estimate_angle(hd, 256)
    cos = stored[row] @ query / (np.linalg.norm(stored[row]) * np.linalg.norm(query))
    print(f"{row:>3d}  {hd:>7d}  {est:>9.3f}  {np.arccos(cos):>10.3f}")
    if hd < best_hd:
        best, best_hd = row, hd
print(f"\nsmallest distance at row {best} (query was a perturbed row 3)")
