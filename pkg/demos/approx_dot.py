"""One approximate dot product, step by step, then the hash-length sweep."""
import numpy as np

from camdot import geodot

X = np.array([0.6012, 0.8383, 0.6859, 0.5712])
Y = np.array([0.9044, 0.5352, 0.8110, 0.9243])

exact = geodot.algebraic_dot(X, Y)
true_theta = np.arccos(exact / (np.linalg.norm(X) * np.linalg.norm(Y)))
print(f"algebraic dot       {exact:.4f}")

proj = geodot.ProjectionMatrix.generate(seed=7, input_dim=4, hash_length=1024)
cx = geodot.build_context(X, proj)
cy = geodot.build_context(Y, proj)
hd = geodot.hamming_distance(cx.hash, cy.hash)
theta = geodot.estimate_angle(hd, 1024)
print(f"hamming distance    {hd} of 1024 bits")
print(f"estimated angle     {theta:.4f} rad   (true {true_theta:.4f})")
print(f"approx dot          {geodot.approx_dot(cx, cy):.4f}")
print(f"approx, exact cos   {geodot.approx_dot_exact_cos(cx, cy):.4f}")

# Longer hashes cut the estimator's variance; what remains for this pair is
# the piecewise cosine's bias at small angles, which bits cannot buy back.
print("\nmedian |error| over 200 projection seeds")
print("  k      piecewise  exact cos")
for k in (64, 128, 256, 512, 1024):
    piecewise, true_cos = [], []
    for seed in range(200):
        p = geodot.ProjectionMatrix.generate(seed, 4, k)
        cx, cy = geodot.build_context(X, p), geodot.build_context(Y, p)
        piecewise.append(abs(geodot.approx_dot(cx, cy) - exact))
        true_cos.append(abs(geodot.approx_dot_exact_cos(cx, cy) - exact))
    print(f"  {k:<5d}  {np.median(piecewise):9.4f}  {np.median(true_cos):9.4f}")
