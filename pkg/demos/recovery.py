"""Cluster a noiseless union of subspaces and inspect the coefficient matrix.

Run: python3 demos/recovery.py
"""
import numpy as np

from lsssc import (GeneratorConfig, NoiseSpec, build_affinity, check_nontrivial,
                   check_subspace_detection, clustering_error, default_lambda, generate, lsssc)

cfg = GeneratorConfig(n=50, dims=(4, 4, 4), kappas=(5, 5, 5), noise=NoiseSpec("none"), seed=1)
ds = generate(cfg)
lam = default_lambda(ds.X.n, ds.X.N)
print(f"{ds.X.N} points in R^{ds.X.n}, three 4-d subspaces, lambda = {lam:.3f}")

res = lsssc(ds.X, lam)
labels = ds.truth.labels
detected, fps = check_subspace_detection(res.C, labels)
nontrivial, zeros = check_nontrivial(res.C)
print(f"subspace detection: {detected} ({len(fps)} cross-subspace coefficients)")
print(f"nontrivial columns: {nontrivial}")
print(f"estimated clusters: {res.n_clusters}")
print(f"clustering error:   {clustering_error(res.labels, labels):.3f}")

# the bottom of the normalized-Laplacian spectrum shows one zero per cluster
G = build_affinity(res.C)
print("smallest eigenvalues:", np.array2string(G.eigenvalues[-5:][::-1], precision=4))
