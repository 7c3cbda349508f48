"""Measure inradius and incoherence, then test the lambda window under noise.

For growing noise levels the script checks the deterministic separation
condition delta < (r - mu)/5, picks lambda in the resulting window and
verifies the predicted detection and nontriviality on the solved C.

Run: python3 demos/noise_window.py
"""
import warnings

from lsssc import (GeneratorConfig, NoiseSpec, check_nontrivial, check_subspace_detection,
                   compute_incoherence, compute_r, deterministic_criterion, generate,
                   solve_lsssc)

warnings.simplefilter("ignore")
for delta in (0.0, 0.01, 0.03, 0.1, 0.3):
    noise = NoiseSpec("ball", delta=delta) if delta else NoiseSpec("none")
    ds = generate(GeneratorConfig(30, (2, 2), (5, 5), noise, seed=3))
    r = compute_r(ds.Y, ds.truth).r
    lam = 2.0
    for _ in range(2):  # mu depends on lambda; a couple of fixed-point steps
        mu = compute_incoherence(ds.X, ds.Y, ds.truth, lam).mu
        rep = deterministic_criterion(r, mu, ds.delta)
        lam = sum(rep.interval) / 2
    C = solve_lsssc(ds.X, lam).C
    det = check_subspace_detection(C, ds.truth.labels)[0]
    nt = check_nontrivial(C)[0]
    lo, hi = rep.interval
    print(f"delta {ds.delta:.3f}: r {r:.3f} mu {mu:.3f} criterion {str(rep.verdict):5} "
          f"window ({lo:.2f}, {hi:.2f}) lambda {lam:.2f} -> detection {det}, nontrivial {nt}")
