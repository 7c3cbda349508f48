"""Small missing-data sweep with an m* bisection per subspace dimension.

Writes results.csv, summary.json and manifest.json to the output directory
(default: ./demo-sweep).  Rerunning resumes from the existing rows.

Run: python3 demos/missing_sweep.py [out_dir]
"""
import sys

from lsssc import Bisection, ExperimentConfig, run_sweep

out = sys.argv[1] if len(sys.argv) > 1 else "demo-sweep"
cfg = ExperimentConfig(n=60, L=2, d=2, kappa=6.0, ds=(3, 6), ms=(0, 10, 20), trials=10,
                       seed=0, bisection=Bisection(enabled=True, target=0.9, trials=10))
rep = run_sweep(cfg, out)
for cell in rep.summary["cells"]:
    print(f"d={cell['d']} m={cell['m']:2d}: success {cell['success_rate']:.2f}, "
          f"mean error {cell['mean_error']:.3f}")
for entry in rep.summary["m_star"]:
    print(f"m*(d={entry['d']}) = {entry['m_star']}")
print(f"rows written to {out}/results.csv")
