"""Run the rate preset through the harness and print the fitted log-log slope.

Run: python demos/rates.py [output_dir]
"""

import sys

from needlet_ustats.harness import load_preset, run_experiment

out = sys.argv[1] if len(sys.argv) > 1 else "results/rates"
cfg = load_preset("u2_rate", {"replications": 500})
res = run_experiment(cfg, out)
for row in res.rows:
    print(f"R_t={row['R_t']:8.0f}  d_K={row['d_K']:.4f}  W1={row['W1']:.4f}  bound={row['bound']:.3f}")
print("fitted slope of log d_K on log R_t:", res.rates)
