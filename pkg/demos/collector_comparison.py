"""Compare Random, Adversarial and Demo on push_block at desk scale.

Prints each collector's learning curve (mean success over seeds) and the median
inverse-model batch loss, the quantity whose distribution the adversarial agent
is meant to push upward.

Default is two seeds (about 10 minutes on one core); pass a seed spec to widen:
    python3 demos/collector_comparison.py 0..4
"""

import sys

import numpy as np

from advexplore import experiment as ex
from advexplore.cli import parse_seeds

seeds = parse_seeds(sys.argv[1] if len(sys.argv) > 1 else "0..1")
base = ex.make_config("desk", env_id="push_block")
results = ex.run_sweep(base, ["random", "adversarial", "demo"], seeds,
                       progress=lambda name, seed, log: print(f"  {name} seed {seed}: final {log.final_success:.2f}"))

print("\nsamples  " + "  ".join(f"{name:>11}" for name in results))
curves = {name: ex.aggregate_curve(logs) for name, logs in results.items()}
for j, row in enumerate(next(iter(curves.values()))):
    print(f"{row[0]:7d}  " + "  ".join(f"{curves[name][j][1]:11.2f}" for name in results))

print("\nmedian batch loss per seed")
for name, logs in results.items():
    print(f"  {name:>11}: " + " ".join(f"{np.median(log.batch_losses):.4f}" for log in logs))
