"""Recover the Maxwell stress tensor from sampled E and B fields.

Run with ``python demos/maxwell.py [seed] [noise]``. A clean run usually
converges in one to four minutes on a single core.
"""

import sys

from tensorgep import EvolutionConfig, build_report, evolve, gen_maxwell
from tensorgep.benchmarks import NoiseSpec, maxwell_library

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 5
noise = float(sys.argv[2]) if len(sys.argv) > 2 else 0.0

ds = gen_maxwell(150, noise=NoiseSpec(noise, seed) if noise else None, seed=seed)
library = maxwell_library(ds, rnc=True)
print(f"{ds.n_data} samples of {ds.target.name}; tensor terminals "
      f"{[t.name for t in library.tensor_terminals]}, scalar terminals {[t.name for t in library.scalar_terminals]}")

# noisy data never reaches the exact-fit threshold, so bound the generations
cfg = EvolutionConfig(seed=seed, rnc=True, max_generations=2000 if not noise else 300)


def progress(rec):
    if rec.generation % 10 == 0:
        print(f"  gen {rec.generation:4d}  best loss {rec.best_loss:.3e}")


res = evolve(ds, cfg, library, callback=progress)
print(build_report(res.host, res.fit, ds, generations=res.generations, reached=res.reached_threshold).to_text())
