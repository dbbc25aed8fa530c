"""Find the isotropic decay law of the Reynolds stress, dR_ij/dt = c·epsilon·delta_ij.

R_ij and k are offered as distractors. The exact answer is c = -2/3.
"""

from tensorgep import EvolutionConfig, build_report, evolve, gen_reynolds_decay
from tensorgep.benchmarks import reynolds_library

ds = gen_reynolds_decay(n_times=100)
res = evolve(ds, EvolutionConfig(seed=0), reynolds_library(ds))
rep = build_report(res.host, res.fit, ds, generations=res.generations, reached=res.reached_threshold)
print(rep.to_text())
