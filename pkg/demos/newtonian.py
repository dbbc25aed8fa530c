"""Constitutive relation of a Newtonian gas from a manufactured 2D flow.

Compressible data should give sigma_ij = -2 mu S_ij + (2/3) mu D_kk delta_ij + p delta_ij;
on incompressible data the D_kk term has nothing to explain and disappears.
"""

from tensorgep import EvolutionConfig, build_report, evolve, gen_newtonian_field
from tensorgep.benchmarks import newtonian_library

for compressible in (True, False):
    ds = gen_newtonian_field(compressible=compressible)
    res = evolve(ds, EvolutionConfig(seed=0), newtonian_library(ds))
    rep = build_report(res.host, res.fit, ds, generations=res.generations, reached=res.reached_threshold)
    print(f"{'compressible' if compressible else 'incompressible'}: {rep.pruned_equation}")
    print(f"  loss {rep.loss:.3e} after {rep.generations} generations")
