import math

import numpy as np
import pytest

from tensorgep.benchmarks import MAXWELL_TERMS, reference_host
from tensorgep.evolution import (EvolutionConfig, Evaluator, Individual, Population, best_index, evolve,
                                 format_log, homogeneous_gene, init_population, inject_seeds, make_factory,
                                 ranking, read_seed_file, select, vary)
from tensorgep.genome import serialize_host, validate_host
from tensorgep.units import check_tree
from tensorgep.genome import expand_plasmids

SMALL = dict(population_size=60, tournament_size=8, seed_individuals=6, seed_interval=3, rnc=True)


def evaluated(ds, cfg, lib):
    pop = init_population(cfg, lib)
    ev = Evaluator(ds, cfg)
    ev(pop)
    return pop


def test_defaults_follow_hyperparameter_table():
    c = EvolutionConfig()
    assert (c.host_head_length, c.plasmid_head_length, c.host_genes, c.plasmid_genes) == (5, 10, 4, 1)
    assert (c.population_size, c.max_generations, c.elites, c.tournament_size) == (1600, 2000, 1, 200)
    assert c.seed_individuals == 100
    assert c.host_rates["mutation"] == 0.2 and c.plasmid_rates["mutation"] == 0.05
    assert all(v == 0.2 for v in c.host_rates.values())
    assert {k: v for k, v in c.plasmid_rates.items() if k not in ("mutation", "rnc_mutation")} == {
        "inversion": 0.1, "is_transposition": 0.1, "ris_transposition": 0.1, "gene_transposition": 0.1}


def test_config_validation():
    with pytest.raises(ValueError):
        EvolutionConfig.from_mapping({"populaton_size": 10})
    with pytest.raises(ValueError):
        EvolutionConfig(host_rates={"mutation": 1.5})
    with pytest.raises(ValueError):
        EvolutionConfig(plasmid_genes=2)
    partial = EvolutionConfig(host_rates={"inversion": 0.0})
    assert partial.host_rates["inversion"] == 0.0 and partial.host_rates["mutation"] == 0.2


def test_selection_keeps_size_and_elite(maxwell_ds, maxwell_lib):
    cfg = EvolutionConfig(**SMALL)
    pop = evaluated(maxwell_ds, cfg, maxwell_lib)
    best = pop.individuals[best_index(pop)]
    nxt = select(pop, cfg)
    assert len(nxt) == len(pop)
    assert nxt.individuals[0].host is best.host
    assert int(np.argmin(ranking(pop))) == best_index(pop)


def test_variation_spares_elite_and_keeps_validity(maxwell_ds, maxwell_lib):
    cfg = EvolutionConfig(**SMALL)
    pop = evaluated(maxwell_ds, cfg, maxwell_lib)
    for _ in range(5):
        pop = select(pop, cfg)
        elite = pop.individuals[0].host
        vary(pop, cfg)
        assert pop.individuals[0].host is elite
        for ind in pop.individuals:
            validate_host(ind.host, pop.factory)
            ids = [p.uid for p in ind.host.plasmids()]
            assert len(ids) == len(set(ids))
        Evaluator(maxwell_ds, cfg)(pop)


def test_zero_rates_single_elite_population_is_invariant(maxwell_ds, maxwell_lib):
    zero_h = {k: 0.0 for k in EvolutionConfig().host_rates}
    zero_p = {k: 0.0 for k in EvolutionConfig().plasmid_rates}
    cfg = EvolutionConfig(population_size=1, elites=1, tournament_size=1, seed_individuals=0,
                          host_rates=zero_h, plasmid_rates=zero_p)
    pop = evaluated(maxwell_ds, cfg, maxwell_lib)
    before = serialize_host(pop.individuals[0].host)
    for _ in range(3):
        pop = vary(select(pop, cfg), cfg)
    assert serialize_host(pop.individuals[0].host) == before


def test_seed_injection_replaces_worst(maxwell_ds, maxwell_lib):
    cfg = EvolutionConfig(rnc=True, seed=2)
    pop = evaluated(maxwell_ds, cfg, maxwell_lib)
    elite = best_index(pop)
    losses = [ind.fit.loss for ind in pop.individuals]
    replaced = inject_seeds(pop, maxwell_ds.target.dim, cfg)
    assert len(replaced) == 100 and elite not in replaced
    assert all(pop.individuals[i].fit is None for i in replaced)
    assert all(all(check_tree(expand_plasmids(g.tree), maxwell_ds.target.dim) for g in pop.individuals[i].host.genes)
               for i in replaced)
    kept = [losses[i] for i in range(len(losses)) if i not in replaced]
    assert min(losses[i] for i in replaced) >= max(kept)


def test_homogeneous_gene_for_maxwell(maxwell_ds, maxwell_lib):
    f = make_factory(EvolutionConfig(rnc=True), maxwell_lib)
    g = homogeneous_gene(f, maxwell_ds.target.dim)
    assert g is not None and check_tree(expand_plasmids(g.tree), maxwell_ds.target.dim)


def test_injection_skipped_when_no_seed_exists(maxwell_ds, maxwell_lib, caplog):
    from tensorgep.data import DimVector
    cfg = EvolutionConfig(**{**SMALL, "seed_retries": 5})
    pop = evaluated(maxwell_ds, cfg, maxwell_lib)
    assert inject_seeds(pop, DimVector.of(J=7), cfg) == []
    assert "skipping seed injection" in caplog.text


def test_infinite_threshold_stops_after_first_generation(maxwell_ds, maxwell_lib):
    cfg = EvolutionConfig(**SMALL, loss_threshold=math.inf, max_generations=50)
    res = evolve(maxwell_ds, cfg, maxwell_lib)
    assert res.generations == 1 and res.reached_threshold


def test_run_is_deterministic_and_monotone(maxwell_ds, maxwell_lib):
    cfg = EvolutionConfig(**SMALL, max_generations=12, seed=7)
    a = evolve(maxwell_ds, cfg, maxwell_lib)
    b = evolve(maxwell_ds, EvolutionConfig(**SMALL, max_generations=12, seed=7, workers=3), maxwell_lib)
    assert format_log(a.history) == format_log(b.history)
    best = [r.best_loss for r in a.history]
    assert all(x >= y for x, y in zip(best, best[1:]))
    assert a.history[0].generation == 1 and len(a.history) == 12


def test_interval_beyond_run_never_injects(maxwell_ds, maxwell_lib):
    cfg = EvolutionConfig(**{**SMALL, "seed_interval": 1000}, max_generations=4, seed=1)
    res = evolve(maxwell_ds, cfg, maxwell_lib)
    # random initial hosts essentially never pass the per-gene check
    assert all(r.dim_pass_fraction < 0.05 for r in res.history)


def test_seed_file_is_injected(tmp_path, maxwell_ds, maxwell_lib):
    ref = reference_host(MAXWELL_TERMS, maxwell_lib)
    (tmp_path / "seeds.txt").write_text("# exact solution\n" + serialize_host(ref) + "\n")
    cfg = EvolutionConfig(**{**SMALL, "seed_interval": 1}, max_generations=3,
                          seed_file=str(tmp_path / "seeds.txt"))
    assert read_seed_file(cfg.seed_file, maxwell_lib, cfg)[0] == ref
    res = evolve(maxwell_ds, cfg, maxwell_lib)
    assert res.reached_threshold and res.generations == 1
    assert np.allclose(res.fit.coefficients, [1, -0.5, 1, -0.5], rtol=1e-9)
