"""The evolutionary loop over host chromosomes and their plasmids.

One generation: evaluate, (periodically) inject seed individuals, record,
check termination, then build the next generation by elitism plus
tournaments, host modification, host crossover and finally plasmid
modification. Evaluation consumes no randomness, so results do not depend
on how it is scheduled across worker threads.
"""

from __future__ import annotations

import itertools
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import operators as ops
from .data import Dataset, DimVector
from .evaluator import PENALTY, EvalConfig, FitResult, GeneCache, Target, evaluate_individual
from .genome import (TENSOR, Gene, GenomeFactory, Host, Library, Plasmid, expand_plasmids,
                     parse_host, serialize_host)
from .units import check_tree

log = logging.getLogger(__name__)

WORKERS_ENV = "TENSORGEP_WORKERS"

HOST_RATES = {
    "mutation": 0.2,
    "inversion": 0.2,
    "is_transposition": 0.2,
    "ris_transposition": 0.2,
    "gene_transposition": 0.2,
    "one_point_crossover": 0.2,
    "two_point_crossover": 0.2,
    "gene_crossover": 0.2,
}
PLASMID_RATES = {
    "mutation": 0.05,
    "inversion": 0.1,
    "is_transposition": 0.1,
    "ris_transposition": 0.1,
    "gene_transposition": 0.1,
    "rnc_mutation": 0.1,
}


# Long-form hyperparameter names accepted in config files.
LONG_NAMES = {
    "head length of the host gene": "host_head_length",
    "head length of the plasmid gene": "plasmid_head_length",
    "number of genes in a host cs": "host_genes",
    "number of genes in a plasmid cs": "plasmid_genes",
    "number of individuals in the population": "population_size",
    "the maximum number of generations": "max_generations",
    "the number of elites": "elites",
    "tournament size": "tournament_size",
    "the number of seed individuals": "seed_individuals",
}


@dataclass(frozen=True)
class EvolutionConfig:
    host_head_length: int = 5
    plasmid_head_length: int = 10
    host_genes: int = 4
    plasmid_genes: int = 1
    population_size: int = 1600
    max_generations: int = 2000
    elites: int = 1
    tournament_size: int = 200
    seed_individuals: int = 100
    seed_interval: int = 20
    seed_retries: int = 20000
    seed_file: str | None = None
    host_rates: dict = field(default_factory=lambda: dict(HOST_RATES))
    plasmid_rates: dict = field(default_factory=lambda: dict(PLASMID_RATES))
    loss_threshold: float = 1e-20
    penalty: float = PENALTY
    rnc: bool = False
    seed: int = 0
    workers: int | None = None

    def __post_init__(self):
        for name in ("host_head_length", "plasmid_head_length", "host_genes", "population_size",
                     "tournament_size", "seed_interval"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.plasmid_genes != 1:
            raise ValueError("plasmids carry exactly one gene")
        if not 0 <= self.elites <= self.population_size:
            raise ValueError("elites must lie in [0, population_size]")
        if self.max_generations < 1 or self.seed_individuals < 0 or self.seed_retries < 1:
            raise ValueError("max_generations and seed_retries must be positive, seed_individuals >= 0")
        for table, known in ((self.host_rates, HOST_RATES), (self.plasmid_rates, PLASMID_RATES)):
            for k, v in table.items():
                if k not in known:
                    raise ValueError(f"unknown operator {k!r}")
                if not 0.0 <= v <= 1.0:
                    raise ValueError(f"probability of {k} is {v}, outside [0, 1]")
        object.__setattr__(self, "host_rates", {**HOST_RATES, **self.host_rates})
        object.__setattr__(self, "plasmid_rates", {**PLASMID_RATES, **self.plasmid_rates})

    @classmethod
    def from_mapping(cls, m: dict) -> EvolutionConfig:
        known = {f.name for f in fields(cls)}
        m = {LONG_NAMES.get(" ".join(k.lower().split()), k): v for k, v in m.items()}
        extra = set(m) - known
        if extra:
            raise ValueError(f"unknown evolution settings: {', '.join(sorted(extra))}")
        return cls(**m)

    def to_mapping(self) -> dict:
        return asdict(self)

    def eval_config(self) -> EvalConfig:
        return EvalConfig(penalty=self.penalty)


@dataclass
class Individual:
    host: Host
    fit: FitResult | None = None


@dataclass
class Population:
    individuals: list[Individual]
    factory: GenomeFactory
    generation: int = 0

    @property
    def hosts(self) -> list[Host]:
        return [ind.host for ind in self.individuals]

    def __len__(self):
        return len(self.individuals)


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best_loss: float
    mean_loss: float
    dim_pass_fraction: float
    best: str


@dataclass
class EvolutionResult:
    host: Host
    fit: FitResult
    history: list[GenerationRecord]
    reached_threshold: bool
    library: Library
    config: EvolutionConfig

    @property
    def generations(self) -> int:
        return len(self.history)


# -- population ----------------------------------------------------------------

def make_factory(cfg: EvolutionConfig, library: Library) -> GenomeFactory:
    return GenomeFactory(library, cfg.host_head_length, cfg.plasmid_head_length, cfg.host_genes, rng=cfg.seed)


def init_population(cfg: EvolutionConfig, library: Library) -> Population:
    factory = make_factory(cfg, library)
    return Population([Individual(factory.random_host()) for _ in range(cfg.population_size)], factory)


def worker_count(cfg: EvolutionConfig) -> int:
    if cfg.workers is not None:
        return max(1, int(cfg.workers))
    env = os.environ.get(WORKERS_ENV)
    return max(1, int(env)) if env else 1


class Evaluator:
    """Evaluates individuals lacking a fitness, serially or on a thread pool."""

    def __init__(self, ds: Dataset, cfg: EvolutionConfig, workers: int | None = None):
        self.ds = ds
        self.eval_cfg = cfg.eval_config()
        self.target = Target.from_values(ds.target.values)
        self.cache = GeneCache()
        self.workers = worker_count(cfg) if workers is None else workers
        self._pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None

    def fit(self, host: Host) -> FitResult:
        return evaluate_individual(host, self.ds, self.eval_cfg, self.cache, self.target)

    def __call__(self, pop: Population) -> None:
        todo = [ind for ind in pop.individuals if ind.fit is None]
        if self._pool is None:
            fits = [self.fit(ind.host) for ind in todo]
        else:
            fits = list(self._pool.map(self.fit, [ind.host for ind in todo]))
        for ind, f in zip(todo, fits):
            ind.fit = f

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None


def _sort_key(ind: Individual):
    return (ind.fit.loss, ind.host.expressed_nodes, ind.host.key)


def _order(pop: Population) -> list[int]:
    """Indices sorted by ``_sort_key``; serializations are only built to break ties."""
    inds = pop.individuals
    coarse = sorted(range(len(inds)), key=lambda i: (inds[i].fit.loss, inds[i].host.expressed_nodes))
    out: list[int] = []
    for _, grp in itertools.groupby(coarse, key=lambda i: (inds[i].fit.loss, inds[i].host.expressed_nodes)):
        grp = list(grp)
        if len(grp) > 1:
            grp.sort(key=lambda i: inds[i].host.key)
        out.extend(grp)
    return out


def ranking(pop: Population) -> np.ndarray:
    """Total order: loss, then expressed node count, then serialization. Returns ``rank[i]``."""
    rank = np.empty(len(pop), dtype=np.int64)
    rank[_order(pop)] = np.arange(len(pop))
    return rank


def best_index(pop: Population) -> int:
    inds = pop.individuals
    lo = min((ind.fit.loss, ind.host.expressed_nodes) for ind in inds)
    ties = [i for i, ind in enumerate(inds) if (ind.fit.loss, ind.host.expressed_nodes) == lo]
    return min(ties, key=lambda i: inds[i].host.key)


def _fresh_plasmids(host: Host, factory: GenomeFactory) -> Host:
    if not any(isinstance(e, Plasmid) for g in host.genes for e in g.elements):
        return host
    genes = tuple(Gene(tuple(factory.copy_plasmid(e) if isinstance(e, Plasmid) else e for e in g.elements),
                       g.head) for g in host.genes)
    return Host(genes)


def select(pop: Population, cfg: EvolutionConfig) -> Population:
    """Elites first, then tournament winners; repeated picks get fresh plasmid identities."""
    rng = pop.factory.rng
    n = len(pop)
    rank = ranking(pop)
    order = np.argsort(rank)
    chosen = list(order[:cfg.elites])
    m = n - cfg.elites
    if m:
        draws = rng.integers(n, size=(m, cfg.tournament_size))
        winners = draws[np.arange(m), np.argmin(rank[draws], axis=1)]
        chosen.extend(int(w) for w in winners)
    seen = set()
    out = []
    for i in chosen:
        src = pop.individuals[i]
        host = src.host if i not in seen else _fresh_plasmids(src.host, pop.factory)
        seen.add(i)
        out.append(Individual(host, src.fit))
    return Population(out, pop.factory, pop.generation)


def apply_modification(pop: Population, operator: Callable, p_b: float, n_elites: int = 1) -> Population:
    """Algorithm-1 gate: each non-elite is modified with probability ``p_b``."""
    rng = pop.factory.rng
    for ind in pop.individuals[n_elites:]:
        if rng.random() < p_b:
            ind.host = operator(ind.host, pop.factory)
            ind.fit = None
    return pop


def apply_mutation(pop: Population, rate: float, n_elites: int = 1) -> Population:
    """Mutation runs on every non-elite; ``rate`` is per gene element."""
    for ind in pop.individuals[n_elites:]:
        new = ops.mutate(ind.host, pop.factory, rate)
        if any(a is not b for a, b in zip(new.genes, ind.host.genes)):
            ind.host = new
            ind.fit = None
    return pop


def apply_crossover(pop: Population, operator: Callable, p_b: float, n_elites: int = 1) -> Population:
    """Algorithm-2 gate over consecutive non-elite pairs."""
    rng = pop.factory.rng
    inds = pop.individuals
    for i in range(n_elites, len(inds) - 1, 2):
        if rng.random() < p_b:
            a, b = inds[i], inds[i + 1]
            a.host, b.host = operator(a.host, b.host, pop.factory)
            a.fit = b.fit = None
    return pop


def apply_plasmid_modifications(pop: Population, cfg: EvolutionConfig, n_elites: int = 1) -> Population:
    """Modify the plasmid population (every plasmid of a non-elite host) in place."""
    factory = pop.factory
    rng = factory.rng
    slots = []  # (individual, gene index, element index)
    for ind in pop.individuals[n_elites:]:
        for gi, g in enumerate(ind.host.genes):
            for ei, e in enumerate(g.elements):
                if isinstance(e, Plasmid):
                    slots.append((ind, gi, ei))
    if not slots:
        return pop
    genes = [s[0].host.genes[s[1]].elements[s[2]].gene for s in slots]
    original = list(genes)
    rates = cfg.plasmid_rates
    genes = [ops.plasmid_mutate(g, factory, rates["mutation"]) for g in genes]
    for name, op in ops.PLASMID_MODIFICATIONS.items():
        if name == "rnc_mutation" and not cfg.rnc:
            continue
        p_b = rates[name]
        for k in range(len(genes)):
            if rng.random() < p_b:
                genes[k] = op(genes[k], factory)
    touched = {}
    for (ind, gi, ei), old, new in zip(slots, original, genes):
        if new is old:
            continue
        host_genes = touched.setdefault(id(ind), (ind, [list(g.elements) for g in ind.host.genes]))[1]
        p = host_genes[gi][ei]
        host_genes[gi][ei] = Plasmid(p.uid, new)
    for ind, elems in touched.values():
        ind.host = Host(tuple(Gene(tuple(e), g.head) for e, g in zip(elems, ind.host.genes)))
        ind.fit = None
    return pop


def vary(pop: Population, cfg: EvolutionConfig) -> Population:
    """Host modification, host crossover, then plasmid modification."""
    r = cfg.host_rates
    e = cfg.elites
    apply_mutation(pop, r["mutation"], e)
    for name, op in ops.HOST_MODIFICATIONS.items():
        apply_modification(pop, op, r[name], e)
    for name, op in ops.HOST_CROSSOVERS.items():
        apply_crossover(pop, op, r[name], e)
    apply_plasmid_modifications(pop, cfg, e)
    return pop


# -- seed individuals ------------------------------------------------------------

def homogeneous_gene(factory: GenomeFactory, target_dim: DimVector, retries: int = 20000) -> Gene | None:
    """Rejection-sample a host gene whose expression has the target dimension."""
    for _ in range(retries):
        g = factory.random_gene(TENSOR)
        if check_tree(expand_plasmids(g.tree), target_dim):
            return g
    return None


def seed_individual(factory: GenomeFactory, target_dim: DimVector, retries: int = 20000) -> Host | None:
    genes = []
    for _ in range(factory.n_genes):
        g = homogeneous_gene(factory, target_dim, retries)
        if g is None:
            return None
        genes.append(g)
    return Host(tuple(genes))


def read_seed_file(path, library: Library, cfg: EvolutionConfig) -> list[Host]:
    """One serialized chromosome per non-blank line; ``#`` starts a comment."""
    hosts = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            hosts.append(parse_host(line, library, cfg.host_head_length, cfg.plasmid_head_length))
    if not hosts:
        raise ValueError(f"seed file {path} holds no chromosomes")
    return hosts


def inject_seeds(pop: Population, target_dim: DimVector, cfg: EvolutionConfig,
                 seed_host: Host | None = None) -> list[int]:
    """Replace the worst non-elite individuals with copies of one seed individual.

    Fitness must be known for every individual. Returns the replaced
    positions (empty when no seed could be built).
    """
    factory = pop.factory
    if cfg.seed_individuals == 0:
        return []
    seed = seed_host if seed_host is not None else seed_individual(factory, target_dim, cfg.seed_retries)
    if seed is None:
        log.warning("no dimensionally homogeneous gene found in %d draws; skipping seed injection",
                    cfg.seed_retries)
        return []
    rank = ranking(pop)
    elite = set(np.argsort(rank)[:cfg.elites].tolist())
    worst = [int(i) for i in np.argsort(rank)[::-1] if int(i) not in elite][:cfg.seed_individuals]
    for k, i in enumerate(sorted(worst)):
        host = seed if k == 0 and seed_host is None else _fresh_plasmids(seed, factory)
        pop.individuals[i] = Individual(host)
    return sorted(worst)


# -- main loop -----------------------------------------------------------------

def _record(pop: Population, generation: int, best: Individual) -> GenerationRecord:
    fits = [ind.fit for ind in pop.individuals]
    finite = [f.loss for f in fits if f.ok]
    mean = float(np.mean(finite)) if finite else float("nan")
    dim_frac = sum(f.dim_passed for f in fits) / len(fits)
    return GenerationRecord(generation, best.fit.loss, mean, dim_frac, serialize_host(best.host))


def evolve(ds: Dataset, cfg: EvolutionConfig, library: Library | None = None,
           callback: Callable[[GenerationRecord], None] | None = None) -> EvolutionResult:
    """Run until the best loss drops below ``cfg.loss_threshold`` or generations run out."""
    library = library if library is not None else Library.from_dataset(ds, rnc=cfg.rnc)
    target_dim = ds.target.dim
    pop = init_population(cfg, library)
    seeds = read_seed_file(cfg.seed_file, library, cfg) if cfg.seed_file else None
    evaluator = Evaluator(ds, cfg)
    history: list[GenerationRecord] = []
    best: Individual | None = None
    reached = False
    try:
        for gen in range(1, cfg.max_generations + 1):
            pop.generation = gen
            evaluator(pop)
            if gen % cfg.seed_interval == 0:
                seed_host = seeds[(gen // cfg.seed_interval - 1) % len(seeds)] if seeds else None
                if inject_seeds(pop, target_dim, cfg, seed_host):
                    evaluator(pop)
            cur = pop.individuals[best_index(pop)]
            if best is None or _sort_key(cur) < _sort_key(best):
                best = Individual(cur.host, cur.fit)
            rec = _record(pop, gen, best)
            history.append(rec)
            if callback is not None:
                callback(rec)
            if best.fit.loss < cfg.loss_threshold:
                reached = True
                break
            if gen == cfg.max_generations:
                break
            pop = vary(select(pop, cfg), cfg)
    finally:
        evaluator.close()
    return EvolutionResult(best.host, best.fit, history, reached, library, cfg)


LOG_HEADER = ("generation", "best_loss", "mean_finite_loss", "dim_pass_fraction", "best_chromosome")


def format_log(history: Sequence[GenerationRecord]) -> str:
    rows = ["\t".join(LOG_HEADER)]
    for r in history:
        rows.append(f"{r.generation}\t{r.best_loss!r}\t{r.mean_loss!r}\t{r.dim_pass_fraction!r}\t{r.best}")
    return "\n".join(rows) + "\n"


def write_log(history: Sequence[GenerationRecord], path) -> None:
    Path(path).write_text(format_log(history), encoding="utf-8")
