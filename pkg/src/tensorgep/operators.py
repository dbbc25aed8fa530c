"""Genetic operators on host chromosomes and plasmid genes.

Every operator returns a new value and keeps each gene's head/tail geometry:
tails only ever receive terminals. Copying a ``p`` element (IS/RIS
transposition) duplicates its plasmid under a fresh identity; moving one
(crossover, gene transposition, inversion) keeps it.

Host operators take ``(host, factory)``; plasmid operators take
``(gene, factory)`` and act on the single scalar gene. All randomness comes
from ``factory.rng``.
"""

from __future__ import annotations

from .genome import SCALAR, TENSOR, Constant, Gene, GenomeFactory, Host, Plasmid, RNC_RANGE

FRAGMENT_LENGTHS = (1, 2, 3)


def _fragment_length(rng, limit: int) -> int:
    return min(FRAGMENT_LENGTHS[int(rng.integers(len(FRAGMENT_LENGTHS)))], limit)


def _duplicate(elems, factory: GenomeFactory) -> list:
    return [factory.copy_plasmid(e) if isinstance(e, Plasmid) else e for e in elems]


def _pick_gene(host: Host, rng) -> int:
    return int(rng.integers(host.n_genes))


def _replace_gene(host: Host, k: int, gene: Gene) -> Host:
    genes = list(host.genes)
    genes[k] = gene
    return Host(tuple(genes))


# -- gene-level primitives ---------------------------------------------------

def mutate_gene(gene: Gene, factory: GenomeFactory, realm: str, rate: float) -> Gene:
    """Each element changes with probability ``rate`` to a different library symbol."""
    rng = factory.rng
    hits = (rng.random(len(gene)) < rate).nonzero()[0]
    if not len(hits):
        return gene
    elems = list(gene.elements)
    for k, u in zip(hits.tolist(), rng.random(len(hits)).tolist()):
        elems[k] = factory.replacement(realm, k < gene.head, elems[k], u)
    return Gene(tuple(elems), gene.head)


def invert_gene(gene: Gene, factory: GenomeFactory) -> Gene:
    """Reverse a short fragment lying inside the head."""
    rng = factory.rng
    h = gene.head
    n = _fragment_length(rng, h)
    start = int(rng.integers(h - n + 1))
    elems = list(gene.elements)
    elems[start:start + n] = elems[start:start + n][::-1]
    return Gene(tuple(elems), h)


def _insert_into_head(gene: Gene, pos: int, fragment: list) -> Gene:
    h = gene.head
    head = (list(gene.elements[:pos]) + fragment + list(gene.elements[pos:h]))[:h]
    return Gene(tuple(head) + gene.tail, h)


def is_fragment(source: Gene, factory: GenomeFactory) -> list:
    rng = factory.rng
    n = _fragment_length(rng, len(source))
    start = int(rng.integers(len(source) - n + 1))
    return _duplicate(source.elements[start:start + n], factory)


def ris_fragment(gene: Gene, factory: GenomeFactory) -> list | None:
    """Fragment starting at the first function at or after a random head position."""
    rng = factory.rng
    h = gene.head
    start = int(rng.integers(h))
    while start < h and not gene.elements[start].is_function:
        start += 1
    if start == h:
        return None
    n = _fragment_length(rng, h - start)
    return _duplicate(gene.elements[start:start + n], factory)


def is_transpose_gene(gene: Gene, factory: GenomeFactory, source: Gene | None = None) -> Gene:
    """Insert a copied fragment of ``source`` (default: ``gene``) at a non-root head position."""
    if gene.head < 2:
        return gene
    fragment = is_fragment(source if source is not None else gene, factory)
    pos = int(factory.rng.integers(1, gene.head))
    return _insert_into_head(gene, pos, fragment)


def ris_transpose_gene(gene: Gene, factory: GenomeFactory) -> Gene:
    fragment = ris_fragment(gene, factory)
    if fragment is None:
        return gene
    return _insert_into_head(gene, 0, fragment)


def rnc_mutate_gene(gene: Gene, factory: GenomeFactory) -> Gene:
    """Redraw the value of one random constant of the gene; no-op without constants."""
    rng = factory.rng
    where = [k for k, e in enumerate(gene.elements) if isinstance(e, Constant)]
    if not where:
        return gene
    k = where[int(rng.integers(len(where)))]
    elems = list(gene.elements)
    elems[k] = Constant(float(rng.uniform(*RNC_RANGE)))
    return Gene(tuple(elems), gene.head)


# -- host modification -------------------------------------------------------

def mutate(host: Host, factory: GenomeFactory, rate: float = 0.2) -> Host:
    genes = tuple(mutate_gene(g, factory, TENSOR, rate) for g in host.genes)
    return Host(genes)


def invert(host: Host, factory: GenomeFactory) -> Host:
    k = _pick_gene(host, factory.rng)
    return _replace_gene(host, k, invert_gene(host.genes[k], factory))


def is_transpose(host: Host, factory: GenomeFactory) -> Host:
    """IS transposition: fragment from any gene, inserted into a random gene's head."""
    rng = factory.rng
    src = host.genes[_pick_gene(host, rng)]
    k = _pick_gene(host, rng)
    return _replace_gene(host, k, is_transpose_gene(host.genes[k], factory, source=src))


def ris_transpose(host: Host, factory: GenomeFactory) -> Host:
    k = _pick_gene(host, factory.rng)
    return _replace_gene(host, k, ris_transpose_gene(host.genes[k], factory))


def gene_transpose(host: Host, factory: GenomeFactory) -> Host:
    """Move a randomly chosen gene other than the first to the front."""
    if host.n_genes < 2:
        return host
    k = int(factory.rng.integers(1, host.n_genes))
    g = host.genes
    return Host((g[k],) + g[:k] + g[k + 1:])


# -- host crossover ----------------------------------------------------------

def _split(linear: list, template: Host) -> Host:
    genes, pos = [], 0
    for g in template.genes:
        genes.append(Gene(tuple(linear[pos:pos + len(g)]), g.head))
        pos += len(g)
    return Host(tuple(genes))


def _dedupe(host: Host, factory: GenomeFactory) -> Host:
    """Give repeated plasmid identities fresh ones (parents may share ancestry)."""
    seen = set()
    changed = False
    genes = []
    for g in host.genes:
        elems = []
        for e in g.elements:
            if isinstance(e, Plasmid):
                if e.uid in seen:
                    e = factory.copy_plasmid(e)
                    changed = True
                seen.add(e.uid)
            elems.append(e)
        genes.append(Gene(tuple(elems), g.head))
    return Host(tuple(genes)) if changed else host


def _exchange(a: Host, b: Host, lo: int, hi: int, factory: GenomeFactory) -> tuple[Host, Host]:
    la, lb = a.linear(), b.linear()
    ca = la[:lo] + lb[lo:hi] + la[hi:]
    cb = lb[:lo] + la[lo:hi] + lb[hi:]
    return _dedupe(_split(ca, a), factory), _dedupe(_split(cb, b), factory)


def one_point_xover(a: Host, b: Host, factory: GenomeFactory) -> tuple[Host, Host]:
    n = len(a.linear())
    if n < 2:
        return a, b
    cut = int(factory.rng.integers(1, n))
    return _exchange(a, b, cut, n, factory)


def two_point_xover(a: Host, b: Host, factory: GenomeFactory) -> tuple[Host, Host]:
    n = len(a.linear())
    if n < 3:
        return one_point_xover(a, b, factory)
    lo, hi = sorted(int(c) for c in factory.rng.choice(range(1, n), size=2, replace=False))
    return _exchange(a, b, lo, hi, factory)


def gene_xover(a: Host, b: Host, factory: GenomeFactory) -> tuple[Host, Host]:
    k = _pick_gene(a, factory.rng)
    ca = _replace_gene(a, k, b.genes[k])
    cb = _replace_gene(b, k, a.genes[k])
    return _dedupe(ca, factory), _dedupe(cb, factory)


# -- plasmid modification ----------------------------------------------------

def plasmid_mutate(gene: Gene, factory: GenomeFactory, rate: float = 0.05) -> Gene:
    return mutate_gene(gene, factory, SCALAR, rate)


def plasmid_invert(gene: Gene, factory: GenomeFactory) -> Gene:
    return invert_gene(gene, factory)


def plasmid_is_transpose(gene: Gene, factory: GenomeFactory) -> Gene:
    return is_transpose_gene(gene, factory)


def plasmid_ris_transpose(gene: Gene, factory: GenomeFactory) -> Gene:
    return ris_transpose_gene(gene, factory)


def plasmid_gene_transpose(gene: Gene, factory: GenomeFactory) -> Gene:
    """A plasmid holds one gene, so there is nothing to move."""
    return gene


def rnc_mutate(gene: Gene, factory: GenomeFactory) -> Gene:
    return rnc_mutate_gene(gene, factory)


HOST_MODIFICATIONS = {
    "inversion": invert,
    "is_transposition": is_transpose,
    "ris_transposition": ris_transpose,
    "gene_transposition": gene_transpose,
}
HOST_CROSSOVERS = {
    "one_point_crossover": one_point_xover,
    "two_point_crossover": two_point_xover,
    "gene_crossover": gene_xover,
}
PLASMID_MODIFICATIONS = {
    "inversion": plasmid_invert,
    "is_transposition": plasmid_is_transpose,
    "ris_transposition": plasmid_ris_transpose,
    "gene_transposition": plasmid_gene_transpose,
    "rnc_mutation": rnc_mutate,
}
