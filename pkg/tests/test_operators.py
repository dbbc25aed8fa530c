import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tensorgep import operators as ops
from tensorgep.genome import (SCALAR, TENSOR, Gene, GenomeFactory, Host, Plasmid, gene_from_orf, validate_gene,
                              validate_host)

ALL_HOST_OPS = {"mutate": ops.mutate, **ops.HOST_MODIFICATIONS}
ALL_PLASMID_OPS = {"mutate": ops.plasmid_mutate, **ops.PLASMID_MODIFICATIONS}


def uids(host):
    return [p.uid for p in host.plasmids()]


def make_factory(lib, seed):
    return GenomeFactory(lib, 5, 10, 4, rng=np.random.default_rng(seed))


@pytest.mark.parametrize("name", sorted(ALL_HOST_OPS))
@settings(max_examples=150, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_host_operators_keep_validity(maxwell_lib, name, seed):
    f = make_factory(maxwell_lib, seed)
    h = f.random_host()
    out = ALL_HOST_OPS[name](h, f)
    validate_host(out, f)
    assert len(set(uids(out))) == len(uids(out))


@pytest.mark.parametrize("name", sorted(ops.HOST_CROSSOVERS))
@settings(max_examples=150, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_crossovers_keep_validity_and_plasmids(maxwell_lib, name, seed):
    f = make_factory(maxwell_lib, seed)
    a, b = f.random_host(), f.random_host()
    ca, cb = ops.HOST_CROSSOVERS[name](a, b, f)
    for c in (ca, cb):
        validate_host(c, f)
        assert len(set(uids(c))) == len(uids(c))
    # every position of both parents lands in exactly one child
    assert len(uids(ca)) + len(uids(cb)) == len(uids(a)) + len(uids(b))


@pytest.mark.parametrize("name", sorted(ALL_PLASMID_OPS))
@settings(max_examples=150, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_plasmid_operators_keep_validity(maxwell_lib, name, seed):
    f = make_factory(maxwell_lib, seed)
    g = f.random_gene(SCALAR)
    out = ALL_PLASMID_OPS[name](g, f)
    validate_gene(out, maxwell_lib, SCALAR, 10)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_moving_operators_retain_plasmid_identities(maxwell_lib, seed):
    f = make_factory(maxwell_lib, seed)
    h = f.random_host()
    for op in (ops.invert, ops.gene_transpose):
        assert sorted(uids(op(h, f))) == sorted(uids(h))


def test_invert_reverses_head_fragment(maxwell_lib):
    f = make_factory(maxwell_lib, 0)
    g = gene_from_orf(["+", "p", "delta_ij", "E_iE_j", "B_iB_j"], maxwell_lib, TENSOR, 5, plasmids=[["mu0"]],
                      factory=f)
    seen = set()
    for _ in range(400):
        out = ops.invert_gene(g, f)
        assert out.tail == g.tail
        diff = [k for k in range(5) if out.elements[k] is not g.elements[k]]
        if diff:
            lo, hi = diff[0], diff[-1] + 1
            assert list(out.elements[lo:hi]) == list(g.elements[lo:hi])[::-1]
        seen.add(tuple(e.name for e in out.elements[:3]))
    assert ("delta_ij", "p", "+") in seen


def test_gene_transpose_moves_to_front(maxwell_lib):
    f = make_factory(maxwell_lib, 0)
    h = f.random_host()
    outs = {ops.gene_transpose(h, f) for _ in range(100)}
    g1, g2, g3, g4 = h.genes
    assert outs == {Host((g2, g1, g3, g4)), Host((g3, g1, g2, g4)), Host((g4, g1, g2, g3))}


def test_gene_transpose_single_gene_noop(maxwell_lib):
    f = GenomeFactory(maxwell_lib, 5, 10, 1, rng=0)
    h = f.random_host()
    assert ops.gene_transpose(h, f) is h


def test_is_copy_gets_fresh_identity(maxwell_lib):
    f = make_factory(maxwell_lib, 5)
    g = gene_from_orf(["p", "p", "p", "p", "p", "delta_ij"], maxwell_lib, TENSOR, 5,
                      plasmids=[["mu0"]] * 5, factory=f, filler="delta_ij")
    before = {e.uid for e in g.elements if isinstance(e, Plasmid)}
    fresh = 0
    for _ in range(50):
        out = ops.is_transpose_gene(g, f)
        ids = [e.uid for e in out.elements if isinstance(e, Plasmid)]
        assert len(ids) == len(set(ids))
        fresh += any(u not in before for u in ids)
        assert out.elements[0] is g.elements[0]
    assert fresh, "inserted copies must carry new identities"


def test_ris_inserts_at_root_starting_with_function(maxwell_lib):
    f = make_factory(maxwell_lib, 1)
    g = gene_from_orf(["E_iE_j", "B_iB_j", "+", "delta_ij", "delta_ij"], maxwell_lib, TENSOR, 5, filler="delta_ij")
    out = ops.ris_transpose_gene(g, f)
    assert out.elements[0].name == "+"
    all_terminals = gene_from_orf(["E_iE_j"], maxwell_lib, TENSOR, 5, filler="delta_ij")
    assert ops.ris_transpose_gene(all_terminals, f) is all_terminals


def test_mutation_never_puts_function_in_tail(maxwell_lib):
    f = make_factory(maxwell_lib, 2)
    g = f.random_gene(TENSOR)
    for _ in range(2000):
        g = ops.mutate_gene(g, f, TENSOR, 0.5)
        assert not any(e.is_function for e in g.tail)


def test_mutation_rate_matches_binomial(maxwell_lib):
    f = make_factory(maxwell_lib, 3)
    g = f.random_gene(TENSOR)
    changed = total = 0
    for _ in range(4000):
        out = ops.mutate_gene(g, f, TENSOR, 0.2)
        changed += sum(a is not b for a, b in zip(out.elements, g.elements))
        total += len(g)
    assert changed / total == pytest.approx(0.2, rel=0.05)


def test_rnc_mutation_redraws_within_range(maxwell_lib):
    f = make_factory(maxwell_lib, 4)
    g = gene_from_orf(["*", "c=1.5", "mu0"], maxwell_lib, SCALAR, 10)
    out = ops.rnc_mutate(g, f)
    assert out.elements[1].value != 1.5 and -10 <= out.elements[1].value <= 10
    plain = gene_from_orf(["mu0"], maxwell_lib, SCALAR, 10, filler="mu0")
    assert ops.rnc_mutate(plain, f) is plain
