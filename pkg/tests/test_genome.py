import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tensorgep.data import Dataset
from tensorgep.genome import (P, SCALAR, TENSOR, Gene, GenomeError, GenomeFactory, Host, Library, Plasmid,
                              count_plasmids, decode_gene, expand_plasmids, gene_from_orf, parse_host,
                              serialize_host, tree_key, validate_host)


@pytest.fixture(scope="module")
def lib():
    n = 4
    ds = Dataset.from_arrays(
        scalars={"mu": (np.ones(n), {"M": 1}), "p": (np.ones(n), {"M": 1}), "a": (np.ones(n), None),
                 "b": (np.ones(n), None)},
        tensors={"A": (np.ones((n, 3, 3)), None), "B": (np.ones((n, 3, 3)), None), "delta": ("identity", None)},
        target=("Y", np.ones((n, 3, 3)), None),
    )
    return Library.from_dataset(ds, rnc=True)


def test_tail_lengths(lib):
    assert lib.tail_length(TENSOR, 5) == 6
    assert lib.tail_length(SCALAR, 10) == 11
    f = GenomeFactory(lib, 5, 10, 4, rng=0)
    g = f.random_gene(TENSOR)
    assert (g.head, len(g.tail)) == (5, 6)
    assert len(f.random_gene(SCALAR)) == 21


def test_karva_decoding_with_plasmid(lib):
    g = gene_from_orf(["+", "p", "delta", "A"], lib, TENSOR, 5, plasmids=[["a"]])
    assert tree_key(decode_gene(g)) == "+(p[a](A),delta)"


def test_terminal_root_expresses_one_leaf(lib):
    g = gene_from_orf(["B"], lib, TENSOR, 5, filler="A")
    assert g.orf_length == 1
    assert decode_gene(g).nodes() == 1


def test_breadth_first_order(lib):
    elems = [lib.functions(TENSOR)[2], lib.functions(TENSOR)[0], lib.terminal(TENSOR, "A")]
    tail = [lib.terminal(TENSOR, n) for n in ("B", "A", "B", "A", "A", "A")]
    g = Gene(tuple(elems + tail), 5 - 2)
    assert tree_key(decode_gene(g)) == ".(+(B,A),A)"


def test_expand_plasmid(lib):
    g = gene_from_orf(["+", "p", "delta", "A"], lib, TENSOR, 5, plasmids=[["+", "mu", "*", "mu", "p"]])
    assert tree_key(expand_plasmids(decode_gene(g))) == "+(scale(+(mu,*(mu,p)),A),delta)"


def test_expand_nested_plasmids(lib):
    g = gene_from_orf(["p", "p", "A"], lib, TENSOR, 5, plasmids=[["a"], ["b"]])
    assert tree_key(expand_plasmids(decode_gene(g))) == "scale(a,scale(b,A))"


def test_expand_without_plasmids_is_identity(lib):
    g = gene_from_orf(["+", "A", "B"], lib, TENSOR, 5)
    t = decode_gene(g)
    assert tree_key(expand_plasmids(t)) == tree_key(t)


def test_count_plasmids(lib):
    f = GenomeFactory(lib, 5, 10, 4, rng=0)
    genes = (gene_from_orf(["A"], lib, TENSOR, 5, factory=f),
             gene_from_orf(["p", "A"], lib, TENSOR, 5, plasmids=[["a"]], factory=f),
             gene_from_orf(["+", "p", "p", "A", "B"], lib, TENSOR, 5, plasmids=[["a"], ["b"]], factory=f),
             gene_from_orf(["B"], lib, TENSOR, 5, factory=f))
    assert count_plasmids(Host(genes)) == 3
    assert count_plasmids(Host((genes[0], genes[3]))) == 0


def test_unexpressed_plasmid_is_kept(lib):
    f = GenomeFactory(lib, 5, 10, 4, rng=0)
    g = gene_from_orf(["A", "p", "B"], lib, TENSOR, 5, plasmids=[["a"]], factory=f, filler="A")
    assert g.orf_length == 1
    assert count_plasmids(Host((g,))) == 1


def test_gene_from_orf_rejects_incomplete(lib):
    with pytest.raises(GenomeError):
        gene_from_orf(["+", "A"], lib, TENSOR, 1, filler=None)


def test_library_rejects_p_in_scalar_realm(lib):
    assert P in lib.tensor_functions
    assert P not in lib.scalar_functions
    assert P.arity == 1


def test_same_rng_state_same_gene(lib):
    a = GenomeFactory(lib, 5, 10, 4, rng=42).random_host()
    b = GenomeFactory(lib, 5, 10, 4, rng=42).random_host()
    assert serialize_host(a) == serialize_host(b)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_random_hosts_valid_and_round_trip(lib, seed):
    f = GenomeFactory(lib, 5, 10, 4, rng=seed)
    h = f.random_host()
    validate_host(h, f)
    back = parse_host(serialize_host(h), lib, 5, 10)
    assert back == h
    assert back.key == h.key


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_expansion_node_count(lib, seed):
    f = GenomeFactory(lib, 5, 10, 1, rng=seed)
    g = f.random_gene(TENSOR)
    t = decode_gene(g)
    ps = [n for n in t.walk() if isinstance(n.symbol, Plasmid)]
    e = expand_plasmids(t)
    assert not any(isinstance(n.symbol, Plasmid) for n in e.walk())
    host_nodes = sum(1 for _ in _host_walk(t))
    assert e.nodes() == host_nodes - len(ps) + sum(n.plasmid.nodes() for n in ps) + len(ps)


def _host_walk(t):
    yield t
    for c in t.children:
        yield from _host_walk(c)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_decoding_is_deterministic(lib, seed):
    g = GenomeFactory(lib, 5, 10, 1, rng=seed).random_gene(TENSOR)
    same = Gene(tuple(g.elements), g.head)
    assert tree_key(decode_gene(same)) == tree_key(decode_gene(g))
