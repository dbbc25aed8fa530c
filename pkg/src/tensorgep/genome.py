"""Karva-encoded genes for the host/plasmid genome.

Host genes encode tensor expressions over the tensor function set
``{+, -, ·, p}``; each ``p`` element carries its own single-gene scalar
plasmid, which scalar-multiplies the tensor beneath it. Plasmid genes encode
scalar expressions over ``{+, -, *, /}``.

Genes are fixed-length: a head of ``h`` elements (functions or terminals)
followed by a tail of ``h * (a_max - 1) + 1`` terminals, which guarantees
that breadth-first decoding always completes.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from functools import cached_property
from typing import ClassVar, Iterator, Sequence

import numpy as np

from .data import DIMENSIONLESS, Dataset, DimVector

TENSOR = "tensor"
SCALAR = "scalar"

RNC_RANGE = (-10.0, 10.0)


class GenomeError(ValueError):
    """Structurally invalid gene, chromosome or serialization."""


@dataclass(frozen=True)
class Symbol:
    """A function or terminal of one realm. ``op`` is None for terminals."""

    name: str
    arity: int = 0
    realm: str = TENSOR
    op: str | None = None
    dim: DimVector | None = None
    identity: bool = False

    def __hash__(self):
        # symbols are hashed on every validity check; fields never change
        h = self.__dict__.get("_hash")
        if h is None:
            h = hash((self.name, self.arity, self.realm, self.op, self.dim, self.identity))
            object.__setattr__(self, "_hash", h)
        return h

    @property
    def is_function(self) -> bool:
        return self.arity > 0


@dataclass(frozen=True)
class Constant:
    """Random numerical constant (dimensionless scalar terminal)."""

    value: float
    name: ClassVar[str] = "c"
    arity: ClassVar[int] = 0
    realm: ClassVar[str] = SCALAR
    op: ClassVar[None] = None
    dim: ClassVar[DimVector] = DIMENSIONLESS
    identity: ClassVar[bool] = False
    is_function: ClassVar[bool] = False


@dataclass(frozen=True)
class Gene:
    elements: tuple
    head: int

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))

    def __len__(self):
        return len(self.elements)

    @property
    def tail(self) -> tuple:
        return self.elements[self.head:]

    @cached_property
    def orf_length(self) -> int:
        """Number of leading elements actually expressed."""
        n, i = 1, 0
        while i < n:
            n += self.elements[i].arity
            i += 1
        return n

    @cached_property
    def tree(self) -> ExprTree:
        return decode_elements(self.elements)

    @cached_property
    def key(self) -> str:
        """Content key of the expressed expression (plasmids inlined, no identities)."""
        return tree_key(self.tree)

    @cached_property
    def content(self) -> str:
        """Full serialization with plasmid genes inlined and no identities."""
        return _gene_tokens(self, False)

    @cached_property
    def expressed_nodes(self) -> int:
        """Node count of the decoded tree, expressed plasmid genes included."""
        n = self.orf_length
        for e in self.elements[:n]:
            if isinstance(e, Plasmid):
                n += e.gene.orf_length
        return n


@dataclass(frozen=True)
class Plasmid:
    """A ``p`` element of a host gene together with the scalar gene it invokes.

    ``uid`` is a stable identity: it survives modification of the plasmid
    gene and changes only when the plasmid is duplicated.
    """

    uid: int
    gene: Gene
    name: ClassVar[str] = "p"
    arity: ClassVar[int] = 1
    realm: ClassVar[str] = TENSOR
    op: ClassVar[str] = "p"
    dim: ClassVar[None] = None
    identity: ClassVar[bool] = False
    is_function: ClassVar[bool] = True


@dataclass(frozen=True)
class Host:
    genes: tuple[Gene, ...]

    def __post_init__(self):
        object.__setattr__(self, "genes", tuple(self.genes))

    @property
    def n_genes(self) -> int:
        return len(self.genes)

    def plasmids(self) -> list[Plasmid]:
        return [e for g in self.genes for e in g.elements if isinstance(e, Plasmid)]

    def linear(self) -> list:
        return [e for g in self.genes for e in g.elements]

    @cached_property
    def key(self) -> str:
        return " ".join("[" + g.content + "]" for g in self.genes)

    @property
    def expressed_nodes(self) -> int:
        return sum(g.expressed_nodes for g in self.genes)


def count_plasmids(host: Host) -> int:
    """Number of ``p`` elements anywhere in the chromosome, expressed or not."""
    return sum(isinstance(e, Plasmid) for g in host.genes for e in g.elements)


# -- function sets -------------------------------------------------------------

P = Symbol("p", 1, TENSOR, "p")
SCALE = Symbol("scale", 2, TENSOR, "scale")

TENSOR_FUNCTIONS = {
    "add": Symbol("+", 2, TENSOR, "add"),
    "sub": Symbol("-", 2, TENSOR, "sub"),
    "dot": Symbol(".", 2, TENSOR, "dot"),
    "p": P,
}
SCALAR_FUNCTIONS = {
    "add": Symbol("+", 2, SCALAR, "add"),
    "sub": Symbol("-", 2, SCALAR, "sub"),
    "mul": Symbol("*", 2, SCALAR, "mul"),
    "div": Symbol("/", 2, SCALAR, "div"),
}
_ALIASES = {
    TENSOR: {"+": "add", "add": "add", "-": "sub", "sub": "sub", ".": "dot", "·": "dot", "dot": "dot",
             "inner": "dot", "p": "p"},
    SCALAR: {"+": "add", "add": "add", "-": "sub", "sub": "sub", "*": "mul", "×": "mul", "mul": "mul",
             "/": "div", "÷": "div", "div": "div"},
}
RNC = Symbol("c", 0, SCALAR, "rnc", DIMENSIONLESS)


def function_symbol(realm: str, name: str) -> Symbol:
    try:
        op = _ALIASES[realm][name]
    except KeyError:
        raise GenomeError(f"unknown {realm} function {name!r}") from None
    return (TENSOR_FUNCTIONS if realm == TENSOR else SCALAR_FUNCTIONS)[op]


@dataclass(frozen=True)
class Library:
    """Function and terminal sets of both realms."""

    tensor_functions: tuple[Symbol, ...]
    tensor_terminals: tuple[Symbol, ...]
    scalar_functions: tuple[Symbol, ...]
    scalar_terminals: tuple[Symbol, ...]
    rnc: bool = False

    def __post_init__(self):
        for realm, funcs, terms in ((TENSOR, self.tensor_functions, self.tensor_terminals),
                                    (SCALAR, self.scalar_functions, self.scalar_terminals)):
            allowed = TENSOR_FUNCTIONS if realm == TENSOR else SCALAR_FUNCTIONS
            for f in funcs:
                if f not in allowed.values():
                    raise GenomeError(f"{f.name!r} is not a {realm} function")
            for t in terms:
                if t.is_function or t.realm != realm or t.dim is None:
                    raise GenomeError(f"{t.name!r} is not a {realm} terminal with a dimension")
            if len({t.name for t in terms}) != len(terms):
                raise GenomeError(f"duplicate {realm} terminal names")
        if not self.tensor_terminals:
            raise GenomeError("the tensor terminal library is empty")
        if P in self.tensor_functions and not self.scalar_terminals and not self.rnc:
            raise GenomeError("'p' needs a non-empty scalar terminal library")

    @classmethod
    def from_dataset(cls, ds: Dataset, tensor_terminals: Sequence[str] | None = None,
                     scalar_terminals: Sequence[str] | None = None,
                     tensor_functions: Sequence[str] = ("+", "-", ".", "p"),
                     scalar_functions: Sequence[str] = ("+", "-", "*", "/"),
                     rnc: bool = False) -> Library:
        tnames = list(ds.tensors) if tensor_terminals is None else list(tensor_terminals)
        snames = list(ds.scalars) if scalar_terminals is None else list(scalar_terminals)
        for n in tnames:
            if n not in ds.tensors:
                raise GenomeError(f"tensor terminal {n!r} is not in the dataset")
        for n in snames:
            if n not in ds.scalars:
                raise GenomeError(f"scalar terminal {n!r} is not in the dataset")
        tt = tuple(Symbol(n, 0, TENSOR, None, ds.tensors[n].dim, ds.tensors[n].identity) for n in tnames)
        st = tuple(Symbol(n, 0, SCALAR, None, ds.scalars[n].dim) for n in snames)
        tf = tuple(dict.fromkeys(function_symbol(TENSOR, f) for f in tensor_functions))
        sf = tuple(dict.fromkeys(function_symbol(SCALAR, f) for f in scalar_functions))
        return cls(tf, tt, sf, st, rnc)

    def functions(self, realm: str) -> tuple[Symbol, ...]:
        return self.tensor_functions if realm == TENSOR else self.scalar_functions

    def terminals(self, realm: str) -> tuple[Symbol, ...]:
        if realm == TENSOR:
            return self.tensor_terminals
        return self.scalar_terminals + ((RNC,) if self.rnc else ())

    def pools(self, realm: str) -> tuple[dict, dict]:
        """Functions and terminals of ``realm`` keyed by object id, for fast membership."""
        cache = self.__dict__.setdefault("_pools", {})
        if realm not in cache:
            cache[realm] = ({id(f): f for f in self.functions(realm)},
                            {id(t): t for t in self.terminals(realm)})
        return cache[realm]

    def a_max(self, realm: str) -> int:
        return max((f.arity for f in self.functions(realm)), default=1)

    def tail_length(self, realm: str, head: int) -> int:
        return head * (self.a_max(realm) - 1) + 1

    def terminal(self, realm: str, name: str) -> Symbol:
        for t in self.terminals(realm):
            if t.name == name:
                return t
        raise GenomeError(f"unknown {realm} terminal {name!r}")


# -- expression trees ----------------------------------------------------------

@dataclass(frozen=True)
class ExprTree:
    """Decoded expression. ``plasmid`` holds the scalar tree of a ``p`` node."""

    symbol: object
    children: tuple = ()
    plasmid: ExprTree | None = None

    def nodes(self) -> int:
        n = 1 + sum(c.nodes() for c in self.children)
        if self.plasmid is not None:
            n += self.plasmid.nodes()
        return n

    def walk(self) -> Iterator[ExprTree]:
        yield self
        if self.plasmid is not None:
            yield from self.plasmid.walk()
        for c in self.children:
            yield from c.walk()

    def __str__(self):
        return infix(self)


def decode_elements(elements: Sequence) -> ExprTree:
    """Breadth-first (Karva) decoding of a linear element sequence."""
    starts = []
    n, i = 1, 0
    while i < n:
        starts.append(n)
        n += elements[i].arity
        i += 1

    def build(k: int) -> ExprTree:
        e = elements[k]
        if not e.arity:
            return ExprTree(e)
        kids = tuple(build(starts[k] + a) for a in range(e.arity))
        if isinstance(e, Plasmid):
            return ExprTree(e, kids, decode_gene(e.gene))
        return ExprTree(e, kids)

    return build(0)


def decode_gene(gene: Gene) -> ExprTree:
    return gene.tree


def expand_plasmids(tree: ExprTree) -> ExprTree:
    """Rewrite every ``p(X)`` as ``scale(plasmid expression, X)``."""
    if tree.symbol is P or isinstance(tree.symbol, Plasmid):
        if tree.plasmid is None:
            raise GenomeError("'p' node without a linked plasmid")
        return ExprTree(SCALE, (tree.plasmid, expand_plasmids(tree.children[0])))
    if not tree.children:
        return tree
    return ExprTree(tree.symbol, tuple(expand_plasmids(c) for c in tree.children))


def _token(e) -> str:
    if isinstance(e, Constant):
        return f"c={e.value!r}"
    return e.name


def tree_key(tree: ExprTree) -> str:
    """Prefix notation with plasmids inlined; equal expressions give equal keys."""
    e = tree.symbol
    if not tree.children:
        return _token(e)
    args = ",".join(tree_key(c) for c in tree.children)
    if tree.plasmid is not None:
        return f"p[{tree_key(tree.plasmid)}]({args})"
    return f"{e.name}({args})"


_PRETTY = {"add": "+", "sub": "-", "dot": "·", "mul": "×", "div": "/", "scale": "·"}


def infix(tree: ExprTree) -> str:
    e = tree.symbol
    if not tree.children:
        return f"{e.value:.6g}" if isinstance(e, Constant) else e.name
    if tree.plasmid is not None:
        return f"p[{infix(tree.plasmid)}]({infix(tree.children[0])})"
    a, b = (infix(c) for c in tree.children)
    return f"({a} {_PRETTY[e.op]} {b})"


# -- random construction -------------------------------------------------------

class GenomeFactory:
    """Random genes and chromosomes for one library and gene geometry.

    Owns the plasmid identity counter so that identities stay deterministic
    for a fixed RNG seed.
    """

    def __init__(self, library: Library, host_head: int = 5, plasmid_head: int = 10,
                 n_genes: int = 4, rng=None, first_uid: int = 1):
        if host_head < 1 or plasmid_head < 1 or n_genes < 1:
            raise GenomeError("head lengths and gene count must be positive")
        self.library = library
        self.host_head = host_head
        self.plasmid_head = plasmid_head
        self.n_genes = n_genes
        self.rng = np.random.default_rng(rng)
        self._uids = itertools.count(first_uid)
        self.host_tail = library.tail_length(TENSOR, host_head)
        self.plasmid_tail = library.tail_length(SCALAR, plasmid_head)
        self._pool = {
            (realm, in_head): (library.functions(realm) if in_head else ()) + library.terminals(realm)
            for realm in (TENSOR, SCALAR) for in_head in (True, False)
        }
        self._index = {key: {s: i for i, s in enumerate(pool)} for key, pool in self._pool.items()}

    def next_uid(self) -> int:
        return next(self._uids)

    def head_length(self, realm: str) -> int:
        return self.host_head if realm == TENSOR else self.plasmid_head

    def gene_length(self, realm: str) -> int:
        if realm == TENSOR:
            return self.host_head + self.host_tail
        return self.plasmid_head + self.plasmid_tail

    def materialize(self, symbol):
        """Turn a library symbol into a gene element (fresh plasmid / constant value)."""
        if symbol is P:
            return Plasmid(self.next_uid(), self.random_gene(SCALAR))
        if symbol is RNC:
            return Constant(float(self.rng.uniform(*RNC_RANGE)))
        return symbol

    def random_element(self, realm: str, in_head: bool, exclude=None):
        return self.replacement(realm, in_head, exclude, self.rng.random())

    def replacement(self, realm: str, in_head: bool, current, u: float):
        """Pool symbol picked by the uniform variate ``u``, skipping ``current``'s symbol."""
        key = (realm, in_head)
        pool = self._pool[key]
        cur = self._index[key].get(_library_symbol(current)) if current is not None else None
        if cur is None or len(pool) == 1:
            return self.materialize(pool[min(int(u * len(pool)), len(pool) - 1)])
        i = min(int(u * (len(pool) - 1)), len(pool) - 2)
        return self.materialize(pool[i + (i >= cur)])

    def random_gene(self, realm: str, head: int | None = None) -> Gene:
        h = self.head_length(realm) if head is None else head
        t = self.library.tail_length(realm, h)
        head_pool = self._pool[(realm, True)]
        tail_pool = self._pool[(realm, False)]
        hi = self.rng.integers(len(head_pool), size=h)
        ti = self.rng.integers(len(tail_pool), size=t)
        elems = [self.materialize(head_pool[i]) for i in hi]
        elems += [self.materialize(tail_pool[i]) for i in ti]
        return Gene(tuple(elems), h)

    def random_host(self) -> Host:
        return Host(tuple(self.random_gene(TENSOR) for _ in range(self.n_genes)))

    def copy_plasmid(self, p: Plasmid) -> Plasmid:
        """Duplicate with a fresh identity."""
        return Plasmid(self.next_uid(), p.gene)


def _library_symbol(element):
    if isinstance(element, Plasmid):
        return P
    if isinstance(element, Constant):
        return RNC
    return element


# -- validity ------------------------------------------------------------------

def validate_gene(gene: Gene, library: Library, realm: str, head: int,
                  plasmid_head: int | None = None) -> None:
    """Raise GenomeError unless ``gene`` has a valid head/tail composition.

    Attached plasmids are checked too, against ``plasmid_head`` when given.
    """
    if gene.head != head:
        raise GenomeError(f"head length {gene.head}, expected {head}")
    t = library.tail_length(realm, head)
    if len(gene.elements) != head + t:
        raise GenomeError(f"gene length {len(gene.elements)}, expected {head + t}")
    funcs, terms = library.pools(realm)
    for k, e in enumerate(gene.elements):
        s = _library_symbol(e)
        if e.realm != realm:
            raise GenomeError(f"position {k}: {realm} gene holds a {e.realm} element")
        if id(s) in terms:
            pass
        elif id(s) in funcs or s in funcs.values():
            if k >= head:
                raise GenomeError(f"position {k}: function {e.name!r} in the tail")
        elif s not in terms.values():
            raise GenomeError(f"position {k}: {e.name!r} is not in the {realm} library")
        if isinstance(e, Plasmid):
            validate_gene(e.gene, library, SCALAR, e.gene.head if plasmid_head is None else plasmid_head)


def validate_host(host: Host, factory: GenomeFactory) -> None:
    """Head/tail geometry of every gene plus plasmid linkage totality."""
    if host.n_genes != factory.n_genes:
        raise GenomeError(f"{host.n_genes} genes, expected {factory.n_genes}")
    for g in host.genes:
        validate_gene(g, factory.library, TENSOR, factory.host_head, factory.plasmid_head)
    uids = [p.uid for p in host.plasmids()]
    if len(set(uids)) != len(uids):
        raise GenomeError(f"plasmid identities are not unique: {uids}")


# -- serialization -------------------------------------------------------------

def _gene_tokens(gene: Gene, with_uids: bool) -> str:
    out = []
    for e in gene.elements:
        if isinstance(e, Plasmid):
            out.append(f"p#{e.uid}" if with_uids else "p{" + e.gene.content + "}")
        else:
            out.append(_token(e))
    return " ".join(out)


def serialize_gene(gene: Gene) -> str:
    return _gene_tokens(gene, True)


def serialize_host(host: Host, with_uids: bool = True) -> str:
    """``[g1 tokens] [g2 tokens] ... {p#3: plasmid tokens} ...``.

    Without uids, plasmid genes are written inline; this form is a content key.
    """
    text = " ".join("[" + _gene_tokens(g, with_uids) + "]" for g in host.genes)
    if with_uids:
        text += "".join(f" {{p#{p.uid}: {p.gene.content}}}" for p in host.plasmids())
    return text


_ADHOC_UIDS = itertools.count(1_000_000_000)
_GENE_RE = re.compile(r"\[([^\]]*)\]")
_PLASMID_RE = re.compile(r"\{p#(\d+):([^}]*)\}")


def _parse_tokens(tokens: list[str], library: Library, realm: str, head: int, plasmids=None) -> Gene:
    elems = []
    for k, tok in enumerate(tokens):
        if realm == TENSOR and tok.startswith("p#"):
            uid = int(tok[2:])
            if plasmids is None or uid not in plasmids:
                raise GenomeError(f"dangling plasmid link {tok}")
            elems.append(plasmids[uid])
        elif realm == SCALAR and tok.startswith("c="):
            if not library.rnc:
                raise GenomeError("random constants require RNC mode")
            elems.append(Constant(float(tok[2:])))
        else:
            funcs = {f.name: f for f in library.functions(realm)}
            if k < head and tok in funcs and tok != "p":
                elems.append(funcs[tok])
            else:
                elems.append(library.terminal(realm, tok))
    return Gene(tuple(elems), head)


def parse_host(text: str, library: Library, host_head: int, plasmid_head: int) -> Host:
    """Inverse of :func:`serialize_host` (uid form)."""
    plasmids = {}
    for uid, body in _PLASMID_RE.findall(text):
        gene = _parse_tokens(body.split(), library, SCALAR, plasmid_head)
        plasmids[int(uid)] = Plasmid(int(uid), gene)
    genes = [_parse_tokens(body.split(), library, TENSOR, host_head, plasmids)
             for body in _GENE_RE.findall(_PLASMID_RE.sub("", text))]
    if not genes:
        raise GenomeError(f"no genes in {text!r}")
    return Host(tuple(genes))


def gene_from_orf(tokens: Sequence[str], library: Library, realm: str, head: int,
                  plasmids: Sequence[Sequence[str]] = (), factory: GenomeFactory | None = None,
                  plasmid_head: int = 10, filler: str | None = None) -> Gene:
    """Build a gene from its expressed prefix, padding with a filler terminal.

    ``plasmids`` lists, in order, the ORF tokens of the plasmid attached to
    each ``p`` token. Handy for hand-built seed genes and tests.
    """
    length = head + library.tail_length(realm, head)
    if len(tokens) > length:
        raise GenomeError(f"ORF of {len(tokens)} tokens does not fit a gene of {length}")
    plist = list(plasmids)
    filler = filler or library.terminals(realm)[0].name
    elems = []
    for k, tok in enumerate(list(tokens) + [filler] * (length - len(tokens))):
        if realm == TENSOR and tok == "p":
            if not plist:
                raise GenomeError("more 'p' tokens than plasmids given")
            pg = gene_from_orf(plist.pop(0), library, SCALAR, plasmid_head)
            uid = factory.next_uid() if factory else next(_ADHOC_UIDS)
            elems.append(Plasmid(uid, pg))
        elif realm == SCALAR and tok.startswith("c="):
            elems.append(Constant(float(tok[2:])))
        else:
            funcs = {f.name: f for f in library.functions(realm)}
            if tok in funcs:
                if k >= head:
                    raise GenomeError(f"function {tok!r} would land in the tail")
                elems.append(funcs[tok])
            else:
                elems.append(library.terminal(realm, tok))
    gene = Gene(tuple(elems), head)
    if gene.orf_length > len(tokens):
        raise GenomeError(f"ORF {list(tokens)} is incomplete")
    return gene
