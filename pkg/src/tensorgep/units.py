"""Dimension-vector algebra and the dimensional homogeneity check."""

from __future__ import annotations

from dataclasses import dataclass

from .data import DimVector
from .genome import ExprTree, Host, decode_gene, expand_plasmids


@dataclass(frozen=True)
class DimResult:
    """Outcome of combining dimension vectors.

    ``dim`` is set only when homogeneous; ``location`` describes the node
    where homogeneity broke (or where the final dimension mismatched).
    """

    homogeneous: bool
    dim: DimVector | None = None
    location: str | None = None

    def __bool__(self):
        return self.homogeneous


_SUM = {"mul", "dot", "scale"}
_EQUAL = {"add", "sub"}


def dv_combine(op: str, a: DimVector, b: DimVector) -> DimResult:
    if op in _EQUAL:
        if a == b:
            return DimResult(True, a)
        return DimResult(False, location=f"{op}({a}, {b})")
    if op in _SUM:
        return DimResult(True, a + b)
    if op == "div":
        return DimResult(True, a - b)
    raise ValueError(f"unknown operation {op!r}")


def _fold(tree: ExprTree):
    """DimVector of ``tree`` or a failing DimResult; short-circuits on the first failure."""
    sym = tree.symbol
    if not tree.children:
        return sym.dim
    if sym.op == "p":
        raise ValueError("infer_dimension needs a plasmid-expanded tree")
    a = _fold(tree.children[0])
    if isinstance(a, DimResult):
        return a
    b = _fold(tree.children[1])
    if isinstance(b, DimResult):
        return b
    r = dv_combine(sym.op, a, b)
    if not r.homogeneous:
        return DimResult(False, location=f"{r.location} at node {str(tree)}")
    return r.dim


def infer_dimension(tree: ExprTree) -> DimResult:
    r = _fold(tree)
    if isinstance(r, DimResult):
        return r
    return DimResult(True, r)


@dataclass(frozen=True)
class GeneStatus:
    """A gene passes when it is homogeneous and its dimension equals the target's."""

    passed: bool
    result: DimResult
    reason: str | None = None

    def __bool__(self):
        return self.passed


def check_tree(tree: ExprTree, target_dim: DimVector) -> GeneStatus:
    """Check a plasmid-expanded tree against the target dimension."""
    r = infer_dimension(tree)
    if not r.homogeneous:
        return GeneStatus(False, r, f"inhomogeneous: {r.location}")
    if r.dim != target_dim:
        return GeneStatus(False, r, f"expression has {r.dim}, target has {target_dim}")
    return GeneStatus(True, r)


def check_individual(host: Host, target_dim: DimVector) -> list[GeneStatus]:
    """Per-gene check; the individual passes iff every entry is truthy."""
    return [check_tree(expand_plasmids(decode_gene(g)), target_dim) for g in host.genes]
