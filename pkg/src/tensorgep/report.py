"""Symbolic summaries of fitted chromosomes.

A fitted host is turned into a sympy expression: tensor terminals become
non-commutative symbols, the identity becomes ``1`` and scalars stay
commutative, so expanding the weighted sum of genes yields a list of
monomial terms. Terms whose removal barely changes the loss are pruned.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import sympy as sp

from .data import DIMENSIONLESS, Dataset, DimVector
from .evaluator import FeatureMatrix, FitResult, Target, eval_tree, solve_normal, tensor_loss
from .genome import TENSOR, Constant, ExprTree, Host, Library, expand_plasmids, gene_from_orf, serialize_host

PRUNE_REL = 1e-3
PRUNE_ATOL = 1e-20


# -- sympy conversion ----------------------------------------------------------

class SymbolTable:
    """sympy symbols for the terminals of one dataset."""

    def __init__(self, ds: Dataset):
        self.ds = ds
        self.symbols: dict[str, sp.Symbol] = {}
        self.dims: dict[sp.Symbol, DimVector] = {}
        self.identity = next((n for n, t in ds.tensors.items() if t.identity), "delta_ij")
        for name, f in ds.scalars.items():
            s = sp.Symbol(name)
            self.symbols[name] = s
            self.dims[s] = f.dim
        for name, f in ds.tensors.items():
            if f.identity:
                continue
            s = sp.Symbol(name, commutative=False)
            self.symbols[name] = s
            self.dims[s] = f.dim

    def leaf(self, e) -> sp.Expr:
        if isinstance(e, Constant):
            return sp.Float(e.value)
        if e.realm == TENSOR and self.ds.tensors[e.name].identity:
            return sp.Integer(1)
        return self.symbols[e.name]


def to_sympy(tree: ExprTree, table: SymbolTable) -> sp.Expr:
    """Plasmid-expanded tree to a sympy expression."""
    if not tree.children:
        return table.leaf(tree.symbol)
    a, b = (to_sympy(c, table) for c in tree.children)
    op = tree.symbol.op
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "div":
        return a / b
    if op in ("mul", "dot", "scale"):
        return a * b
    raise ValueError(f"unknown operation {op!r}")


def gene_expression(gene, table: SymbolTable) -> sp.Expr:
    return to_sympy(expand_plasmids(gene.tree), table)


# -- numeric evaluation of sympy terms -----------------------------------------

def _is_tensor(v) -> bool:
    return np.ndim(v) == 3


def _as_tensor(v, n: int, d: int) -> np.ndarray:
    if _is_tensor(v):
        return v
    return np.broadcast_to(np.asarray(v, dtype=float), (n,))[:, None, None] * np.eye(d)


def eval_sympy(expr: sp.Expr, table: SymbolTable):
    """Values of a converted expression: a number, ``(n,)`` or ``(n, d, d)``; bare scalars mean scalar·identity."""
    ds = table.ds
    n, d = ds.n_data, ds.n_dim
    if expr.is_Number:
        return float(expr)
    if expr.is_Symbol:
        name = expr.name
        return ds.scalars[name].values if expr.is_commutative else ds.tensors[name].values
    args = [eval_sympy(a, table) for a in expr.args]
    if expr.is_Add:
        if any(_is_tensor(a) for a in args):
            args = [_as_tensor(a, n, d) for a in args]
        out = args[0]
        for a in args[1:]:
            out = out + a
        return out
    if expr.is_Mul:
        scal = 1.0
        ten = None
        for a in args:
            if _is_tensor(a):
                ten = a if ten is None else np.matmul(ten, a)
            else:
                scal = scal * a
        if ten is None:
            return scal
        return (scal[:, None, None] if np.ndim(scal) else scal) * ten
    if expr.is_Pow:
        base, ex = args
        if _is_tensor(base):
            k = int(expr.exp)
            if k < 1:
                raise ValueError("negative powers of tensors are not supported")
            out = base
            for _ in range(k - 1):
                out = np.matmul(out, base)
            return out
        return np.power(base, ex)
    raise ValueError(f"cannot evaluate {expr!r}")


def term_values(expr: sp.Expr, table: SymbolTable) -> np.ndarray:
    with np.errstate(all="ignore"):
        return _as_tensor(eval_sympy(expr, table), table.ds.n_data, table.ds.n_dim)


# -- terms ---------------------------------------------------------------------

def sympy_dim(expr: sp.Expr, table: SymbolTable) -> DimVector:
    if expr.is_Number:
        return DIMENSIONLESS
    if expr.is_Symbol:
        return table.dims[expr]
    if expr.is_Mul:
        out = DIMENSIONLESS
        for a in expr.args:
            out = out + sympy_dim(a, table)
        return out
    if expr.is_Pow:
        base = sympy_dim(expr.base, table)
        k = int(expr.exp)
        return DimVector(tuple(k * x for x in base.exponents))
    if expr.is_Add:
        return sympy_dim(expr.args[0], table)
    raise ValueError(f"cannot infer the dimension of {expr!r}")


def split_term(term: sp.Expr) -> tuple[float, sp.Expr]:
    """``(numeric coefficient, monomial)`` of one expanded term."""
    coeff, rest = term.as_coeff_Mul()
    return float(coeff), rest


def format_monomial(mono: sp.Expr, identity: str) -> str:
    num, den, ten = [], [], []
    factors = sp.Mul.make_args(mono)
    for f in factors:
        if f == 1:
            continue
        if not f.is_commutative:
            ten.append(_factor_str(f))
            continue
        if f.is_Pow and f.exp.is_Number and f.exp < 0:
            base = _factor_str(f.base)
            den.append(base if f.exp == -1 else f"{base}^{-f.exp}")
        else:
            num.append(_factor_str(f))
    if not ten:
        ten = [identity]
    text = "·".join(num + ten)
    if den:
        text += "/" + ("·".join(den) if len(den) == 1 else "(" + "·".join(den) + ")")
    return text


def _factor_str(f: sp.Expr) -> str:
    if f.is_Symbol:
        return f.name
    if f.is_Pow and f.exp.is_Integer:
        return f"{_factor_str(f.base)}^{int(f.exp)}"
    return "(" + sp.sstr(f) + ")"


def format_coefficient(c: float) -> str:
    a = abs(c)
    if a == 0 or 1e-3 <= a < 1e4:
        return f"{a:.4f}"
    return f"{a:.4e}"


def format_sum(lhs: str, terms: Sequence[Term]) -> str:
    if not terms:
        return f"{lhs} = 0"
    parts = []
    for k, t in enumerate(terms):
        sign = "-" if t.coefficient < 0 else "+"
        body = f"{format_coefficient(t.coefficient)}·{t.label}"
        parts.append(("-" + body if sign == "-" else body) if k == 0 else f" {sign} {body}")
    return f"{lhs} = " + "".join(parts)


@dataclass
class Term:
    label: str
    coefficient: float
    dim: DimVector
    genes: tuple[int, ...]
    monomial: sp.Expr = field(repr=False, compare=False)
    values: np.ndarray = field(repr=False, compare=False)

    def as_dict(self) -> dict:
        return {"term": self.label, "coefficient": self.coefficient,
                "dim": list(self.dim.exponents), "genes": list(self.genes)}


def expand_terms(host: Host, weights: Sequence[float], table: SymbolTable) -> list[Term]:
    """Expanded weighted sum of genes, like monomials merged; zero-weight genes are skipped."""
    coeffs: dict[sp.Expr, float] = defaultdict(float)
    sources: dict[sp.Expr, set] = defaultdict(set)
    order: list[sp.Expr] = []
    for k, (gene, w) in enumerate(zip(host.genes, weights)):
        if w == 0:
            continue
        expr = sp.expand(gene_expression(gene, table))
        for term in sp.Add.make_args(expr):
            c, mono = split_term(term)
            if mono not in coeffs:
                order.append(mono)
            coeffs[mono] += w * c
            sources[mono].add(k)
    terms = []
    for mono in order:
        c = coeffs[mono]
        if c == 0:
            continue
        terms.append(Term(format_monomial(mono, table.identity), c, sympy_dim(mono, table),
                          tuple(sorted(sources[mono])), mono, term_values(mono, table)))
    return terms


def terms_prediction(terms: Sequence[Term], ds: Dataset) -> np.ndarray:
    out = np.zeros((ds.n_data, ds.n_dim, ds.n_dim))
    for t in terms:
        out = out + t.coefficient * t.values
    return out


def prune_terms(terms: Sequence[Term], target: Target, rel: float = PRUNE_REL,
                atol: float = PRUNE_ATOL) -> tuple[list[Term], float, float]:
    """Greedily drop the term whose removal raises the loss least, while the total rise stays below
    ``rel * max(full_loss, atol)``. Returns (kept terms, full loss, pruned loss)."""
    pred = np.zeros(target.values.shape)
    for t in terms:
        pred = pred + t.coefficient * t.values
    with np.errstate(all="ignore"):
        full = tensor_loss(pred, target)
    budget = rel * max(full, atol)
    kept = list(terms)
    current = full
    while kept:
        trials = []
        for k, t in enumerate(kept):
            with np.errstate(all="ignore"):
                trials.append((tensor_loss(pred - t.coefficient * t.values, target), k))
        loss, k = min(trials)
        if not loss - full < budget:
            break
        pred = pred - kept[k].coefficient * kept[k].values
        current = loss
        del kept[k]
    return kept, full, current


# -- reference-basis projection ------------------------------------------------

def reference_features(ds: Dataset, library: Library, terms, host_head: int = 5,
                       plasmid_head: int = 10) -> FeatureMatrix:
    cols = []
    for t in terms:
        g = gene_from_orf(t.orf, library, TENSOR, host_head, t.plasmids, plasmid_head=plasmid_head)
        cols.append(eval_tree(expand_plasmids(g.tree), ds))
    return FeatureMatrix(np.stack(cols, axis=-1), tuple(range(len(cols))))


def project(prediction: np.ndarray, basis: FeatureMatrix, target: Target) -> tuple[np.ndarray, float]:
    """Coefficients of ``prediction`` in ``basis`` under the target's component weighting,
    and the relative residual (tensor loss of the projection against the prediction,
    both measured with the target's norms)."""
    w = solve_normal(target.stack(basis.values), target.stack(prediction), rcond_min=0.0)
    resid = target.stack(basis.values @ w) - target.stack(prediction)
    scale = max(float(np.sum(target.stack(prediction) ** 2)), 1e-300)
    return w, float(np.sum(resid ** 2) / scale)


# -- reports -------------------------------------------------------------------

@dataclass
class Report:
    target: str
    chromosome: str
    loss: float
    status: str
    genes: list[dict]
    terms: list[Term]
    pruned: list[Term]
    full_loss: float
    pruned_loss: float
    prune_rel: float
    generations: int | None = None
    reached_threshold: bool | None = None

    @property
    def equation(self) -> str:
        return format_sum(self.target, self.terms)

    @property
    def pruned_equation(self) -> str:
        return format_sum(self.target, self.pruned)

    def as_dict(self) -> dict:
        return {
            "target": self.target,
            "chromosome": self.chromosome,
            "loss": self.loss,
            "status": self.status,
            "generations": self.generations,
            "reached_threshold": self.reached_threshold,
            "genes": self.genes,
            "equation": self.equation,
            "terms": [t.as_dict() for t in self.terms],
            "pruned_equation": self.pruned_equation,
            "pruned_terms": [t.as_dict() for t in self.pruned],
            "full_loss": self.full_loss,
            "pruned_loss": self.pruned_loss,
            "prune_rel": self.prune_rel,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, ensure_ascii=False) + "\n"

    def to_text(self) -> str:
        lines = [f"target: {self.target}", f"loss: {self.loss!r} ({self.status})"]
        if self.generations is not None:
            state = "threshold reached" if self.reached_threshold else "threshold not reached"
            lines.append(f"generations: {self.generations} ({state})")
        lines.append(f"chromosome: {self.chromosome}")
        lines.append("genes:")
        for g in self.genes:
            lines.append(f"  g{g['index']}  w={g['weight']!r}  {g['expression']}")
        lines.append("expression:")
        lines.append(f"  {self.equation}")
        lines.append(f"pruned (loss {self.pruned_loss!r}, relative threshold {self.prune_rel:g}):")
        lines.append(f"  {self.pruned_equation}")
        return "\n".join(lines) + "\n"


def build_report(host: Host, fit: FitResult, ds: Dataset, prune_rel: float = PRUNE_REL,
                 generations: int | None = None, reached: bool | None = None) -> Report:
    table = SymbolTable(ds)
    target = Target.from_values(ds.target.values, warn=False)
    weights = fit.weights() if fit.ok else np.zeros(host.n_genes)
    genes = []
    for k, g in enumerate(host.genes):
        genes.append({"index": k, "weight": float(weights[k]), "expression": str(expand_plasmids(g.tree)),
                      "selected": k in fit.genes})
    terms = expand_terms(host, weights, table) if fit.ok else []
    pruned, full, pl = prune_terms(terms, target, prune_rel) if terms else ([], fit.loss, fit.loss)
    return Report(ds.target.name, serialize_host(host), fit.loss, fit.status, genes, terms, pruned,
                  full, pl, prune_rel, generations, reached)


# -- batch aggregation ---------------------------------------------------------

def structure_of(report: Report) -> tuple[str, ...]:
    return tuple(sorted(t.label for t in report.pruned))


def aggregate(reports: Sequence[Report]) -> dict:
    """Structure frequencies plus per-term coefficient mean and std over runs with the modal structure."""
    if not reports:
        raise ValueError("nothing to aggregate")
    structures = [structure_of(r) for r in reports]
    freq = Counter(structures)
    modal = min(freq, key=lambda s: (-freq[s], len(s), s))
    members = [r for r, s in zip(reports, structures) if s == modal]
    stats = {}
    for label in modal:
        vals = np.array([next(t.coefficient for t in r.pruned if t.label == label) for r in members])
        stats[label] = {"mean": float(vals.mean()), "std": float(vals.std()), "n": int(len(vals))}
    return {
        "target": reports[0].target,
        "runs": len(reports),
        "modal_structure": list(modal),
        "modal_count": freq[modal],
        "structures": [{"terms": list(s), "count": c} for s, c in
                       sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))],
        "coefficients": stats,
    }


def format_aggregate(agg: dict, lhs: str) -> str:
    lines = [f"runs: {agg['runs']}", f"modal structure ({agg['modal_count']} runs):"]
    parts = []
    for label, s in agg["coefficients"].items():
        parts.append(f"({s['mean']:.6g} ± {s['std']:.2g})·{label}")
    lines.append(f"  {lhs} = " + " + ".join(parts) if parts else f"  {lhs} = 0")
    lines.append("structure frequencies:")
    for s in agg["structures"]:
        lines.append(f"  {s['count']:>5}  {' + '.join(s['terms']) or '0'}")
    return "\n".join(lines) + "\n"
