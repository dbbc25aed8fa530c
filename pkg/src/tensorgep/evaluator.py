"""Numeric evaluation of expression trees, tensor linear regression and the tensor loss.

Each host gene is one tensor feature ``X_g``. The prediction is
``y_hat = sum_g w_g X_g`` with ``w`` minimising the component-normalised loss

    L = sum_ij ||y_hat_ij - y_ij||^2 / ||y_ij||^2

whose closed-form minimiser is

    w = (sum_ij Theta_ij^T Theta_ij / y_ij^T y_ij)^-1 (sum_ij Theta_ij^T y_ij / y_ij^T y_ij).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.linalg.lapack import dpocon

from .data import Dataset, DimVector
from .genome import Constant, ExprTree, Gene, Host, decode_gene, expand_plasmids
from .units import check_tree

log = logging.getLogger(__name__)

PENALTY = 1e12
INDEPENDENCE_TOL = 1e-10
RCOND_MIN = 1e-14


class NumericError(ArithmeticError):
    """A node produced a non-finite value or divided by zero."""


class Penalized(Exception):
    """Evaluation stopped; the individual gets the penalty loss."""

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


# -- tree evaluation -----------------------------------------------------------

def _leaf(sym, ds: Dataset):
    if isinstance(sym, Constant):
        return sym.value
    if sym.realm == "tensor":
        return ds.tensors[sym.name].values
    return ds.scalars[sym.name].values


def _eval(tree: ExprTree, ds: Dataset):
    if not tree.children:
        return _leaf(tree.symbol, ds)
    op = tree.symbol.op
    if op == "p":
        raise ValueError("eval_tree needs a plasmid-expanded tree")
    a = _eval(tree.children[0], ds)
    b = _eval(tree.children[1], ds)
    if op == "add":
        out = a + b
    elif op == "sub":
        out = a - b
    elif op == "mul":
        out = a * b
    elif op == "div":
        if np.any(np.asarray(b) == 0):
            raise NumericError(f"division by zero in {tree}")
        out = a / b
    elif op == "dot":
        out = np.matmul(a, b)
    elif op == "scale":
        out = (a[:, None, None] if np.ndim(a) else a) * b
    else:
        raise ValueError(f"unknown operation {op!r}")
    if not np.all(np.isfinite(out)):
        raise NumericError(f"non-finite value in {tree}")
    return out


def eval_tree(tree: ExprTree, ds: Dataset) -> np.ndarray:
    """Pointwise values: ``(n_data,)`` for scalar trees, ``(n_data, d, d)`` for tensor trees.

    Raises NumericError on division by zero, overflow or NaN anywhere in the tree.
    """
    with np.errstate(all="ignore"):
        out = _eval(tree, ds)
    if np.ndim(out) == 0:
        out = np.full(ds.n_data, float(out))
    return np.asarray(out, dtype=float)


# -- target normalisation ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Target:
    """Target tensor with its component norms; zero-norm components are excluded."""

    values: np.ndarray
    norms2: np.ndarray
    mask: np.ndarray

    @classmethod
    def from_values(cls, y: np.ndarray, warn: bool = True) -> Target:
        y = np.asarray(y, dtype=float)
        norms2 = np.einsum("nij,nij->ij", y, y)
        mask = norms2 > 0
        if not mask.any():
            raise ValueError("every target component is identically zero")
        if warn and not mask.all():
            idx = [f"{i + 1}{j + 1}" for i, j in zip(*np.nonzero(~mask))]
            log.warning("target components %s are identically zero; excluded from the loss", ", ".join(idx))
        return cls(y, norms2, mask)

    @property
    def n_components(self) -> int:
        return int(self.mask.sum())

    def stack(self, values: np.ndarray) -> np.ndarray:
        """Rows of included components scaled by ``1/||y_ij||``; works on ``(n,d,d)`` and ``(n,d,d,k)``."""
        scale = 1.0 / np.sqrt(self.norms2[self.mask])
        sel = values[:, self.mask]
        if sel.ndim == 2:
            return (sel * scale).T.reshape(-1)
        return (sel * scale[None, :, None]).transpose(1, 0, 2).reshape(-1, sel.shape[-1])

    @property
    def stacked(self) -> np.ndarray:
        return self.stack(self.values)


def _as_target(y) -> Target:
    return y if isinstance(y, Target) else Target.from_values(y)


def tensor_loss(y_hat: np.ndarray, y) -> float:
    """Sum over tensor components of ``||y_hat_ij - y_ij||^2 / ||y_ij||^2``."""
    t = _as_target(y)
    r = np.asarray(y_hat, dtype=float) - t.values
    num = np.einsum("nij,nij->ij", r, r)
    return float(np.sum(num[t.mask] / t.norms2[t.mask]))


# -- features and regression ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Gene feature values ``(n_data, d, d, k)``; ``genes[c]`` is the gene behind column ``c``."""

    values: np.ndarray
    genes: tuple[int, ...]

    @property
    def n_columns(self) -> int:
        return self.values.shape[-1]

    def component(self, i: int, j: int) -> np.ndarray:
        """The ``n_data x k`` block Theta_ij."""
        return self.values[:, i, j, :]

    def columns(self, keep: Sequence[int]) -> FeatureMatrix:
        keep = list(keep)
        return FeatureMatrix(self.values[..., keep], tuple(self.genes[c] for c in keep))


def independent_columns(m: np.ndarray, tol: float = INDEPENDENCE_TOL) -> list[int]:
    """Greedy left-to-right Gram-Schmidt: keep a column iff its residual exceeds ``tol * norm``."""
    basis: list[np.ndarray] = []
    keep = []
    for c in range(m.shape[1]):
        v = m[:, c]
        nrm = np.linalg.norm(v)
        if nrm == 0 or not np.isfinite(nrm):
            continue
        r = v / nrm
        for _ in range(2):  # re-orthogonalise once
            for q in basis:
                r = r - (q @ r) * q
        rn = np.linalg.norm(r)
        if rn > tol:
            basis.append(r / rn)
            keep.append(c)
    return keep


def select_independent(fm: FeatureMatrix, y=None, tol: float = INDEPENDENCE_TOL) -> FeatureMatrix:
    """Drop columns linearly dependent on earlier ones.

    Columns are stacked over the tensor components that enter the loss
    (normalised like the regression rows when ``y`` is given).
    """
    if fm.n_columns == 0:
        raise Penalized("degenerate", "no features")
    if y is None:
        m = fm.values.reshape(-1, fm.n_columns)
    else:
        m = _as_target(y).stack(fm.values)
    keep = independent_columns(m, tol)
    if not keep:
        raise Penalized("degenerate", "all features vanish")
    return fm.columns(keep)


def solve_normal(m: np.ndarray, rhs: np.ndarray, rcond_min: float = RCOND_MIN) -> np.ndarray:
    """Least squares through the equilibrated normal equations and a Cholesky factor."""
    a = m.T @ m
    b = m.T @ rhs
    d = np.sqrt(np.diag(a))
    if not np.all(d > 0):
        raise Penalized("degenerate", "zero feature column")
    s = 1.0 / d
    a_s = a * s[:, None] * s[None, :]
    try:
        c, lower = cho_factor(a_s, lower=False, check_finite=False)
    except LinAlgError:
        raise Penalized("degenerate", "normal matrix is not positive definite") from None
    rcond, info = dpocon(c, np.linalg.norm(a_s, 1))
    if info != 0 or not rcond >= rcond_min:
        raise Penalized("degenerate", f"normal matrix is singular (rcond={rcond:.3g})")
    return s * cho_solve((c, lower), s * b, check_finite=False)


def tlr_solve(fm: FeatureMatrix, y, rcond_min: float = RCOND_MIN) -> np.ndarray:
    """Coefficient vector minimising the tensor loss for the given features."""
    t = _as_target(y)
    return solve_normal(t.stack(fm.values), t.stacked, rcond_min)


def predict(fm: FeatureMatrix, w: np.ndarray) -> np.ndarray:
    return fm.values @ np.asarray(w, dtype=float)


# -- individuals ---------------------------------------------------------------

@dataclass(frozen=True)
class EvalConfig:
    penalty: float = PENALTY
    independence_tol: float = INDEPENDENCE_TOL
    rcond_min: float = RCOND_MIN


@dataclass(frozen=True)
class FitResult:
    """Regression outcome for one individual.

    ``coefficients[c]`` belongs to gene ``genes[c]``; dropped genes have none.
    """

    loss: float
    coefficients: tuple[float, ...] = ()
    genes: tuple[int, ...] = ()
    status: str = "ok"
    penalty_reason: str | None = None
    n_genes: int = 0
    dim_passed: bool = True

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def weights(self) -> np.ndarray:
        """Per-gene weights with zeros for genes dropped by feature selection."""
        w = np.zeros(self.n_genes)
        for g, c in zip(self.genes, self.coefficients):
            w[g] = c
        return w


class GeneCache:
    """Memo of per-gene dimension checks and feature values, keyed by expressed content.

    Evaluation is pure, so hits return exactly what a recomputation would;
    the cache is dropped wholesale when it exceeds ``max_bytes``.
    """

    def __init__(self, max_bytes: int = 256 * 2**20):
        self.max_bytes = max_bytes
        self._dims: dict[str, str | None] = {}
        self._values: dict[str, np.ndarray | None] = {}
        self._bytes = 0

    def dimension(self, gene: Gene, target_dim: DimVector) -> str | None:
        """None when the gene passes, else a failure description."""
        key = gene.key
        try:
            return self._dims[key]
        except KeyError:
            pass
        status = check_tree(_expanded(gene), target_dim)
        out = None if status else (status.reason or "dimension")
        if len(self._dims) > 1_000_000:
            self._dims.clear()
        self._dims[key] = out
        return out

    def feature(self, gene: Gene, ds: Dataset) -> np.ndarray | None:
        """Feature values, or None when evaluation fails numerically."""
        key = gene.key
        try:
            return self._values[key]
        except KeyError:
            pass
        try:
            v = eval_tree(_expanded(gene), ds)
            v.setflags(write=False)
        except NumericError:
            v = None
        if v is not None:
            self._bytes += v.nbytes
            if self._bytes > self.max_bytes:
                self._values.clear()
                self._bytes = v.nbytes
        self._values[key] = v
        return v


def _expanded(gene: Gene) -> ExprTree:
    return expand_plasmids(decode_gene(gene))


def build_features(host: Host, ds: Dataset, target_dim: DimVector | None = None,
                   cache: GeneCache | None = None) -> FeatureMatrix:
    """Dimension-check every gene, then evaluate each into a feature column.

    Raises Penalized('dimension') if any gene fails the check and
    Penalized('numeric') if any gene fails to evaluate.
    """
    target_dim = ds.target.dim if target_dim is None else target_dim
    cache = cache if cache is not None else GeneCache()
    for k, g in enumerate(host.genes):
        why = cache.dimension(g, target_dim)
        if why is not None:
            raise Penalized("dimension", f"gene {k}: {why}")
    cols = []
    for k, g in enumerate(host.genes):
        v = cache.feature(g, ds)
        if v is None:
            raise Penalized("numeric", f"gene {k}")
        cols.append(v)
    return FeatureMatrix(np.stack(cols, axis=-1), tuple(range(len(cols))))


def fit_features(fm: FeatureMatrix, target: Target, cfg: EvalConfig = EvalConfig()) -> tuple[FeatureMatrix, np.ndarray, float]:
    """Selection, regression and loss for a prepared feature matrix."""
    reduced = select_independent(fm, target, cfg.independence_tol)
    w = tlr_solve(reduced, target, cfg.rcond_min)
    with np.errstate(all="ignore"):
        loss = tensor_loss(predict(reduced, w), target)
    if not np.isfinite(loss):
        raise Penalized("numeric", "non-finite loss")
    return reduced, w, loss


def evaluate_individual(host: Host, ds: Dataset, cfg: EvalConfig = EvalConfig(),
                        cache: GeneCache | None = None, target: Target | None = None) -> FitResult:
    """Full pipeline; every failure folds into a penalised FitResult."""
    target = target if target is not None else Target.from_values(ds.target.values)
    n = host.n_genes
    try:
        fm = build_features(host, ds, ds.target.dim, cache)
        reduced, w, loss = fit_features(fm, target, cfg)
    except Penalized as p:
        return FitResult(cfg.penalty, status="penalized", penalty_reason=p.reason, n_genes=n,
                         dim_passed=p.reason != "dimension")
    return FitResult(loss, tuple(float(x) for x in w), reduced.genes, n_genes=n)

