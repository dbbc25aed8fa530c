"""Independent reference implementations used to cross-check the library."""

import numpy as np
from scipy.optimize import least_squares

from tensorgep.genome import Constant, Plasmid


def karva_nested(elements):
    """Queue-based breadth-first decoding into nested ``(element, [children])`` pairs."""
    nodes = [(elements[0], [])]
    queue = [nodes[0]]
    k = 1
    while queue:
        nxt = []
        for node in queue:
            for _ in range(node[0].arity):
                child = (elements[k], [])
                k += 1
                node[1].append(child)
                nxt.append(child)
        queue = nxt
    return nodes[0]


def brute_dv(node):
    """Exponent array of a nested tree, None when inhomogeneous. Plasmids are decoded on the fly."""
    e, kids = node
    if isinstance(e, Constant):
        return np.zeros(7, dtype=int)
    if isinstance(e, Plasmid):
        s = brute_dv(karva_nested(e.gene.elements))
        x = brute_dv(kids[0])
        if s is None or x is None:
            return None
        return s + x
    if not kids:
        return np.array(e.dim.exponents, dtype=int)
    a, b = brute_dv(kids[0]), brute_dv(kids[1])
    if a is None or b is None:
        return None
    if e.name in ("+", "-"):
        return a if np.array_equal(a, b) else None
    if e.name in ("*", "."):
        return a + b
    if e.name == "/":
        return a - b
    raise ValueError(e.name)


def iterative_tlr(features, y, x0=None):
    """Minimise the component-normalised tensor loss with a generic trust-region solver.

    ``features`` is (n, d, d, k), ``y`` is (n, d, d). Works from the raw loss
    definition without normal equations.
    """
    norms = np.sqrt(np.einsum("nij,nij->ij", y, y))
    mask = norms > 0

    def residual(w):
        r = (features @ w - y)[:, mask] / norms[mask]
        return r.ravel()

    k = features.shape[-1]
    x0 = np.zeros(k) if x0 is None else x0
    sol = least_squares(residual, x0, method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
    return sol.x, float(np.sum(residual(sol.x) ** 2))


def raw_loss(features, y, w):
    norms2 = np.einsum("nij,nij->ij", y, y)
    r = features @ w - y
    num = np.einsum("nij,nij->ij", r, r)
    m = norms2 > 0
    return float(np.sum(num[m] / norms2[m]))
