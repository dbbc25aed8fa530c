"""Synthetic datasets: Maxwell stress, isotropic turbulence decay, Newtonian stress.

Each generator returns a :class:`~tensorgep.data.Dataset` with SI dimension
vectors on every terminal, plus the matching terminal library and the
reference terms of the true relation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import sympy as sp
from scipy import constants
from scipy.integrate import solve_ivp

from .data import Dataset, DimVector
from .genome import TENSOR, Host, Library, gene_from_orf

EPS0 = constants.epsilon_0
MU0 = constants.mu_0

# SI dimension vectors, order (M, L, T, I, Θ, N, J)
DIM_E = DimVector.of(M=1, L=1, T=-3, I=-1)
DIM_B = DimVector.of(M=1, T=-2, I=-1)
DIM_EPS0 = DimVector.of(M=-1, L=-3, T=4, I=2)
DIM_MU0 = DimVector.of(M=1, L=1, T=-2, I=-2)
DIM_STRESS = DimVector.of(M=1, L=-1, T=-2)
DIM_K = DimVector.of(L=2, T=-2)
DIM_EPS = DimVector.of(L=2, T=-3)
DIM_RATE = DimVector.of(T=-1)
DIM_VISCOSITY = DimVector.of(M=1, L=-1, T=-1)


@dataclass(frozen=True)
class NoiseSpec:
    """Multiplicative Gaussian noise: ``x * (1 + level * N(0, 1))``."""

    level: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.level >= 0:
            raise ValueError(f"noise level must be non-negative, got {self.level}")

    def apply(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.level == 0:
            return x
        return x * (1.0 + self.level * rng.standard_normal(x.shape))


@dataclass(frozen=True)
class ReferenceTerm:
    """One term of a known relation as a host-gene ORF, with its true coefficient."""

    label: str
    orf: tuple[str, ...]
    plasmids: tuple[tuple[str, ...], ...]
    coefficient: float


def _outer(a: np.ndarray) -> np.ndarray:
    return np.einsum("ni,nj->nij", a, a)


# -- Maxwell stress ------------------------------------------------------------

def maxwell_fields(points: np.ndarray, e0: float = 1e6, b0: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    x, y, z = (np.pi * points[:, k] for k in range(3))
    E = e0 * np.stack([np.sin(x), np.cos(y), np.sin(z)], axis=1)
    B = b0 * np.stack([np.cos(x), np.sin(y), np.cos(z)], axis=1)
    return E, B


def maxwell_stress(E: np.ndarray, B: np.ndarray) -> np.ndarray:
    eye = np.eye(3)
    ekk = np.einsum("nk,nk->n", E, E)
    bkk = np.einsum("nk,nk->n", B, B)
    return (EPS0 * (_outer(E) - 0.5 * ekk[:, None, None] * eye)
            + (_outer(B) - 0.5 * bkk[:, None, None] * eye) / MU0)


def gen_maxwell(n_points: int = 150, noise: NoiseSpec | None = None, seed: int = 0,
                e0: float = 1e6, b0: float = 1e-3) -> Dataset:
    """Stress of sinusoidal E and B fields sampled uniformly in the cube [-1, 1]^3.

    With noise, E and B are perturbed first, the stress is computed from the
    perturbed fields and then perturbed again at the same level. Terminals
    come from the perturbed fields.
    """
    if n_points < 1:
        raise ValueError("n_points must be at least 1")
    points = np.random.default_rng(seed).uniform(-1.0, 1.0, size=(n_points, 3))
    E, B = maxwell_fields(points, e0, b0)
    noise = noise or NoiseSpec()
    nrng = np.random.default_rng(noise.seed)
    E = noise.apply(E, nrng)
    B = noise.apply(B, nrng)
    T = noise.apply(maxwell_stress(E, B), nrng)
    n = n_points
    return Dataset.from_arrays(
        scalars={
            "E_kE_k": (np.einsum("nk,nk->n", E, E), DIM_E + DIM_E),
            "B_kB_k": (np.einsum("nk,nk->n", B, B), DIM_B + DIM_B),
            "epsilon0": (np.full(n, EPS0), DIM_EPS0),
            "mu0": (np.full(n, MU0), DIM_MU0),
            "B0": (np.full(n, b0), DIM_B),
        },
        tensors={
            "E_iE_j": (_outer(E), DIM_E + DIM_E),
            "B_iB_j": (_outer(B), DIM_B + DIM_B),
            "delta_ij": ("identity", None),
        },
        target=("T_ij", T, DIM_STRESS),
        meta={"generator": "maxwell", "n_points": n_points, "noise": noise.level,
              "noise_seed": noise.seed, "seed": seed, "E0": e0, "B0": b0},
    )


MAXWELL_TENSORS = ("E_iE_j", "B_iB_j", "delta_ij")
MAXWELL_SCALARS = ("E_kE_k", "B_kB_k", "epsilon0", "mu0")
MAXWELL_SCALARS_WITH_B0 = ("E_kE_k", "B_kB_k", "epsilon0", "B0")


def maxwell_library(ds: Dataset, rnc: bool = True, scalars: Sequence[str] = MAXWELL_SCALARS) -> Library:
    return Library.from_dataset(ds, MAXWELL_TENSORS, scalars, rnc=rnc)


MAXWELL_TERMS = (
    ReferenceTerm("epsilon0·E_iE_j", ("p", "E_iE_j"), (("epsilon0",),), 1.0),
    ReferenceTerm("epsilon0·E_kE_k·delta_ij", ("p", "delta_ij"), (("*", "epsilon0", "E_kE_k"),), -0.5),
    # 1/mu0 has no one-node form; (B_kB_k / mu0) / B_kB_k in breadth-first order
    ReferenceTerm("B_iB_j/mu0", ("p", "B_iB_j"), (("/", "/", "B_kB_k", "B_kB_k", "mu0"),), 1.0),
    ReferenceTerm("B_kB_k·delta_ij/mu0", ("p", "delta_ij"), (("/", "B_kB_k", "mu0"),), -0.5),
)


# -- Reynolds stress decay -----------------------------------------------------

def gen_reynolds_decay(n_times: int = 100, k0: float = 4265.9, length_scale: float = 0.1,
                       c_eps: float = 1.92, t_range: tuple[float, float] = (1e-8, 1e-6)) -> Dataset:
    """Decay of isotropic turbulence, dk/dt = -eps, deps/dt = -C eps^2 / k.

    ``eps(0) = k0^1.5 / length_scale``. Emits R_ij = (2/3) k delta_ij and the
    exact rate dR_ij/dt = -(2/3) eps delta_ij at ``n_times`` evenly spaced instants.
    """
    if n_times < 2:
        raise ValueError("n_times must be at least 2")
    eps0 = k0 ** 1.5 / length_scale
    t = np.linspace(t_range[0], t_range[1], n_times)

    def rhs(_, y):
        k, e = y
        return [-e, -c_eps * e * e / k]

    sol = solve_ivp(rhs, (0.0, t[-1]), [k0, eps0], t_eval=t, method="DOP853", rtol=1e-13, atol=1e-12)
    if not sol.success:
        raise RuntimeError(f"decay integration failed: {sol.message}")
    k, e = sol.y
    eye = np.eye(3)
    return Dataset.from_arrays(
        scalars={"k": (k, DIM_K), "epsilon": (e, DIM_EPS)},
        tensors={"R_ij": ((2.0 / 3.0) * k[:, None, None] * eye, DIM_K), "delta_ij": ("identity", None)},
        target=("dR_ij/dt", -(2.0 / 3.0) * e[:, None, None] * eye, DIM_EPS),
        meta={"generator": "reynolds", "n_times": n_times, "k0": k0, "eps0": eps0, "C": c_eps,
              "t_min": t_range[0], "t_max": t_range[1]},
    )


def decay_solution(t: np.ndarray, k0: float, eps0: float, c_eps: float = 1.92) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form k(t), eps(t) of the decay system."""
    base = 1.0 + (c_eps - 1.0) * eps0 * t / k0
    k = k0 * base ** (-1.0 / (c_eps - 1.0))
    e = eps0 * base ** (-c_eps / (c_eps - 1.0))
    return k, e


def reynolds_library(ds: Dataset, rnc: bool = False) -> Library:
    return Library.from_dataset(ds, ("R_ij", "delta_ij"), ("k", "epsilon"), rnc=rnc)


REYNOLDS_TERMS = (
    ReferenceTerm("epsilon·delta_ij", ("p", "delta_ij"), (("epsilon",),), -2.0 / 3.0),
)


# -- Newtonian stress ------------------------------------------------------------

_x, _y = sp.symbols("x y", real=True)


def _velocity_gradient_funcs(compressible: bool, amplitude: float, length: float):
    """Lambdified components d u_i / d x_j of a manufactured 2D velocity field."""
    X, Y = sp.pi * _x / length, sp.pi * _y / length
    psi = amplitude * length / sp.pi * (sp.sin(X) * sp.sin(Y) + sp.Rational(3, 10) * sp.sin(2 * X + sp.Rational(1, 2)) * sp.cos(Y))
    u = sp.diff(psi, _y)
    v = -sp.diff(psi, _x)
    if compressible:
        phi = amplitude * length / sp.pi * sp.Rational(2, 5) * (sp.cos(X + sp.Rational(1, 3)) * sp.sin(sp.Rational(3, 2) * Y) + sp.Rational(1, 2) * sp.sin(X) ** 2)
        u = u + sp.diff(phi, _x)
        v = v + sp.diff(phi, _y)
    grads = [[sp.diff(u, _x), sp.diff(u, _y)], [sp.diff(v, _x), sp.diff(v, _y)]]
    return [[sp.lambdify((_x, _y), g, "numpy") for g in row] for row in grads]


def gen_newtonian_field(n_points: int = 400, compressible: bool = True, noise: NoiseSpec | None = None,
                        seed: int = 0, mu: float = 2.117e-5, amplitude: float = 100.0, length: float = 1.0,
                        p0: float = 100.0, p1: float = 20.0) -> Dataset:
    """Newtonian stress of a manufactured 2D flow sampled in [0.2, 0.8]^2 (scaled by ``length``).

    sigma_ij = -2 mu S_ij + (2/3) mu D_kk delta_ij + p delta_ij. Without
    compressibility the velocity comes from a stream function and D_kk is
    exactly zero. Noise perturbs the stress only.
    """
    if n_points < 1:
        raise ValueError("n_points must be at least 1")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.2 * length, 0.8 * length, size=(n_points, 2))
    x, y = pts[:, 0], pts[:, 1]
    g = _velocity_gradient_funcs(compressible, amplitude, length)
    grad = np.empty((n_points, 2, 2))
    for i in range(2):
        for j in range(2):
            grad[:, i, j] = np.broadcast_to(g[i][j](x, y), (n_points,))
    if not compressible:
        grad[:, 1, 1] = -grad[:, 0, 0]
    S = 0.5 * (grad + grad.transpose(0, 2, 1))
    dkk = grad[:, 0, 0] + grad[:, 1, 1]
    p = p0 + p1 * np.sin(np.pi * x / length) * np.cos(0.5 * np.pi * y / length)
    eye = np.eye(2)
    sigma = -2.0 * mu * S + ((2.0 / 3.0) * mu * dkk + p)[:, None, None] * eye
    noise = noise or NoiseSpec()
    sigma = noise.apply(sigma, np.random.default_rng(noise.seed))
    return Dataset.from_arrays(
        scalars={"D_kk": (dkk, DIM_RATE), "p": (p, DIM_STRESS), "mu": (np.full(n_points, mu), DIM_VISCOSITY)},
        tensors={"S_ij": (S, DIM_RATE), "delta_ij": ("identity", None)},
        target=("sigma_ij", sigma, DIM_STRESS),
        meta={"generator": "newtonian", "n_points": n_points, "compressible": compressible,
              "noise": noise.level, "noise_seed": noise.seed, "seed": seed, "mu": mu,
              "amplitude": amplitude, "length": length, "p0": p0, "p1": p1},
    )


def newtonian_library(ds: Dataset, rnc: bool = False) -> Library:
    return Library.from_dataset(ds, ("S_ij", "delta_ij"), ("D_kk", "p", "mu"), rnc=rnc)


NEWTONIAN_TERMS = (
    ReferenceTerm("mu·S_ij", ("p", "S_ij"), (("mu",),), -2.0),
    ReferenceTerm("mu·D_kk·delta_ij", ("p", "delta_ij"), (("*", "mu", "D_kk"),), 2.0 / 3.0),
    ReferenceTerm("p·delta_ij", ("p", "delta_ij"), (("p",),), 1.0),
)


def reference_host(terms: Sequence[ReferenceTerm], library: Library, host_head: int = 5,
                   plasmid_head: int = 10, factory=None) -> Host:
    """A chromosome with one gene per reference term."""
    return Host(tuple(gene_from_orf(t.orf, library, TENSOR, host_head, t.plasmids, factory=factory,
                                    plasmid_head=plasmid_head) for t in terms))


GENERATORS = {
    "maxwell": gen_maxwell,
    "reynolds": gen_reynolds_decay,
    "newtonian": gen_newtonian_field,
}
LIBRARIES = {
    "maxwell": maxwell_library,
    "reynolds": reynolds_library,
    "newtonian": newtonian_library,
}
REFERENCE_TERMS = {
    "maxwell": MAXWELL_TERMS,
    "reynolds": REYNOLDS_TERMS,
    "newtonian": NEWTONIAN_TERMS,
}
