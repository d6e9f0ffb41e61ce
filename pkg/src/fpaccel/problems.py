"""Test problems: atan partial sums, 2-D Bratu, Lennard-Jones clusters, linear systems."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .errors import CoincidentAtoms
from .trace import BUDGET, CONVERGED, DIVERGED, ConvergenceTrace, CountedMap, StoppingRule, counted, diverged

NN_DISTANCE = 2.0 ** (1.0 / 6.0)
LJ_EOPT = -579.4639


def atan_partial_sums(n: int, z: float = 1.0) -> NDArray:
    """``x_0 = 0`` and ``x_{j+1} = x_j + (-1)^j z^{2j+1}/(2j+1)`` for ``j < n``."""
    if n < 1:
        raise ValueError("n must be positive")
    j = np.arange(n)
    terms = (-1.0) ** j * z ** (2 * j + 1) / (2 * j + 1)
    return np.concatenate([[0.0], np.cumsum(terms)])


# Bratu


@dataclass(frozen=True)
class BratuSpec:
    """Bratu problem on the unit square with ``nx`` interior points per side.

    ``scaled=False`` gives the plain discretization ``Lap_h u + lam e^u``.
    ``scaled=True`` multiplies it by ``-h^2``; that form has a positive
    definite Jacobian with spectrum in (0, 8), which is the one the
    fixed-point map ``u - mu f(u)`` with ``mu = 0.1`` needs.
    """

    nx: int = 100
    lam: float = 0.5
    mu: float = 0.1
    scaled: bool = False

    def __post_init__(self):
        if self.nx < 1:
            raise ValueError("nx must be positive")

    @property
    def h(self) -> float:
        return 1.0 / (self.nx + 1)

    @property
    def n(self) -> int:
        return self.nx * self.nx


def bratu_residual(spec: BratuSpec, u: NDArray) -> NDArray:
    """Five-point residual, row-major grid, zero Dirichlet boundary."""
    u = np.asarray(u, dtype=float)
    if u.shape != (spec.n,):
        raise ValueError(f"expected {spec.n} unknowns, got {u.shape}")
    U = np.pad(u.reshape(spec.nx, spec.nx), 1)
    C = U[1:-1, 1:-1]
    stencil = U[:-2, 1:-1] + U[2:, 1:-1] + U[1:-1, :-2] + U[1:-1, 2:] - 4.0 * C
    if spec.scaled:
        f = -stencil - spec.h**2 * spec.lam * np.exp(C)
    else:
        f = stencil / spec.h**2 + spec.lam * np.exp(C)
    return f.ravel()


def bratu_initial_guess(spec: BratuSpec, seed: int) -> NDArray:
    return np.random.default_rng(seed).random(spec.n)


# Lennard-Jones


@dataclass(frozen=True)
class LJSpec:
    cells: int = 3
    mu: float = 1e-4
    perturbation: float = 0.01
    seed: int = 0

    @property
    def atoms(self) -> int:
        return 4 * self.cells**3


def fcc_init(cells: int, perturbation: float = 0.01, seed: int = 0) -> NDArray:
    """FCC lattice with nearest-neighbour spacing ``2^(1/6)``, shape ``(4 cells^3, 3)``.

    Positions get Gaussian noise with standard deviation
    ``perturbation * 2^(1/6)``.
    """
    if cells < 1:
        raise ValueError("cells must be positive")
    a = NN_DISTANCE * np.sqrt(2.0)
    basis = np.array([[0, 0, 0], [0.5, 0.5, 0], [0.5, 0, 0.5], [0, 0.5, 0.5]])
    grid = np.array([(i, j, k) for i in range(cells) for j in range(cells) for k in range(cells)], dtype=float)
    pos = (grid[:, None, :] + basis[None, :, :]).reshape(-1, 3) * a
    if perturbation:
        rng = np.random.default_rng(seed)
        pos = pos + rng.normal(scale=perturbation * NN_DISTANCE, size=pos.shape)
    return pos


def lj_energy_gradient(x: NDArray) -> tuple[float, NDArray]:
    """Total energy and its gradient (flattened) for positions ``x``."""
    pos = np.asarray(x, dtype=float).reshape(-1, 3)
    diff = pos[:, None, :] - pos[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    iu = np.triu_indices(len(pos), 1)
    if len(pos) > 1 and r2[iu].min() <= 1e-16:
        raise CoincidentAtoms("two atoms closer than 1e-8")
    np.fill_diagonal(r2, np.inf)
    inv6 = r2**-3
    energy = 4.0 * float(np.sum(np.triu(inv6 * inv6 - inv6, 1)))
    # dE/dx_i = sum_j (-48 r^-14 + 24 r^-8) (x_i - x_j)
    coef = (-48.0 * inv6 * inv6 + 24.0 * inv6) / r2
    grad = np.einsum("ij,ijk->ik", coef, diff)
    return energy, grad.ravel()


def lj_energy(x: NDArray) -> float:
    return lj_energy_gradient(x)[0]


def lj_gradient(x: NDArray) -> NDArray:
    return lj_energy_gradient(x)[1]


# Fixed-point plumbing


def fixed_point_wrap(f: Callable[[NDArray], NDArray], mu: float) -> CountedMap:
    """``g(x) = x - mu f(x)``; shares the evaluation counter of ``f`` when it has one."""
    if mu == 0:
        raise ValueError("mu must be nonzero")
    f = counted(f)
    inner = f.fn
    return f.share(lambda x: x - mu * inner(x))


def adapt_gd_solve(f, x0: NDArray, mu0: float, stop: StoppingRule = StoppingRule()) -> ConvergenceTrace:
    """Gradient descent ``x - mu f(x)``; ``mu`` shrinks by 0.3 when ``||f||`` grows, else grows by 1.05."""
    if not mu0 > 0:
        raise ValueError("mu0 must be positive")
    f = counted(f)
    trace = ConvergenceTrace(method="adaptgd")
    x = np.array(x0, dtype=float)
    fx = f(x)
    res0 = res = float(np.linalg.norm(fx))
    mu = mu0
    mus = trace.info["mu"] = [mu]
    trace.record(0, f.count, res)
    j = 0
    while True:
        if stop.converged(res, res0):
            trace.x, trace.status = x, CONVERGED
            return trace
        if diverged(res, res0):
            trace.x, trace.status = x, DIVERGED
            return trace
        if stop.exhausted(f.count, j):
            trace.x, trace.status = x, BUDGET
            return trace
        x = x - mu * fx
        fx = f(x)
        new = float(np.linalg.norm(fx))
        mu *= 0.3 if new > res else 1.05
        mus.append(mu)
        res = new
        j += 1
        trace.record(j, f.count, res)


# Linear test systems


@dataclass
class LinearProblem:
    kind: str
    A: NDArray
    b: NDArray
    x_star: NDArray
    eigenvalues: NDArray | None = None
    M: NDArray | None = None
    info: dict = field(default_factory=dict)


def make_linear_problem(kind: str, n: int, seed: int = 0, kappa: float = 10.0) -> LinearProblem:
    """Deterministic systems with known solutions.

    ``spd-diag``: diagonal with eigenvalues in ``[1, kappa]`` (both ends hit).
    ``nonsymmetric``: ``I + G/(2 sqrt n)`` with Gaussian ``G``.
    ``contraction-map``: ``A = I - M`` with ``M`` of spectral radius 0.9;
    the associated fixed-point map is ``x -> M x + b``.
    """
    rng = np.random.default_rng(seed)
    x_star = rng.standard_normal(n)
    M = None
    eig = None
    if kind == "spd-diag":
        inner = rng.uniform(1.0, kappa, size=max(n - 2, 0))
        eig = np.sort(np.concatenate([[1.0, kappa][: min(n, 2)], inner]))
        A = np.diag(eig)
    elif kind == "nonsymmetric":
        A = np.eye(n) + rng.standard_normal((n, n)) / (2.0 * np.sqrt(n))
    elif kind == "contraction-map":
        G = rng.standard_normal((n, n))
        M = 0.9 * G / np.max(np.abs(np.linalg.eigvals(G)))
        A = np.eye(n) - M
    else:
        raise ValueError(f"unknown kind {kind!r}")
    prob = LinearProblem(kind, A, A @ x_star, x_star, eig, M)
    if M is not None:
        prob.info["spectral_radius"] = float(np.max(np.abs(np.linalg.eigvals(M))))
    return prob
