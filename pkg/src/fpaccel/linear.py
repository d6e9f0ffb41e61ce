"""Linear accelerators: Richardson, Chebyshev, momentum, CG and truncated GCR.

All solvers report the residual norm ``||b - A x||`` and count products
with ``A`` as function evaluations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import NearBreakdown, NoRealRoot, StationaryResidual
from .linalg import PairedDirections
from .trace import (
    BREAKDOWN,
    BUDGET,
    CONVERGED,
    DIVERGED,
    ConvergenceTrace,
    CountedMap,
    StoppingRule,
    diverged,
)


class LinearOperator:
    """Callable wrapper around a dense matrix or a matvec function."""

    def __init__(self, A, n: int | None = None):
        if callable(A) and not isinstance(A, np.ndarray):
            if n is None:
                raise ValueError("dimension required for a matvec callable")
            self._apply, self.n, self.matrix = A, n, None
        else:
            M = np.atleast_2d(np.asarray(A, dtype=float))
            if M.shape[0] != M.shape[1]:
                raise ValueError("operator must be square")
            self._apply, self.n, self.matrix = M.__matmul__, M.shape[0], M

    def __call__(self, x: NDArray) -> NDArray:
        return self._apply(x)


def as_operator(A) -> LinearOperator:
    return A if isinstance(A, LinearOperator) else LinearOperator(A)


def _counted_op(A) -> CountedMap:
    return CountedMap(as_operator(A))


@dataclass(frozen=True)
class MomentumParams:
    eta: float
    nu: float


def _finish(trace: ConvergenceTrace, x: NDArray, status: str) -> ConvergenceTrace:
    trace.x, trace.status = x, status
    return trace


def _check(stop, res, res0, nfev, it):
    """Return a terminal status or ``None`` to continue."""
    if stop.converged(res, res0):
        return CONVERGED
    if diverged(res, res0):
        return DIVERGED
    if stop.exhausted(nfev, it):
        return BUDGET
    return None


def richardson_solve(A, b, x0, gamma, stop: StoppingRule = StoppingRule(), *, keep_iterates=False):
    """``x_{j+1} = x_j + gamma_j r_j`` with a constant, sequence or callable step."""
    if callable(gamma):
        step = gamma
    elif np.ndim(gamma) == 0:
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        step = lambda j: gamma  # noqa: E731
    else:
        seq = list(gamma)
        step = lambda j: seq[j % len(seq)]  # noqa: E731
    A = _counted_op(A)
    trace = ConvergenceTrace(method="richardson", iterates=[] if keep_iterates else None)
    x = np.array(x0, dtype=float)
    r = b - A(x)
    res0 = float(np.linalg.norm(r))
    trace.record(0, A.count, res0)
    trace.keep(x)
    j = 0
    while True:
        status = _check(stop, trace.records[-1].resnorm, res0, A.count, j)
        if status:
            return _finish(trace, x, status)
        x = x + step(j) * r
        r = b - A(x)
        j += 1
        trace.record(j, A.count, np.linalg.norm(r))
        trace.keep(x)


def mr_step(A, b, x):
    """One minimal-residual step ``x + gamma r`` with ``gamma = (r,Ar)/(Ar,Ar)``."""
    A = as_operator(A)
    r = b - A(x)
    Ar = A(r)
    den = float(Ar @ Ar)
    if den == 0.0:
        raise StationaryResidual("A r vanishes")
    return x + (float(r @ Ar) / den) * r


def sd_step(A, b, x):
    """One steepest-descent step ``x + gamma r`` with ``gamma = (r,r)/(Ar,r)``."""
    A = as_operator(A)
    r = b - A(x)
    Ar = A(r)
    den = float(Ar @ r)
    if den == 0.0:
        raise StationaryResidual("(A r, r) vanishes")
    return x + (float(r @ r) / den) * r


@dataclass
class ChebyshevState:
    theta: float
    delta: float
    sigma1: float
    rho: float
    d: NDArray


def chebyshev_limit_ratio(alpha: float, beta_ev: float) -> float:
    """Asymptotic ratio ``sigma1 - sqrt(sigma1^2 - 1)`` with ``sigma1 = theta/delta``."""
    theta, delta = (beta_ev + alpha) / 2, (beta_ev - alpha) / 2
    if delta == 0:
        return 0.0
    s = theta / delta
    return s - math.sqrt(s * s - 1.0)


def _chebyshev(A, b, x0, alpha, beta_ev, stop, stationary, keep_iterates):
    if not 0 < alpha <= beta_ev:
        raise ValueError("need 0 < alpha <= beta_ev")
    theta, delta = (beta_ev + alpha) / 2, (beta_ev - alpha) / 2
    if delta == 0.0:
        trace = richardson_solve(A, b, x0, 1.0 / theta, stop, keep_iterates=keep_iterates)
        trace.method = "chebyshev"
        return trace
    A = _counted_op(A)
    name = "stationary-chebyshev" if stationary else "chebyshev"
    trace = ConvergenceTrace(method=name, iterates=[] if keep_iterates else None)
    sigma1 = theta / delta
    rho_lim = sigma1 - math.sqrt(sigma1 * sigma1 - 1.0)
    x = np.array(x0, dtype=float)
    r = b - A(x)
    if stationary:
        st = ChebyshevState(theta, delta, sigma1, rho_lim, (2 * rho_lim / delta) * r)
    else:
        st = ChebyshevState(theta, delta, sigma1, 1.0 / sigma1, r / theta)
    res0 = float(np.linalg.norm(r))
    trace.record(0, A.count, res0)
    trace.keep(x)
    trace.info["rho"] = [st.rho]
    j = 0
    while True:
        status = _check(stop, trace.records[-1].resnorm, res0, A.count, j)
        if status:
            trace.info["state"] = st
            return _finish(trace, x, status)
        x = x + st.d
        r = r - A(st.d)
        if stationary:
            rho_new = rho_lim
        else:
            rho_new = 1.0 / (2 * sigma1 - st.rho)
        st.d = (2 * rho_new / delta) * r + (rho_new * st.rho) * st.d
        st.rho = rho_new
        trace.info["rho"].append(rho_new)
        j += 1
        trace.record(j, A.count, np.linalg.norm(r))
        trace.keep(x)


def chebyshev_solve(A, b, x0, alpha, beta_ev, stop: StoppingRule = StoppingRule(), *, keep_iterates=False):
    """Chebyshev acceleration on a spectrum bracketed by ``[alpha, beta_ev]``."""
    return _chebyshev(A, b, x0, alpha, beta_ev, stop, False, keep_iterates)


def stationary_chebyshev_solve(A, b, x0, alpha, beta_ev, stop: StoppingRule = StoppingRule(), *, keep_iterates=False):
    """Chebyshev with every ratio frozen at its limit.

    Started with ``d_0 = (2 rho/delta) r_0`` so that it coincides with heavy
    ball for ``eta = rho^2`` and ``nu = 2 rho/delta``.
    """
    return _chebyshev(A, b, x0, alpha, beta_ev, stop, True, keep_iterates)


def stationary_chebyshev_params(alpha: float, beta_ev: float) -> MomentumParams:
    rho = chebyshev_limit_ratio(alpha, beta_ev)
    return MomentumParams(eta=rho * rho, nu=2 * rho / ((beta_ev - alpha) / 2))


def heavy_ball(grad, x0, params: MomentumParams, stop: StoppingRule = StoppingRule(), *, keep_iterates=False):
    """``w_j = eta w_{j-1} + grad(x_j)``, ``x_{j+1} = x_j - nu w_j``; reports ``||grad(x_j)||``."""
    grad = CountedMap(grad)
    trace = ConvergenceTrace(method="heavy-ball", iterates=[] if keep_iterates else None)
    x = np.array(x0, dtype=float)
    w = np.zeros_like(x)
    gx = grad(x)
    res0 = float(np.linalg.norm(gx))
    trace.record(0, grad.count, res0)
    trace.keep(x)
    j = 0
    while True:
        status = _check(stop, trace.records[-1].resnorm, res0, grad.count, j)
        if status:
            return _finish(trace, x, status)
        w = params.eta * w + gx
        x = x - params.nu * w
        gx = grad(x)
        j += 1
        trace.record(j, grad.count, np.linalg.norm(gx))
        trace.keep(x)


def nesterov(grad, x0, params: MomentumParams, stop: StoppingRule = StoppingRule(), *, keep_iterates=False):
    """``x_{j+1} = z_j - nu grad(z_j)`` with ``z_j = x_j + eta (x_j - x_{j-1})``.

    Only the gradient at ``z_j`` is evaluated, so the trace reports its norm.
    """
    grad = CountedMap(grad)
    trace = ConvergenceTrace(method="nesterov", iterates=[] if keep_iterates else None)
    x = np.array(x0, dtype=float)
    x_prev = x.copy()
    res0 = None
    j = 0
    while True:
        z = x + params.eta * (x - x_prev)
        gz = grad(z)
        res = float(np.linalg.norm(gz))
        if res0 is None:
            res0 = res
        trace.record(j, grad.count, res)
        trace.keep(x)
        status = _check(stop, res, res0, grad.count, j)
        if status:
            return _finish(trace, z if status == CONVERGED else x, status)
        x_prev, x = x, z - params.nu * gz
        j += 1


def nesterov_tuning(theta2: float) -> float:
    """Smaller root of ``eta^2 - 2(2/theta2 - 1) eta + 1 = 0``."""
    if not theta2 > 0:
        raise ValueError("theta2 must be positive")
    c = 2.0 / theta2 - 1.0
    disc = c * c - 1.0
    if disc < 0:
        raise NoRealRoot(f"theta2={theta2} > 1 gives complex roots")
    return c - math.sqrt(disc)


def momentum_spectrum(mu: Sequence[float], eta: float) -> NDArray:
    """Moduli of ``mu +/- sqrt(mu^2 - eta)``, one row per ``mu``."""
    mu = np.asarray(mu, dtype=complex)
    root = np.sqrt(mu * mu - eta)
    return np.abs(np.column_stack([mu + root, mu - root]))


def nesterov_spectrum(mu: Sequence[float], eta: float) -> NDArray:
    """Moduli of the roots of ``lam^2 - (1+eta) mu lam + eta mu = 0``.

    Here ``mu`` are the eigenvalues of ``I - nu A``.
    """
    mu = np.asarray(mu, dtype=complex)
    b = (1 + eta) * mu
    root = np.sqrt(b * b - 4 * eta * mu)
    return np.abs(np.column_stack([(b + root) / 2, (b - root) / 2]))


def cg_solve(A, b, x0, stop: StoppingRule = StoppingRule(), *, keep_iterates=False):
    """Conjugate gradient. Directions are kept in ``info['directions']`` when requested."""
    A = _counted_op(A)
    trace = ConvergenceTrace(method="cg", iterates=[] if keep_iterates else None)
    x = np.array(x0, dtype=float)
    r = b - A(x)
    p = r.copy()
    rr = float(r @ r)
    res0 = math.sqrt(rr)
    trace.record(0, A.count, res0)
    trace.keep(x)
    dirs = [] if keep_iterates else None
    j = 0
    while True:
        status = _check(stop, trace.records[-1].resnorm, res0, A.count, j)
        if status:
            trace.info["directions"] = dirs
            return _finish(trace, x, status)
        Ap = A(p)
        pAp = float(Ap @ p)
        if pAp <= 0.0:
            trace.mark("breakdown")
            return _finish(trace, x, BREAKDOWN)
        if dirs is not None:
            dirs.append(p.copy())
        alpha = rr / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
        j += 1
        trace.record(j, A.count, math.sqrt(rr))
        trace.keep(x)


def tgcr_solve(A, b, x0, m: int | None = None, stop: StoppingRule = StoppingRule(), *, keep_iterates=False):
    """Truncated GCR(m); ``m=None`` keeps every direction (minimal residual).

    Returns the trace and the live direction pairs ``(P, V)`` with ``V = A P``
    orthonormal.
    """
    A = _counted_op(A)
    b = np.asarray(b, dtype=float)
    trace = ConvergenceTrace(method=f"tgcr({m if m else 'inf'})", iterates=[] if keep_iterates else None)
    x = np.array(x0, dtype=float)
    r = b - A(x) if np.any(x) else b.copy()
    res0 = float(np.linalg.norm(r))
    trace.record(0, A.count, res0)
    trace.keep(x)
    dirs = PairedDirections(b.size, m)
    if res0 == 0.0:
        return _finish(trace, x, CONVERGED), dirs
    try:
        dirs.add(r, A(r))
    except NearBreakdown:
        trace.mark("breakdown")
        return _finish(trace, x, BREAKDOWN), dirs
    j = 0
    while True:
        p, v = dirs._P[-1], dirs._V[-1]
        a = float(r @ v)
        x = x + a * p
        r = r - a * v
        j += 1
        res = float(np.linalg.norm(r))
        trace.record(j, A.count, res)
        trace.keep(x)
        status = _check(stop, res, res0, A.count, j)
        if status:
            return _finish(trace, x, status), dirs
        try:
            dirs.add(r, A(r))
        except NearBreakdown:
            trace.mark("breakdown")
            return _finish(trace, x, BREAKDOWN), dirs
