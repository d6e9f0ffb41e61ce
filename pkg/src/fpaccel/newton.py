"""Secant updates, directional derivatives and inexact Newton-Krylov."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy import linalg as sla

from .errors import DegenerateDenominator, RankDeficient, ZeroDirection
from .linear import LinearOperator, tgcr_solve
from .trace import BUDGET, CONVERGED, DIVERGED, ConvergenceTrace, StoppingRule, counted, diverged

SQRT_EPS = math.sqrt(np.finfo(float).eps)


def broyden1_update(J: NDArray, dx: NDArray, df: NDArray) -> NDArray:
    """Good Broyden: ``J + (df - J dx) dx^T / (dx^T dx)``."""
    J = np.atleast_2d(np.asarray(J, dtype=float))
    dx, df = np.atleast_1d(dx).astype(float), np.atleast_1d(df).astype(float)
    den = float(dx @ dx)
    if den == 0.0:
        raise DegenerateDenominator("zero step")
    return J + np.outer(df - J @ dx, dx) / den


def broyden2_update(G: NDArray, dx: NDArray, df: NDArray) -> NDArray:
    """Bad Broyden on the inverse: ``G + (dx - G df) df^T / (df^T df)``."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    dx, df = np.atleast_1d(dx).astype(float), np.atleast_1d(df).astype(float)
    den = float(df @ df)
    if den == 0.0:
        raise DegenerateDenominator("zero residual change")
    return G + np.outer(dx - G @ df, df) / den


@dataclass
class MultisecantMap:
    """``G = -beta I + (X + beta F)(F^T F + tau I)^{-1} F^T`` kept in factored form."""

    X: NDArray
    F: NDArray
    beta: float
    W: NDArray  # (X + beta F)(F^T F)^{-1}

    def __call__(self, v: NDArray) -> NDArray:
        return -self.beta * v + self.W @ (self.F.T @ v)

    def matrix(self) -> NDArray:
        n = self.X.shape[0]
        return -self.beta * np.eye(n) + self.W @ self.F.T


def multisecant_update(X: NDArray, F: NDArray, beta: float, tau_reg: float = 0.0) -> MultisecantMap:
    """Block type-II secant update with base ``-beta I``; satisfies ``G F = X``."""
    X = np.asarray(X, dtype=float).reshape(len(X), -1)
    F = np.asarray(F, dtype=float).reshape(len(F), -1)
    B = X + beta * F
    M = F.T @ F + tau_reg * np.eye(F.shape[1])
    if np.linalg.cond(M) > 1e14:
        raise RankDeficient("F^T F is numerically singular")
    try:
        Wt = sla.cho_solve(sla.cho_factor(M), B.T)
    except np.linalg.LinAlgError as exc:
        raise RankDeficient("F^T F is singular") from exc
    return MultisecantMap(X, F, beta, Wt.T)


def frechet_apply(f, x: NDArray, p: NDArray, eps: float | str = "auto", fx: NDArray | None = None) -> NDArray:
    """Forward difference ``(f(x + eps p) - f(x)) / eps``.

    ``eps="auto"`` uses ``sqrt(machine eps) (1 + ||x||) / ||p||``. Pass ``fx``
    when ``f(x)`` is already known to save an evaluation.
    """
    pn = float(np.linalg.norm(p))
    if pn == 0.0:
        raise ZeroDirection("direction is zero")
    if eps == "auto":
        eps = SQRT_EPS * (1.0 + float(np.linalg.norm(x))) / pn
    if fx is None:
        fx = f(x)
    return (f(x + eps * p) - fx) / eps


@dataclass
class ForcingSchedule:
    """Eisenstat-Walker choice 2 with the usual safeguards."""

    eta0: float = 0.5
    eta_max: float = 0.9
    eta_min: float = 1e-12
    alpha: float = (1.0 + math.sqrt(5.0)) / 2.0
    history: list[float] = field(default_factory=list)

    def next(self, fnorm: float, fnorm_prev: float | None, linres_prev: float | None) -> float:
        if fnorm_prev is None or linres_prev is None:
            eta = self.eta0
        else:
            eta = abs(fnorm - linres_prev) / fnorm_prev
            prev = self.history[-1]
            if prev**self.alpha > 0.1:
                eta = max(eta, prev**self.alpha)
        eta = min(self.eta_max, max(eta, self.eta_min))
        self.history.append(eta)
        return eta


def inexact_newton_solve(
    f,
    x0: NDArray,
    inner_m: int | None = None,
    forcing: ForcingSchedule | None = None,
    stop: StoppingRule = StoppingRule(),
    *,
    inner_max: int = 200,
    eps: float | str = "auto",
) -> ConvergenceTrace:
    """Newton-Krylov: solve ``J dx = -f`` with TGCR to relative tolerance ``eta_k``.

    Jacobian products are forward differences and count as evaluations.
    ``trace.info`` holds per-outer-step forcing terms and inner counts.
    """
    f = counted(f)
    forcing = forcing or ForcingSchedule()
    trace = ConvergenceTrace(method="newton")
    x = np.array(x0, dtype=float)
    fx = f(x)
    res0 = fnorm = float(np.linalg.norm(fx))
    trace.record(0, f.count, fnorm)
    inner_counts = trace.info["inner"] = []
    etas = trace.info["eta"] = []
    fnorm_prev = linres_prev = None
    k = 0
    while True:
        if stop.converged(fnorm, res0):
            trace.x, trace.status = x, CONVERGED
            return trace
        if diverged(fnorm, res0):
            trace.x, trace.status = x, DIVERGED
            return trace
        if stop.exhausted(f.count, k):
            trace.x, trace.status = x, BUDGET
            return trace
        eta = forcing.next(fnorm, fnorm_prev, linres_prev)
        etas.append(eta)
        xk, fk = x, fx
        J = LinearOperator(lambda p: frechet_apply(f, xk, p, eps, fx=fk), x.size)
        budget = min(inner_max, max(stop.max_fevals - f.count - 1, 1))
        inner, _ = tgcr_solve(J, -fx, np.zeros_like(x), inner_m, StoppingRule(eta, budget))
        inner_counts.append(len(inner.records) - 1)
        event = "" if inner.converged else "inner-stagnation"
        linres_prev = inner.records[-1].resnorm
        fnorm_prev = fnorm
        x = x + inner.x
        fx = f(x)
        fnorm = float(np.linalg.norm(fx))
        k += 1
        trace.record(k, f.count, fnorm, event)


def broyden_solve(
    f,
    x0: NDArray,
    kind: int = 2,
    mu: float = 1.0,
    stop: StoppingRule = StoppingRule(),
) -> ConvergenceTrace:
    """Dense Broyden iteration for ``f(x) = 0`` starting from ``J_0 = I/mu``.

    ``kind=1`` updates ``J`` and solves with it; ``kind=2`` updates the
    inverse ``G``. The first step is the fixed-point step ``x - mu f(x)``.
    """
    if kind not in (1, 2):
        raise ValueError("kind must be 1 or 2")
    f = counted(f)
    trace = ConvergenceTrace(method=f"broyden{kind}")
    x = np.array(x0, dtype=float)
    n = x.size
    B = np.eye(n) / mu if kind == 1 else mu * np.eye(n)
    fx = f(x)
    res0 = res = float(np.linalg.norm(fx))
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
        event = ""
        try:
            dx = -np.linalg.solve(B, fx) if kind == 1 else -(B @ fx)
        except np.linalg.LinAlgError:
            B = np.eye(n) / mu if kind == 1 else mu * np.eye(n)
            dx = -mu * fx
            event = "restart"
        x_new = x + dx
        f_new = f(x_new)
        df = f_new - fx
        try:
            B = broyden1_update(B, dx, df) if kind == 1 else broyden2_update(B, dx, df)
        except DegenerateDenominator:
            event = "restart"
            B = np.eye(n) / mu if kind == 1 else mu * np.eye(n)
        x, fx = x_new, f_new
        res = float(np.linalg.norm(fx))
        j += 1
        trace.record(j, f.count, res, event)
