"""Anderson acceleration with pluggable least-squares backends, and AA-TGS.

Both solvers work on a fixed-point map ``g`` and its residual
``f(x) = g(x) - x``; one evaluation of ``g`` is spent per iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import AccelError, NearBreakdown
from .linalg import (
    PairedDirections,
    QRFactors,
    cholesky_downdate,
    givens_downdate,
    lstsq_qr,
    mgs_insert,
    polar_downdate_factors,
    solve_regularized_normal,
)
from .trace import BUDGET, CONVERGED, DIVERGED, ConvergenceTrace, StoppingRule, counted, diverged

BACKENDS = ("normal", "qr", "chol", "polar")
TGS_RESTART_TOL = 1e-12


@dataclass(frozen=True)
class AAConfig:
    """Window ``m`` (``None`` keeps everything), restart period, mixing and backend."""

    m: int | None = 5
    restart: int | None = None
    beta: float = 1.0
    backend: str = "qr"
    tau_reg: float = 0.0

    def __post_init__(self):
        if self.m is not None and self.m < 1:
            raise ValueError("window m must be at least 1")
        if self.restart is not None and self.restart < 1:
            raise ValueError("restart period must be at least 1")
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}; choose from {BACKENDS}")
        if self.tau_reg < 0 or not np.isfinite(self.beta):
            raise ValueError("need tau_reg >= 0 and finite beta")


class DifferenceWindow:
    """Last ``m`` pairs ``(dx, df)``, oldest evicted first."""

    def __init__(self, m: int | None):
        self.m = m
        self.dX: list[NDArray] = []
        self.dF: list[NDArray] = []

    def __len__(self) -> int:
        return len(self.dX)

    @property
    def full(self) -> bool:
        return self.m is not None and len(self) >= self.m

    def push(self, dx: NDArray, df: NDArray) -> None:
        if self.full:
            self.evict()
        self.dX.append(dx)
        self.dF.append(df)

    def evict(self) -> None:
        self.dX.pop(0)
        self.dF.pop(0)

    def clear(self) -> None:
        self.dX.clear()
        self.dF.clear()

    def X(self) -> NDArray:
        return np.column_stack(self.dX)

    def F(self) -> NDArray:
        return np.column_stack(self.dF)


class _LeastSquares:
    """Solves ``min ||f - F gamma||`` for the current window; returns the update pieces."""

    def __init__(self, cfg: AAConfig, n: int):
        self.cfg = cfg
        self.n = n
        self.window = DifferenceWindow(cfg.m)
        self.capacity = cfg.m if cfg.m is not None else 1 << 30
        self.qr = QRFactors.empty(n, self.capacity)

    def clear(self) -> None:
        self.window.clear()
        self.qr = QRFactors.empty(self.n, self.capacity)

    def push(self, dx: NDArray, df: NDArray) -> None:
        if self.cfg.backend == "normal":
            self.window.push(dx, df)
            return
        if self.window.full:
            self.window.evict()
            self.qr = self._downdate(self.qr)
        self.qr, _, _ = mgs_insert(self.qr, df)
        self.window.push(dx, df)

    def _downdate(self, qr: QRFactors) -> QRFactors:
        if self.cfg.backend == "qr":
            return givens_downdate(qr)
        if self.cfg.backend == "chol":
            return cholesky_downdate(qr)
        return polar_downdate_factors(qr)

    def solve(self, f: NDArray) -> tuple[NDArray, NDArray]:
        """Return ``gamma`` and the fitted vector ``F gamma``."""
        if self.cfg.backend == "normal":
            F = self.window.F()
            gamma = solve_regularized_normal(F, f, self.cfg.tau_reg)
            return gamma, F @ gamma
        gamma = lstsq_qr(self.qr, f)
        return gamma, self.qr.Q @ (self.qr.Q.T @ f)


def aa_solve(
    g,
    x0: NDArray,
    cfg: AAConfig = AAConfig(),
    stop: StoppingRule = StoppingRule(),
    *,
    keep_iterates: bool = False,
) -> ConvergenceTrace:
    """Anderson acceleration AA(m) with optional restarts every ``cfg.restart`` steps.

    A failing least-squares solve flushes the window and falls back to a
    plain mixing step; the event is tagged ``flush`` in the trace.
    """
    g = counted(g)
    name = f"aa({cfg.m if cfg.m else 'inf'},{cfg.restart or '-'})"
    trace = ConvergenceTrace(method=name, iterates=[] if keep_iterates else None)
    x = np.array(x0, dtype=float)
    f = g(x) - x
    res0 = float(np.linalg.norm(f))
    trace.record(0, g.count, res0)
    trace.keep(x)
    if stop.converged(res0, res0) or stop.exhausted(g.count, 0):
        trace.x, trace.status = x, CONVERGED if stop.converged(res0, res0) else BUDGET
        return trace
    ls = _LeastSquares(cfg, x.size)
    x_new = x + cfg.beta * f
    since_restart = 0
    j = 0
    gammas = trace.info.setdefault("gamma", []) if keep_iterates else None
    while True:
        f_new = g(x_new) - x_new
        j += 1
        res = float(np.linalg.norm(f_new))
        trace.record(j, g.count, res)
        trace.keep(x_new)
        dx, df = x_new - x, f_new - f
        x, f = x_new, f_new
        if stop.converged(res, res0):
            trace.x, trace.status = x, CONVERGED
            return trace
        if diverged(res, res0):
            trace.x, trace.status = x, DIVERGED
            return trace
        if stop.exhausted(g.count, j):
            trace.x, trace.status = x, BUDGET
            return trace

        if cfg.restart is not None and since_restart >= cfg.restart:
            ls.clear()
            since_restart = 0
            trace.mark("restart")
        since_restart += 1
        try:
            ls.push(dx, df)
            gamma, fitted = ls.solve(f)
        except AccelError:
            ls.clear()
            trace.mark("flush")
            x_new = x + cfg.beta * f
            continue
        if gammas is not None:
            gammas.append(gamma)
        x_new = x - ls.window.X() @ gamma + cfg.beta * (f - fitted)


@dataclass
class TGSState:
    """Paired bases and the Gram-Schmidt coefficients of AA-TGS."""

    dirs: PairedDirections
    coeffs: list[tuple[int, NDArray, float]] = field(default_factory=list)
    etas: list[NDArray] = field(default_factory=list)
    step: int = 0

    @property
    def Q(self) -> NDArray:
        return self.dirs.V

    @property
    def U(self) -> NDArray:
        return self.dirs.P

    def coefficient_matrix(self) -> NDArray:
        """Dense upper-triangular ``S`` with ``s_ik`` at row ``i``, column ``k`` (global indices)."""
        n = len(self.coeffs)
        S = np.zeros((n, n))
        for k, (_, h, skk) in enumerate(self.coeffs):
            S[k - h.size : k, k] = h
            S[k, k] = skk
        return S


def aa_tgs_solve(
    g,
    x0: NDArray,
    cfg: AAConfig = AAConfig(),
    stop: StoppingRule = StoppingRule(),
    *,
    keep_iterates: bool = False,
) -> ConvergenceTrace:
    """AA-TGS(m): Anderson with a truncated Gram-Schmidt basis ``Q`` and partner ``U``.

    Restarts when ``s_jj <= 1e-12 ||df||`` or every ``cfg.restart`` steps.
    The state is exposed as ``trace.info['tgs']``.
    """
    g = counted(g)
    name = f"aatgs({cfg.m if cfg.m else 'inf'})"
    trace = ConvergenceTrace(method=name, iterates=[] if keep_iterates else None)
    x = np.array(x0, dtype=float)
    f = g(x) - x
    res0 = float(np.linalg.norm(f))
    trace.record(0, g.count, res0)
    trace.keep(x)
    state = TGSState(PairedDirections(x.size, cfg.m, tol=TGS_RESTART_TOL, evict_first=True))
    trace.info["tgs"] = state
    if stop.converged(res0, res0) or stop.exhausted(g.count, 0):
        trace.x, trace.status = x, CONVERGED if stop.converged(res0, res0) else BUDGET
        return trace
    x_new = x + cfg.beta * f
    since_restart = 0
    j = 0
    while True:
        f_new = g(x_new) - x_new
        j += 1
        res = float(np.linalg.norm(f_new))
        trace.record(j, g.count, res)
        trace.keep(x_new)
        dx, df = x_new - x, f_new - f
        x, f = x_new, f_new
        if stop.converged(res, res0):
            trace.x, trace.status = x, CONVERGED
            return trace
        if diverged(res, res0):
            trace.x, trace.status = x, DIVERGED
            return trace
        if stop.exhausted(g.count, j):
            trace.x, trace.status = x, BUDGET
            return trace

        if cfg.restart is not None and since_restart >= cfg.restart:
            state.dirs.clear()
            since_restart = 0
            trace.mark("restart")
        since_restart += 1
        try:
            h, sjj = state.dirs.add(dx, df)
        except NearBreakdown:
            state.dirs.clear()
            trace.mark("restart")
            try:
                h, sjj = state.dirs.add(dx, df)
            except NearBreakdown:
                x_new = x + cfg.beta * f
                continue
        state.coeffs.append((state.step, h, sjj))
        state.step += 1
        Q, U = state.Q, state.U
        eta = Q.T @ f
        if keep_iterates:
            state.etas.append(eta)
        x_new = (x - U @ eta) + cfg.beta * (f - Q @ eta)


def gamma_to_theta(gamma: NDArray) -> NDArray:
    """Coefficients on ``f_i - f_j`` from coefficients on consecutive differences."""
    return np.diff(np.asarray(gamma, dtype=float), prepend=0.0)


def theta_to_gamma(theta: NDArray) -> NDArray:
    return np.cumsum(np.asarray(theta, dtype=float))


def diis_weights(theta: NDArray) -> NDArray:
    """Constrained mixing weights: append ``1 - sum(theta)`` so they sum to one."""
    theta = np.asarray(theta, dtype=float).ravel()
    return np.append(theta, 1.0 - theta.sum())
