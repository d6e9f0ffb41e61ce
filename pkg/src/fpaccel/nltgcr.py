"""Nonlinear truncated GCR with nonlinear, linearized and adaptive residual updates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .errors import NearBreakdown
from .linalg import PairedDirections, multisecant_view
from .newton import frechet_apply
from .trace import BUDGET, CONVERGED, DIVERGED, ConvergenceTrace, StoppingRule, counted, diverged

MODES = ("nl", "lin", "adapt")

__all__ = [
    "MODES",
    "NLTGCRConfig",
    "ResidualDeviation",
    "adaptive_mode_controller",
    "multisecant_view",
    "nltgcr_solve",
]


@dataclass(frozen=True)
class NLTGCRConfig:
    """Window, residual-update mode and the knobs of the linearized mode.

    ``restart`` is the maximum length of a linearized segment and
    ``lin_decrease`` the linear-residual reduction that also ends one.
    ``jvp(x, p)`` replaces the forward difference when an exact Jacobian
    product is available.
    """

    m: int = 5
    mode: str = "nl"
    tau_switch: float = 0.01
    restart: int = 200
    probe_period: int = 5
    lin_decrease: float = 1e-2
    eps: float | str = "auto"
    jvp: Callable[[NDArray, NDArray], NDArray] | None = None

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("window m must be at least 1")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if not self.tau_switch > 0:
            raise ValueError("tau_switch must be positive")


@dataclass
class ResidualDeviation:
    linear: NDArray
    actual: NDArray
    tau_switch: float = 0.01

    @property
    def deviation(self) -> NDArray:
        return self.linear - self.actual

    @property
    def d(self) -> float:
        """``1 - cos`` of the angle between the linear and actual residuals."""
        a, b = np.linalg.norm(self.linear), np.linalg.norm(self.actual)
        if a == 0.0 or b == 0.0:
            return 2.0
        return float(1.0 - (self.linear @ self.actual) / (a * b))


def adaptive_mode_controller(state: ResidualDeviation) -> str:
    """``"lin"`` when the two residuals are aligned to within ``tau_switch``, else ``"nl"``."""
    return "lin" if state.d < state.tau_switch else "nl"


def nltgcr_solve(
    f,
    x0: NDArray,
    cfg: NLTGCRConfig = NLTGCRConfig(),
    stop: StoppingRule = StoppingRule(),
    *,
    keep_iterates: bool = False,
) -> ConvergenceTrace:
    """nlTGCR(m) for ``f(x) = 0``.

    Nonlinear mode spends two evaluations per step (residual and Jacobian
    product). Linearized mode updates ``r <- r - V y`` and takes Jacobian
    products at the segment's base point, one evaluation per step. The
    adaptive mode starts nonlinear and switches on the angle test; while
    linear it probes the true residual every ``probe_period`` steps.

    In linear mode the trace reports the linear residual estimate except at
    segment ends, where the true residual is evaluated and recorded.
    """
    f = counted(f)
    trace = ConvergenceTrace(method=f"nltgcr({cfg.m},{cfg.mode})", iterates=[] if keep_iterates else None)
    steps = trace.info["steps"] = [] if keep_iterates else None
    x = np.array(x0, dtype=float)
    fx = f(x)
    r = -fx
    res0 = float(np.linalg.norm(r))
    trace.record(0, f.count, res0)
    trace.keep(x)
    if stop.converged(res0, res0):
        trace.x, trace.status = x, CONVERGED
        return trace

    def jac(base, fbase, p):
        if cfg.jvp is not None:
            return cfg.jvp(base, p)
        return frechet_apply(f, base, p, cfg.eps, fx=fbase)

    dirs = PairedDirections(x.size, cfg.m)
    trace.info["dirs"] = dirs
    linear = cfg.mode == "lin"
    base, fbase = x, fx  # Jacobian base point of the linearized mode
    seg_start, seg_res = 0, res0
    j = 0

    def restart(event: str):
        nonlocal base, fbase, seg_start, seg_res
        dirs.clear()
        base, fbase = x, -r
        seg_start, seg_res = j, float(np.linalg.norm(r))
        trace.mark(event)

    try:
        dirs.add(r, jac(x, fx, r))
    except NearBreakdown:
        trace.mark("breakdown")
        trace.x, trace.status = x, BUDGET
        return trace

    while True:
        V, P = dirs.V, dirs.P
        y = V.T @ r
        x_new = x + P @ y
        r_lin = r - V @ y
        j += 1
        probe = not linear or cfg.mode == "adapt" and (j - seg_start) % cfg.probe_period == 0
        r_true = -f(x_new) if probe else None
        r_new = r_true if (r_true is not None and not linear) else r_lin
        event = ""
        if steps is not None:
            steps.append({"V": V, "P": P, "r": r, "y": y, "r_lin": r_lin, "r_true": r_true})

        if cfg.mode == "adapt" and r_true is not None:
            mode = adaptive_mode_controller(ResidualDeviation(r_lin, r_true, cfg.tau_switch))
            if mode == "lin" and not linear:
                linear, event = True, "mode-switch"
                r_new = r_true
            elif mode == "nl" and linear:
                linear, event = False, "mode-switch"
                r_new = r_true

        x, r = x_new, r_new
        res = float(np.linalg.norm(r_true if r_true is not None else r))
        trace.record(j, f.count, res, event)
        trace.keep(x)
        if r_true is not None and stop.converged(res, res0):
            trace.x, trace.status = x, CONVERGED
            return trace
        if linear:
            lres = float(np.linalg.norm(r))
            if event == "mode-switch":
                restart("")
            elif stop.converged(lres, res0) or lres <= cfg.lin_decrease * seg_res or j - seg_start >= cfg.restart:
                # a linear estimate never ends the solve on its own
                if r_true is None:
                    # replace the estimate with the confirmed residual
                    r = -f(x)
                    res = float(np.linalg.norm(r))
                    trace.records.pop()
                    trace.record(j, f.count, res, "restart")
                else:
                    r = r_true
                    trace.mark("restart")
                restart("")
                if stop.converged(res, res0):
                    trace.x, trace.status = x, CONVERGED
                    return trace
        if diverged(res, res0):
            trace.x, trace.status = x, DIVERGED
            return trace
        # do not start a step whose evaluations would overshoot the budget
        probes_next = not linear or cfg.mode == "adapt" and (j + 1 - seg_start) % cfg.probe_period == 0
        if stop.exhausted(f.count + probes_next, j):
            trace.x, trace.status = x, BUDGET
            return trace

        try:
            if linear:
                v = jac(base, fbase, r)
            else:
                v = jac(x, -r, r)
            dirs.add(r, v)
        except NearBreakdown:
            if linear:
                r = -f(x)
            restart("breakdown")
            try:
                dirs.add(r, jac(x, -r, r))
            except NearBreakdown:
                trace.x, trace.status = x, BUDGET
                return trace
