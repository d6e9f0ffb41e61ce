"""Scalar and vector extrapolation: Aitken, Steffensen, Wynn epsilon, Shanks, RRE/MPE/MMPE."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import linalg as sla

from .errors import DegenerateDenominator, RankDeficient, SingularSystem
from .trace import BUDGET, CONVERGED, DIVERGED, ConvergenceTrace, StoppingRule, counted, diverged

RANK_TOL = 1e-12
SATURATION_TOL = 1e-14


def aitken_scalar(x0: float, x1: float, x2: float) -> float:
    d1 = x1 - x0
    d2 = x2 - 2.0 * x1 + x0
    if abs(d2) <= 1e-14 * max(abs(x0), abs(x1), abs(x2), 1.0):
        raise DegenerateDenominator("second difference vanishes")
    return x0 - d1 * d1 / d2


def aitken_sequence(xs: Sequence[float]) -> list[float]:
    """Apply Aitken's transform to every consecutive triple."""
    return [aitken_scalar(*xs[j : j + 3]) for j in range(len(xs) - 2)]


def steffensen_step(f: Callable[[float], float], x: float) -> float:
    fx = f(x)
    if fx == 0:
        return x
    fxx = f(x + fx)
    if abs(fxx - fx) <= 1e-14 * max(abs(fx), abs(fxx)):
        raise DegenerateDenominator("divided difference vanishes")
    d = (fxx - fx) / fx
    return x - fx / d


def samelson_inverse(x: NDArray) -> NDArray:
    x = np.asarray(x, dtype=float)
    nrm2 = float(x @ x)
    if nrm2 == 0.0:
        raise DegenerateDenominator("zero vector has no inverse")
    return x / nrm2


def _inverse(d):
    if np.ndim(d) == 0:
        if d == 0:
            raise DegenerateDenominator("zero difference")
        return 1.0 / d
    return samelson_inverse(d)


def _size(v) -> float:
    return abs(v) if np.ndim(v) == 0 else float(np.linalg.norm(v))


class EpsilonTable:
    """Wynn's epsilon algorithm, advanced one anti-diagonal per new term.

    After ``n+1`` terms ``x_0..x_n`` have been pushed, ``diagonal[k]`` holds
    ``eps_{n-k}^{(k)}``, i.e. the entry of column ``k`` that uses ``x_n`` as its
    last input. Even columns are the extrapolants (column ``2m`` is the Shanks
    transform of order ``m``); odd columns are auxiliary. Vector terms use the
    Samelson inverse.
    """

    def __init__(self, max_order: int | None = None):
        self.max_order = max_order
        self.diagonal: list = []
        self.saturated: list[bool] = []
        self.count = 0

    def push(self, x_new):
        x_new = x_new if np.ndim(x_new) == 0 else np.array(x_new, dtype=float)
        prev = self.diagonal
        new = [x_new]
        flags = [False]
        limit = len(prev) if self.max_order is None else min(len(prev), self.max_order)
        for k in range(limit):
            below = prev[k - 1] if k > 0 else 0.0
            diff = new[k] - prev[k]
            if _size(diff) <= SATURATION_TOL * (1.0 + _size(new[k])):
                if k + 1 < len(prev):
                    new.append(prev[k + 1])
                    flags.append(True)
                    continue
                break
            new.append(below + _inverse(diff))
            flags.append(False)
        self.diagonal = new
        self.saturated = flags
        self.count += 1
        return list(new)

    def column(self, k: int):
        """Latest entry of column ``k`` or ``None`` if not yet available."""
        return self.diagonal[k] if k < len(self.diagonal) else None

    def best(self):
        """Highest even-column entry on the current diagonal."""
        top = len(self.diagonal) - 1
        return self.diagonal[top - (top % 2)]


def epsilon_push(table: EpsilonTable, x_new):
    return table.push(x_new)


def shanks_oracle(seq: Sequence[float], j: int, m: int) -> float:
    """Shanks transform of order ``m`` at index ``j`` as a ratio of determinants."""
    x = np.asarray(seq, dtype=float)
    if j + 2 * m >= x.size:
        raise ValueError("sequence too short")
    dx = np.diff(x)
    num = np.empty((m + 1, m + 1))
    num[0] = x[j : j + m + 1]
    for i in range(1, m + 1):
        num[i] = dx[j + i - 1 : j + i + m]
    den = num.copy()
    den[0] = 1.0
    d = np.linalg.det(den)
    if abs(d) <= 1e-300 or not np.isfinite(d):
        raise DegenerateDenominator("Hankel denominator is singular")
    return float(np.linalg.det(num) / d)


@dataclass
class SequenceWindow:
    """Iterates ``x_0..x_{m+1}`` of a vector sequence and their differences."""

    iterates: NDArray  # columns x_0 .. x_{m+1}

    @classmethod
    def from_iterates(cls, xs: Sequence[NDArray]) -> "SequenceWindow":
        return cls(np.column_stack([np.atleast_1d(np.asarray(x, dtype=float)) for x in xs]))

    @property
    def m(self) -> int:
        return self.iterates.shape[1] - 2

    @property
    def dX(self) -> NDArray:
        """First differences ``[dx_0 .. dx_m]``."""
        return np.diff(self.iterates, axis=1)

    @property
    def d2X(self) -> NDArray:
        return np.diff(self.iterates, n=2, axis=1)


def _lstsq(A: NDArray, b: NDArray) -> NDArray:
    """min ||b - A c|| with a column-scaled QR and relative rank check."""
    norms = np.linalg.norm(A, axis=0)
    if A.shape[1] == 0 or A.shape[0] < A.shape[1] or np.any(norms == 0.0):
        raise RankDeficient("zero column in least-squares matrix")
    Q, R = sla.qr(A / norms, mode="economic")
    d = np.abs(np.diag(R))
    if d.min() <= RANK_TOL * d.max():
        raise RankDeficient("least-squares matrix is numerically rank deficient")
    return sla.solve_triangular(R, Q.T @ b) / norms


def rre(window: SequenceWindow, form: str = "last") -> tuple[NDArray, NDArray]:
    """Reduced rank extrapolation.

    ``form="first"`` returns ``y = x_0 + dX_0 beta`` with beta minimizing
    ``||dx_0 + d2X_0 beta||``; ``form="last"`` returns ``y = x_m + dX_0 gamma``
    with gamma minimizing ``||dx_m + d2X_0 gamma||``. Both give the same ``y``
    and ``beta = 1 + gamma``.
    """
    m = window.m
    if m < 1:
        raise ValueError("window needs at least three iterates")
    dX, d2X = window.dX, window.d2X
    X0 = dX[:, :m]
    if form == "first":
        beta = _lstsq(d2X, -dX[:, 0])
        return window.iterates[:, 0] + X0 @ beta, beta
    if form == "last":
        gamma = _lstsq(d2X, -dX[:, m])
        return window.iterates[:, m] + X0 @ gamma, gamma
    raise ValueError(f"unknown form {form!r}")


def _projected(window: SequenceWindow, W: NDArray) -> tuple[NDArray, NDArray]:
    m = window.m
    dX, d2X = window.dX, window.d2X
    W = np.asarray(W, dtype=float).reshape(d2X.shape[0], -1)
    if W.shape[1] != m:
        raise ValueError("W must have m columns")
    M = W.T @ d2X
    if not np.all(np.isfinite(M)) or np.linalg.cond(M) > 1e14:
        raise SingularSystem("projected system is singular")
    beta = np.linalg.solve(M, W.T @ dX[:, 0])
    return window.iterates[:, 0] - dX[:, :m] @ beta, beta


def mmpe(window: SequenceWindow, W: NDArray) -> NDArray:
    """Projection extrapolation ``y = x_0 - dX beta`` with ``W^T (dx_0 - d2X beta) = 0``."""
    return _projected(window, W)[0]


def mpe(window: SequenceWindow) -> NDArray:
    """Minimal polynomial extrapolation (Galerkin condition against ``dX_0``)."""
    return _mpe(window)[0]


def _mpe(window: SequenceWindow) -> tuple[NDArray, NDArray]:
    try:
        return _projected(window, window.dX[:, : window.m])
    except SingularSystem as exc:
        raise RankDeficient(str(exc)) from exc


def restarted_rre_solve(
    g: Callable[[NDArray], NDArray],
    x0: NDArray,
    m: int,
    beta: float = 1.0,
    stop: StoppingRule = StoppingRule(),
    *,
    kind: str = "rre",
    keep_iterates: bool = False,
) -> ConvergenceTrace:
    """Restarted RRE(m) (or MPE(m) with ``kind="mpe"``) with an extra linearized step.

    Each cycle runs ``m+1`` plain fixed-point steps from the restart point,
    forms the extrapolated ``y`` and restarts from ``y + beta * fbar`` where
    ``fbar`` is the linear residual of ``y`` (``dx_m + d2X_0 gamma`` for RRE).
    """
    if kind not in ("rre", "mpe"):
        raise ValueError(f"unknown kind {kind!r}")
    if m < 1:
        raise ValueError("m must be positive")
    g = counted(g)
    trace = ConvergenceTrace(method=f"{kind}({m})", iterates=[] if keep_iterates else None)
    x = np.array(x0, dtype=float)
    res0 = None
    it = 0
    while True:
        xs = [x]
        event = ""
        for _ in range(m + 1):
            gx = g(xs[-1])
            res = float(np.linalg.norm(gx - xs[-1]))
            if res0 is None:
                res0 = res
            trace.record(it, g.count, res, event)
            trace.keep(xs[-1])
            event = ""
            it += 1
            if stop.converged(res, res0):
                trace.x, trace.status = xs[-1], CONVERGED
                return trace
            if not np.isfinite(res) or diverged(res, res0):
                trace.x, trace.status = xs[-1], DIVERGED
                return trace
            if stop.exhausted(g.count, it):
                trace.x, trace.status = xs[-1], BUDGET
                return trace
            xs.append(gx)
        x = _restart_point(xs, m, beta, kind, trace)


def _restart_point(xs, m, beta, kind, trace) -> NDArray:
    # shrink the window until the extrapolation is well posed
    for mm in range(m, 0, -1):
        win = SequenceWindow.from_iterates(xs[m - mm :])
        try:
            if kind == "rre":
                y, gamma = rre(win, "last")
                fbar = win.dX[:, mm] + win.d2X @ gamma
            else:
                y, b = _mpe(win)
                fbar = win.dX[:, 0] - win.d2X @ b
        except RankDeficient:
            trace.mark("restart")
            continue
        return y + beta * fbar
    return xs[-1]
