"""Convergence traces, stopping rules and evaluation counting."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

CSV_HEADER = ("iter", "fevals", "resnorm", "time_s", "event")

# Trace status values.
CONVERGED = "converged"
BUDGET = "budget"
DIVERGED = "diverged"
BREAKDOWN = "breakdown"

DIVERGENCE_FACTOR = 1e6


@dataclass(frozen=True)
class StoppingRule:
    """Stop when the residual norm drops by ``tol`` or the budget runs out.

    ``max_iter`` is a safety net for methods that do not call a map
    (linear solvers count matrix-vector products as evaluations).
    """

    tol: float = 1e-12
    max_fevals: int = 500
    max_iter: int | None = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_fevals < 0:
            raise ValueError("max_fevals must be nonnegative")

    def converged(self, resnorm: float, resnorm0: float) -> bool:
        return resnorm <= self.tol * resnorm0

    def exhausted(self, fevals: int, iteration: int = 0) -> bool:
        if fevals >= self.max_fevals:
            return True
        return self.max_iter is not None and iteration >= self.max_iter


@dataclass
class TraceRecord:
    iter: int
    fevals: int
    resnorm: float
    time_s: float
    event: str = ""


@dataclass
class ConvergenceTrace:
    """Per-iteration record of a solve plus its final state."""

    method: str = ""
    records: list[TraceRecord] = field(default_factory=list)
    x: np.ndarray | None = None
    status: str = ""
    iterates: list[np.ndarray] | None = None
    info: dict = field(default_factory=dict)
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    def record(self, it: int, fevals: int, resnorm: float, event: str = "") -> None:
        if self.records and fevals < self.records[-1].fevals:
            raise ValueError("fevals must be nondecreasing")
        elapsed = time.perf_counter() - self._t0
        self.records.append(TraceRecord(it, fevals, float(resnorm), elapsed, event))

    def mark(self, event: str) -> None:
        """Attach an event tag to the most recent record."""
        if not self.records or not event:
            return
        last = self.records[-1]
        last.event = f"{last.event};{event}" if last.event else event

    def keep(self, x: np.ndarray) -> None:
        if self.iterates is not None:
            self.iterates.append(np.array(x, copy=True))

    @property
    def resnorms(self) -> np.ndarray:
        return np.array([r.resnorm for r in self.records])

    @property
    def fevals(self) -> int:
        return self.records[-1].fevals if self.records else 0

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def reduction(self) -> float:
        """Final residual norm relative to the first one."""
        res = self.resnorms
        if res.size == 0 or res[0] == 0:
            return 0.0
        return float(res[-1] / res[0])

    def events(self) -> list[str]:
        return [r.event for r in self.records if r.event]

    # CSV interchange

    def to_csv(self, target=None, *, timing: bool = True) -> str:
        """Write the trace as CSV and return the text.

        With ``timing=False`` the time column is zeroed so that repeated runs
        produce identical bytes.
        """
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.records:
            t = r.time_s if timing else 0.0
            writer.writerow([r.iter, r.fevals, repr(float(r.resnorm)), f"{t:.6f}", r.event])
        text = buf.getvalue()
        if target is not None:
            with open(target, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source: str | Iterable[str]) -> "ConvergenceTrace":
        lines = source.splitlines() if isinstance(source, str) else list(source)
        reader = csv.reader(lines)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected header {header!r}")
        trace = cls()
        for row in reader:
            it, fe, res, t, ev = row
            trace.records.append(TraceRecord(int(it), int(fe), float(res), float(t), ev))
        return trace


class CountedMap:
    """Wrap a vector map and count its evaluations."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], counter: list[int] | None = None):
        self.fn = fn
        self._counter = counter if counter is not None else [0]

    @property
    def count(self) -> int:
        return self._counter[0]

    def reset(self) -> None:
        self._counter[0] = 0

    def __call__(self, x):
        self._counter[0] += 1
        return self.fn(x)

    def share(self, fn: Callable) -> "CountedMap":
        """Another map that increments the same counter."""
        return CountedMap(fn, self._counter)


def counted(fn) -> CountedMap:
    return fn if isinstance(fn, CountedMap) else CountedMap(fn)


def diverged(resnorm: float, resnorm0: float) -> bool:
    return not math.isfinite(resnorm) or resnorm > DIVERGENCE_FACTOR * resnorm0
