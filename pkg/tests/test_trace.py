import numpy as np
import pytest

from fpaccel.anderson import AAConfig, aa_solve
from fpaccel.trace import CSV_HEADER, ConvergenceTrace, CountedMap, StoppingRule, diverged


def sample_trace():
    tr = ConvergenceTrace(method="demo")
    tr.record(0, 1, 1.0)
    tr.record(1, 2, 0.1, "restart")
    tr.record(2, 4, 1e-17 / 3)
    tr.mark("breakdown")
    return tr


def test_csv_header_exact():
    assert sample_trace().to_csv().splitlines()[0] == "iter,fevals,resnorm,time_s,event"
    assert CSV_HEADER == ("iter", "fevals", "resnorm", "time_s", "event")


def test_csv_round_trip(tmp_path):
    tr = sample_trace()
    path = tmp_path / "t.csv"
    text = tr.to_csv(path)
    assert path.read_text() == text
    back = ConvergenceTrace.from_csv(text)
    assert [(r.iter, r.fevals, r.resnorm, r.event) for r in back.records] == [
        (r.iter, r.fevals, r.resnorm, r.event) for r in tr.records
    ]


def test_csv_without_timing_is_deterministic():
    assert sample_trace().to_csv(timing=False) == sample_trace().to_csv(timing=False)


def test_csv_rejects_foreign_header():
    with pytest.raises(ValueError):
        ConvergenceTrace.from_csv("a,b\n1,2\n")


def test_mark_chains_events():
    assert sample_trace().records[-1].event == "breakdown"
    tr = sample_trace()
    tr.mark("restart")
    tr.mark("")
    assert tr.records[-1].event == "breakdown;restart"


def test_fevals_must_not_decrease():
    tr = ConvergenceTrace()
    tr.record(0, 3, 1.0)
    with pytest.raises(ValueError):
        tr.record(1, 2, 1.0)


def test_reduction_and_events():
    tr = sample_trace()
    assert tr.reduction() == pytest.approx(1e-17 / 3)
    assert tr.events() == ["restart", "breakdown"]
    assert ConvergenceTrace().reduction() == 0.0


def test_trace_counts_match_wrapper():
    A = np.diag(np.linspace(0.2, 0.9, 10))
    calls = CountedMap(lambda x: A @ x + 1.0)
    tr = aa_solve(calls, np.zeros(10), AAConfig(m=3), StoppingRule(1e-10, 300))
    assert tr.fevals == calls.count


def test_stopping_rule():
    stop = StoppingRule(1e-3, 10, max_iter=5)
    assert stop.converged(1e-3, 1.0) and not stop.converged(2e-3, 1.0)
    assert stop.exhausted(10) and stop.exhausted(0, 5) and not stop.exhausted(9, 4)
    with pytest.raises(ValueError):
        StoppingRule(0.0)
    with pytest.raises(ValueError):
        StoppingRule(1e-3, -1)


def test_divergence_guard():
    assert diverged(float("nan"), 1.0)
    assert diverged(2e6, 1.0)
    assert not diverged(1e6, 1.0)
