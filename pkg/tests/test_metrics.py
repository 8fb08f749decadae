from __future__ import annotations

import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cwopt.metrics import (
    BaselineRun,
    HprRun,
    MetricsError,
    RunTriple,
    SubsidyRun,
    decompose,
    esr,
    gap_f1,
    metrics_document,
    ropr,
    subsidy_decomposition,
)

POS = st.floats(min_value=1e-3, max_value=1e6, allow_nan=False)


def triple(m1=(-230242.50, 11723.23, -35375.00), hpr=8142.39, m3=(-232032.87, 8265.56, 6655.17), h="abc"):
    return RunTriple(BaselineRun(*m1, h), HprRun(hpr, h), SubsidyRun(*m3, h, (1.0, 2.0)))


def test_reference_percentages():
    assert round(ropr(11723.23, 8265.56), 2) == 29.49
    assert round(ropr(11723.23, 8142.39), 2) == 30.54
    assert round(gap_f1(8265.56, 8142.39), 2) == 1.51
    assert round(esr(6655.17, -35375.00, 232032.87, 230242.50), 2) == 95.74


def test_trivial_values():
    assert ropr(5.0, 5.0) == 0.0
    assert gap_f1(5.0, 5.0) == 0.0
    # the whole subsidy became profit
    assert esr(100.0, 0.0, 1100.0, 1000.0) == 0.0
    assert esr(100.0, 0.0, 1000.0, 1000.0) == 100.0


def test_guards():
    with pytest.raises(MetricsError):
        ropr(0.0, 1.0)
    with pytest.raises(MetricsError):
        gap_f1(1.0, 0.0)
    assert esr(5.0, 5.0, 10.0, 3.0) is None


def test_reference_decomposition():
    d = subsidy_decomposition(triple())
    assert d["total_subsidy"] == pytest.approx(42030.17, abs=1e-6)
    assert d["ineffective"] == pytest.approx(1790.37, abs=1e-6)
    assert d["effective"] == pytest.approx(40239.80, abs=1e-6)
    assert not d["anomaly"]


def test_zero_subsidy_decomposition():
    d = decompose(-10.0, -10.0, 50.0, 50.0)
    assert (d["total_subsidy"], d["effective"], d["ineffective"]) == (0.0, 0.0, 0.0)


def test_synthetic_decomposition_and_anomaly():
    d = decompose(30.0, -10.0, 125.0, 100.0)
    assert (d["total_subsidy"], d["effective"], d["ineffective"]) == (40.0, 15.0, 25.0)
    # profit grew by more than the subsidy: reported, not clamped
    d = decompose(10.0, 0.0, 130.0, 100.0)
    assert d["effective"] == -20.0 and d["anomaly"]
    assert esr(10.0, 0.0, 130.0, 100.0) == -200.0


def test_hash_mismatch_rejected():
    with pytest.raises(MetricsError):
        RunTriple(BaselineRun(0, 1, 0, "a"), HprRun(1, "a"), SubsidyRun(0, 1, 0, "b"))


def test_document_is_json_and_complete():
    doc = metrics_document(triple())
    assert set(doc) >= {"ropr", "gap_f1", "esr", "decomposition", "inputs", "sandwich"}
    assert doc["sandwich"] is True
    assert json.loads(json.dumps(doc)) == doc
    assert doc["inputs"]["m3"]["fees"] == [1.0, 2.0]


def test_document_undefined_ratios_are_null():
    doc = metrics_document(triple(m1=(0.0, 0.0, 0.0), hpr=0.0, m3=(0.0, 0.0, 0.0)))
    assert doc["ropr"] is None and doc["gap_f1"] is None and doc["esr"] is None


@settings(max_examples=200, deadline=None)
@given(POS, POS, st.floats(min_value=1e-3, max_value=1e3))
def test_scale_invariance(a, b, c):
    assert math.isclose(ropr(a * c, b * c), ropr(a, b), rel_tol=1e-9, abs_tol=1e-9)
    assert math.isclose(gap_f1(a * c, b * c), gap_f1(a, b), rel_tol=1e-9, abs_tol=1e-9)


@settings(max_examples=200, deadline=None)
@given(POS, POS, POS)
def test_gap_monotone_in_subsidised_pollution(hpr, d1, d2):
    lo, hi = hpr + min(d1, d2), hpr + max(d1, d2)
    assert gap_f1(hi, hpr) >= gap_f1(lo, hpr) >= 0.0


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e5, 1e5), st.floats(-1e5, 1e5), st.floats(-1e5, 1e5), st.floats(-1e5, 1e5))
def test_esr_within_unit_interval_when_effective(f2a, f2b, pa, pb):
    d = decompose(f2a, f2b, pa, pb)
    r = esr(f2a, f2b, pa, pb)
    if d["total_subsidy"] > 0 and d["effective"] > 0:
        assert 0.0 < r <= 100.0
