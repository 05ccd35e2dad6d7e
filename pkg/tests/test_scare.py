import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from herdsweep.errors import DomainError
from herdsweep.scare import ConditionReport, ScareFunction, classify, necessary_integral, phi_eval


def power(p, c=1.0):
    return ScareFunction.power_law(p, c)


def table_of(p, lo=1e-7, hi=1e3, n=400):
    r = np.geomspace(lo, hi, n)
    return ScareFunction.tabulated(np.column_stack([r, r**-p]).tolist())


# evaluation -------------------------------------------------------------------------


def test_phi_unit_radius():
    assert phi_eval(power(3), 1.0) == 1.0


def test_phi_at_two():
    assert phi_eval(power(3), 2.0) == 0.125


def test_phi_scale_multiplies():
    assert phi_eval(power(2, 3.0), 2.0) == pytest.approx(0.75, rel=1e-15)


def test_tabulated_matches_power():
    assert abs(float(phi_eval(table_of(3), 1.5)) - 1.5**-3) < 1e-6


@pytest.mark.parametrize("r", [0.0, -1.0])
def test_phi_rejects_nonpositive(r):
    with pytest.raises(DomainError):
        phi_eval(power(3), r)


def test_phi_vectorized():
    r = np.array([0.5, 1.0, 2.0])
    np.testing.assert_allclose(phi_eval(power(2), r), r**-2.0, rtol=0, atol=0)


def test_derivative_power_law():
    f = power(3, 2.0)
    assert float(f.derivative(2.0)) == pytest.approx(-3 * 2.0 * 2.0**-4, rel=1e-14)


def test_escape_time_inverts_sweep_radius():
    f = power(4)
    tau = 1e-3
    assert float(f.escape_time(f.sweep_radius(tau))) == pytest.approx(tau, rel=1e-12)


def test_tabulated_sweep_radius_close_to_power():
    f, g = power(3), table_of(3)
    assert g.sweep_radius(1e-4) == pytest.approx(f.sweep_radius(1e-4), rel=1e-4)


def test_tabulated_rejects_increasing_table():
    with pytest.raises(DomainError):
        ScareFunction.tabulated([[0.1, 1.0], [0.2, 2.0], [0.3, 3.0]])


def test_json_roundtrip():
    for f in (power(3, 0.5), table_of(2, n=20)):
        g = ScareFunction.from_json(json.loads(json.dumps(f.to_json())))
        assert g.to_json() == f.to_json()


@given(st.floats(0.1, 8.0), st.lists(st.floats(1e-3, 1e3), min_size=2, max_size=30, unique=True))
def test_phi_strictly_decreasing(p, rs):
    r = np.sort(np.array(rs))
    r = r[np.diff(r, prepend=0) > 1e-9 * r]
    vals = phi_eval(power(p), r)
    assert np.all(np.diff(vals) < 0)


# classification ------------------------------------------------------------------------


def test_classify_p3_d2():
    rep = classify(power(3), 2)
    assert rep.a2 and rep.a2prime and rep.necessary_integral_diverges
    assert rep.method == "analytic"


def test_classify_weak_scare():
    rep = classify(power(0.5), 2)
    assert rep.necessary_integral_diverges is False
    assert rep.a2 is False


def test_classify_borderline_p_equals_d():
    assert classify(power(2), 2).a2 is False


def test_a2prime_witness_in_open_interval():
    rep = classify(power(5), 3)
    assert 0.5 < rep.a2prime_witness < 1


def truth(p, d):
    return {"a2": p > d, "necessary_integral_diverges": p >= d - 1, "ec2_limsup_infinite": p > d - 1,
            "ndiv_nonpositive_near_zero": p >= d - 1, "a2prime": p > d}


@pytest.mark.parametrize("d", [2, 3, 4])
def test_power_law_truth_table(d):
    for p in (0.5, d - 1.5, d - 1, d - 0.5, d, d + 0.5, d + 2):
        if p <= 0:
            continue
        rep = classify(power(p), d)
        for key, want in truth(p, d).items():
            assert getattr(rep, key) is want, (p, d, key)


@given(st.floats(0.05, 9.0), st.sampled_from([2, 3, 4]))
def test_a2_implies_divergence(p, d):
    rep = classify(power(p), d)
    if rep.a2:
        assert rep.necessary_integral_diverges
    if rep.a2prime:
        assert rep.a2


def test_report_rejects_inconsistent_flags():
    with pytest.raises(AssertionError):
        ConditionReport(True, True, True, 0.75, False, True, True, "analytic", 2, ())


@pytest.mark.parametrize("p,d,want_a2,want_div", [(4, 2, True, True), (1, 2, False, True), (0.5, 2, False, False)])
def test_tabulated_numeric_classification(p, d, want_a2, want_div):
    rep = classify(table_of(p), d)
    assert rep.method == "numeric-limit"
    assert rep.necessary_integral_diverges is want_div
    if "a2" not in rep.abstained:
        assert rep.a2 is want_a2


def test_tabulated_abstains_rather_than_guesses_at_p_equals_d():
    rep = classify(table_of(3, lo=1e-6), 3)
    assert rep.a2 is not True


def test_classify_needs_d_at_least_2():
    with pytest.raises(DomainError):
        classify(power(3), 1)


# necessary integral --------------------------------------------------------------------


def test_necessary_integral_weak():
    assert necessary_integral(power(0.5), 2) == pytest.approx(2.0, rel=1e-14)


def test_necessary_integral_diverges():
    assert necessary_integral(power(3), 2) == math.inf


def test_necessary_integral_p0_d3():
    assert necessary_integral(power(0.0 + 1e-300), 3) == pytest.approx(0.5, rel=1e-12)


def test_necessary_integral_tabulated():
    assert necessary_integral(table_of(0.5), 2) == pytest.approx(2.0, rel=1e-3)
    assert necessary_integral(table_of(1.0), 2) == math.inf


@given(st.floats(0.05, 0.95), st.floats(0.1, 5.0))
def test_necessary_integral_closed_form(p, c):
    assert necessary_integral(power(p, c), 2) == pytest.approx(c / (1 - p), rel=1e-12)
