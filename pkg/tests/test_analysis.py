import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from herdsweep.analysis import (
    blowup_profile,
    divergence_balance,
    divergence_integral,
    error_summary,
    sphere_measure,
    volume_bound_check,
    write_rows,
)
from herdsweep.dynamics import StaticControl, evolve_set
from herdsweep.errors import DomainError, PreconditionError
from herdsweep.geometry import ball_tube, disk, ellipse_tube
from herdsweep.scare import ScareFunction

# scipy.integrate quad oracles, frozen (see test_fields for the circle inflow values)
ELLIPSE_P4_DEFECT = [0.00870920127857929, 0.0006506167472323178, 6.711647042731296e-05,
                     5.845594733377213e-06, 6.422534187622999e-07]
ELLIPSE_EPS = [0.1, 0.03, 0.01, 0.003, 0.001]


def test_sphere_measure():
    assert sphere_measure(2) == pytest.approx(2 * math.pi)
    assert sphere_measure(3) == pytest.approx(4 * math.pi)
    assert sphere_measure(4) == pytest.approx(2 * math.pi**2)


# volume bound ---------------------------------------------------------------------------


def far_run(p):
    s = ScareFunction.power_law(p)
    ctrl = StaticControl(s, np.array([1e6, 0.0]))
    return evolve_set(disk((0, 0), 1.0, 256, 0.2), ctrl, 1.0, output_times=np.linspace(0, 1, 6)), s


def test_volume_bound_margin_zero_at_start():
    run, s = far_run(0.5)
    rep = volume_bound_check(run, s)
    assert rep.margin[0] == 0.0
    assert rep.bound[0] == rep.measured[0]


def test_volume_bound_far_agent_margins_increase():
    run, s = far_run(0.5)
    rep = volume_bound_check(run, s)
    # the far field still translates the set by phi(1e6) = 1e-3; its divergence is ~1e-9
    np.testing.assert_allclose(rep.measured, rep.measured[0], rtol=1e-8)
    assert np.all(np.diff(rep.margin) > 0)
    assert rep.ok


def test_volume_bound_formula():
    run, s = far_run(0.5)
    rep = volume_bound_check(run, s)
    # phi'(1) = -0.5, M = 1 / (1 - 0.5) = 2, omega_1 = 2 pi, d/(d-1) = 2
    t = rep.times
    np.testing.assert_allclose(rep.bound, np.exp(-0.5 * t) * rep.measured[0] - 2 * np.pi * 2 * 2 * t, rtol=1e-12)


def test_volume_bound_needs_finite_integral():
    run, _ = far_run(0.5)
    with pytest.raises(PreconditionError):
        volume_bound_check(run, ScareFunction.power_law(3))


def test_volume_bound_near_agent():
    s = ScareFunction.power_law(0.5)
    ctrl = StaticControl(s, np.array([1.2, 0.0]))
    run = evolve_set(disk((0, 0), 1.0, 256, 0.2), ctrl, 1.0, output_times=np.linspace(0, 1, 11))
    rep = volume_bound_check(run, s)
    assert rep.ok
    assert [r["t"] for r in rep.rows()] == list(rep.times)


# divergence ---------------------------------------------------------------------------------


def test_divergence_integral_conserved_case():
    # p = d - 1 gives a divergence-free field away from the agent
    s = ScareFunction.power_law(1.0)
    boundary = disk((0, 0), 1.0, 256, 0.5).boundary
    assert abs(divergence_integral(boundary, [1.5, 0.0], s)) < 1e-8


def test_divergence_integral_far_agent_negligible():
    boundary = disk((0, 0), 1.0, 256, 0.5).boundary
    assert abs(divergence_integral(boundary, [1e6, 0.0], ScareFunction.power_law(3))) < 1e-20


def test_divergence_integral_matches_polar_quadrature():
    from scipy.integrate import dblquad

    s = ScareFunction.power_law(3)
    boundary = disk((0, 0), 1.0, 1024, 0.5).boundary
    got = divergence_integral(boundary, [2.0, 0.0], s)
    ref = dblquad(lambda r, th: -2 * np.hypot(r * np.cos(th) - 2, r * np.sin(th)) ** -4 * r,
                  0, 2 * np.pi, 0, 1, epsabs=1e-12)[0]
    assert got == pytest.approx(ref, rel=1e-4)


def test_divergence_integral_rejects_agent_inside():
    with pytest.raises(DomainError):
        divergence_integral(disk((0, 0), 1.0, 64, 0.5).boundary, [0.0, 0.0], ScareFunction.power_law(3))


def test_volume_conserved_when_divergence_free():
    s = ScareFunction.power_law(1.0)
    ctrl = StaticControl(s, np.array([1.3, 0.0]))
    run = evolve_set(disk((0, 0), 1.0, 256, 0.2), ctrl, 0.5, output_times=np.linspace(0, 0.5, 6))
    v = run.volumes()
    assert np.max(np.abs(v / v[0] - 1)) < 0.01


def test_divergence_balance_far_agent_both_zero():
    run, s = far_run(3.0)
    bal = divergence_balance(run, StaticControl(s, np.array([1e6, 0.0])), s)
    np.testing.assert_allclose(bal.rate, 0.0, atol=1e-12)
    np.testing.assert_allclose(bal.integral, 0.0, atol=1e-12)


def test_divergence_balance_residual_shrinks_with_step():
    s = ScareFunction.power_law(3)
    ctrl = StaticControl(s, np.array([1.6, 0.0]))
    om = disk((0, 0), 1.0, 512, 0.2)
    res = []
    for k in (4, 8):
        run = evolve_set(om, ctrl, 0.2, output_times=np.linspace(0, 0.2, k + 1), resample=False)
        res.append(np.max(np.abs(divergence_balance(run, ctrl, s).residual)))
    assert res[1] < res[0]


# profiles ---------------------------------------------------------------------------------


def test_profile_strong_scare_slope():
    rep = blowup_profile(ball_tube(1.0, (0, 0), 1.0), ScareFunction.power_law(3), 0.0,
                         [0.1, 0.05, 0.025, 0.0125])
    assert rep.inflow_increasing
    assert rep.slope == pytest.approx(-2.0, abs=0.15)


def test_profile_weak_scare_bounded():
    rep = blowup_profile(ball_tube(1.0, (0, 0), 1.0), ScareFunction.power_law(0.5), 0.0,
                         [0.1, 0.05, 0.025, 0.0125])
    a = np.abs(rep.inflow)
    assert a.max() / a.min() < 3
    assert abs(rep.slope) < 0.5


def test_profile_ellipse_alignment_matches_oracle():
    rep = blowup_profile(ellipse_tube(1.0, (0, 0), 2.0, 1.0), ScareFunction.power_law(4), 0.0, ELLIPSE_EPS)
    assert rep.defect_decreasing
    np.testing.assert_allclose(rep.defect, ELLIPSE_P4_DEFECT, rtol=0.01)
    assert rep.defect[-1] < 0.05


def test_profile_rows_sorted_decreasing():
    rep = blowup_profile(ball_tube(1.0, (0, 0), 1.0), ScareFunction.power_law(3), 0.0, [0.025, 0.1, 0.05])
    assert [r["eps"] for r in rep.rows()] == [0.1, 0.05, 0.025]


# error summaries ------------------------------------------------------------------------------


def ensemble(rng, K=5, m=12):
    return np.linspace(0, 1, K), rng.normal(size=(K, m, 2))


def test_error_summary_identity(rng):
    t, p = ensemble(rng)
    s = error_summary((t, p), (t, p))
    assert s.sup_error == 0.0 and np.all(s.per_time_dH == 0.0)


def test_error_summary_uniform_shift(rng):
    t, p = ensemble(rng)
    s = error_summary((t, p), (t, p + [0.01, 0.0]))
    assert s.sup_error == pytest.approx(0.01, abs=1e-15)


@given(st.integers(0, 2**31 - 1), st.integers(0, 2**31 - 1))
def test_error_summary_symmetric(sa, sb):
    t = np.linspace(0, 1, 4)
    a = np.random.default_rng(sa).normal(size=(4, 7, 2))
    b = np.random.default_rng(sb).normal(size=(4, 7, 2))
    x, y = error_summary((t, a), (t, b)), error_summary((t, b), (t, a))
    assert x.sup_error == y.sup_error
    np.testing.assert_array_equal(x.per_time_dH, y.per_time_dH)
    assert (x.sup_error == 0) == np.array_equal(a, b)


def test_error_summary_interpolates_candidate(rng):
    t = np.linspace(0, 1, 3)
    ref = np.zeros((3, 2, 2))
    fine_t = np.linspace(0, 1, 5)
    cand = np.zeros((5, 2, 2))
    cand[:, :, 0] = fine_t[:, None]
    s = error_summary((t, ref), (fine_t, cand))
    np.testing.assert_allclose(s.per_time_error, [0.0, 0.5, 1.0])


def test_error_summary_sample_mismatch(rng):
    t, p = ensemble(rng)
    with pytest.raises(DomainError):
        error_summary((t, p), (t, p[:, :-1]))


def test_write_rows_full_precision(tmp_path):
    path = tmp_path / "rows.csv"
    write_rows(path, [{"a": 0.1, "b": True, "c": "x", "d": None, "e": np.int64(3)}], ["a", "b", "c", "d", "e"])
    assert path.read_text() == "a,b,c,d,e\n0.1,1,x,,3\n"
