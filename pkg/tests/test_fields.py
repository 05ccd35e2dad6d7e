import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from herdsweep.errors import DomainError, SingularityError
from herdsweep.fields import (
    AgentField,
    BoundaryField,
    agent_velocity,
    alignment_defect,
    boundary_velocity,
    divergence,
    field_speed_cap_check,
    kernel,
    max_speed,
    normal_inflow,
)
from herdsweep.geometry import ball_tube, ellipse_tube
from herdsweep.scare import ScareFunction

# Adaptive quadrature (scipy.integrate.quad, epsabs 1e-13) of the unit-circle
# boundary integral of r^-3 (x - y)/|x - y|.
CIRCLE_P3_AT_05 = np.array([-5.585053606381855, 0.0])
CIRCLE_P3_AT_03_02 = np.array([-2.490362785247557, -1.6602418568317046])
EPS = [0.1, 0.05, 0.025, 0.0125]
CIRCLE_P3_INFLOW = [156.64450904325838, 627.9054350370125, 2512.8714191187687, 10052.698837261241]
CIRCLE_P05_INFLOW = [-2.0471934826770375, -2.3875970433282117, -2.6505382617497104, -2.8499658340113285]


@pytest.fixture(scope="module")
def unit_circle():
    return ball_tube(1.0, (0, 0), 1.0)


def test_agent_velocity_radial():
    f = AgentField(ScareFunction.power_law(2.0, 3.0), np.array([1.0, 1.0]))
    v = agent_velocity(f, [3.0, 1.0])
    np.testing.assert_allclose(v, [0.75, 0.0], rtol=1e-15)
    np.testing.assert_allclose(f(np.array([[1.0, 2.0]])), [[0.0, 3.0]], rtol=1e-15)


def test_agent_velocity_singular_at_agent():
    with pytest.raises(SingularityError):
        agent_velocity(AgentField(ScareFunction.power_law(2), np.zeros(2)), [0.0, 0.0])


@given(st.floats(0.1, 4), st.floats(0.05, 5), st.floats(0, 2 * np.pi))
def test_agent_speed_is_phi(p, r, th):
    f = AgentField(ScareFunction.power_law(p), np.zeros(2))
    v = f([r * np.cos(th), r * np.sin(th)])
    assert np.linalg.norm(v) == pytest.approx(r**-p, rel=1e-12)


def test_kernel_weights_linear():
    s = ScareFunction.power_law(1.5)
    src = np.array([[0.0, 0.0], [2.0, 0.0]])
    x = np.array([[1.0, 1.0]])
    a = kernel(s, x, src, np.array([1.0, 0.0])) + kernel(s, x, src, np.array([0.0, 2.0]))
    np.testing.assert_allclose(kernel(s, x, src, np.array([1.0, 2.0])), a, rtol=1e-14)


def test_circle_field_matches_adaptive_quadrature(unit_circle):
    f = BoundaryField(unit_circle, ScareFunction.power_law(3))
    np.testing.assert_allclose(boundary_velocity(f, 0.0, [0.5, 0.0]), CIRCLE_P3_AT_05, rtol=1e-4, atol=1e-12)
    np.testing.assert_allclose(boundary_velocity(f, 0.0, [0.3, 0.2]), CIRCLE_P3_AT_03_02, rtol=1e-4)


def test_circle_field_vanishes_at_center(unit_circle):
    f = BoundaryField(unit_circle, ScareFunction.power_law(3))
    np.testing.assert_allclose(boundary_velocity(f, 0.0, [0.0, 0.0]), 0.0, atol=1e-10)


@given(st.floats(0.05, 0.95), st.floats(0, 2 * np.pi))
def test_circle_field_rotation_equivariant(r, th):
    f = BoundaryField(ball_tube(1.0, (0, 0), 1.0), ScareFunction.power_law(2), n_panels=128)
    v0 = boundary_velocity(f, 0.0, [r, 0.0])
    v = boundary_velocity(f, 0.0, [r * np.cos(th), r * np.sin(th)])
    rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    np.testing.assert_allclose(v, rot @ v0, atol=1e-6 * max(1, np.linalg.norm(v0)))


def test_boundary_field_singular_on_curve(unit_circle):
    f = BoundaryField(unit_circle, ScareFunction.power_law(3))
    with pytest.raises(SingularityError):
        boundary_velocity(f, 0.0, [1.0, 0.0])


def test_normal_inflow_p3_matches_oracle(unit_circle):
    f = BoundaryField(unit_circle, ScareFunction.power_law(3))
    got = [normal_inflow(f, unit_circle, 0.0, e) for e in EPS]
    np.testing.assert_allclose(got, CIRCLE_P3_INFLOW, rtol=1e-4)
    assert np.all(np.diff(got) > 0)


def test_normal_inflow_weak_matches_oracle(unit_circle):
    f = BoundaryField(unit_circle, ScareFunction.power_law(0.5))
    got = [normal_inflow(f, unit_circle, 0.0, e) for e in EPS]
    np.testing.assert_allclose(got, CIRCLE_P05_INFLOW, rtol=1e-4)


def test_alignment_defect_circle_is_tiny(unit_circle):
    f = BoundaryField(unit_circle, ScareFunction.power_law(3))
    assert alignment_defect(f, unit_circle, 0.0, 0.05) < 1e-8


def test_alignment_defect_ellipse_decreases():
    tube = ellipse_tube(1.0, (0, 0), 2.0, 1.0)
    f = BoundaryField(tube, ScareFunction.power_law(4))
    vals = [alignment_defect(f, tube, 0.0, e) for e in (0.1, 0.03, 0.01)]
    assert vals[0] > vals[1] > vals[2]


def test_far_point_weight(unit_circle):
    f = BoundaryField(unit_circle, ScareFunction.power_law(3), scale=0.1, far_point=np.array([10.0, 0.0]))
    assert f.far_weight(0.0) == pytest.approx(1 - 0.1 * f.quadrature(0.0).total_measure)
    g = BoundaryField(unit_circle, ScareFunction.power_law(3), scale=0.2, far_point=np.array([10.0, 0.0]))
    with pytest.raises(DomainError):
        g.far_weight(0.0)


def test_scale_can_depend_on_time(unit_circle):
    f = BoundaryField(unit_circle, ScareFunction.power_law(3), scale=lambda t: 1.0 + t)
    a = boundary_velocity(f, 0.0, [0.5, 0.0])
    b = boundary_velocity(f, 1.0, [0.5, 0.0])
    np.testing.assert_allclose(b, 2 * a, rtol=1e-12)


def test_speed_cap(unit_circle):
    f = BoundaryField(unit_circle, ScareFunction.power_law(3))
    pts = np.array([[0.5, 0.0], [0.0, 0.3]])
    s = max_speed(f, pts, 0.0)
    assert field_speed_cap_check(f, pts, 0.0, s * 1.01)
    assert not field_speed_cap_check(f, pts, 0.0, s * 0.99)


@given(st.floats(0.1, 5), st.floats(0.1, 5))
def test_divergence_power_law_formula(p, r):
    # phi' + phi/r = (1 - p) r^(-p-1) in the plane
    assert float(divergence(ScareFunction.power_law(p), r)) == pytest.approx((1 - p) * r ** (-p - 1), rel=1e-10)


def test_divergence_free_when_p_equals_d_minus_1():
    assert float(divergence(ScareFunction.power_law(2), 0.7, d=3)) == pytest.approx(0.0, abs=1e-12)


def test_scale_is_exactly_linear(unit_circle):
    s = ScareFunction.power_law(3)
    x = np.array([[0.5, 0.1], [-0.2, 0.3]])
    a = boundary_velocity(BoundaryField(unit_circle, s, scale=0.37), 0.0, x)
    b = boundary_velocity(BoundaryField(unit_circle, s), 0.0, x)
    np.testing.assert_array_equal(a, b * 0.37)


def test_panel_count_convergence():
    tube = ellipse_tube(1.0, (0, 0), 2.0, 1.0)
    s = ScareFunction.power_law(3)
    x = [0.4, 0.2]
    v = [boundary_velocity(BoundaryField(tube, s, n_panels=n), 0.0, x) for n in (64, 128, 256, 512)]
    d = [np.linalg.norm(a - b) for a, b in zip(v, v[1:])]
    assert d[0] / d[1] >= 3 and d[1] / d[2] >= 3


def test_near_boundary_refinement_resolves_peak(unit_circle):
    s = ScareFunction.power_law(3)
    x = [0.0, 1 - 1e-3]
    coarse = boundary_velocity(BoundaryField(unit_circle, s, n_panels=64), 0.0, x)
    fine = boundary_velocity(BoundaryField(unit_circle, s, n_panels=1024), 0.0, x)
    assert np.linalg.norm(coarse - fine) / np.linalg.norm(fine) < 1e-2
