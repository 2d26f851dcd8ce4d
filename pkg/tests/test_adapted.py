import math

import numpy as np
import pytest

from geomq import adapted, charts, geometry as geo, potentials as pot
from geomq.errors import OffsetDegenerate, StepFailure


def test_area_ratio_exact_values():
    assert adapted.area_ratio_exact(charts.sphere(), [0.7, 0.3], 0.1) == pytest.approx(1.21)
    assert adapted.area_ratio_exact(charts.cylinder(), [0.2, 0.0], 0.05) == pytest.approx(1.05)
    assert adapted.area_ratio_exact(charts.plane(), [0.2, -0.1], 0.3) == pytest.approx(1.0)


def test_area_ratio_focal_point():
    with pytest.raises(OffsetDegenerate):
        adapted.area_ratio_exact(charts.circle(), [0.0], -1.0)


def test_area_ratio_round_trip():
    chart = charts.ellipse()
    u, eps = [0.3], 1e-3
    forward = adapted.area_ratio_exact(chart, u, eps)
    offset = adapted.OffsetFrame(chart, eps, reference_point=u).as_chart()
    back = adapted.area_ratio_exact(offset, u, -eps)
    assert abs(forward * back - 1.0) < 1e-5


@pytest.mark.parametrize("principal,coeffs", [([1.0, 1.0], (1, 2, 1)), ([1.0, 0.0], (1, 1, 0)),
                                              ([1.0, -1.0], (1, 0, -1))])
def test_area_ratio_series_coefficients(principal, coeffs):
    s = adapted.area_ratio_series(principal)
    assert (s.c0, s.c1, s.c2) == pytest.approx(coeffs)


def test_series_terminates_for_low_dimension():
    eps = np.logspace(-3, -1, 5)
    for chart, u in [(charts.sphere(), [0.7, 0.3]), (charts.cylinder(), [0.1, 0.0]),
                     (charts.ellipse(), [0.3])]:
        res = adapted.verify_series_order(chart, u, eps)
        assert res.terminates and math.isnan(res.slope)


def test_series_remainder_is_cubic_for_three_dimensional_hypersurface():
    res = adapted.verify_series_order(charts.ellipsoid(), [0.7, 0.5, 0.3], np.logspace(-3, -1, 9))
    assert not res.terminates
    assert 2.7 <= res.slope <= 3.3


def test_prokhorov_examples():
    flat = adapted.prokhorov_equivalence_check(charts.plane(), [0.2, -0.1],
                                               chi=lambda u: math.cos(u[0]))
    assert flat.residual < 1e-8 and flat.vq_codim1 == 0.0
    circle = adapted.prokhorov_equivalence_check(charts.circle(), [0.3], chi=lambda u: math.cos(u[0]))
    assert circle.recovered_vq == pytest.approx(-0.125, abs=1e-6)
    quad = charts.random_quadric(7)
    assert adapted.prokhorov_equivalence_check(quad, quad.default_point).residual < 1e-5


def test_prokhorov_step_bound():
    with pytest.raises(OffsetDegenerate):
        adapted.prokhorov_equivalence_check(charts.circle(0.01), [0.3], step=0.01)


def test_normal_derivatives_weingarten():
    dn = adapted.normal_derivatives(charts.sphere(2.0), [0.7, 0.3])[0]
    J = geo.jacobian(charts.sphere(2.0), [0.7, 0.3])
    assert np.allclose(dn, 0.5 * J)


def test_det_expansion_examples():
    zero = adapted.det_expansion_check(np.zeros((1, 2, 2)), 0.01)
    assert zero.exact == 1.0 and zero.series == 1.0
    diag = adapted.det_expansion_check(np.diag([1.0, 2.0]), 0.01)
    # the neglected eps^3 terms are 12 e^3 + 7.5 e^4 + ..., so the residual is about 1.2e-5
    assert diag.residual == pytest.approx(1.2040e-05, rel=1e-3)
    assert diag.residual < 20 * 0.01**3


def test_det_expansion_order():
    slope, _ = adapted.det_expansion_order(np.diag([1.0, 2.0]), np.logspace(-3, -1.5, 6))
    assert slope >= 2.7
    gen = np.random.default_rng(3)
    k = gen.normal(size=(2, 2, 2))
    k = (k + k.transpose(0, 2, 1)) / 2
    slope, _ = adapted.det_expansion_order(k, np.logspace(-3, -1.5, 6))
    assert slope == pytest.approx(2.0, abs=0.1)


def test_vq_numeric_fd_examples():
    assert abs(adapted.vq_numeric_fd(np.eye(2)[None])) < 1e-8
    torus = [np.diag([1.0, 0.0]), np.diag([0.0, 0.5])]
    assert adapted.vq_numeric_fd(torus) == pytest.approx(-0.15625, abs=1e-7)
    gen = np.random.default_rng(11)
    k = gen.normal(size=(2, 3, 3)) * 0.5
    k = (k + k.transpose(0, 2, 1)) / 2
    assert adapted.vq_numeric_fd(k) == pytest.approx(pot.vq_general_invariant(k), abs=1e-6)


def test_step_failure_on_large_curvature():
    with pytest.raises(StepFailure):
        adapted.vq_numeric_fd(np.diag([40.0, -30.0])[None], step=1e-2)
    with pytest.raises(StepFailure):
        adapted.vq_numeric_fd(np.diag([200.0, -150.0])[None], step=1e-2)


def test_vq_from_determinant_matches_codim1_formula():
    k = np.array([0.7, -0.3])
    vq = adapted.vq_from_determinant(lambda e: float(np.prod(1 + e[0] * k) ** 2), 1)
    assert vq == pytest.approx(pot.vq_codim1(k), abs=1e-8)
