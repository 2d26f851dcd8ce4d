import math

import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.special import jv, spherical_jn, spherical_yn, yv

from geomq import charts, solver
from geomq.errors import GridTooCoarse, OffsetDegenerate


def annulus_level(l, R, delta):
    """Lowest Dirichlet level of angular momentum l in R - delta < r < R + delta (Bessel zeros)."""
    a, b = R - delta, R + delta

    def cross(k):
        return jv(l, k * a) * yv(l, k * b) - jv(l, k * b) * yv(l, k * a)

    k0 = math.pi / (2 * delta)
    return brentq(cross, 0.8 * k0, 1.2 * k0, xtol=1e-14) ** 2 / 2


def shell_level(l, R, delta):
    a, b = R - delta, R + delta

    def cross(k):
        return (spherical_jn(l, k * a) * spherical_yn(l, k * b)
                - spherical_jn(l, k * b) * spherical_yn(l, k * a))

    k0 = math.pi / (2 * delta)
    return brentq(cross, 0.8 * k0, 1.2 * k0, xtol=1e-14) ** 2 / 2


def test_gll_rule():
    x, w, D = solver.gll(16)
    assert w.sum() == pytest.approx(2.0)
    assert np.allclose(D @ x**5, 5 * x**4)
    assert np.sum(w * x**20) == pytest.approx(2 / 21)


def test_group_degeneracies():
    assert solver.group_degeneracies([0.0, 1.0, 1.0 + 1e-9, 2.0]) == [[0], [1, 2], [3]]


def test_surface_spectrum_circle():
    with_vq = solver.surface_spectrum(charts.circle(), True, 128, 5)
    assert np.allclose(with_vq.eigenvalues, [-0.125, 0.375, 0.375, 1.875, 1.875], atol=1e-6)
    bare = solver.surface_spectrum(charts.circle(), False, 128, 4)
    assert np.allclose(bare.eigenvalues, [0.0, 0.5, 0.5, 2.0], atol=1e-6)
    assert bare.degeneracies == [[0], [1, 2], [3]]


def test_surface_spectrum_flat_torus_is_analytic():
    res = solver.surface_spectrum(charts.flat_torus(1.0, 2.0), True, num_eigenvalues=3)
    assert res.eigenvalues[0] == pytest.approx(-0.15625)
    assert res.eigenvalues[1] == pytest.approx(-0.15625 + 1 / 8)
    assert res.grid_meta["path"] == "analytic"


def test_surface_grid_convergence_order():
    ellipse = charts.ellipse()
    raw = []
    for n in (32, 64, 128):
        K, M = solver.assemble_surface_operator(ellipse, n)
        raw.append(solver.solve_generalized(K, M, 4)[0])
    order = np.log2(np.abs(raw[1] - raw[0]) / np.abs(raw[2] - raw[1]))
    assert np.all(order >= 1.8)


def test_grid_too_coarse():
    with pytest.raises(GridTooCoarse):
        solver.surface_spectrum(charts.ellipse(1.0, 0.15), True, 32, 6)


def test_scenario_invariants(circle):
    with pytest.raises(ValueError):
        solver.ThinLayerScenario(circle, 0.05, n_normal=8)
    with pytest.raises(ValueError):
        solver.ThinLayerScenario(circle, 0.05, n_tangent=16)
    with pytest.raises(ValueError):
        solver.ThinLayerScenario(circle, 0.05, solver="magic")
    with pytest.raises(OffsetDegenerate):
        solver.layer_spectrum_curve(solver.ThinLayerScenario(circle, 0.6))


@pytest.mark.parametrize("delta", [0.1, 0.05])
def test_circle_layer_matches_bessel_oracle(circle, delta):
    res = solver.layer_spectrum_curve(
        solver.ThinLayerScenario(circle, delta, n_tangent=64, num_eigenvalues=3))
    for i, l in enumerate([0, 1, 1]):
        assert res.eigenvalues[i] == pytest.approx(annulus_level(l, 1.0, delta), rel=1e-9)
    assert res.subtracted[0] == pytest.approx(-0.125, rel=0.02)
    assert res.subtracted[1] == pytest.approx(0.375, rel=0.02)
    assert res.degeneracies[:2] == [[0], [1, 2]]


def test_iterative_matches_dense(circle):
    dense = solver.layer_spectrum_curve(
        solver.ThinLayerScenario(circle, 0.05, 64, 16, 4, solver="dense"))
    sparse = solver.layer_spectrum_curve(
        solver.ThinLayerScenario(circle, 0.05, 64, 16, 4, solver="iterative"))
    assert np.allclose(dense.eigenvalues, sparse.eigenvalues, rtol=1e-12)
    assert sparse.ground_state.norm() == pytest.approx(1.0, abs=1e-10)


def test_ground_state_is_normalized(circle):
    res = solver.layer_spectrum_curve(solver.ThinLayerScenario(circle, 0.05, 64, 16, 1))
    assert res.ground_state.norm() == pytest.approx(1.0, abs=1e-10)


def test_flat_strip_layer_is_separable():
    strip = charts.flat_strip()
    sc = solver.ThinLayerScenario(strip, 0.05, 64, 16, 5)
    res = solver.layer_spectrum_curve(sc)
    surf = solver.surface_spectrum(strip, True, 64, 5)
    assert np.allclose(res.subtracted, surf.eigenvalues, atol=1e-9)
    assert solver.factorization_residual(res) <= 1e-10


def test_circle_factorization_defect(circle):
    defect = solver.factorization_residual(solver.ThinLayerScenario(circle, 0.05, 64, 16, 1))
    assert 0 <= defect <= 1e-3


def test_shell_matches_spherical_bessel_oracle():
    res = solver.layer_spectrum_shell(1.0, 0.05, 3, n_radial=200)
    for l, e in enumerate(res.grid_meta["per_l"]):
        assert e == pytest.approx(shell_level(l, 1.0, 0.05), rel=1e-7)
    assert [len(g) for g in res.degeneracies] == [1, 3, 5, 7]


def test_shell_rejects_thick_layer():
    with pytest.raises(OffsetDegenerate):
        solver.layer_spectrum_shell(1.0, 0.6, 2)


def test_shell_grid_too_coarse():
    with pytest.raises(GridTooCoarse):
        solver.layer_spectrum_shell(1.0, 0.025, 3, n_radial=3)


def test_delta_sweep(circle):
    sc = solver.ThinLayerScenario(circle, 0.1, 64, 16, 3)
    rep = solver.delta_sweep(sc, [0.1, 0.05, 0.025])
    assert rep.deltas == [0.1, 0.05, 0.025]
    assert rep.intercepts[0] == pytest.approx(-0.125, abs=1e-5)
    assert rep.intercepts[1] == pytest.approx(0.375, abs=1e-5)
    strip = solver.delta_sweep(solver.ThinLayerScenario(charts.flat_strip(), 0.1, 64, 16, 3),
                               [0.1, 0.05, 0.025])
    assert np.all(np.abs(strip.errors) < 1e-9)
    assert all(math.isnan(s) for s in strip.slopes)


def test_spectrum_serialization(circle):
    res = solver.surface_spectrum(circle, True, 64, 3)
    d = res.to_dict()
    assert d["subtracted"] is None and len(d["eigenvalues"]) == 3
    rows = res.csv_rows()
    assert rows[1][0] == 1 and rows[1][3] == 2
