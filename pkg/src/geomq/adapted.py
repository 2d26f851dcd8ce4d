"""Offset surfaces and adapted-coordinate checks.

The layer around a surface is parametrized by ``(u, eps)`` with
``x = r(u) + sum_a eps_a n^a(u)``. Quantities here are the numerical
counterparts of the expansions used in the thin-layer argument: area
ratios of parallel surfaces, the normal-derivative replay of the physical
sector condition, and the metric-determinant route to the quantum potential.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import geometry as geo
from .errors import OffsetDegenerate, StepFailure
from .potentials import as_forms, vq_codim1


def normal_derivatives(chart, u):
    """``out[alpha, :, a] = d_a n^alpha`` at ``u`` for the frame of :func:`normal_frame`.

    Tangential part from the Weingarten equation; for codimension >= 2 the
    normal-connection part comes from :func:`geomq.geometry.frame_cross_terms`.
    """
    u = geo.as_param(u)
    J = geo.jacobian(chart, u)
    H = chart.second_derivatives(u)
    g = J.T @ J
    normals = geo.normal_frame(chart, u)
    h = np.einsum("ai,ibc->abc", normals, H)
    out = np.stack([-J @ np.linalg.solve(g, h[alpha]) for alpha in range(chart.codim)])
    if chart.codim > 1:
        cross = geo.frame_cross_terms(chart, u)
        out = out + np.einsum("xya,yi->xia", cross, normals)
    return out


def _displacement(chart, eps):
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    if eps.size == 1 and chart.codim > 1:
        eps = np.full(chart.codim, float(eps[0]))
    if eps.shape != (chart.codim,):
        raise ValueError(f"need {chart.codim} offsets, got {eps.shape}")
    return eps


@dataclass
class OffsetFrame:
    """Parallel surface at fixed normal displacement ``eps`` from ``base_chart``."""

    base_chart: geo.Chart
    displacement: np.ndarray
    reference_point: Optional[np.ndarray] = None

    def __post_init__(self):
        self.displacement = _displacement(self.base_chart, self.displacement)
        if self.reference_point is None:
            dp = self.base_chart.default_point
            self.reference_point = geo.as_param(dp if dp is not None else np.zeros(self.base_chart.m))
        self._reference_frame = geo.normal_frame(self.base_chart, self.reference_point)

    def offset_map(self, u):
        frame = geo.align_frame(geo.normal_frame(self.base_chart, u), self._reference_frame)
        return self.base_chart.point(u) + self.displacement @ frame

    def jacobian(self, u):
        J = geo.jacobian(self.base_chart, u)
        frame = geo.normal_frame(self.base_chart, u)
        dn = normal_derivatives(self.base_chart, u)
        # frame rows may be flipped relative to the reference; flip derivatives alike
        signs = np.sign(np.einsum("ai,ai->a", frame, self._reference_frame))
        signs[signs == 0] = 1.0
        return J + np.einsum("a,a,aib->ib", self.displacement, signs, dn)

    def as_chart(self):
        """Finite-difference :class:`Chart` of the offset surface."""
        base = self.base_chart
        return geo.Chart(map=self.offset_map, m=base.m, n=base.n, derivative_mode="fd",
                         periods=base.periods, name=f"offset({base.name})",
                         params={"eps": self.displacement.tolist()},
                         default_point=tuple(self.reference_point))


def _check_immersion(chart, u, eps, tol):
    data = geo.curvature_forms(chart, u)
    A = np.einsum("a,aij->ij", eps, data.forms)
    stretch = np.linalg.eigvalsh(np.eye(chart.m) + A)
    if stretch.min() <= tol:
        raise OffsetDegenerate(
            f"offset {eps.tolist()} reaches a focal point (min stretch {stretch.min():.3e})")


def area_ratio_exact(chart, u, eps):
    """``dS'/dS`` from the offset metric: ``sqrt(det g_offset / det g)``."""
    u = geo.as_param(u)
    eps = _displacement(chart, eps)
    _check_immersion(chart, u, eps, chart.rank_tol)
    J = geo.jacobian(chart, u)
    J_off = OffsetFrame(chart, eps, reference_point=u).jacobian(u)
    return float(np.sqrt(np.linalg.det(J_off.T @ J_off) / np.linalg.det(J.T @ J)))


@dataclass(frozen=True)
class AreaRatioSeries:
    c0: float
    c1: float
    c2: float

    def __call__(self, eps):
        return self.c0 + self.c1 * eps + self.c2 * eps**2


def area_ratio_series(principal):
    k = np.asarray(principal, dtype=float)
    return AreaRatioSeries(1.0, float(k.sum()), float((k.sum() ** 2 - np.sum(k * k)) / 2))


@dataclass
class SeriesOrder:
    slope: float
    max_residual: float
    terminates: bool
    epsilons: list = field(default_factory=list)
    residuals: list = field(default_factory=list)


TERMINATION_TOL = 1e-12


def verify_series_order(chart, u, eps_grid):
    """Log-log slope of ``|exact - series|`` against ``eps``.

    When the truncated series is exact (every residual at or below 1e-12)
    there is no remainder to fit: ``terminates`` is set and ``slope`` is NaN.
    """
    if chart.codim != 1:
        raise ValueError("verify_series_order needs a codimension-1 chart")
    data = geo.curvature_forms(chart, u)
    series = area_ratio_series(data.principal)
    eps_grid = np.asarray(eps_grid, dtype=float)
    residuals = np.array([abs(area_ratio_exact(chart, u, e) - series(e)) for e in eps_grid])
    max_res = float(residuals.max())
    terminates = max_res <= TERMINATION_TOL
    slope = float("nan")
    if not terminates:
        slope = float(np.polyfit(np.log(eps_grid), np.log(residuals), 1)[0])
    return SeriesOrder(slope, max_res, terminates, eps_grid.tolist(), residuals.tolist())


def _richardson_derivatives(fn, h):
    """First and second derivative of a scalar function at 0, one Richardson level."""

    def levels(s):
        fp, f0, fm = fn(s), fn(0.0), fn(-s)
        return (fp - fm) / (2 * s), (fp - 2 * f0 + fm) / s**2

    coarse = levels(h)
    fine = levels(h / 2)
    d1 = (4 * fine[0] - coarse[0]) / 3
    d2 = (4 * fine[1] - coarse[1]) / 3
    disagreement = max(abs(d1 - fine[0]), abs(d2 - fine[1]))
    return d1, d2, disagreement


def _default_test_function(u):
    return float(np.exp(0.3 * np.sum(np.sin(u))))


@dataclass
class ProkhorovResult:
    residual: float
    recovered_vq: float
    vq_codim1: float
    laplacian_psi: float
    laplace_beltrami_chi: float
    div_n: float


def prokhorov_equivalence_check(chart, u, chi: Optional[Callable] = None, step=1e-3, lb_step=1e-3):
    """Replay the physical-sector condition numerically at ``u``.

    ``Psi(u, x) = chi(u) / sqrt(dS'/dS)(u, x)`` satisfies the condition by
    construction. The ambient Laplacian in adapted form,
    ``d_x^2 + div n d_x + Delta_LB``, is then evaluated at ``x = 0`` with
    finite differences and compared with ``Delta_LB chi - 2 V_q chi``.
    """
    if chart.codim != 1:
        raise ValueError("prokhorov_equivalence_check needs a codimension-1 chart")
    u = geo.as_param(u)
    chi = chi or _default_test_function
    data = geo.curvature_forms(chart, u)
    kmax = float(np.max(np.abs(data.principal)))
    if step * kmax >= 0.5:
        raise OffsetDegenerate(f"normal step {step} too large for curvature {kmax:.3g}")
    J = geo.jacobian(chart, u)
    base_det = np.linalg.det(J.T @ J)
    dn = normal_derivatives(chart, u)[0]

    def psi_normal(x):
        J_off = J + x * dn
        ratio = np.sqrt(np.linalg.det(J_off.T @ J_off) / base_det)
        return chi(u) / np.sqrt(ratio)

    d1, d2, _ = _richardson_derivatives(psi_normal, step)
    div_n = geo.divergence_of_normal(chart, u).numerical

    def psi_on_surface(v):
        return chi(v) / np.sqrt(area_ratio_exact(chart, v, 0.0))

    lb_psi = geo.laplace_beltrami(chart, psi_on_surface, u, step=lb_step)
    lb_chi = geo.laplace_beltrami(chart, chi, u, step=lb_step)
    laplacian = d2 + div_n * d1 + lb_psi
    vq = float(vq_codim1(data.principal))
    chi0 = chi(u)
    residual = abs(laplacian - (lb_chi - 2 * vq * chi0)) / abs(chi0)
    recovered = -(laplacian - lb_chi) / (2 * chi0)
    return ProkhorovResult(float(residual), float(recovered), vq, float(laplacian),
                           float(lb_chi), float(div_n))


@dataclass
class DetExpansion:
    exact: float
    series: float
    residual: float


def det_series_paper(forms, eps):
    """Six-term second-order expansion of ``g = det(I + A)^2``.

    ``1 + 2 e.tr k + 2 (e.tr k)^2 - 2 sum_a (e.k_aa)^2 + 3 sum A_ab^2 - 2 sum A_aa^2``.
    Exact to second order only when every form is diagonal.
    """
    k = as_forms(forms)
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (k.shape[0],))
    diag = np.einsum("aii->ai", k)
    A = np.einsum("a,aij->ij", eps, k)
    A_diag = np.diag(A)
    linear = 2 * float(eps @ diag.sum(axis=1))
    t1 = 2 * float(eps @ diag.sum(axis=1)) ** 2
    t2 = -2 * float(np.sum((eps @ diag) ** 2))
    t3 = 3 * float(np.sum(A * A))
    t4 = -2 * float(np.sum(A_diag**2))
    return 1.0 + linear + t1 + t2 + t3 + t4


def det_exact(forms, eps):
    k = as_forms(forms)
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (k.shape[0],))
    A = np.einsum("a,aij->ij", eps, k)
    return float(np.linalg.det(np.eye(k.shape[1]) + A) ** 2)


def det_expansion_check(forms, eps):
    exact = det_exact(forms, eps)
    series = det_series_paper(forms, eps)
    return DetExpansion(exact, series, abs(exact - series))


def det_expansion_order(forms, eps_grid):
    """Fitted log-log slope of the expansion residual over a grid of uniform offsets."""
    eps_grid = np.asarray(eps_grid, dtype=float)
    res = np.array([det_expansion_check(forms, e).residual for e in eps_grid])
    if res.max() <= TERMINATION_TOL:
        return float("nan"), res
    return float(np.polyfit(np.log(eps_grid), np.log(res), 1)[0]), res


def vq_from_determinant(gfunc: Callable, codim: int, step=1e-3, hbar=1.0, tol=1e-5):
    """Potential ``-hbar^2/2 sum_a (phi''/phi - 2 (phi'/phi)^2)`` with ``phi = g^(-1/4)``.

    ``gfunc`` maps a vector of normal offsets to the metric determinant;
    derivatives along each offset axis use central differences with one
    Richardson level. Raises :class:`StepFailure` when the two levels
    disagree by more than ``tol`` (relative to the derivative size).
    """
    phi0 = gfunc(np.zeros(codim)) ** -0.25
    total = 0.0
    for alpha in range(codim):
        e = np.zeros(codim)
        e[alpha] = 1.0

        def phi(s, e=e):
            g = gfunc(s * e)
            if not g > 0:
                raise StepFailure(f"metric determinant {g:.3g} at offset {s:g}; reduce the step")
            return g**-0.25

        d1, d2, disagreement = _richardson_derivatives(phi, step)
        if disagreement > tol * max(1.0, abs(d1), abs(d2)):
            raise StepFailure(f"Richardson levels disagree by {disagreement:.2e} at step {step}")
        total += d2 / phi0 - 2 * (d1 / phi0) ** 2
    return -(hbar**2) * total / 2


def vq_numeric_fd(forms, step=1e-3, hbar=1.0):
    """Finite-difference oracle for the general potential from ``g = det(I + A)^2``."""
    k = as_forms(forms)
    return vq_from_determinant(lambda eps: det_exact(k, eps), k.shape[0], step=step, hbar=hbar)
