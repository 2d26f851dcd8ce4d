"""First- and second-order differential geometry of embedded patches.

A :class:`Chart` embeds an m-dimensional parameter patch in R^n. Everything
else in the package is built from three of its derivatives: the map itself,
the Jacobian and the array of second derivatives.

Sign convention for curvature forms: ``k = -L^{-1} h L^{-T}`` where
``h_ab = n . d_a d_b r`` and ``g = L L^T``. With this choice an offset along
``+n`` by ``eps`` stretches length elements by ``1 + eps*k`` and a round sphere
with outward normal has ``k = +1/R``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DegenerateChart, FrameDiscontinuity, NonSymmetricForm

RANK_TOL = 1e-8
GS_DEPENDENCE_TOL = 1e-6
SYMMETRY_TOL = 1e-8


def as_param(u):
    """Parameter point as a 1-d float array (scalars allowed for curves)."""
    return np.atleast_1d(np.asarray(u, dtype=float))


@dataclass(frozen=True)
class Chart:
    """Parametric embedding ``u -> map(u)`` of an m-patch into R^n.

    In ``"analytic"`` mode ``jac`` must return the n x m Jacobian and ``hess``
    the n x m x m array of second derivatives. In ``"fd"`` mode both are
    obtained by central differences with relative steps ``h_first`` and
    ``h_second``.
    """

    map: Callable[[np.ndarray], np.ndarray]
    m: int
    n: int
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hess: Optional[Callable[[np.ndarray], np.ndarray]] = None
    derivative_mode: str = "fd"
    periods: tuple = ()
    name: str = "chart"
    params: dict = field(default_factory=dict)
    default_point: Optional[tuple] = None
    h_first: float = 1e-6
    h_second: float = 1e-4
    rank_tol: float = RANK_TOL

    def __post_init__(self):
        if not 1 <= self.m < self.n:
            raise ValueError(f"need 1 <= m < n, got m={self.m}, n={self.n}")
        if self.derivative_mode not in ("analytic", "fd"):
            raise ValueError(f"unknown derivative_mode {self.derivative_mode!r}")
        if self.derivative_mode == "analytic" and (self.jac is None or self.hess is None):
            raise ValueError("analytic mode needs jac and hess callbacks")
        periods = tuple(self.periods) + (None,) * (self.m - len(self.periods))
        if len(periods) != self.m:
            raise ValueError("more periods than parameters")
        for p in periods:
            if p is not None and not p > 0:
                raise ValueError("periods must be positive")
        object.__setattr__(self, "periods", periods)

    @property
    def codim(self):
        return self.n - self.m

    def with_mode(self, mode):
        return dataclasses.replace(self, derivative_mode=mode)

    def point(self, u):
        return np.asarray(self.map(as_param(u)), dtype=float)

    def first_derivatives(self, u):
        u = as_param(u)
        if self.derivative_mode == "analytic":
            return np.asarray(self.jac(u), dtype=float).reshape(self.n, self.m)
        out = np.empty((self.n, self.m))
        for a in range(self.m):
            h = self.h_first * max(1.0, abs(u[a]))
            e = np.zeros(self.m)
            e[a] = h
            out[:, a] = (self.point(u + e) - self.point(u - e)) / (2 * h)
        return out

    def second_derivatives(self, u):
        u = as_param(u)
        if self.derivative_mode == "analytic":
            return np.asarray(self.hess(u), dtype=float).reshape(self.n, self.m, self.m)
        m = self.m
        steps = [self.h_second * max(1.0, abs(x)) for x in u]
        basis = np.eye(m)
        r0 = self.point(u)
        out = np.empty((self.n, m, m))
        for a in range(m):
            ea = basis[a] * steps[a]
            out[:, a, a] = (self.point(u + ea) - 2 * r0 + self.point(u - ea)) / steps[a] ** 2
            for b in range(a + 1, m):
                eb = basis[b] * steps[b]
                mixed = (self.point(u + ea + eb) - self.point(u + ea - eb)
                         - self.point(u - ea + eb) + self.point(u - ea - eb))
                out[:, a, b] = out[:, b, a] = mixed / (4 * steps[a] * steps[b])
        return out

    def wrap(self, u):
        """Reduce periodic coordinates into ``[0, period)``."""
        u = as_param(u).copy()
        for a, p in enumerate(self.periods):
            if p is not None:
                u[a] = np.mod(u[a], p)
        return u


def check_periodicity(chart, u, tol=1e-12):
    """Max deviation of ``map(u + period e_a) - map(u)`` over periodic axes."""
    u = as_param(u)
    r0 = chart.point(u)
    worst = 0.0
    for a, p in enumerate(chart.periods):
        if p is None:
            continue
        shifted = u.copy()
        shifted[a] += p
        worst = max(worst, float(np.max(np.abs(chart.point(shifted) - r0))))
    if worst > tol * max(1.0, float(np.max(np.abs(r0)))):
        raise ValueError(f"chart {chart.name} is not periodic to {tol}: {worst:.3e}")
    return worst


def jacobian(chart: Chart, u) -> np.ndarray:
    """n x m matrix of tangent vectors ``d r / d u_a``."""
    J = chart.first_derivatives(u)
    smin = np.linalg.svd(J, compute_uv=False)[-1]
    if not smin > chart.rank_tol:
        raise DegenerateChart(
            f"{chart.name}: Jacobian rank-deficient at u={np.asarray(u).tolist()} "
            f"(smallest singular value {smin:.3e})")
    return J


def metric(chart: Chart, u) -> np.ndarray:
    J = jacobian(chart, u)
    g = J.T @ J
    return 0.5 * (g + g.T)


def _orthonormal_tangents(J):
    q, _ = np.linalg.qr(J)
    return q


def _normals_from_tangents(q, n, codim):
    normals = []
    for i in range(n):
        v = np.zeros(n)
        v[i] = 1.0
        # two passes of classical Gram-Schmidt for orthogonality to ~1e-16
        for _ in range(2):
            v = v - q @ (q.T @ v)
            for w in normals:
                v = v - (w @ v) * w
        norm = np.linalg.norm(v)
        if norm < GS_DEPENDENCE_TOL:
            continue
        v = v / norm
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        normals.append(v)
        if len(normals) == codim:
            break
    return np.array(normals)


def normal_frame(chart: Chart, u) -> np.ndarray:
    """Orthonormal basis of the normal space, one row per normal.

    Deterministic: Gram-Schmidt of the ambient standard basis against the
    tangent space, then each normal is flipped so its largest-magnitude
    component is positive.
    """
    J = jacobian(chart, u)
    return _normals_from_tangents(_orthonormal_tangents(J), chart.n, chart.codim)


def align_frame(frame, reference):
    """Flip rows of ``frame`` to point the same way as ``reference``."""
    frame = np.array(frame, dtype=float)
    for alpha in range(frame.shape[0]):
        d = frame[alpha] @ reference[alpha]
        if abs(d) < 0.5:
            raise FrameDiscontinuity(
                f"normal {alpha} rotated by more than 60 degrees between neighbours "
                f"(overlap {d:.3f})")
        if d < 0:
            frame[alpha] = -frame[alpha]
    return frame


def normal_frames_along(chart: Chart, points: Sequence, reference=None) -> np.ndarray:
    """Normal frames at consecutive points with signs propagated continuously."""
    frames = []
    prev = reference
    for u in points:
        frame = normal_frame(chart, u)
        if prev is not None:
            frame = align_frame(frame, prev)
        frames.append(frame)
        prev = frame
    return np.array(frames)


@dataclass
class CurvatureData:
    """Frames and curvature forms at one point.

    ``forms[alpha]`` is the matrix of the curvature form along
    ``normal_frame[alpha]`` written in the orthonormal ``tangent_frame``.
    """

    point: np.ndarray
    tangent_frame: np.ndarray
    normal_frame: np.ndarray
    forms: np.ndarray
    principal: Optional[np.ndarray] = None

    @property
    def m(self):
        return self.tangent_frame.shape[0]

    @property
    def codim(self):
        return self.normal_frame.shape[0]

    def flipped(self, alpha):
        """Same data with normal ``alpha`` reversed."""
        normals = self.normal_frame.copy()
        forms = self.forms.copy()
        normals[alpha] = -normals[alpha]
        forms[alpha] = -forms[alpha]
        return _with_forms(self, normals, forms)

    def in_normal_basis(self, normals):
        """Re-express the forms along another orthonormal basis of the same normal space."""
        normals = np.asarray(normals, dtype=float)
        rot = normals @ self.normal_frame.T
        if np.max(np.abs(rot @ rot.T - np.eye(self.codim))) > 1e-8:
            raise ValueError("new normals do not span the same normal space")
        forms = np.einsum("gb,bij->gij", rot, self.forms)
        return _with_forms(self, normals, forms)

    def trace_invariants(self):
        """``(tr k^a, tr k^a k^b)``; unchanged by tangent-frame rotations."""
        traces = np.einsum("aii->a", self.forms)
        gram = np.einsum("aij,bji->ab", self.forms, self.forms)
        return traces, gram


def _with_forms(data, normals, forms):
    principal = None
    if forms.shape[0] == 1:
        principal = np.sort(np.linalg.eigvalsh(forms[0]))[::-1]
    return CurvatureData(data.point.copy(), data.tangent_frame.copy(), normals, forms, principal)


def curvature_forms(chart: Chart, u) -> CurvatureData:
    u = as_param(u)
    J = jacobian(chart, u)
    H = chart.second_derivatives(u)
    g = J.T @ J
    L = np.linalg.cholesky(0.5 * (g + g.T))
    Linv = solve_triangular(L, np.eye(chart.m), lower=True)
    normals = _normals_from_tangents(_orthonormal_tangents(J), chart.n, chart.codim)
    h = np.einsum("ai,ibc->abc", normals, H)
    forms = -np.einsum("ij,ajk,lk->ail", Linv, h, Linv)
    scale = max(1.0, float(np.max(np.abs(forms))))
    asym = float(np.max(np.abs(forms - forms.transpose(0, 2, 1))))
    if asym > SYMMETRY_TOL * scale:
        raise NonSymmetricForm(f"curvature form asymmetric by {asym:.3e}; check derivative steps")
    forms = 0.5 * (forms + forms.transpose(0, 2, 1))
    tangents = (J @ Linv.T).T
    principal = None
    if chart.codim == 1:
        principal = np.sort(np.linalg.eigvalsh(forms[0]))[::-1]
    return CurvatureData(u.copy(), tangents, normals, forms, principal)


def curvature_along(chart: Chart, points: Sequence):
    """Signed curvature forms at consecutive points with a continuous normal frame."""
    out = []
    prev = None
    for u in points:
        data = curvature_forms(chart, u)
        if prev is not None:
            for alpha in range(data.codim):
                d = data.normal_frame[alpha] @ prev[alpha]
                if abs(d) < 0.5:
                    raise FrameDiscontinuity(f"normal {alpha} jumped between grid points")
                if d < 0:
                    data = data.flipped(alpha)
        prev = data.normal_frame
        out.append(data)
    return out


def foot_point(chart: Chart, x, u0, tol=1e-15, maxiter=50):
    """Parameters of the surface point nearest to ``x`` (Newton from ``u0``)."""
    u = as_param(u0).copy()
    x = np.asarray(x, dtype=float)
    for _ in range(maxiter):
        d = chart.point(u) - x
        J = jacobian(chart, u)
        H = chart.second_derivatives(u)
        grad = J.T @ d
        hess = J.T @ J + np.einsum("i,iab->ab", d, H)
        step = np.linalg.solve(hess, grad)
        u = u - step
        if np.linalg.norm(step) <= tol * max(1.0, np.linalg.norm(u)):
            break
    return u


class Divergence(NamedTuple):
    principal_sum: float
    numerical: float


def divergence_of_normal(chart: Chart, u, step=1e-4) -> Divergence:
    """div n from the principal curvatures and from the extended normal field.

    The numerical path extends the unit normal off the surface as the normal at
    the nearest surface point and takes central differences in ambient space.
    """
    if chart.codim != 1:
        raise ValueError("divergence_of_normal needs a codimension-1 chart")
    u = as_param(u)
    data = curvature_forms(chart, u)
    n0 = data.normal_frame[0]
    x0 = chart.point(u)

    def field_at(x):
        v = normal_frame(chart, foot_point(chart, x, u))[0]
        return v if v @ n0 >= 0 else -v

    def central(s):
        total = 0.0
        for j in range(chart.n):
            e = np.zeros(chart.n)
            e[j] = s
            total += (field_at(x0 + e)[j] - field_at(x0 - e)[j]) / (2 * s)
        return total

    # one Richardson level removes the O(step^2) truncation term
    numerical = (4 * central(step / 2) - central(step)) / 3
    return Divergence(float(np.sum(data.principal)), float(numerical))


def frame_cross_terms(chart: Chart, u, step=None) -> np.ndarray:
    """``out[beta, alpha, a] = d_a n^(beta) . n^(alpha)`` for a sign-continuous frame.

    Diagonal entries vanish for unit normals; the array is antisymmetric in
    ``(alpha, beta)``.
    """
    if chart.codim < 2:
        raise ValueError("frame_cross_terms needs codimension >= 2")
    u = as_param(u)
    centre = normal_frame(chart, u)
    out = np.empty((chart.codim, chart.codim, chart.m))
    for a in range(chart.m):
        h = step if step is not None else chart.h_second * max(1.0, abs(u[a]))
        e = np.zeros(chart.m)
        e[a] = h
        plus = align_frame(normal_frame(chart, u + e), centre)
        minus = align_frame(normal_frame(chart, u - e), centre)
        dn = (plus - minus) / (2 * h)
        out[:, :, a] = dn @ centre.T
    return out


def laplace_beltrami(chart: Chart, f: Callable, u, step=1e-3) -> float:
    """Laplace-Beltrami of a scalar function of the chart parameters at ``u``.

    Flux form ``g^{-1/2} d_a (g^{1/2} g^{ab} d_b f)`` with nested central
    differences.
    """
    u = as_param(u)
    m = chart.m

    def grad(v):
        out = np.empty(m)
        for b in range(m):
            e = np.zeros(m)
            e[b] = step
            out[b] = (f(v + e) - f(v - e)) / (2 * step)
        return out

    def flux(v):
        g = metric(chart, v)
        return np.sqrt(np.linalg.det(g)) * np.linalg.solve(g, grad(v))

    total = 0.0
    for a in range(m):
        e = np.zeros(m)
        e[a] = step
        total += (flux(u + e)[a] - flux(u - e)[a]) / (2 * step)
    return float(total / np.sqrt(np.linalg.det(metric(chart, u))))
