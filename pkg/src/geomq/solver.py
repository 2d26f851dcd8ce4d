"""Eigensolvers for the surface Hamiltonian and for thin Dirichlet layers.

Both sides of the thin-layer limit are discretized as symmetric generalized
eigenproblems ``K x = E M x`` with a diagonal (volume-weight) mass matrix:

* along a closed curve, a second-order flux stencil in the curve parameter,
  with metric weights at the half points;
* across a layer ``|w| <= delta``, a single Gauss-Lobatto-Legendre spectral
  element (lumped GLL mass is diagonal, stiffness ``D^T W D`` is symmetric).
  The transverse ground energy ``pi^2/(8 delta^2)`` grows like ``delta^-2``
  and has to be resolved to ~1e-7 relative before it can be subtracted,
  which a second-order stencil across the layer cannot do at desk-scale
  grids.

Tangential discretization error is removed by one Richardson step between
``n`` and ``2n`` points; the same pair of solves gives the grid-convergence
check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sps
from numpy.polynomial import legendre
from scipy.sparse.linalg import eigsh

from . import geometry as geo
from .errors import GridTooCoarse, OffsetDegenerate
from .potentials import vq_curve, vq_general_invariant

DENSE_LIMIT = 4000
DEGENERACY_TOL = 1e-6
GRID_TOL = 0.01
SHELL_GRID_TOL = 0.005


def transverse_energy(delta):
    """Ground energy of a particle between walls at ``+-delta`` (hbar = mass = 1)."""
    return math.pi**2 / (8 * delta**2)


def gll(n):
    """Gauss-Lobatto-Legendre nodes, weights and differentiation matrix on [-1, 1]."""
    N = n - 1
    interior = legendre.Legendre.basis(N).deriv().roots()
    x = np.concatenate(([-1.0], np.sort(interior.real), [1.0]))
    PN = legendre.legval(x, np.eye(n)[N])
    w = 2.0 / (N * (N + 1) * PN**2)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                D[i, j] = PN[i] / (PN[j] * (x[i] - x[j]))
    D[0, 0] = -N * (N + 1) / 4
    D[-1, -1] = N * (N + 1) / 4
    return x, w, D


def group_degeneracies(values, tol=DEGENERACY_TOL):
    """Index groups of consecutive values within ``tol * max(1, |E|)`` of the group head."""
    groups = []
    for i, v in enumerate(values):
        if groups and abs(v - values[groups[-1][0]]) <= tol * max(1.0, abs(v)):
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


@dataclass
class WavefunctionGrid:
    """Layer eigenfunction on the (tangent x normal) grid, walls included."""

    values: np.ndarray  # (n_tangent, n_normal)
    u: np.ndarray
    w: np.ndarray
    du: float
    w_weights: np.ndarray  # quadrature weights in w
    sqrt_g: np.ndarray  # along u
    h: np.ndarray  # 1 + w k(u), same shape as values

    @property
    def weights(self):
        """Volume weight of each node, ``du dw h sqrt(g)``."""
        return self.du * self.sqrt_g[:, None] * self.h * self.w_weights[None, :]

    def norm(self):
        return float(np.sqrt(np.sum(self.weights * self.values**2)))


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    subtracted: Optional[np.ndarray] = None
    degeneracies: list = field(default_factory=list)
    grid_meta: dict = field(default_factory=dict)
    richardson_error: Optional[np.ndarray] = None
    ground_state: Optional[WavefunctionGrid] = None

    def levels(self):
        return self.subtracted if self.subtracted is not None else self.eigenvalues

    def to_dict(self):
        def clean(a):
            return None if a is None else [float(x) for x in a]

        return {"eigenvalues": clean(self.eigenvalues), "subtracted": clean(self.subtracted),
                "degeneracies": [list(map(int, g)) for g in self.degeneracies],
                "richardson_error": clean(self.richardson_error),
                "grid_meta": self.grid_meta}

    def csv_rows(self):
        """Rows ``(index, eigenvalue, subtracted, degeneracy)``."""
        size = {i: len(g) for g in self.degeneracies for i in g}
        rows = []
        for i, e in enumerate(self.eigenvalues):
            sub = "" if self.subtracted is None else repr(float(self.subtracted[i]))
            rows.append((i, repr(float(e)), sub, size.get(i, 1)))
        return rows


def _finish(eigenvalues, subtracted, meta, err=None, ground=None):
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    levels = subtracted if subtracted is not None else eigenvalues
    return SpectrumResult(eigenvalues, subtracted, group_degeneracies(levels), meta, err, ground)


def _richardson(coarse, fine, order=2):
    factor = 2**order
    extrapolated = (factor * fine - coarse) / (factor - 1)
    return extrapolated, np.abs(fine - coarse) / (factor - 1)


def _check_grid(err, levels, tol, what):
    scale = max(float(np.max(np.abs(levels))), 1e-300)
    bad = err > tol * np.maximum(np.abs(levels), scale)
    if np.any(bad):
        worst = float(np.max(err / np.maximum(np.abs(levels), scale)))
        raise GridTooCoarse(f"{what}: grid refinement changed eigenvalues by {worst:.2%}")


def solve_generalized(K, M_diag, nev, solver=None, sigma=None):
    size = K.shape[0]
    if solver is None:
        solver = "dense" if size <= DENSE_LIMIT else "iterative"
    if solver == "dense":
        A = K.toarray() if sps.issparse(K) else np.asarray(K)
        vals, vecs = scipy.linalg.eigh(A, np.diag(M_diag), subset_by_index=[0, nev - 1])
    elif solver == "iterative":
        # shift-invert Lanczos around sigma; ARPACK drives the factorized solves
        M = sps.diags(M_diag).tocsc()
        vals, vecs = eigsh(sps.csc_matrix(K), k=nev, M=M, sigma=sigma, which="LM",
                           v0=np.ones(size), tol=1e-13)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    else:
        raise ValueError(f"unknown solver {solver!r}")
    norms = np.sqrt(np.einsum("i,ij,ij->j", M_diag, vecs, vecs))
    return vals, vecs / norms


# ---------------------------------------------------------------- closed curves

def _periodic_axis(chart):
    if chart.m != 1 or chart.periods[0] is None:
        raise ValueError(f"{chart.name}: need a closed (periodic) curve")
    return chart.periods[0]


def curve_grid(chart, n):
    """Nodes and half-points of a periodic grid with metric and signed curvature.

    Returns a dict with ``u``, ``du``, ``sqrt_g`` / ``k`` at nodes and
    ``sqrt_g_half`` / ``k_half`` at ``u + du/2``; ``k`` has one column per
    normal, with the normal frame propagated continuously around the loop.
    """
    period = _periodic_axis(chart)
    u0 = float(chart.default_point[0]) if chart.default_point is not None else 0.0
    du = period / n
    pts = u0 + du * np.arange(2 * n) / 2
    data = geo.curvature_along(chart, pts)
    sqrt_g = np.array([math.sqrt(geo.metric(chart, p)[0, 0]) for p in pts])
    k = np.array([d.forms[:, 0, 0] for d in data])
    return {"u": pts[0::2], "du": du, "sqrt_g": sqrt_g[0::2], "sqrt_g_half": sqrt_g[1::2],
            "k": k[0::2], "k_half": k[1::2]}


def _periodic_stiffness(coef_half, n):
    """Sparse ``sum_i c_{i+1/2} (x_{i+1} - x_i)^2`` for a periodic index."""
    i = np.arange(n)
    j = (i + 1) % n
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([i, j, j, i])
    vals = np.concatenate([coef_half, coef_half, -coef_half, -coef_half])
    return sps.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def assemble_surface_operator(chart, n, include_vq=True):
    """``(K, M_diag)`` for ``-1/2 Laplace-Beltrami + V_q`` on a closed curve."""
    grid = curve_grid(chart, n)
    du = grid["du"]
    K = 0.5 * _periodic_stiffness(1.0 / (grid["sqrt_g_half"] * du), n)
    M = grid["sqrt_g"] * du
    if include_vq:
        vq = np.array([vq_curve(k) for k in grid["k"]])
        K = K + sps.diags(M * vq)
    return K.tocsr(), M


def _flat_torus_spectrum(chart, include_vq, nev):
    R1, R2 = float(chart.params["R1"]), float(chart.params["R2"])
    vq = 0.0
    if include_vq:
        vq = vq_general_invariant(geo.curvature_forms(chart, chart.default_point).forms)
    span = int(math.ceil(math.sqrt(nev))) + 2
    modes = range(-span * 3, span * 3 + 1)
    energies = sorted((p * p / R1**2 + q * q / R2**2) / 2 + vq for p in modes for q in modes)
    meta = {"path": "analytic", "R1": R1, "R2": R2, "vq": vq}
    return _finish(energies[:nev], None, meta)


def surface_spectrum(chart, include_vq=True, n_grid=256, num_eigenvalues=6):
    """Lowest eigenvalues of ``-1/2 Delta_LB (+ V_q)`` on a closed curve or flat torus.

    The flat torus uses the analytic spectrum ``(p^2/R1^2 + q^2/R2^2)/2 + V_q``.
    """
    if chart.name == "flat_torus":
        return _flat_torus_spectrum(chart, include_vq, num_eigenvalues)
    nev = num_eigenvalues
    vals = []
    for n in (n_grid, 2 * n_grid):
        K, M = assemble_surface_operator(chart, n, include_vq)
        vals.append(solve_generalized(K, M, nev, solver="dense")[0])
    energies, err = _richardson(vals[0], vals[1])
    _check_grid(err, energies, GRID_TOL, "surface_spectrum")
    meta = {"path": "fd", "n_grid": [n_grid, 2 * n_grid], "include_vq": bool(include_vq)}
    return _finish(energies, None, meta, err)


# ----------------------------------------------------------------- curve layers

@dataclass
class ThinLayerScenario:
    chart: geo.Chart
    delta: float
    n_tangent: int = 128
    n_normal: int = 16
    num_eigenvalues: int = 6
    solver: Optional[str] = None  # "dense", "iterative" or None (by size)

    def __post_init__(self):
        if self.n_normal < 16:
            raise ValueError("n_normal must be >= 16")
        if self.n_tangent < 32:
            raise ValueError("n_tangent must be >= 32")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.solver not in (None, "dense", "iterative"):
            raise ValueError(f"unknown solver {self.solver!r}")

    def with_delta(self, delta):
        return ThinLayerScenario(self.chart, delta, self.n_tangent, self.n_normal,
                                 self.num_eigenvalues, self.solver)


def assemble_curve_layer(chart, delta, n_tangent, n_normal):
    """``(K, M_diag, layout)`` for ``-1/2 Laplacian`` in the layer ``|w| <= delta``.

    Coordinates ``(u, w)`` with ``x = r(u) + w n(u)``; the volume element is
    ``h sqrt(g) du dw`` with ``h = 1 + w k(u)``. Dirichlet walls at ``w = +-delta``.
    """
    if chart.n != 2:
        raise ValueError("layer_spectrum_curve needs a plane curve")
    grid = curve_grid(chart, n_tangent)
    k_nodes, k_half = grid["k"][:, 0], grid["k_half"][:, 0]
    kmax = float(max(np.max(np.abs(k_nodes)), np.max(np.abs(k_half))))
    if delta * kmax >= 0.5:
        raise OffsetDegenerate(f"delta * max|k| = {delta * kmax:.3f} >= 0.5")
    xi, omega, D = gll(n_normal)
    w = delta * xi
    wq = delta * omega
    Dw = D / delta
    inner = np.arange(1, n_normal - 1)
    nw = inner.size
    nt = n_tangent
    du = grid["du"]
    sg, sg_half = grid["sqrt_g"], grid["sqrt_g_half"]

    h_nodes = 1.0 + np.outer(k_nodes, w)  # (nt, n_normal)
    h_half = 1.0 + np.outer(k_half, w)
    mass = (du * sg[:, None] * h_nodes * wq[None, :])[:, inner].ravel()

    rows, cols, vals = [], [], []
    # tangential flux: sum_j wq_j sum_i (psi_{i+1,j} - psi_{i,j})^2 / (h sqrt(g) du)
    i = np.arange(nt)
    ip = (i + 1) % nt
    for jj, j in enumerate(inner):
        c = wq[j] / (h_half[:, j] * sg_half * du)
        a, b = i * nw + jj, ip * nw + jj
        rows += [a, b, a, b]
        cols += [a, b, b, a]
        vals += [c, c, -c, -c]
    # normal flux per column: (D psi)^T diag(wq h sqrt(g) du) (D psi)
    Dint = Dw[:, inner]
    for col in range(nt):
        weight = wq * h_nodes[col] * sg[col] * du
        block = Dint.T @ (weight[:, None] * Dint)
        base = col * nw
        r, c = np.meshgrid(np.arange(nw), np.arange(nw), indexing="ij")
        rows.append((base + r).ravel())
        cols.append((base + c).ravel())
        vals.append(block.ravel())
    rows = np.concatenate([np.atleast_1d(x) for x in rows])
    cols = np.concatenate([np.atleast_1d(x) for x in cols])
    vals = np.concatenate([np.atleast_1d(x) for x in vals])
    size = nt * nw
    K = 0.5 * sps.coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()
    layout = {"u": grid["u"], "w": w, "inner": inner, "du": du, "wq": wq,
              "sqrt_g": sg, "h": h_nodes, "kmax": kmax}
    return K, mass, layout


def _layer_solve(scenario, n_tangent):
    K, M, layout = assemble_curve_layer(scenario.chart, scenario.delta, n_tangent,
                                        scenario.n_normal)
    sigma = transverse_energy(scenario.delta) - layout["kmax"] ** 2 / 8 - 1.0
    vals, vecs = solve_generalized(K, M, scenario.num_eigenvalues, scenario.solver, sigma)
    return vals, vecs, layout


def _ground_state(vec, layout):
    nt = layout["u"].size
    values = np.zeros((nt, layout["w"].size))
    values[:, layout["inner"]] = vec.reshape(nt, -1)
    if values.flat[np.argmax(np.abs(values))] < 0:
        values = -values
    return WavefunctionGrid(values, layout["u"], layout["w"], layout["du"], layout["wq"],
                            layout["sqrt_g"], layout["h"])


def layer_spectrum_curve(scenario: ThinLayerScenario) -> SpectrumResult:
    """Lowest Dirichlet eigenvalues of the layer around a closed plane curve."""
    coarse, _, _ = _layer_solve(scenario, scenario.n_tangent)
    fine, vecs, layout = _layer_solve(scenario, 2 * scenario.n_tangent)
    energies, err = _richardson(coarse, fine)
    subtracted = energies - transverse_energy(scenario.delta)
    _check_grid(err, subtracted, GRID_TOL, "layer_spectrum_curve")
    meta = {"delta": scenario.delta, "n_tangent": [scenario.n_tangent, 2 * scenario.n_tangent],
            "n_normal": scenario.n_normal, "unknowns": int(vecs.shape[0]),
            "chart": scenario.chart.name}
    return _finish(energies, subtracted, meta, err, _ground_state(vecs[:, 0], layout))




def factorization_residual(scenario_or_result) -> float:
    """Weight of the layer ground state outside the transverse ground mode.

    With ``chi = Psi sqrt(h)`` (unit norm in the flat measure ``ds dw``) this is
    ``1 - int ds |<cos(pi w / 2 delta), chi>_w|^2``; it vanishes when the state
    factorizes into a tangential function times the transverse ground mode.
    """
    if isinstance(scenario_or_result, SpectrumResult):
        result = scenario_or_result
    else:
        result = layer_spectrum_curve(scenario_or_result)
    gs = result.ground_state
    if gs is None:
        raise ValueError("spectrum result carries no ground state")
    delta = float(result.grid_meta["delta"])
    chi = gs.values * np.sqrt(gs.h)
    mode = np.cos(np.pi * gs.w / (2 * delta))
    mode /= math.sqrt(float(np.sum(gs.w_weights * mode**2)))
    proj = chi @ (gs.w_weights * mode)
    return float(1.0 - np.sum(gs.du * gs.sqrt_g * proj**2))


# ----------------------------------------------------------------- spherical shell

def assemble_shell_radial(R, delta, l, n):
    """Tridiagonal ``(diag, offdiag, mass)`` of the radial problem for angular momentum ``l``.

    Unknowns ``u(r_i)`` at ``n`` interior points of ``[R - delta, R + delta]``;
    the form is ``1/2 int (r^2 u'^2 + l(l+1) u^2) dr`` with mass ``r^2 dr``.
    """
    h = 2 * delta / (n + 1)
    r = R - delta + h * np.arange(1, n + 1)
    r_lo, r_hi = (r - h / 2) ** 2, (r + h / 2) ** 2
    diag = 0.5 * ((r_lo + r_hi) / h + l * (l + 1) * h)
    off = -0.5 * r_hi[:-1] / h
    return diag, off, r**2 * h


def _shell_ground(R, delta, l, n):
    diag, off, mass = assemble_shell_radial(R, delta, l, n)
    s = 1.0 / np.sqrt(mass)  # symmetric scaling turns M^-1 K into a tridiagonal matrix
    vals = scipy.linalg.eigh_tridiagonal(diag * s * s, off * s[:-1] * s[1:],
                                         select="i", select_range=(0, 0), eigvals_only=True)
    return float(vals[0])


def layer_spectrum_shell(R, delta, l_max, n_radial=400):
    """Layer between spheres of radius ``R -+ delta``: lowest radial level per ``l``.

    Each level is repeated ``2l + 1`` times in the returned spectrum.
    """
    if not 0 < delta < R / 2:
        raise OffsetDegenerate(f"need 0 < delta < R/2, got delta={delta}, R={R}")
    per_l, errors = [], []
    for l in range(int(l_max) + 1):
        coarse = _shell_ground(R, delta, l, n_radial)
        fine = _shell_ground(R, delta, l, 2 * n_radial + 1)
        energy, err = _richardson(np.array([coarse]), np.array([fine]))
        per_l.append(float(energy[0]))
        errors.append(float(err[0]))
    per_l = np.array(per_l)
    errors = np.array(errors)
    sub = per_l - transverse_energy(delta)
    bad = errors > SHELL_GRID_TOL * np.maximum(np.abs(sub), 1.0 / R**2)
    if np.any(bad):
        raise GridTooCoarse(f"layer_spectrum_shell: radial grid too coarse for l={np.argmax(bad)}")
    mult = [2 * l + 1 for l in range(int(l_max) + 1)]
    energies = np.repeat(per_l, mult)
    meta = {"R": R, "delta": delta, "l_max": int(l_max), "n_radial": [n_radial, 2 * n_radial + 1],
            "per_l": per_l.tolist(), "per_l_subtracted": sub.tolist()}
    return _finish(energies, energies - transverse_energy(delta), meta, np.repeat(errors, mult))


# ---------------------------------------------------------------------- delta sweeps

@dataclass
class SweepReport:
    deltas: list
    levels: list
    subtracted: np.ndarray  # (n_delta, n_level)
    reference: np.ndarray
    errors: np.ndarray
    slopes: list
    intercepts: list  # subtracted levels extrapolated to delta -> 0

    def to_dict(self):
        def f(x):
            x = float(x)
            return None if math.isnan(x) else x

        return {"deltas": [f(d) for d in self.deltas], "levels": list(self.levels),
                "subtracted": [[f(x) for x in row] for row in self.subtracted],
                "reference": [f(x) for x in self.reference],
                "errors": [[f(x) for x in row] for row in self.errors],
                "slopes": [f(x) for x in self.slopes],
                "intercepts": [f(x) for x in self.intercepts]}


ERROR_FLOOR = 1e-9


def delta_sweep(scenario, deltas, reference=None, levels=(0, 1)):
    """Layer levels minus the surface spectrum over a sequence of thicknesses.

    ``slopes`` are log-log fits of ``|error|`` against ``delta`` (NaN when the
    errors sit at roundoff); ``intercepts`` extrapolate the subtracted level
    linearly in ``delta^slope`` to ``delta = 0``.
    """
    deltas = sorted((float(d) for d in deltas), reverse=True)
    levels = list(levels)
    nev = max(scenario.num_eigenvalues, max(levels) + 1)
    if reference is None:
        reference = surface_spectrum(scenario.chart, include_vq=True,
                                     n_grid=scenario.n_tangent, num_eigenvalues=nev).eigenvalues
    reference = np.asarray(reference, dtype=float)[levels]
    rows = []
    for d in deltas:
        sc = ThinLayerScenario(scenario.chart, d, scenario.n_tangent, scenario.n_normal, nev,
                               scenario.solver)
        rows.append(layer_spectrum_curve(sc).subtracted[levels])
    sub = np.array(rows)
    errors = sub - reference[None, :]
    slopes, intercepts = [], []
    x = np.log(deltas)
    for j in range(len(levels)):
        e = np.abs(errors[:, j])
        if len(deltas) < 2 or np.any(e <= ERROR_FLOOR):
            slopes.append(float("nan"))
            intercepts.append(float(sub[-1, j]))
            continue
        p = float(np.polyfit(x, np.log(e), 1)[0])
        slopes.append(p)
        t = np.asarray(deltas) ** p
        intercepts.append(float(np.polyfit(t, sub[:, j], 1)[1]))
    return SweepReport(deltas, levels, sub, reference, errors, slopes, intercepts)
