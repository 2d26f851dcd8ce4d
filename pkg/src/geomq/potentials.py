"""Closed-form geometric quantum potentials (hbar = mass = 1 unless given).

All functions take curvature data in the orthonormal tangent frame produced
by :func:`geomq.geometry.curvature_forms`. Two general-codimension formulas
are provided:

* :func:`vq_general_paper` evaluates the termwise closed form
  ``sum_a ((sum k_aa)^2 + 6 sum k_ab^2 - 8 sum k_aa^2) / 8`` in whatever
  tangent basis the forms are written in;
* :func:`vq_general_invariant` is the trace form
  ``sum_a ((tr k^a)^2 - 2 tr (k^a)^2) / 8`` obtained from
  ``det(I + sum eps_a k^a)^2``; it does not depend on the tangent basis.

They coincide whenever every form is diagonal. :func:`compare_potentials`
reports both, together with the finite-difference oracle from
:mod:`geomq.adapted`, and flags disagreement instead of resolving it.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NonSymmetricForm, PoleProximity, StepFailure

BASIS_SENSITIVE = "BASIS_SENSITIVE"
BASIS_TOL = 1e-10


def as_forms(forms):
    """Validate a stack of symmetric curvature forms, shape ``(codim, m, m)``."""
    k = np.asarray(forms, dtype=float)
    if k.ndim == 2:
        k = k[None]
    if k.ndim != 3 or k.shape[1] != k.shape[2]:
        raise ValueError(f"forms must have shape (codim, m, m), got {k.shape}")
    scale = max(1.0, float(np.max(np.abs(k))) if k.size else 1.0)
    if np.max(np.abs(k - k.transpose(0, 2, 1)), initial=0.0) > 1e-10 * scale:
        raise NonSymmetricForm("curvature forms must be symmetric")
    return k


def vq_codim1(principal, hbar=1.0):
    """``(hbar^2/8) ((sum k)^2 - 2 sum k^2)`` for a hypersurface."""
    k = np.asarray(principal, dtype=float)
    return hbar**2 * (k.sum() ** 2 - 2 * np.sum(k * k)) / 8


def vq_dacosta_2d(k1, k2, hbar=1.0):
    return -(hbar**2) * (k1 - k2) ** 2 / 8


def vq_curve(curvatures, hbar=1.0):
    """``-(hbar^2/8) sum_a (k^a)^2`` for a curve with one curvature per normal."""
    k = np.asarray(curvatures, dtype=float)
    return -(hbar**2) * np.sum(k * k) / 8


def vq_general_paper(forms, hbar=1.0):
    """Termwise general-codimension formula; depends on the tangent basis unless forms are diagonal."""
    k = as_forms(forms)
    diag = np.einsum("aii->ai", k)
    per_normal = (diag.sum(axis=1) ** 2
                  + 6 * np.einsum("aij,aij->a", k, k)
                  - 8 * np.sum(diag**2, axis=1))
    return hbar**2 * float(per_normal.sum()) / 8


def vq_general_invariant(forms, hbar=1.0):
    k = as_forms(forms)
    traces = np.einsum("aii->a", k)
    squares = np.einsum("aij,aji->a", k, k)
    return hbar**2 * float(np.sum(traces**2 - 2 * squares)) / 8


@dataclass
class PotentialReport:
    point: Optional[list] = None
    vq_codim1: Optional[float] = None
    vq_curve: Optional[float] = None
    vq_general_paper: Optional[float] = None
    vq_general_invariant: Optional[float] = None
    vq_numeric: Optional[float] = None
    discrepancies: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    PATHS = ("vq_codim1", "vq_curve", "vq_general_paper", "vq_general_invariant", "vq_numeric")

    def values(self):
        return {p: getattr(self, p) for p in self.PATHS if getattr(self, p) is not None}

    def to_dict(self):
        return {"point": self.point, **self.values(),
                "discrepancies": dict(self.discrepancies), "flags": list(self.flags)}


def compare_potentials(forms, point=None, hbar=1.0, step=1e-3, retries=3):
    """Evaluate every applicable potential path and their pairwise differences."""
    from .adapted import vq_numeric_fd

    k = as_forms(forms)
    codim, m = k.shape[0], k.shape[1]
    report = PotentialReport(point=None if point is None else [float(x) for x in np.ravel(point)])
    if codim == 1:
        report.vq_codim1 = float(vq_codim1(np.linalg.eigvalsh(k[0]), hbar))
    if m == 1:
        report.vq_curve = float(vq_curve(k[:, 0, 0], hbar))
    report.vq_general_paper = vq_general_paper(k, hbar)
    report.vq_general_invariant = vq_general_invariant(k, hbar)
    h = step
    for attempt in range(retries + 1):
        try:
            report.vq_numeric = vq_numeric_fd(k, step=h, hbar=hbar)
            break
        except StepFailure:
            if attempt == retries:
                raise
            h /= 2
    values = report.values()
    for a, b in itertools.combinations(sorted(values), 2):
        report.discrepancies[f"{a}|{b}"] = abs(values[a] - values[b])
    if abs(report.vq_general_paper - report.vq_general_invariant) > BASIS_TOL:
        report.flags.append(BASIS_SENSITIVE)
    return report


def potential_report(chart, u, hbar=1.0):
    from .geometry import curvature_forms

    data = curvature_forms(chart, u)
    return compare_potentials(data.forms, point=data.point, hbar=hbar)


def _pole_distance(R, x):
    # arc length on the sphere from the image of x to the projection pole
    return 2 * R * math.atan2(2 * R, math.hypot(x[0], x[1]))


def stereographic_operator_check(R, test_functions, sample_points, step=None):
    """Max relative residual of the stereographic factorization of -1/2 Laplace-Beltrami on S^2.

    Left side: ``-1/2 F^2 (d1^2 + d2^2) f`` with ``F = 1 + |x|^2 / (4 R^2)``.
    Right side: ``F (p1^2 + p2^2)/2 F f`` with ``p_i = -i w^-1 d_i w`` and
    ``w = 1/F`` (the quarter power of the layer metric determinant on the
    sphere). Both are evaluated by finite differences; the right side by
    literally composing the momentum operators.
    Residuals are relative to ``max(|lhs|, F^2 |f| / (2 R^2))`` over the samples.
    """
    h = step if step is not None else 1e-4
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    for x in pts:
        if _pole_distance(R, x) < 1e-3:
            raise PoleProximity(f"sample point {x.tolist()} within 1e-3 of the projection pole")

    def conformal(x):
        return 1.0 + (x[0] ** 2 + x[1] ** 2) / (4 * R * R)

    def d(fn, x, i):
        e = np.zeros(2)
        e[i] = h
        return (fn(x + e) - fn(x - e)) / (2 * h)

    def momentum(i, psi):
        return lambda x: -1j * conformal(x) * d(lambda y: psi(y) / conformal(y), x, i)

    worst = 0.0
    for f in test_functions:
        def fx(x, f=f):
            return f(x[0], x[1])

        def weighted(x, fx=fx):
            return conformal(x) * fx(x)

        lhs, rhs, size = [], [], []
        for x in pts:
            F = conformal(x)
            lap = sum((fx(x + e) - 2 * fx(x) + fx(x - e)) / h**2 for e in np.eye(2) * h)
            lhs.append(-0.5 * F**2 * lap)
            kin = sum(momentum(i, momentum(i, weighted))(x) for i in range(2))
            rhs.append(F * 0.5 * kin)
            size.append(0.5 * F**2 * abs(fx(x)) / R**2)
        lhs = np.array(lhs)
        rhs = np.array(rhs)
        scale = max(float(np.max(np.abs(lhs))), float(np.max(size)), np.finfo(float).tiny)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))) / scale)
    return worst
