"""Built-in chart registry.

Charts are written as sympy expressions and lambdified together with their
exact first and second derivatives, so registry charts run in analytic
mode. ``make_chart("sphere:R=2,n=4")`` builds one from a command-line spec.
"""
from __future__ import annotations

import math

import numpy as np
import sympy as sp

from . import rng as _rng
from .errors import ConfigError
from .geometry import Chart

TWO_PI = 2 * math.pi


def from_sympy(name, symbols, exprs, periods=(), default_point=None, params=None):
    """Analytic :class:`Chart` from sympy expressions in ``symbols``."""
    symbols = list(symbols)
    r = sp.Matrix(exprs)
    m, n = len(symbols), len(exprs)
    J = r.jacobian(symbols)
    H = [[[sp.diff(r[i], symbols[a], symbols[b]) for b in range(m)] for a in range(m)]
         for i in range(n)]
    f_map = sp.lambdify(symbols, list(r), "numpy")
    f_jac = sp.lambdify(symbols, J.tolist(), "numpy")
    f_hess = sp.lambdify(symbols, H, "numpy")

    def embed(u):
        return np.array(f_map(*u), dtype=float)

    def jac(u):
        return np.array(f_jac(*u), dtype=float)

    def hess(u):
        return np.array(f_hess(*u), dtype=float)

    return Chart(map=embed, m=m, n=n, jac=jac, hess=hess, derivative_mode="analytic",
                 periods=tuple(periods), name=name, params=dict(params or {}),
                 default_point=tuple(default_point) if default_point is not None else None)


def circle(R=1.0):
    t = sp.Symbol("t")
    return from_sympy("circle", [t], [R * sp.cos(t), R * sp.sin(t)], (TWO_PI,), (0.0,),
                      {"R": R})


def ellipse(a=1.0, b=0.6):
    t = sp.Symbol("t")
    return from_sympy("ellipse", [t], [a * sp.cos(t), b * sp.sin(t)], (TWO_PI,), (0.3,),
                      {"a": a, "b": b})


def flat_strip(L=TWO_PI):
    """Straight segment of length L with its ends identified (zero curvature ring)."""
    t = sp.Symbol("t")
    return from_sympy("flat_strip", [t], [t, sp.Integer(0)], (L,), (0.0,), {"L": L})


def line(n=3):
    t = sp.Symbol("t")
    exprs = [t] + [sp.Integer(0)] * (int(n) - 1)
    return from_sympy("line", [t], exprs, (), (0.0,), {"n": int(n)})


def plane(n=3):
    u, v = sp.symbols("u v")
    exprs = [u, v] + [sp.Integer(0)] * (int(n) - 2)
    return from_sympy("plane", [u, v], exprs, (), (0.2, -0.1), {"n": int(n)})


def cylinder(R=1.0):
    t, z = sp.symbols("t z")
    return from_sympy("cylinder", [t, z], [R * sp.cos(t), R * sp.sin(t), z],
                      (TWO_PI, None), (0.0, 0.0), {"R": R})


def _hyperspherical(axes, name, params):
    """Hyperspherical angles scaled per axis; the last angle is the longitude."""
    n = len(axes)
    m = n - 1
    thetas = list(sp.symbols(f"theta1:{m}")) if m > 1 else []
    phi = sp.Symbol("phi")
    sines = sp.Integer(1)
    exprs = []
    for theta in thetas:
        exprs.append(sines * sp.cos(theta))
        sines = sines * sp.sin(theta)
    exprs.append(sines * sp.sin(phi))
    exprs.append(sines * sp.cos(phi))
    exprs = exprs[::-1]
    exprs = [axes[i] * e for i, e in enumerate(exprs)]
    symbols = thetas + [phi]
    periods = (None,) * (m - 1) + (TWO_PI,)
    default = (0.7,) * (m - 1) + (0.3,)
    return from_sympy(name, symbols, exprs, periods, default, params)


def sphere(R=1.0, n=3):
    """Round (n-1)-sphere of radius R in R^n, colatitude-type angles then longitude.

    For n = 3 this is ``(R sin t cos p, R sin t sin p, R cos t)`` in ``(t, p)``.
    """
    n = int(n)
    if n < 2:
        raise ConfigError("sphere needs n >= 2")
    return _hyperspherical([R] * n, "sphere", {"R": R, "n": n})


def ellipsoid(axes=(1.0, 0.8, 0.6, 0.5)):
    """Hypersurface ellipsoid with the given semi-axes, one per ambient axis."""
    axes = [float(x) for x in np.atleast_1d(axes)]
    if len(axes) < 2:
        raise ConfigError("ellipsoid needs at least two axes")
    return _hyperspherical(axes, "ellipsoid", {"axes": axes})


def curve_helix(a=1.0, b=1.0):
    t = sp.Symbol("t")
    return from_sympy("curve_helix", [t], [a * sp.cos(t), a * sp.sin(t), b * t], (), (0.4,),
                      {"a": a, "b": b})


def quartic_curve(c=0.3):
    """Space curve with non-planar quartic perturbation; generic torsion."""
    t = sp.Symbol("t")
    exprs = [t, t**2 / 2 + c * t**4, t**3 / 3 - c * t**4]
    return from_sympy("quartic_curve", [t], exprs, (), (0.35,), {"c": c})


def flat_torus(R1=1.0, R2=2.0):
    p, q = sp.symbols("phi1 phi2")
    exprs = [R1 * sp.cos(p), R1 * sp.sin(p), R2 * sp.cos(q), R2 * sp.sin(q)]
    return from_sympy("flat_torus", [p, q], exprs, (TWO_PI, TWO_PI), (0.0, 0.0),
                      {"R1": R1, "R2": R2})


def paraboloid_patch(k=(1.0, -1.0)):
    """Graph ``u -> (u, sum_a k_a u_a^2 / 2)`` in R^(m+1)."""
    k = [float(x) for x in np.atleast_1d(k)]
    us = sp.symbols(f"u1:{len(k) + 1}")
    height = sum(ka * ua**2 for ka, ua in zip(k, us)) / 2
    return from_sympy("paraboloid_patch", us, list(us) + [height], (),
                      (0.0,) * len(k), {"k": k})


def random_quadric(seed=0, m=2):
    """Quadric graph over an m-patch with principal curvatures at the origin in [-2, 2].

    The default evaluation point is a random point of the patch, so the
    curvatures there are generic (not aligned with the graph axes).
    """
    seed = _rng.check_seed(seed)
    m = int(m)
    gen = _rng.stream(seed)
    kappas = gen.uniform(-2.0, 2.0, size=m)
    Q = _rng.random_rotation(gen, m) if m > 1 else np.eye(1)
    K = Q @ np.diag(kappas) @ Q.T
    point = gen.uniform(-0.4, 0.4, size=m)
    us = sp.symbols(f"u1:{m + 1}")
    height = sum(sp.Float(K[a, b]) * us[a] * us[b] for a in range(m) for b in range(m)) / 2
    return from_sympy("random_quadric", us, list(us) + [height], (), tuple(point),
                      {"seed": seed, "m": m})


REGISTRY = {
    "circle": circle,
    "ellipse": ellipse,
    "flat_strip": flat_strip,
    "line": line,
    "plane": plane,
    "cylinder": cylinder,
    "sphere": sphere,
    "ellipsoid": ellipsoid,
    "curve_helix": curve_helix,
    "quartic_curve": quartic_curve,
    "flat_torus": flat_torus,
    "paraboloid_patch": paraboloid_patch,
    "random_quadric": random_quadric,
}

_INT_PARAMS = {"n", "m", "seed"}


def _parse_value(key, text):
    text = text.strip()
    if ";" in text:
        return [float(x) for x in text.split(";") if x.strip()]
    if key in _INT_PARAMS:
        return int(text)
    return float(text)


def parse_chart_spec(spec):
    """``"name:k=v,k=v"`` -> ``(name, {k: v})``; list values use ``;``."""
    name, _, rest = spec.partition(":")
    name = name.strip()
    if name not in REGISTRY:
        raise ConfigError(f"unknown chart {name!r}; known: {', '.join(sorted(REGISTRY))}")
    params = {}
    if rest.strip():
        for item in rest.split(","):
            key, eq, value = item.partition("=")
            if not eq:
                raise ConfigError(f"bad chart parameter {item!r} (expected key=value)")
            try:
                params[key.strip()] = _parse_value(key.strip(), value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key.strip()!r}: {value!r}") from exc
    return name, params


def make_chart(spec, **overrides):
    if isinstance(spec, str):
        name, params = parse_chart_spec(spec)
    else:
        name, params = spec
    params.update(overrides)
    try:
        return REGISTRY[name](**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for chart {name!r}: {exc}") from exc
