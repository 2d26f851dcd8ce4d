"""Seeded case generators shared by the command line and the test suites."""
import math

import numpy as np

from . import rng as _rng


def parse_suite(name):
    """``"random20"`` -> 20."""
    if not name.startswith("random") or not name[6:].isdigit() or int(name[6:]) < 1:
        raise ValueError(f"suite must look like 'random<N>', got {name!r}")
    return int(name[6:])


def quadric_seeds(seed, count):
    """Child seeds for ``random_quadric`` charts, one per case."""
    gen = _rng.stream(seed)
    return [int(s) for s in gen.integers(0, _rng.MAX_SEED, size=count, dtype=np.uint64,
                                         endpoint=True)]


def random_forms(gen, m, codim, diagonal=False, scale=0.6):
    k = scale * gen.standard_normal((codim, m, m))
    if diagonal:
        return np.stack([np.diag(np.diag(f)) for f in k])
    return (k + k.transpose(0, 2, 1)) / 2


def form_sets(seed, count, diagonal=None):
    """Random curvature-form stacks with m, codim in 1..3.

    ``diagonal=None`` alternates diagonal and full sets.
    """
    out = []
    for i in range(count):
        gen = _rng.stream(seed, i)
        m, codim = 1 + i % 3, 1 + (i // 3) % 3
        diag = (i % 2 == 0) if diagonal is None else diagonal
        out.append(random_forms(gen, m, codim, diag))
    return out


def stereo_functions():
    return [
        ("x1", lambda x1, x2: x1),
        ("gaussian", lambda x1, x2: math.exp(-(x1 * x1 + x2 * x2) / 4)),
        ("sin_cos", lambda x1, x2: math.sin(x1) * math.cos(0.7 * x2)),
    ]


def stereo_points(seed, count, R):
    return _rng.stream(seed).uniform(-2 * R, 2 * R, size=(count, 2))
