"""Seeded random streams.

Every randomized suite draws from a Philox (counter-based) generator keyed by
a single unsigned 64-bit seed. Sub-streams are separated by jumping the
counter, so stream ``i`` of seed ``s`` is the same on every platform and
does not depend on how many draws other streams made.
"""
import numpy as np

MAX_SEED = 2**64 - 1


def check_seed(seed):
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def stream(seed, index=0):
    """Return the ``index``-th independent generator derived from ``seed``."""
    bitgen = np.random.Philox(key=check_seed(seed))
    if index:
        bitgen = bitgen.jumped(int(index))
    return np.random.Generator(bitgen)


def random_rotation(rng, dim):
    """Haar-distributed rotation matrix (det = +1)."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
