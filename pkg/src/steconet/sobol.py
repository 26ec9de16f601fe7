"""Deterministic low-discrepancy point sets for sensor placement.

Gray-code construction of the Sobol sequence from primitive polynomials
and initial direction integers (the published new Joe-Kuo table, first 64
dimensions; the sensor domain here is at most 10-D). Coordinates lie in
[0, 1) and the sequence is fully determined by the dimension.
"""

import numpy as np

_NBITS = 32

# (polynomial bits incl. leading/trailing 1, initial odd m values), dims 2..64
_DIRECTIONS = (
    (3, (1,)),
    (7, (1, 3)),
    (11, (1, 3, 1)),
    (13, (1, 1, 1)),
    (19, (1, 1, 3, 3)),
    (25, (1, 3, 5, 13)),
    (37, (1, 1, 5, 5, 17)),
    (41, (1, 1, 5, 5, 5)),
    (47, (1, 1, 7, 11, 19)),
    (55, (1, 1, 5, 1, 1)),
    (59, (1, 1, 1, 3, 11)),
    (61, (1, 3, 5, 5, 31)),
    (67, (1, 3, 3, 9, 7, 49)),
    (91, (1, 1, 1, 15, 21, 21)),
    (97, (1, 3, 1, 13, 27, 49)),
    (103, (1, 1, 1, 15, 7, 5)),
    (109, (1, 3, 1, 15, 13, 25)),
    (115, (1, 1, 5, 5, 19, 61)),
    (131, (1, 3, 7, 11, 23, 15, 103)),
    (137, (1, 3, 7, 13, 13, 15, 69)),
    (143, (1, 1, 3, 13, 7, 35, 63)),
    (145, (1, 3, 5, 9, 1, 25, 53)),
    (157, (1, 3, 1, 13, 9, 35, 107)),
    (167, (1, 3, 1, 5, 27, 61, 31)),
    (171, (1, 1, 5, 11, 19, 41, 61)),
    (185, (1, 3, 5, 3, 3, 13, 69)),
    (191, (1, 1, 7, 13, 1, 19, 1)),
    (193, (1, 3, 7, 5, 13, 19, 59)),
    (203, (1, 1, 3, 9, 25, 29, 41)),
    (211, (1, 3, 5, 13, 23, 1, 55)),
    (213, (1, 3, 7, 3, 13, 59, 17)),
    (229, (1, 3, 1, 3, 5, 53, 69)),
    (239, (1, 1, 5, 5, 23, 33, 13)),
    (241, (1, 1, 7, 7, 1, 61, 123)),
    (247, (1, 1, 7, 9, 13, 61, 49)),
    (253, (1, 3, 3, 5, 3, 55, 33)),
    (285, (1, 3, 1, 15, 31, 13, 49, 245)),
    (299, (1, 3, 5, 15, 31, 59, 63, 97)),
    (301, (1, 3, 1, 11, 11, 11, 77, 249)),
    (333, (1, 3, 1, 11, 27, 43, 71, 9)),
    (351, (1, 1, 7, 15, 21, 11, 81, 45)),
    (355, (1, 3, 7, 3, 25, 31, 65, 79)),
    (357, (1, 3, 1, 1, 19, 11, 3, 205)),
    (361, (1, 1, 5, 9, 19, 21, 29, 157)),
    (369, (1, 3, 7, 11, 1, 33, 89, 185)),
    (391, (1, 3, 3, 3, 15, 9, 79, 71)),
    (397, (1, 3, 7, 11, 15, 39, 119, 27)),
    (425, (1, 1, 3, 1, 11, 31, 97, 225)),
    (451, (1, 1, 1, 3, 23, 43, 57, 177)),
    (463, (1, 3, 7, 7, 17, 17, 37, 71)),
    (487, (1, 3, 1, 5, 27, 63, 123, 213)),
    (501, (1, 1, 3, 5, 11, 43, 53, 133)),
    (529, (1, 3, 5, 5, 29, 17, 47, 173, 479)),
    (539, (1, 3, 3, 11, 3, 1, 109, 9, 69)),
    (545, (1, 1, 1, 5, 17, 39, 23, 5, 343)),
    (557, (1, 3, 1, 5, 25, 15, 31, 103, 499)),
    (563, (1, 1, 1, 11, 11, 17, 63, 105, 183)),
    (601, (1, 1, 5, 11, 9, 29, 97, 231, 363)),
    (607, (1, 1, 5, 15, 19, 45, 41, 7, 383)),
    (617, (1, 3, 7, 7, 31, 19, 83, 137, 221)),
    (623, (1, 1, 1, 3, 23, 15, 111, 223, 83)),
    (631, (1, 1, 5, 13, 31, 15, 55, 25, 161)),
    (637, (1, 1, 3, 13, 25, 47, 39, 87, 257)),)

MAX_DIM = len(_DIRECTIONS) + 1


def direction_integers(dim: int) -> np.ndarray:
    """Per-dimension direction integers V[j, k] = m_k << (32 - 1 - k)."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if dim > MAX_DIM:
        raise ValueError(
            f"dim {dim} exceeds the embedded direction table ({MAX_DIM})")
    v = np.zeros((dim, _NBITS), dtype=np.uint64)
    v[0, :] = [1 << (_NBITS - k) for k in range(1, _NBITS + 1)]
    for j in range(1, dim):
        poly, m_init = _DIRECTIONS[j - 1]
        deg = poly.bit_length() - 1
        m = list(m_init)
        for k in range(deg, _NBITS):
            mk = m[k - deg] ^ (m[k - deg] << deg)
            for q in range(1, deg):
                if (poly >> (deg - q)) & 1:
                    mk ^= m[k - q] << q
            m.append(mk)
        for k in range(_NBITS):
            v[j, k] = np.uint64(m[k] << (_NBITS - 1 - k))
    return v


class SobolSequence:
    """Stateful generator emitting successive points of the sequence."""

    def __init__(self, dim: int):
        self.dim = dim
        self._v = direction_integers(dim)
        self._state = np.zeros(dim, dtype=np.uint64)
        self.index = 0

    def take(self, n: int) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        out = np.empty((n, self.dim))
        for i in range(n):
            out[i] = self._state / 2.0**_NBITS
            # XOR the direction of the lowest zero bit of the running index
            c = 0
            idx = self.index
            while idx & 1:
                idx >>= 1
                c += 1
            self._state ^= self._v[:, c]
            self.index += 1
        return out


def sobol_points(dim: int, n: int, skip: int = 1) -> np.ndarray:
    """First n points of the dim-dimensional sequence after `skip` points.

    The default skip=1 drops the all-zeros origin point.
    """
    if skip < 0:
        raise ValueError("skip must be >= 0")
    seq = SobolSequence(dim)
    pts = seq.take(n + skip)
    return pts[skip:].copy()


def scale_to_domain(points: np.ndarray, bounds) -> np.ndarray:
    """Affine map of unit-box points into per-dimension (lo, hi) bounds."""
    points = np.asarray(points, dtype=float)
    bounds = np.asarray(bounds, dtype=float)
    if bounds.shape != (points.shape[1], 2):
        raise ValueError(
            f"bounds shape {bounds.shape} does not match dimension "
            f"{points.shape[1]}")
    lo = bounds[:, 0]
    hi = bounds[:, 1]
    if np.any(hi <= lo):
        bad = int(np.flatnonzero(hi <= lo)[0])
        raise ValueError(f"inverted bounds in dimension {bad}")
    return lo + points * (hi - lo)
