"""Hot numeric kernels: numba-jitted with a pure-numpy fallback.

The fallback is selected by setting the environment variable
``STECONET_NO_NUMBA=1`` before import (or automatically when numba is not
installed). Both paths implement the same arithmetic; ``benchmarks/``
compares their throughput.

The jitted paths use a fixed per-row reduction order, so results for one
row never depend on how many rows share the batch. BLAS matmul does not
give that guarantee, which is why the forward passes do not use it.
"""

import os

import numpy as np

NUMBA_ENABLED = False
if os.environ.get("STECONET_NO_NUMBA", "").strip() in ("", "0"):
    try:
        from numba import njit, prange

        NUMBA_ENABLED = True
    except ImportError:
        pass


# TECU definition: 1e16 electrons / m^2; path lengths are in km.
_TECU_PER_EL_KM = 1e3 / 1e16


def _affine_numpy(x, w, b):
    # per-row gemv keeps each row's result independent of the batch
    out = np.empty((x.shape[0], w.shape[1]))
    for i in range(x.shape[0]):
        out[i] = x[i] @ w
        out[i] += b
    return out


def _matmul_nt_numpy(g, w):
    out = np.empty((g.shape[0], w.shape[0]))
    for i in range(g.shape[0]):
        out[i] = g[i] @ w.T
    return out


def _density_point(r, px, py, pz, t, n_max, h_max, b_thick,
                   diurnal_amp, equator_amp, noon_sod, drift_per_day,
                   r_earth):
    """Scalar modulated layer density used by the numba path."""
    h = r - r_earth
    lat = np.arcsin(pz / r)
    lon_deg = np.degrees(np.arctan2(py, px))
    local_sod = (t % 86400.0 + lon_deg / 15.0 * 3600.0) % 86400.0
    diurnal = 1.0 + diurnal_amp * np.cos(
        2.0 * np.pi * (local_sod - noon_sod) / 86400.0)
    equator = 1.0 + equator_amp * np.cos(lat) ** 2
    drift = 1.0 + drift_per_day * (t / 86400.0)
    z = (h - h_max) / b_thick
    e = np.exp(-abs(z))
    return 4.0 * n_max * diurnal * equator * drift * e / (1.0 + e) ** 2


def _stec_branch_numpy(rx, u, s0, r_lo, r_hi, p2, t, n_max, h_max, b_thick,
                       diurnal_amp, equator_amp, noon_sod, drift_per_day,
                       n_quad, r_earth, sign):
    """Simpson sum over one radially monotone branch of a ray (vectorized)."""
    n = rx.shape[0]
    step = (r_hi - r_lo) / n_quad
    r = r_lo[:, None] + step[:, None] * np.arange(n_quad + 1)[None, :]
    root = np.sqrt(np.maximum(r * r - p2[:, None], 0.0))
    s = s0[:, None] + sign * root
    pos = rx[:, None, :] + s[:, :, None] * u[:, None, :]
    h = r - r_earth
    lat = np.arcsin(np.clip(pos[:, :, 2] / r, -1.0, 1.0))
    lon_deg = np.degrees(np.arctan2(pos[:, :, 1], pos[:, :, 0]))
    local_sod = (t[:, None] % 86400.0 + lon_deg / 15.0 * 3600.0) % 86400.0
    diurnal = 1.0 + diurnal_amp * np.cos(
        2.0 * np.pi * (local_sod - noon_sod) / 86400.0)
    equator = 1.0 + equator_amp * np.cos(lat) ** 2
    drift = 1.0 + drift_per_day * (t[:, None] / 86400.0)
    z = (h - h_max) / b_thick
    e = np.exp(-np.abs(z))
    dens = 4.0 * n_max * diurnal * equator * drift * e / (1.0 + e) ** 2
    jac = r / np.maximum(root, 1e-9)
    weights = np.full(n_quad + 1, 2.0)
    weights[1::2] = 4.0
    weights[0] = weights[-1] = 1.0
    total = (dens * jac) @ weights
    return total * step / 3.0 * _TECU_PER_EL_KM


def _stec_batch_numpy(rx, sat, t, n_max, h_max, b_thick, diurnal_amp,
                      equator_amp, noon_sod, drift_per_day, n_quad,
                      top_km, r_earth, chunk=4096):
    n = rx.shape[0]
    out = np.zeros(n)
    r_top = r_earth + top_km
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        rxc = rx[lo:hi]
        satc = sat[lo:hi]
        tc = t[lo:hi]
        d = satc - rxc
        seg = np.linalg.norm(d, axis=1)
        u = d / seg[:, None]
        r_rx = np.linalg.norm(rxc, axis=1)
        r_sat = np.linalg.norm(satc, axis=1)
        dot_ru = np.einsum("ij,ij->i", rxc, u)
        p2 = np.maximum(r_rx**2 - dot_ru**2, 0.0)
        res = np.zeros(hi - lo)
        asc = dot_ru >= 0.0
        if np.any(asc):
            r_hi = np.minimum(r_sat[asc], r_top)
            ok = r_hi > r_rx[asc]
            if np.any(ok):
                idx = np.flatnonzero(asc)[ok]
                s0 = -np.sqrt(np.maximum(r_rx[idx] ** 2 - p2[idx], 0.0))
                res[idx] = _stec_branch_numpy(
                    rxc[idx], u[idx], s0, r_rx[idx], r_hi[ok], p2[idx],
                    tc[idx], n_max, h_max, b_thick, diurnal_amp, equator_amp,
                    noon_sod, drift_per_day, n_quad, r_earth, 1.0)
        if np.any(~asc):
            # descending start: split at the perigee into two monotone legs
            idx = np.flatnonzero(~asc)
            s_per = -dot_ru[idx]
            r_per = np.sqrt(p2[idx])
            r_hi_dn = np.minimum(r_rx[idx], r_top)
            ok = r_hi_dn > r_per
            if np.any(ok):
                j = idx[ok]
                res[j] += _stec_branch_numpy(
                    rxc[j], u[j], -dot_ru[j], r_per[ok], r_hi_dn[ok], p2[j],
                    tc[j], n_max, h_max, b_thick, diurnal_amp, equator_amp,
                    noon_sod, drift_per_day, n_quad, r_earth, -1.0)
            r_hi_up = np.minimum(r_sat[idx], r_top)
            ok = r_hi_up > r_per
            if np.any(ok):
                j = idx[ok]
                res[j] += _stec_branch_numpy(
                    rxc[j], u[j], -dot_ru[j], r_per[ok], r_hi_up[ok], p2[j],
                    tc[j], n_max, h_max, b_thick, diurnal_amp, equator_amp,
                    noon_sod, drift_per_day, n_quad, r_earth, 1.0)
        out[lo:hi] = res
    return out


def _split_scan_numpy(values, targets, min_leaf):
    n = values.shape[0]
    if n < 2 * min_leaf:
        return np.inf, 0.0
    s1 = np.cumsum(targets)
    s2 = np.cumsum(targets * targets)
    tot1 = s1[-1]
    tot2 = s2[-1]
    i = np.arange(min_leaf - 1, n - min_leaf)
    valid = values[i] < values[i + 1]
    if not np.any(valid):
        return np.inf, 0.0
    i = i[valid]
    nl = (i + 1).astype(np.float64)
    nr = n - nl
    sse = (s2[i] - s1[i] ** 2 / nl) + (tot2 - s2[i] - (tot1 - s1[i]) ** 2 / nr)
    k = int(np.argmin(sse))
    best = i[k]
    return float(sse[k]), float(0.5 * (values[best] + values[best + 1]))


def _tree_apply_numpy(x, feature, threshold, left, right, value):
    n = x.shape[0]
    node = np.zeros(n, dtype=np.int64)
    # leaves are encoded with feature < 0; walk all rows level by level
    while True:
        f = feature[node]
        active = f >= 0
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        go_left = x[idx, f[idx]] <= threshold[node[idx]]
        node[idx] = np.where(go_left, left[node[idx]], right[node[idx]])
    return value[node]


if NUMBA_ENABLED:

    @njit(parallel=True, cache=True)
    def _affine_numba(x, w, b):
        n, k = x.shape
        p = w.shape[1]
        out = np.empty((n, p))
        for i in prange(n):
            acc = b.copy()
            for l in range(k):
                xv = x[i, l]
                for j in range(p):
                    acc[j] += xv * w[l, j]
            out[i, :] = acc
        return out

    @njit(parallel=True, cache=True)
    def _matmul_nt_numba(g, w):
        n, p = g.shape
        k = w.shape[0]
        out = np.empty((n, k))
        for i in prange(n):
            for l in range(k):
                acc = 0.0
                for j in range(p):
                    acc += g[i, j] * w[l, j]
                out[i, l] = acc
        return out

    @njit(cache=True)
    def _stec_branch_point(rx, u, s, r, t, n_max, h_max, b_thick,
                           diurnal_amp, equator_amp, noon_sod,
                           drift_per_day, r_earth):
        px = rx[0] + s * u[0]
        py = rx[1] + s * u[1]
        pz = rx[2] + s * u[2]
        h = r - r_earth
        sinlat = pz / r
        if sinlat > 1.0:
            sinlat = 1.0
        elif sinlat < -1.0:
            sinlat = -1.0
        lat = np.arcsin(sinlat)
        lon_deg = np.degrees(np.arctan2(py, px))
        local_sod = (t % 86400.0 + lon_deg / 15.0 * 3600.0) % 86400.0
        diurnal = 1.0 + diurnal_amp * np.cos(
            2.0 * np.pi * (local_sod - noon_sod) / 86400.0)
        equator = 1.0 + equator_amp * np.cos(lat) ** 2
        drift = 1.0 + drift_per_day * (t / 86400.0)
        z = (h - h_max) / b_thick
        e = np.exp(-abs(z))
        return 4.0 * n_max * diurnal * equator * drift * e / (1.0 + e) ** 2

    @njit(cache=True)
    def _stec_branch_numba(rx, u, s0, r_lo, r_hi, p2, t, n_max, h_max,
                           b_thick, diurnal_amp, equator_amp, noon_sod,
                           drift_per_day, n_quad, r_earth, sign):
        step = (r_hi - r_lo) / n_quad
        total = 0.0
        for j in range(n_quad + 1):
            r = r_lo + j * step
            root = np.sqrt(max(r * r - p2, 0.0))
            s = s0 + sign * root
            dens = _stec_branch_point(
                rx, u, s, r, t, n_max, h_max, b_thick, diurnal_amp,
                equator_amp, noon_sod, drift_per_day, r_earth)
            jac = r / max(root, 1e-9)
            if j == 0 or j == n_quad:
                w = 1.0
            elif j % 2 == 1:
                w = 4.0
            else:
                w = 2.0
            total += w * dens * jac
        return total * step / 3.0 * _TECU_PER_EL_KM

    @njit(parallel=True, cache=True)
    def _stec_batch_numba(rx, sat, t, n_max, h_max, b_thick, diurnal_amp,
                          equator_amp, noon_sod, drift_per_day, n_quad,
                          top_km, r_earth):
        n = rx.shape[0]
        out = np.zeros(n)
        r_top = r_earth + top_km
        for i in prange(n):
            dx = sat[i, 0] - rx[i, 0]
            dy = sat[i, 1] - rx[i, 1]
            dz = sat[i, 2] - rx[i, 2]
            seg = np.sqrt(dx * dx + dy * dy + dz * dz)
            u = np.empty(3)
            u[0] = dx / seg
            u[1] = dy / seg
            u[2] = dz / seg
            r_rx = np.sqrt(rx[i, 0] ** 2 + rx[i, 1] ** 2 + rx[i, 2] ** 2)
            r_sat = np.sqrt(sat[i, 0] ** 2 + sat[i, 1] ** 2 + sat[i, 2] ** 2)
            dot_ru = rx[i, 0] * u[0] + rx[i, 1] * u[1] + rx[i, 2] * u[2]
            p2 = max(r_rx * r_rx - dot_ru * dot_ru, 0.0)
            acc = 0.0
            if dot_ru >= 0.0:
                r_hi = min(r_sat, r_top)
                if r_hi > r_rx:
                    s0 = -np.sqrt(max(r_rx * r_rx - p2, 0.0))
                    acc = _stec_branch_numba(
                        rx[i], u, s0, r_rx, r_hi, p2, t[i], n_max, h_max,
                        b_thick, diurnal_amp, equator_amp, noon_sod,
                        drift_per_day, n_quad, r_earth, 1.0)
            else:
                r_per = np.sqrt(p2)
                r_hi = min(r_rx, r_top)
                if r_hi > r_per:
                    acc += _stec_branch_numba(
                        rx[i], u, -dot_ru, r_per, r_hi, p2, t[i], n_max,
                        h_max, b_thick, diurnal_amp, equator_amp, noon_sod,
                        drift_per_day, n_quad, r_earth, -1.0)
                r_hi = min(r_sat, r_top)
                if r_hi > r_per:
                    acc += _stec_branch_numba(
                        rx[i], u, -dot_ru, r_per, r_hi, p2, t[i], n_max,
                        h_max, b_thick, diurnal_amp, equator_amp, noon_sod,
                        drift_per_day, n_quad, r_earth, 1.0)
            out[i] = acc
        return out

    @njit(cache=True)
    def _split_scan_numba(values, targets, min_leaf):
        n = values.shape[0]
        if n < 2 * min_leaf:
            return np.inf, 0.0
        tot1 = 0.0
        tot2 = 0.0
        for i in range(n):
            tot1 += targets[i]
            tot2 += targets[i] * targets[i]
        best_sse = np.inf
        best_thr = 0.0
        s1 = 0.0
        s2 = 0.0
        for i in range(n - 1):
            s1 += targets[i]
            s2 += targets[i] * targets[i]
            if i + 1 < min_leaf or n - i - 1 < min_leaf:
                continue
            if values[i] >= values[i + 1]:
                continue
            nl = float(i + 1)
            nr = float(n - i - 1)
            sse = (s2 - s1 * s1 / nl) + (tot2 - s2 - (tot1 - s1) ** 2 / nr)
            if sse < best_sse:
                best_sse = sse
                best_thr = 0.5 * (values[i] + values[i + 1])
        return best_sse, best_thr

    @njit(parallel=True, cache=True)
    def _tree_apply_numba(x, feature, threshold, left, right, value):
        n = x.shape[0]
        out = np.empty(n)
        for i in prange(n):
            node = 0
            while feature[node] >= 0:
                if x[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i] = value[node]
        return out

    def affine(x, w, b):
        return _affine_numba(np.ascontiguousarray(x),
                             np.ascontiguousarray(w),
                             np.ascontiguousarray(b))

    def matmul_nt(g, w):
        return _matmul_nt_numba(np.ascontiguousarray(g),
                                np.ascontiguousarray(w))

    def stec_batch(rx, sat, t, n_max, h_max, b_thick, diurnal_amp,
                   equator_amp, noon_sod, drift_per_day, n_quad, top_km,
                   r_earth):
        return _stec_batch_numba(
            np.ascontiguousarray(rx, dtype=np.float64),
            np.ascontiguousarray(sat, dtype=np.float64),
            np.ascontiguousarray(t, dtype=np.float64),
            float(n_max), float(h_max), float(b_thick), float(diurnal_amp),
            float(equator_amp), float(noon_sod), float(drift_per_day),
            int(n_quad), float(top_km), float(r_earth))

    def split_scan(values, targets, min_leaf):
        return _split_scan_numba(values, targets, min_leaf)

    def tree_apply(x, feature, threshold, left, right, value):
        return _tree_apply_numba(np.ascontiguousarray(x), feature,
                                 threshold, left, right, value)

else:

    affine = _affine_numpy
    matmul_nt = _matmul_nt_numpy

    def stec_batch(rx, sat, t, n_max, h_max, b_thick, diurnal_amp,
                   equator_amp, noon_sod, drift_per_day, n_quad, top_km,
                   r_earth):
        return _stec_batch_numpy(
            np.asarray(rx, dtype=np.float64),
            np.asarray(sat, dtype=np.float64),
            np.asarray(t, dtype=np.float64),
            float(n_max), float(h_max), float(b_thick), float(diurnal_amp),
            float(equator_amp), float(noon_sod), float(drift_per_day),
            int(n_quad), float(top_km), float(r_earth))

    split_scan = _split_scan_numpy
    tree_apply = _tree_apply_numpy


def warmup():
    """Trigger JIT compilation of all kernels (no-op on the numpy path)."""
    if not NUMBA_ENABLED:
        return
    x = np.ones((2, 3))
    w = np.ones((3, 2))
    affine(x, w, np.zeros(2))
    matmul_nt(np.ones((2, 2)), w.T)
    rx = np.array([[6371.0, 0.0, 0.0]])
    sat = np.array([[8000.0, 0.0, 0.0]])
    stec_batch(rx, sat, np.zeros(1), 1e11, 300.0, 50.0, 0.0, 0.0,
               43200.0, 0.0, 8, 2000.0, 6371.0)
    split_scan(np.array([0.0, 1.0, 2.0, 3.0]),
               np.array([0.0, 0.0, 1.0, 1.0]), 1)
    tree_apply(x, np.array([-1], dtype=np.int64),
               np.zeros(1), np.zeros(1, dtype=np.int64),
               np.zeros(1, dtype=np.int64), np.zeros(1))
