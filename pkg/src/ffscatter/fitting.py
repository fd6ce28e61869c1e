"""Log-log exponent fits used by regularity diagnostics."""
from __future__ import annotations

import numpy as np


def loglog_slope(distances, increments):
    """Least-squares slope of log(increment) vs log(distance).

    Returns (slope, rms residual of the fit).  Pairs with non-positive
    entries are dropped.
    """
    x = np.asarray(distances, dtype=float)
    y = np.asarray(increments, dtype=float)
    keep = (x > 0) & (y > 0)
    x, y = np.log(x[keep]), np.log(y[keep])
    if x.size < 2 or np.ptp(x) < 1e-12:
        return np.nan, np.nan
    coeffs, res, *_ = np.polyfit(x, y, 1, full=True)
    rms = float(np.sqrt(res[0] / x.size)) if res.size else 0.0
    return float(coeffs[0]), rms


def max_increment_per_scale(values: np.ndarray, positions: np.ndarray,
                            lags=None):
    """Empirical modulus of continuity of a sampled path.

    For each lag k returns (max distance, max increment norm) over index pairs
    (i, i+k).  ``values`` may be an array of stacked matrices/vectors indexed
    by the first axis; increments are measured in the Frobenius norm.  The
    per-scale maximum (rather than an average) keeps localized low-regularity
    behaviour visible in the subsequent slope fit.
    """
    n = len(positions)
    if lags is None:
        lags = []
        k = 1
        while k < n // 4:
            lags.append(k)
            k *= 2
    dists, incs = [], []
    flat = values.reshape(n, -1)
    for k in lags:
        step = np.abs(positions[k:] - positions[:-k])
        diff = np.linalg.norm(flat[k:] - flat[:-k], axis=1)
        j = int(np.argmax(diff))
        dists.append(step[j])
        incs.append(diff[j])
    return np.asarray(dists), np.asarray(incs)


def lag_moduli(positions: np.ndarray, values: np.ndarray,
               max_rel_dist: float = None):
    """(distance, increment) samples over all index lags of a sampled path.

    Increment fits must stay local: at separations where the increments
    saturate (for bounded paths they cannot exceed the diameter) a log-log
    slope flattens artificially.  ``max_rel_dist`` caps the pair distance as
    a fraction of the sampled span; by default an eighth.
    """
    positions = np.asarray(positions, dtype=float)
    n = len(positions)
    flat = values.reshape(n, -1)
    span = abs(positions[-1] - positions[0])
    cap = (0.125 if max_rel_dist is None else max_rel_dist) * span
    dists, incs = [], []
    for k in range(1, n):
        step = np.abs(positions[k:] - positions[:-k])
        keep = step <= cap
        if not keep.any():
            continue
        diff = np.linalg.norm(flat[k:] - flat[:-k], axis=1)
        dists.append(step[keep])
        incs.append(diff[keep])
    if not dists:
        return np.asarray([]), np.asarray([])
    return np.concatenate(dists), np.concatenate(incs)


def binned_max_slope(dists, incs, bins: int = 14):
    """Slope fit on the empirical modulus of continuity.

    Bins the pair samples by log distance and fits on the per-bin maximum
    increment.  A plain least-squares over all pairs would weight the fit by
    where the sampling grid happens to cluster (quadratically near the ends
    for Gauss nodes) rather than by scale.
    """
    d = np.asarray(dists, dtype=float)
    e = np.asarray(incs, dtype=float)
    keep = (d > 0) & (e > 0)
    d, e = d[keep], e[keep]
    if d.size < 2:
        return np.nan, np.nan
    edges = np.geomspace(d.min(), d.max() * (1 + 1e-12), bins + 1)
    which = np.clip(np.digitize(d, edges) - 1, 0, bins - 1)
    bd, be = [], []
    for k in range(bins):
        sel = which == k
        if sel.any():
            j = np.argmax(e[sel])
            bd.append(d[sel][j])
            be.append(e[sel][j])
    return loglog_slope(bd, be)


def equispaced_indices(positions: np.ndarray, count: int,
                       trim_rel: float = 0.03) -> np.ndarray:
    """Indices of nodes nearest to an equispaced target set.

    On strongly non-uniform grids (Gauss nodes cluster quadratically at the
    ends) raw index lags entangle pair distance with pair location, which
    biases modulus-of-continuity fits; sampling the path on a near-uniform
    subset decouples the two.
    """
    positions = np.asarray(positions, dtype=float)
    lo = positions[0] + trim_rel * (positions[-1] - positions[0])
    hi = positions[-1] - trim_rel * (positions[-1] - positions[0])
    targets = np.linspace(lo, hi, count)
    idx = np.unique(np.searchsorted(positions, targets).clip(0, len(positions) - 1))
    return idx


def table_holder_exponent(nodes: np.ndarray, blocks: np.ndarray,
                          exclude=(), radius: float = 0.0):
    """Exponent fit for a two-variable block table t(lam_i, mu_j).

    Scans rows and columns as 1-d paths on a near-uniform node subsample,
    dropping positions within ``radius`` of an excluded energy (embedded
    eigenvalues, where the uniform increment bound does not apply), and fits
    the per-scale maximal increments.
    """
    n = len(nodes)
    idx = equispaced_indices(nodes, min(n, 160))
    keep = np.ones(idx.size, dtype=bool)
    for lam in exclude:
        keep &= np.abs(nodes[idx] - lam) > radius
    idx = idx[keep]
    dists, incs = [], []
    # short-range cap: at larger separations the max increment grows
    # sublinearly even for smooth tables, which would dilute the exponent
    for anchor in idx[np.linspace(0, idx.size - 1, 12).astype(int)]:
        dd, ii = lag_moduli(nodes[idx], blocks[idx, anchor], max_rel_dist=0.06)
        dists.extend(dd)
        incs.extend(ii)
        dd, ii = lag_moduli(nodes[idx], blocks[anchor, idx], max_rel_dist=0.06)
        dists.extend(dd)
        incs.extend(ii)
    return binned_max_slope(dists, incs)
