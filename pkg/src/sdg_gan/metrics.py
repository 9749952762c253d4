"""Sample-based evaluation: PCA projection, histogram JS divergence, KS.

The Jensen-Shannon figure reported everywhere in this package is defined
as follows: fit a 2-D PCA basis on ground-truth samples, project both
sample sets with it, histogram each on the ground-truth bounding box
(expanded 10% per side, B x B bins, out-of-box points clipped to the edge
bins), add 1e-12 to every bin, normalize, and take JS with base-2 logs.
The value therefore lies in [0, 1].
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

SMOOTHING = 1e-12
BOX_MARGIN = 0.1
DEFAULT_BINS = 64


@dataclass(frozen=True)
class PcaBasis:
    mean: np.ndarray  # (D,)
    components: np.ndarray  # (2, D), orthonormal rows
    explained_variance: np.ndarray  # (2,), non-increasing
    bounds: np.ndarray  # (2, 2): [[min, max] per axis] of the projected fitting data

    def project(self, data: np.ndarray) -> np.ndarray:
        return (np.asarray(data, dtype=np.float64) - self.mean) @ self.components.T


def jacobi_eigh(a: np.ndarray, tol: float = 1e-15, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` sorted by decreasing eigenvalue,
    eigenvectors in columns.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    scale = np.sqrt(np.sum(a * a))
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
        if off <= tol * scale or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta  # theta^2 would overflow
                else:
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def pca_fit(data: np.ndarray) -> PcaBasis:
    """Top-2 principal axes of ``data`` (n x D).

    Each component's largest-magnitude entry is made positive.  For D = 1
    the second component is zero.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ValueError(f"pca needs an (n >= 2) x D array, got shape {data.shape}")
    mean = data.mean(axis=0)
    centered = data - mean
    if not np.any(centered):
        raise ValueError("pca: data has rank 0 (all rows identical)")
    cov = centered.T @ centered / (data.shape[0] - 1)
    w, v = jacobi_eigh(cov)
    dim = data.shape[1]
    components = np.zeros((2, dim))
    variance = np.zeros(2)
    for k in range(min(2, dim)):
        vec = v[:, k]
        if vec[np.argmax(np.abs(vec))] < 0:
            vec = -vec
        components[k] = vec
        variance[k] = max(w[k], 0.0)
    proj = centered @ components.T
    bounds = np.stack([proj.min(axis=0), proj.max(axis=0)], axis=1)
    return PcaBasis(mean, components, variance, bounds)


def pca_project(basis: PcaBasis, data: np.ndarray) -> np.ndarray:
    return basis.project(data)


def js_discrete(p, q) -> float:
    """Jensen-Shannon divergence of two probability vectors, base 2."""
    p = np.asarray(p, dtype=np.float64).ravel()
    q = np.asarray(q, dtype=np.float64).ravel()
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.size} vs {q.size}")
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("probability vectors must be non-negative")
    for name, v in (("p", p), ("q", q)):
        if abs(v.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} is not normalized (sum={v.sum():.12g})")
    s = p + q
    return 0.5 * _kl2_to_mixture(p, s) + 0.5 * _kl2_to_mixture(q, s)


def _kl2_to_mixture(p, s):
    # KL(p || s/2) with s = p + q; halving s first can underflow subnormals.
    # s <= 2 keeps 2p/s >= p > 0, and p == q gives exactly log2(1) = 0.
    nz = p > 0
    return float(np.sum(p[nz] * np.log2(2.0 * p[nz] / s[nz])))


def _expanded(lo, hi):
    span = hi - lo
    span = np.where(span > 0, span, 1.0)
    return lo - BOX_MARGIN * span, hi + BOX_MARGIN * span


def _bin_index(x, lo, hi, bins):
    idx = np.floor((x - lo) / (hi - lo) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def _normalized(counts):
    counts = counts.astype(np.float64) + SMOOTHING
    return counts / counts.sum()


def histogram2d(points: np.ndarray, bounds: np.ndarray, bins: int) -> np.ndarray:
    """Probability mass on the expanded box; returns a (bins, bins) array summing to 1."""
    lo, hi = _expanded(bounds[:, 0], bounds[:, 1])
    ix = _bin_index(points[:, 0], lo[0], hi[0], bins)
    iy = _bin_index(points[:, 1], lo[1], hi[1], bins)
    counts = np.bincount(ix * bins + iy, minlength=bins * bins).reshape(bins, bins)
    return _normalized(counts)


def js_divergence_samples(a: np.ndarray, b: np.ndarray, basis: PcaBasis, bins: int = DEFAULT_BINS) -> float:
    """JS divergence between two D-dimensional sample sets (see module docstring)."""
    if bins < 2:
        raise ValueError(f"need at least 2 bins per axis, got {bins}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("js_divergence_samples: empty sample set")
    pa = histogram2d(basis.project(a), basis.bounds, bins)
    pb = histogram2d(basis.project(b), basis.bounds, bins)
    return js_discrete(pa, pb)


def js_divergence_1d(a, b, bounds: tuple[float, float], bins: int = DEFAULT_BINS) -> float:
    """Scalar analogue of :func:`js_divergence_samples` on a fixed interval."""
    if bins < 2:
        raise ValueError(f"need at least 2 bins, got {bins}")
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("js_divergence_1d: empty sample set")
    lo, hi = _expanded(np.float64(bounds[0]), np.float64(bounds[1]))
    pa = _normalized(np.bincount(_bin_index(a, lo, hi, bins), minlength=bins))
    pb = _normalized(np.bincount(_bin_index(b, lo, hi, bins), minlength=bins))
    return js_discrete(pa, pb)


def ks_statistic(samples, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """One-sample Kolmogorov-Smirnov distance to a continuous CDF."""
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    n = x.size
    if n == 0:
        raise ValueError("ks_statistic needs at least one sample")
    f = np.asarray(cdf(x), dtype=np.float64)
    i = np.arange(1, n + 1)
    return float(max(np.max(np.abs(i / n - f)), np.max(np.abs((i - 1) / n - f))))


def write_scatter(path, truth_2d: np.ndarray, model_2d: np.ndarray) -> None:
    """Scatter export: CSV ``x,y,source`` with source truth/model."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "source"])
        for source, pts in (("truth", truth_2d), ("model", model_2d)):
            for x, y in pts:
                w.writerow([repr(float(x)), repr(float(y)), source])
