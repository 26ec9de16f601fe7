"""RBF / Matern-3/2 kernels and the kernel-expansion input function.

The input function interpolates scattered slant-TEC samples: coefficients
solve (K + jitter*I) alpha = y with K the Gram matrix over the support
points, and evaluation is a kernel expansion over those points. The
Matern kernel uses the L1 distance by default (a config switch restores
the conventional L2 form).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist, pdist

from .errors import KernelFitError

KERNEL_KINDS = ("rbf", "matern32")
MATERN_NORMS = ("l1", "l2")


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    sigma: float
    matern_norm: str = "l1"

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind '{self.kind}'")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if self.matern_norm not in MATERN_NORMS:
            raise ValueError(f"unknown matern_norm '{self.matern_norm}'")


@dataclass(frozen=True)
class FitSummary:
    n_input: int
    n_support: int
    n_duplicates: int
    jitter: float


@dataclass(frozen=True)
class InputFunction:
    """Fitted kernel expansion u(x) = sum_j kappa(x, support_j) alpha_j."""

    kernel: KernelSpec
    support_points: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    support_targets: np.ndarray = field(repr=False)
    jitter: float = 0.0
    summary: FitSummary | None = None


def _pair_matrix(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if spec.kind == "rbf":
        d2 = cdist(a, b, metric="sqeuclidean")
        return np.exp(-d2 / (2.0 * spec.sigma**2))
    metric = "cityblock" if spec.matern_norm == "l1" else "euclidean"
    r = cdist(a, b, metric=metric) * (math.sqrt(3.0) / spec.sigma)
    return (1.0 + r) * np.exp(-r)


def kernel_eval(spec: KernelSpec, a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(_pair_matrix(spec, a[None, :], b[None, :])[0, 0])


def gram_matrix(spec: KernelSpec, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    return _pair_matrix(spec, points, points)


def median_distance(points: np.ndarray, norm: str = "l2") -> float:
    """Median pairwise distance, the scale-free default kernel width."""
    metric = "cityblock" if norm == "l1" else "euclidean"
    d = pdist(np.asarray(points, dtype=float), metric=metric)
    med = float(np.median(d)) if d.size else 1.0
    return med if med > 0.0 else 1.0


def fit_input_function(features: np.ndarray, targets: np.ndarray,
                       spec: KernelSpec,
                       jitter: float | None = None) -> InputFunction:
    """Solve (K + jitter*I) alpha = y by Cholesky factorization.

    Duplicate support points are merged by averaging their targets. The
    default jitter is 1e-8 times the mean Gram diagonal.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError("features must be (n, d) with matching targets")
    if x.shape[0] < 1:
        raise ValueError("need at least one sample")

    uniq, inverse = np.unique(x, axis=0, return_inverse=True)
    n_dup = x.shape[0] - uniq.shape[0]
    if n_dup > 0:
        sums = np.zeros(uniq.shape[0])
        counts = np.zeros(uniq.shape[0])
        np.add.at(sums, inverse, y)
        np.add.at(counts, inverse, 1.0)
        x_fit, y_fit = uniq, sums / counts
    else:
        x_fit, y_fit = x, y

    k = gram_matrix(spec, x_fit)
    if jitter is None:
        jitter = 1e-8 * float(np.mean(np.diag(k)))
    if jitter < 0.0:
        raise ValueError("jitter must be >= 0")
    if jitter > 0.0:
        k = k + jitter * np.eye(k.shape[0])
    try:
        factor = cho_factor(k, lower=True)
        alpha = cho_solve(factor, y_fit)
    except np.linalg.LinAlgError as exc:
        raise KernelFitError(
            f"Gram matrix of {x_fit.shape[0]} support points is not "
            f"positive definite with jitter {jitter:g}; "
            "increase the jitter") from exc
    summary = FitSummary(x.shape[0], x_fit.shape[0], n_dup, jitter)
    return InputFunction(spec, x_fit, alpha, y_fit, jitter, summary)


def eval_input_function(u: InputFunction, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    single = points.ndim == 1
    if single:
        points = points[None, :]
    if points.shape[1] != u.support_points.shape[1]:
        raise ValueError(
            f"dimension mismatch: points are {points.shape[1]}-d, support "
            f"is {u.support_points.shape[1]}-d")
    values = _pair_matrix(u.kernel, points, u.support_points) @ u.alpha
    return float(values[0]) if single else values
