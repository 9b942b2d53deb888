"""Dense multivariate Gaussian primitives.

Densities are natural-log throughout. Covariances are made positive definite
at construction time by a diagonal jitter ladder, so every principal submatrix
can be factorized (fresh or by bordering) without further regularization.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg

from .exceptions import InvalidInput, NotPositiveDefinite

LOG_2PI = float(np.log(2.0 * np.pi))

JITTER_START = 1e-10
JITTER_STOP = 1e-4


def _try_cholesky(a):
    try:
        return linalg.cholesky(a, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return None


def jittered_cholesky(cov):
    """Return ``(lower, cov_used)`` following the jitter ladder.

    The ladder adds ``eps * trace(cov) / d`` to the diagonal for
    ``eps = 1e-10, 1e-9, ..., 1e-4`` until a factorization succeeds.
    """
    lower = _try_cholesky(cov)
    if lower is not None and np.all(np.diag(lower) > 0):
        return lower, cov
    d = cov.shape[0]
    scale = float(np.trace(cov)) / d
    if not np.isfinite(scale) or scale <= 0:
        raise NotPositiveDefinite("covariance has a non-positive trace")
    eps = JITTER_START
    while eps <= JITTER_STOP * (1 + 1e-9):
        bumped = cov + eps * scale * np.eye(d)
        lower = _try_cholesky(bumped)
        if lower is not None and np.all(np.diag(lower) > 0):
            return lower, bumped
        eps *= 10.0
    raise NotPositiveDefinite(
        f"covariance is not positive definite even with jitter {JITTER_STOP:g}*trace/d"
    )


@dataclass(frozen=True, eq=False)
class GaussianParams:
    """Mean and covariance of a ``dim``-variate Gaussian.

    The covariance is checked for symmetry (``1e-9 * max|cov|``), symmetrized,
    and jittered onto the positive definite cone if needed.
    """

    mean: np.ndarray
    cov: np.ndarray
    jitter_applied: bool = field(default=False, compare=False)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64).reshape(-1)
        cov = np.array(self.cov, dtype=np.float64)
        d = mean.shape[0]
        if d == 0:
            raise InvalidInput("a Gaussian needs at least one dimension")
        if cov.shape != (d, d):
            raise InvalidInput(f"covariance shape {cov.shape} does not match mean length {d}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InvalidInput("mean and covariance must be finite")
        tol = 1e-9 * float(np.max(np.abs(cov)))
        if np.max(np.abs(cov - cov.T)) > tol:
            raise InvalidInput("covariance is not symmetric")
        cov = 0.5 * (cov + cov.T)
        lower, used = jittered_cholesky(cov)
        jittered = used is not cov
        mean.setflags(write=False)
        used = np.array(used)
        used.setflags(write=False)
        lower.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", used)
        object.__setattr__(self, "jitter_applied", jittered)
        self.__dict__["cholesky"] = lower

    @property
    def dim(self):
        return self.mean.shape[0]

    @cached_property
    def cholesky(self):
        return linalg.cholesky(self.cov, lower=True)

    def __eq__(self, other):
        if not isinstance(other, GaussianParams):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.cov, other.cov)

    __hash__ = None

    def __repr__(self):
        return f"GaussianParams(dim={self.dim})"


@dataclass(frozen=True, eq=False)
class CholFactor:
    """Lower Cholesky factor of the covariance submatrix at ``dims``."""

    lower: np.ndarray
    log_det: float
    dims: tuple

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 0)), 0.0, ())

    @classmethod
    def from_lower(cls, lower, dims):
        lower = np.asarray(lower, dtype=np.float64)
        log_det = 2.0 * float(np.sum(np.log(np.diag(lower)))) if lower.size else 0.0
        return cls(lower, log_det, tuple(int(i) for i in dims))

    def __len__(self):
        return len(self.dims)


def _check_subset(subset, d):
    idx = [int(i) for i in subset]
    if len(set(idx)) != len(idx):
        raise InvalidInput(f"subset contains duplicate indices: {list(subset)}")
    for i in idx:
        if not 0 <= i < d:
            raise InvalidInput(f"index {i} out of range for dimension {d}")
    return idx


def marginalize(params, subset):
    """Marginal Gaussian over ``subset``, in the given order."""
    idx = _check_subset(subset, params.dim)
    if not idx:
        raise InvalidInput("cannot marginalize onto an empty subset")
    return GaussianParams(params.mean[idx], params.cov[np.ix_(idx, idx)])


def chol_factor(params, dims):
    """Fresh Cholesky factorization of the covariance submatrix at ``dims``."""
    idx = _check_subset(dims, params.dim)
    if not idx:
        return CholFactor.empty()
    if idx == list(range(params.dim)):
        return CholFactor.from_lower(params.cholesky, idx)
    lower = _try_cholesky(params.cov[np.ix_(idx, idx)])
    if lower is None or not np.all(np.diag(lower) > 0):
        raise NotPositiveDefinite(f"submatrix at dims {idx} is not positive definite")
    return CholFactor.from_lower(lower, idx)


def border(factor, cov_column, cov_diag):
    """Bordering step shared by :func:`chol_extend` and the batched scorer.

    ``cov_column`` holds covariances between the factor's dims and one or more
    new dims (shape ``(k,)`` or ``(k, m)``); returns the new off-diagonal rows
    and the squared pivots.
    """
    if len(factor):
        row = linalg.solve_triangular(factor.lower, cov_column, lower=True, check_finite=False)
        pivot_sq = cov_diag - np.sum(row * row, axis=0)
    else:
        row = np.zeros_like(cov_column)
        pivot_sq = np.array(cov_diag, dtype=np.float64)
    return row, pivot_sq


def chol_extend(factor, params, new_dim):
    """Extend ``factor`` by one dimension with a triangular solve and a pivot."""
    new_dim = int(new_dim)
    if new_dim in factor.dims:
        raise InvalidInput(f"dimension {new_dim} already in the factor")
    if not 0 <= new_dim < params.dim:
        raise InvalidInput(f"index {new_dim} out of range for dimension {params.dim}")
    dims = list(factor.dims)
    row, pivot_sq = border(factor, params.cov[dims, new_dim], params.cov[new_dim, new_dim])
    if not pivot_sq > 0:
        raise NotPositiveDefinite(f"pivot for dimension {new_dim} is {float(pivot_sq):g}")
    k = len(dims)
    lower = np.zeros((k + 1, k + 1))
    lower[:k, :k] = factor.lower
    lower[k, :k] = row
    lower[k, k] = np.sqrt(pivot_sq)
    return CholFactor(lower, factor.log_det + float(np.log(pivot_sq)), tuple(dims) + (new_dim,))


def whiten(x, params, factor):
    """Solve ``lower @ z = x - mean[dims]`` for a vector or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    k = len(factor)
    if x.shape[-1] != k:
        raise InvalidInput(f"input has {x.shape[-1]} dims, factor covers {k}")
    resid = x - params.mean[list(factor.dims)]
    if x.ndim == 1:
        return linalg.solve_triangular(factor.lower, resid, lower=True, check_finite=False)
    return linalg.solve_triangular(factor.lower, resid.T, lower=True, check_finite=False).T


def log_pdf(x, params, factor=None):
    """Natural-log density of ``x`` (a vector, or rows of a 2-D array).

    ``factor`` selects the dimensions; it defaults to the full Cholesky factor.
    """
    if factor is None:
        factor = CholFactor.from_lower(params.cholesky, range(params.dim))
    z = whiten(x, params, factor)
    quad = np.sum(z * z, axis=-1)
    out = -0.5 * (len(factor) * LOG_2PI + factor.log_det + quad)
    return float(out) if np.ndim(out) == 0 else out
