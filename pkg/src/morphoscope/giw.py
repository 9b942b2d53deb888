"""Gaussian-inverse-Wishart conjugate prior for one attribute value."""

from dataclasses import dataclass

import numpy as np
from scipy.special import multigammaln

from .exceptions import InsufficientData, InvalidInput
from .gaussian import GaussianParams

DEFAULT_K0 = 0.01
DEFAULT_NU0_OFFSET = 2.0

# Relative and absolute floors on the diagonal of the prior scale matrix.
VARIANCE_FLOOR_REL = 1e-6
VARIANCE_FLOOR_ABS = 1e-12


@dataclass(frozen=True, eq=False)
class GIWHyperparams:
    """Hyperparameters ``(mu0, k0, lambda0, nu0)``; also used for posteriors."""

    mu0: np.ndarray
    k0: float
    lambda0: np.ndarray
    nu0: float

    def __post_init__(self):
        mu0 = np.asarray(self.mu0, dtype=np.float64).reshape(-1)
        lam = np.asarray(self.lambda0, dtype=np.float64)
        if lam.shape != (mu0.shape[0],) * 2:
            raise InvalidInput(f"lambda0 shape {lam.shape} does not match mu0 length {mu0.shape[0]}")
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "lambda0", lam)
        object.__setattr__(self, "k0", float(self.k0))
        object.__setattr__(self, "nu0", float(self.nu0))

    @property
    def dim(self):
        return self.mu0.shape[0]

    def check_proper(self):
        """Raise unless this is a proper prior (``k0 > 0``, ``nu0 >= d``, PD scale)."""
        if not self.k0 > 0:
            raise InvalidInput(f"k0 must be positive, got {self.k0}")
        if self.nu0 < self.dim:
            raise InvalidInput(f"nu0 must be at least d={self.dim}, got {self.nu0}")
        if not np.allclose(self.lambda0, self.lambda0.T):
            raise InvalidInput("lambda0 is not symmetric")
        if np.min(np.linalg.eigvalsh(self.lambda0)) <= 0:
            raise InvalidInput("lambda0 is not positive definite")


@dataclass(frozen=True, eq=False)
class SufficientStats:
    count: int
    mean_hat: np.ndarray
    scatter: np.ndarray

    @classmethod
    def from_data(cls, data):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2:
            raise InvalidInput("expected a 2-D array of rows")
        n, d = data.shape
        if n == 0:
            return cls(0, np.zeros(d), np.zeros((d, d)))
        mean = data.mean(axis=0)
        centered = data - mean
        return cls(n, mean, centered.T @ centered)

    @property
    def dim(self):
        return self.mean_hat.shape[0]


def floored_variances(var):
    """Apply the relative/absolute diagonal floor to per-dimension variances."""
    var = np.asarray(var, dtype=np.float64)
    mean_var = float(np.mean(var))
    if mean_var <= 0:
        return np.full_like(var, VARIANCE_FLOOR_ABS)
    return np.maximum(var, VARIANCE_FLOOR_REL * mean_var)


def default_hyperparams(value_data, k0=DEFAULT_K0, nu0_offset=DEFAULT_NU0_OFFSET):
    """Empirical prior: ``mu0`` = mean, ``lambda0`` = floored diagonal covariance.

    Uses the population (``1/N``) variance and ``nu0 = d + nu0_offset``.
    """
    value_data = np.asarray(value_data, dtype=np.float64)
    if value_data.ndim != 2:
        raise InvalidInput("expected a 2-D array of rows")
    n, d = value_data.shape
    if n < 2:
        raise InsufficientData(f"need at least 2 rows to build a prior, got {n}")
    mu0 = value_data.mean(axis=0)
    var = np.mean((value_data - mu0) ** 2, axis=0)
    return GIWHyperparams(mu0, k0, np.diag(floored_variances(var)), d + nu0_offset)


def posterior_update(prior, stats):
    if stats.dim != prior.dim:
        raise InvalidInput(f"stats dimension {stats.dim} does not match prior dimension {prior.dim}")
    n = stats.count
    if n == 0:
        return prior
    k_n = prior.k0 + n
    mu_n = (prior.k0 * prior.mu0 + n * stats.mean_hat) / k_n
    diff = stats.mean_hat - prior.mu0
    lambda_n = prior.lambda0 + stats.scatter + (n * prior.k0 / (n + prior.k0)) * np.outer(diff, diff)
    return GIWHyperparams(mu_n, k_n, lambda_n, prior.nu0 + n)


def map_estimate(post):
    """Posterior mode: mean ``mu_n`` and covariance ``lambda_n / (nu_n + d + 2)``."""
    denom = post.nu0 + post.dim + 2
    if not denom > 0:
        raise InvalidInput(f"nu_n + d + 2 must be positive, got {denom}")
    return GaussianParams(post.mu0, post.lambda0 / denom)


def iw_log_density(sigma, lam, nu):
    """Log density of the inverse-Wishart with scale ``lam`` and ``nu`` dof at ``sigma``.

    ``log p = (nu/2) log|lam| - (nu d/2) log 2 - log Gamma_d(nu/2)
    - ((nu + d + 1)/2) log|sigma| - tr(lam sigma^-1)/2``
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=np.float64))
    lam = np.atleast_2d(np.asarray(lam, dtype=np.float64))
    d = sigma.shape[0]
    if sigma.shape != (d, d) or lam.shape != (d, d):
        raise InvalidInput("sigma and lambda must be square matrices of the same size")
    if not nu > d - 1:
        raise InvalidInput(f"nu must exceed d - 1 = {d - 1}, got {nu}")
    sign_s, logdet_s = np.linalg.slogdet(sigma)
    sign_l, logdet_l = np.linalg.slogdet(lam)
    if sign_s <= 0 or sign_l <= 0:
        raise InvalidInput("sigma and lambda must be positive definite")
    trace = float(np.trace(np.linalg.solve(sigma, lam)))
    return (
        0.5 * nu * logdet_l
        - 0.5 * nu * d * np.log(2.0)
        - multigammaln(0.5 * nu, d)
        - 0.5 * (nu + d + 1) * logdet_s
        - 0.5 * trace
    )
