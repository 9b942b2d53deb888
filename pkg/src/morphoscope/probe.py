"""The decomposable generative probe.

One MAP-regularized Gaussian per attribute value plus a categorical prior over
values. The probe is fit once over all ``d`` dimensions; a probe over any
subset of dimensions is obtained by marginalizing the fitted Gaussians, never
by refitting.
"""

import datetime
import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import __version__
from .exceptions import FormatError, InsufficientData, InvalidInput
from .gaussian import LOG_2PI, GaussianParams, chol_factor, whiten
from .giw import (
    DEFAULT_K0,
    DEFAULT_NU0_OFFSET,
    GIWHyperparams,
    SufficientStats,
    default_hyperparams,
    map_estimate,
    posterior_update,
)

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
PRIOR_SCOPES = ("value", "pooled")
ESTIMATORS = ("map", "mle")


@dataclass(frozen=True)
class AttributeSchema:
    attribute: str
    values: tuple

    def __post_init__(self):
        values = tuple(str(v) for v in self.values)
        if not values:
            raise InvalidInput(f"attribute {self.attribute!r} has no values")
        if len(set(values)) != len(values):
            raise InvalidInput(f"duplicate values in schema for {self.attribute!r}")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)

    def encode(self, labels):
        """Map value names to schema indices."""
        index = {v: i for i, v in enumerate(self.values)}
        try:
            return np.array([index[str(lab)] for lab in labels], dtype=np.intp)
        except KeyError as err:
            raise InvalidInput(f"unknown value {err.args[0]!r} for attribute {self.attribute!r}") from None


@dataclass(frozen=True, eq=False)
class ProbeModel:
    schema: AttributeSchema
    gaussians: dict
    class_prior: dict
    dim: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for v in self.schema.values:
            g = self.gaussians.get(v)
            if g is None or g.dim != self.dim:
                raise InvalidInput(f"value {v!r} lacks a Gaussian of dimension {self.dim}")
        prior = np.array([self.class_prior[v] for v in self.schema.values], dtype=np.float64)
        if np.any(prior <= 0) or abs(prior.sum() - 1.0) > 1e-12:
            raise InvalidInput("class prior must be positive and sum to 1")

    @property
    def log_prior(self):
        return np.log([self.class_prior[v] for v in self.schema.values])

    def evaluator(self, subset=None):
        return SubsetEvaluator(self, range(self.dim) if subset is None else subset)


def gaussian_param_count(d):
    """Free parameters of one ``d``-variate Gaussian (mean plus symmetric covariance)."""
    return d * (d + 1) // 2 + d


def param_count(d, n_values):
    """Total free parameters: ``n_values`` Gaussians plus the categorical."""
    if d < 1 or n_values < 2:
        raise InvalidInput("param_count needs d >= 1 and at least 2 values")
    return n_values * gaussian_param_count(d) + (n_values - 1)


def _mle_hyperparams(d):
    # k0 = 0, lambda0 = 0, nu0 = -(d + 2): the MAP then reduces to the sample mean and S/N.
    return GIWHyperparams(np.zeros(d), 0.0, np.zeros((d, d)), -(d + 2.0))


def fit_probe(
    X,
    y,
    schema=None,
    *,
    k0=DEFAULT_K0,
    nu0_offset=DEFAULT_NU0_OFFSET,
    prior_scope="value",
    estimator="map",
    provenance=None,
):
    """Fit per-value MAP Gaussians and the empirical class prior.

    ``estimator="mle"`` swaps the default prior for the degenerate settings
    under which the MAP equals the maximum-likelihood estimate; it exists for
    checking the fit and is not a regularized model.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(str)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise InvalidInput("X must be 2-D with one label per row")
    if prior_scope not in PRIOR_SCOPES:
        raise InvalidInput(f"prior_scope must be one of {PRIOR_SCOPES}")
    if estimator not in ESTIMATORS:
        raise InvalidInput(f"estimator must be one of {ESTIMATORS}")
    if schema is None:
        schema = AttributeSchema("attribute", tuple(sorted(set(y.tolist()))))
    if len(schema) < 2:
        raise InsufficientData(f"attribute {schema.attribute!r} needs at least 2 values")
    codes = schema.encode(y)
    d = X.shape[1]

    if prior_scope == "pooled" and estimator == "map":
        pooled = default_hyperparams(X, k0=k0, nu0_offset=nu0_offset)

    gaussians, counts = {}, {}
    for i, v in enumerate(schema.values):
        rows = X[codes == i]
        if rows.shape[0] < 2:
            raise InsufficientData(f"value {v!r} has {rows.shape[0]} training rows; at least 2 are needed")
        if estimator == "mle":
            prior = _mle_hyperparams(d)
        elif prior_scope == "pooled":
            prior = pooled
        else:
            prior = default_hyperparams(rows, k0=k0, nu0_offset=nu0_offset)
        post = posterior_update(prior, SufficientStats.from_data(rows))
        gaussians[v] = map_estimate(post)
        if gaussians[v].jitter_applied:
            logger.warning("covariance for value %r needed diagonal jitter", v)
        counts[v] = rows.shape[0]

    total = sum(counts.values())
    class_prior = {v: counts[v] / total for v in schema.values}
    prov = {
        "tool": f"morphoscope {__version__}",
        "fit_time": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "hyperparams": {
            "k0": k0,
            "nu0_offset": nu0_offset,
            "prior_scope": prior_scope,
            "estimator": estimator,
        },
        "train_counts": counts,
    }
    prov.update(provenance or {})
    return ProbeModel(schema, gaussians, class_prior, d, prov)


class SubsetEvaluator:
    """Evaluates a fitted probe restricted to an ordered dimension subset.

    All methods take rows already restricted to ``subset`` (shape ``(N, |C|)``).
    """

    def __init__(self, model, subset):
        self.model = model
        self.subset = tuple(int(i) for i in subset)
        if not self.subset:
            raise InvalidInput("subset must be nonempty")
        self.factors = [chol_factor(model.gaussians[v], self.subset) for v in model.schema.values]
        self._log_prior = model.log_prior

    def restrict(self, X_full):
        X_full = np.asarray(X_full, dtype=np.float64)
        return X_full[..., list(self.subset)]

    def log_joint(self, H):
        """``log p(h_C, v)`` for every row and value, shape ``(N, |V|)``."""
        H = np.atleast_2d(np.asarray(H, dtype=np.float64))
        if H.shape[1] != len(self.subset):
            raise InvalidInput(f"rows have {H.shape[1]} dims, subset has {len(self.subset)}")
        k = len(self.subset)
        out = np.empty((H.shape[0], len(self.factors)))
        for i, (v, fac) in enumerate(zip(self.model.schema.values, self.factors)):
            z = whiten(H, self.model.gaussians[v], fac)
            out[:, i] = self._log_prior[i] - 0.5 * (k * LOG_2PI + fac.log_det + np.sum(z * z, axis=1))
        return out

    def log_posterior(self, H):
        lj = self.log_joint(H)
        return lj - logsumexp(lj, axis=1, keepdims=True)

    def posterior(self, h):
        """Posterior over values; a vector for one row, a matrix for several."""
        h = np.asarray(h, dtype=np.float64)
        p = np.exp(self.log_posterior(h))
        return p[0] if h.ndim == 1 else p

    def predict(self, H):
        """Indices of the most probable value (ties go to the earlier value)."""
        return np.argmax(self.log_joint(H), axis=1)

    def log_likelihood(self, H, labels):
        """Sum over rows of the natural-log posterior of the gold value."""
        codes = self.model.schema.encode(labels)
        lp = self.log_posterior(H)
        if lp.shape[0] == 0:
            raise InvalidInput("no rows to evaluate")
        return float(np.sum(lp[np.arange(lp.shape[0]), codes]))


# -- persistence -------------------------------------------------------------


def _fmt(x):
    return format(float(x), ".17g")


def _array_text(a):
    a = np.asarray(a, dtype=np.float64)
    return "[" + ", ".join(_fmt(x) for x in a.reshape(-1)) + "]"


def model_to_json(model):
    arrays = {}

    def placeholder(a):
        key = f"@@array{len(arrays)}@@"
        arrays[key] = _array_text(a)
        return key

    doc = {
        "format_version": FORMAT_VERSION,
        "schema": {"attribute": model.schema.attribute, "values": list(model.schema.values)},
        "dim": model.dim,
        "class_prior": {v: placeholder([model.class_prior[v]]) for v in model.schema.values},
        "gaussians": {
            v: {"mean": placeholder(g.mean), "cov": placeholder(g.cov)}
            for v, g in model.gaussians.items()
        },
        "provenance": model.provenance,
    }
    text = json.dumps(doc, indent=2, ensure_ascii=False, sort_keys=False)
    for key, arr in arrays.items():
        text = text.replace(f'"{key}"', arr)
    return text + "\n"


def model_from_json(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise FormatError(f"model file is not valid JSON: {err}") from None
    if doc.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported model format_version {doc.get('format_version')!r}")
    try:
        schema = AttributeSchema(doc["schema"]["attribute"], tuple(doc["schema"]["values"]))
        d = int(doc["dim"])
        gaussians = {
            v: GaussianParams(np.array(g["mean"]), np.array(g["cov"]).reshape(d, d))
            for v, g in doc["gaussians"].items()
        }
        class_prior = {v: float(p[0]) for v, p in doc["class_prior"].items()}
    except (KeyError, TypeError, ValueError) as err:
        raise FormatError(f"malformed model file: {err}") from None
    return ProbeModel(schema, gaussians, class_prior, d, doc.get("provenance", {}))


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model_to_json(model))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_json(fh.read())


# -- estimator ---------------------------------------------------------------


class GaussianProbe(ClassifierMixin, BaseEstimator):
    """Generative Gaussian probe (QDA with a Gaussian-inverse-Wishart MAP fit).

    Parameters
    ----------
    k0 : float, default=0.01
        Pseudo-count on the prior mean.
    nu0_offset : float, default=2.0
        Prior degrees of freedom are ``d + nu0_offset``.
    prior_scope : {"value", "pooled"}, default="value"
        Whether prior moments come from each value's rows or from all rows.
    estimator : {"map", "mle"}, default="map"
        ``"mle"`` reproduces the unregularized fit; for diagnostics only.
    dims : sequence of int or None, default=None
        Dimensions used by ``predict``/``predict_proba``. The fit always uses
        all dimensions; the subset is applied by marginalization.

    Attributes
    ----------
    model_ : ProbeModel
    classes_ : ndarray of shape (n_values,)
    n_features_in_ : int
    """

    def __init__(self, k0=DEFAULT_K0, nu0_offset=DEFAULT_NU0_OFFSET, prior_scope="value",
                 estimator="map", dims=None):
        self.k0 = k0
        self.nu0_offset = nu0_offset
        self.prior_scope = prior_scope
        self.estimator = estimator
        self.dims = dims

    def fit(self, X, y, attribute="attribute"):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=False)
        classes, codes = np.unique(y, return_inverse=True)
        # the schema works on strings; classes_ keeps the caller's label type
        names = tuple(str(c) for c in classes)
        schema = AttributeSchema(attribute, names)
        self.model_ = fit_probe(
            X, np.asarray(names)[codes], schema,
            k0=self.k0, nu0_offset=self.nu0_offset,
            prior_scope=self.prior_scope, estimator=self.estimator,
        )
        self.classes_ = classes
        self.n_features_in_ = X.shape[1]
        return self

    def _evaluator(self):
        check_is_fitted(self, "model_")
        dims = range(self.n_features_in_) if self.dims is None else self.dims
        key = tuple(int(i) for i in dims)
        cached = getattr(self, "_evaluator_cache", None)
        if cached is None or cached.subset != key or cached.model is not self.model_:
            cached = SubsetEvaluator(self.model_, key)
            self._evaluator_cache = cached
        return cached

    def _restricted(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise InvalidInput(f"X has {X.shape[1]} features, probe was fit on {self.n_features_in_}")
        ev = self._evaluator()
        return ev, ev.restrict(X)

    def predict_log_proba(self, X):
        ev, H = self._restricted(X)
        return ev.log_posterior(H)

    def predict_proba(self, X):
        return np.exp(self.predict_log_proba(X))

    def predict(self, X):
        ev, H = self._restricted(X)
        return self.classes_[ev.predict(H)]

    def log_likelihood(self, X, y):
        """Held-out log-likelihood (nats) of the gold labels."""
        ev, H = self._restricted(X)
        return ev.log_likelihood(H, self._names(y))

    def _names(self, y):
        codes = np.searchsorted(self.classes_, y)
        codes = np.clip(codes, 0, len(self.classes_) - 1)
        if not np.array_equal(self.classes_[codes], np.asarray(y)):
            raise InvalidInput("y contains labels not seen during fit")
        return np.asarray(self.model_.schema.values)[codes]

    def param_count(self):
        check_is_fitted(self, "model_")
        return param_count(self.n_features_in_, len(self.classes_))
