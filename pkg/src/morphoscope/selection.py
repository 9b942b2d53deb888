"""Dimension-subset search for a fitted probe.

Greedy forward selection scores every unchosen dimension against the current
prefix by bordering the prefix's Cholesky factors: one triangular solve per
candidate and value, plus an update of the cached whitened residuals. This
keeps a greedy step at ``O(|V| (k^2 d + N k d))`` with a single fit, instead
of retraining a probe per candidate.
"""

import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import FormatError, InvalidInput, TooLarge
from .gaussian import LOG_2PI, CholFactor, border, chol_extend
from .metrics import LN2, entropy_plugin, lba, lbmi, lbnmi
from .probe import DEFAULT_K0, DEFAULT_NU0_OFFSET, GaussianProbe

logger = logging.getLogger(__name__)

CRITERIA = ("loglik", "accuracy")
DEFAULT_MAX_K = 50
TIE_TOLERANCE = 1e-9
EXHAUSTIVE_LIMIT = 2_000_000
# Candidate chunks have a fixed size so results do not depend on the worker count.
CHUNK_SIZE = 32

TSV_HEADER = ("step", "dim", "criterion", "loglik_nats", "accuracy", "mi_bits", "lba", "lbmi", "lbnmi")


def _check_criterion(criterion):
    if criterion not in CRITERIA:
        raise InvalidInput(f"criterion must be one of {CRITERIA}, got {criterion!r}")


def pick_best(values, tolerance=TIE_TOLERANCE):
    """Position of the first value within ``tolerance`` of the maximum."""
    values = np.asarray(values, dtype=np.float64)
    values = np.where(np.isnan(values), -np.inf, values)
    best = np.max(values)
    if best == -np.inf:
        return 0
    return int(np.flatnonzero(values >= best - tolerance)[0])


class IncrementalScorer:
    """Held-out scores of ``prefix + [j]`` for all candidate dims ``j``.

    Keeps, per value, the Cholesky factor of the prefix covariance and the
    whitened residuals ``L^-1 (h_C - mu_C)`` of every evaluation row.
    """

    def __init__(self, model, X, labels, prefix=()):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != model.dim:
            raise InvalidInput(f"evaluation rows must have {model.dim} columns")
        if X.shape[0] == 0:
            raise InvalidInput("evaluation split is empty")
        self.model = model
        self.X = X
        self.codes = model.schema.encode(np.asarray(labels).astype(str))
        if self.codes.shape[0] != X.shape[0]:
            raise InvalidInput("one label per evaluation row is required")
        self.n = X.shape[0]
        self.log_prior = model.log_prior
        self.gaussians = [model.gaussians[v] for v in model.schema.values]
        self.factors = [CholFactor.empty() for _ in self.gaussians]
        self.whitened = [np.zeros((self.n, 0)) for _ in self.gaussians]
        self.quad = [np.zeros(self.n) for _ in self.gaussians]
        for j in prefix:
            self.commit(j)

    @property
    def prefix(self):
        return self.factors[0].dims

    def _chunk_scores(self, cand):
        dims = list(self.prefix)
        k = len(dims)
        m = len(cand)
        joint = np.empty((len(self.gaussians), self.n, m))
        bad = np.zeros(m, dtype=bool)
        for i, (g, fac) in enumerate(zip(self.gaussians, self.factors)):
            row, pivot_sq = border(fac, g.cov[np.ix_(dims, cand)], g.cov[cand, cand])
            bad |= ~(pivot_sq > 0)
            pivot_sq = np.where(pivot_sq > 0, pivot_sq, np.nan)
            resid = self.X[:, cand] - g.mean[cand]
            if k:
                resid = resid - self.whitened[i] @ row
            z = resid / np.sqrt(pivot_sq)
            const = self.log_prior[i] - 0.5 * ((k + 1) * LOG_2PI + fac.log_det)
            joint[i] = const - 0.5 * (np.log(pivot_sq) + self.quad[i][:, None] + z * z)
        gold = joint[self.codes, np.arange(self.n), :] - logsumexp(joint, axis=0)
        loglik = np.sum(gold, axis=0)
        acc = np.mean(np.argmax(joint, axis=0) == self.codes[:, None], axis=0)
        loglik[bad] = -np.inf
        acc[bad] = -np.inf
        return loglik, acc

    def score(self, candidates, workers=1):
        """Return ``(loglik_nats, accuracy)`` arrays aligned with ``candidates``."""
        candidates = [int(j) for j in candidates]
        chunks = [candidates[i:i + CHUNK_SIZE] for i in range(0, len(candidates), CHUNK_SIZE)]
        if not chunks:
            return np.zeros(0), np.zeros(0)
        if workers > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(self._chunk_scores, chunks))
        else:
            parts = [self._chunk_scores(c) for c in chunks]
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])

    def commit(self, j):
        """Append dimension ``j`` to the prefix."""
        j = int(j)
        for i, g in enumerate(self.gaussians):
            fac = chol_extend(self.factors[i], g, j)
            k = len(fac) - 1
            resid = self.X[:, j] - g.mean[j]
            if k:
                resid = resid - self.whitened[i] @ fac.lower[k, :k]
            z = resid / fac.lower[k, k]
            self.factors[i] = fac
            self.whitened[i] = np.column_stack([self.whitened[i], z])
            self.quad[i] = self.quad[i] + z * z


@dataclass
class TraceStep:
    dim: int
    criterion_value: float
    loglik_nats: float
    accuracy: float
    mi_bits: float


@dataclass
class SelectionTrace:
    criterion: str
    max_k: int
    attribute: str
    entropy_bits: float
    steps: list = field(default_factory=list)
    dataset_id: str = ""
    provenance: dict = field(default_factory=dict)

    @property
    def dims(self):
        return [s.dim for s in self.steps]

    @property
    def accuracy(self):
        return [s.accuracy for s in self.steps]

    @property
    def mi_bits(self):
        return [s.mi_bits for s in self.steps]

    @property
    def lba(self):
        return lba(self.accuracy)

    @property
    def lbmi(self):
        return lbmi(self.mi_bits)

    @property
    def lbnmi(self):
        return lbnmi(self.mi_bits, self.entropy_bits)

    def to_tsv(self):
        lines = ["\t".join(TSV_HEADER)]
        if self.steps:
            cols = zip(self.steps, self.lba, self.lbmi, self.lbnmi)
            for t, (s, a_lb, mi_lb, nmi_lb) in enumerate(cols, start=1):
                vals = [s.criterion_value, s.loglik_nats, s.accuracy, s.mi_bits, a_lb, mi_lb, nmi_lb]
                lines.append("\t".join([str(t), str(s.dim)] + [_fmt(v) for v in vals]))
        return "\n".join(lines) + "\n"

    def sidecar(self):
        return {
            "criterion": self.criterion,
            "max_k": self.max_k,
            "attribute": self.attribute,
            "dataset_id": self.dataset_id,
            "entropy_bits": self.entropy_bits,
            "dims": self.dims,
            "provenance": self.provenance,
        }

    def save(self, tsv_path, json_path=None):
        with open(tsv_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_tsv())
        if json_path is not None:
            with open(json_path, "w", encoding="utf-8") as fh:
                json.dump(self.sidecar(), fh, indent=2, sort_keys=True)
                fh.write("\n")


def _fmt(v):
    return format(float(v), ".17g")


def read_trace_tsv(path):
    """Read ``(dims, rows)`` back from a trace TSV; rows are dicts of floats."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or tuple(lines[0].split("\t")) != TSV_HEADER:
        raise FormatError(f"{path}: missing or unexpected trace header")
    rows = []
    for ln in lines[1:]:
        parts = ln.split("\t")
        if len(parts) != len(TSV_HEADER):
            raise FormatError(f"{path}: malformed trace line {ln!r}")
        row = {"step": int(parts[0]), "dim": int(parts[1])}
        row.update({k: float(v) for k, v in zip(TSV_HEADER[2:], parts[2:])})
        rows.append(row)
    return [r["dim"] for r in rows], rows


def greedy_select(model, X_val, y_val, max_k=DEFAULT_MAX_K, criterion="loglik", workers=1):
    """Greedy forward selection on held-out data.

    Runs the full budget of ``max_k`` steps even when the criterion drops.
    Ties within ``TIE_TOLERANCE`` go to the lowest dimension index.
    """
    _check_criterion(criterion)
    if max_k < 1:
        raise InvalidInput("max_k must be at least 1")
    if max_k > model.dim:
        warnings.warn(f"max_k={max_k} exceeds d={model.dim}; clamping", stacklevel=2)
        max_k = model.dim
    labels = np.asarray(y_val).astype(str)
    if labels.size == 0:
        raise InvalidInput("validation split is empty")
    scorer = IncrementalScorer(model, X_val, labels)
    h = entropy_plugin(labels)
    trace = SelectionTrace(criterion, max_k, model.schema.attribute, h,
                           dataset_id=str(model.provenance.get("dataset_id", "")))
    remaining = list(range(model.dim))
    for step in range(max_k):
        loglik, acc = scorer.score(remaining, workers=workers)
        values = loglik if criterion == "loglik" else acc
        pos = pick_best(values)
        j = remaining.pop(pos)
        scorer.commit(j)
        ll = float(loglik[pos])
        trace.steps.append(TraceStep(j, float(values[pos]), ll, float(acc[pos]), h + ll / (scorer.n * LN2)))
        logger.debug("step %d: dim %d criterion %.6g", step + 1, j, values[pos])
    return trace


def subset_scores(model, subset, X_full, labels):
    """``(loglik_nats, accuracy)`` of the probe restricted to ``subset``."""
    ev = model.evaluator(subset)
    codes = model.schema.encode(labels)
    lp = ev.log_posterior(ev.restrict(X_full))
    ll = float(np.sum(lp[np.arange(codes.shape[0]), codes]))
    return ll, float(np.mean(np.argmax(lp, axis=1) == codes))


def exhaustive_select(model, X_val, y_val, k, criterion="loglik", limit=EXHAUSTIVE_LIMIT):
    """Best size-``k`` subset by enumeration in lexicographic order."""
    _check_criterion(criterion)
    if not 1 <= k <= model.dim:
        raise InvalidInput(f"k must be in [1, {model.dim}]")
    count = math.comb(model.dim, k)
    if count > limit:
        raise TooLarge(count, limit)
    labels = np.asarray(y_val).astype(str)
    if labels.size == 0:
        raise InvalidInput("validation split is empty")
    subsets = list(combinations(range(model.dim), k))
    values = []
    for c in subsets:
        ll, acc = subset_scores(model, c, X_val, labels)
        values.append(ll if criterion == "loglik" else acc)
    pos = pick_best(values)
    return subsets[pos], float(values[pos])


class GreedyDimensionSelector(TransformerMixin, BaseEstimator):
    """Select embedding dimensions with a decomposable Gaussian probe.

    The probe is fit once on the training rows; dimensions are chosen greedily
    by the held-out criterion on ``X_val``/``y_val``.

    Attributes
    ----------
    probe_ : GaussianProbe
    trace_ : SelectionTrace
    selected_dims_ : ndarray of int, in selection order
    """

    def __init__(self, max_k=DEFAULT_MAX_K, criterion="loglik", k0=DEFAULT_K0,
                 nu0_offset=DEFAULT_NU0_OFFSET, prior_scope="value", workers=1):
        self.max_k = max_k
        self.criterion = criterion
        self.k0 = k0
        self.nu0_offset = nu0_offset
        self.prior_scope = prior_scope
        self.workers = workers

    def fit(self, X, y, X_val=None, y_val=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        if X_val is None:
            warnings.warn("no validation split given; selecting on the training rows", stacklevel=2)
            X_val, y_val = X, y
        else:
            X_val, y_val = check_X_y(X_val, y_val, dtype=np.float64)
        self.probe_ = GaussianProbe(self.k0, self.nu0_offset, self.prior_scope).fit(X, y)
        y_val = self.probe_._names(y_val)
        self.trace_ = greedy_select(self.probe_.model_, X_val, y_val, min(self.max_k, X.shape[1]),
                                    self.criterion, self.workers)
        self.selected_dims_ = np.array(self.trace_.dims, dtype=np.intp)
        self.n_features_in_ = X.shape[1]
        return self

    def get_support(self, indices=False):
        check_is_fitted(self, "selected_dims_")
        if indices:
            return self.selected_dims_.copy()
        mask = np.zeros(self.n_features_in_, dtype=bool)
        mask[self.selected_dims_] = True
        return mask

    def transform(self, X):
        """Columns of ``X`` at the selected dims, in selection order."""
        check_is_fitted(self, "selected_dims_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise InvalidInput(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X[:, self.selected_dims_]
