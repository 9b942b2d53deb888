"""Synthetic Gaussian datasets with known structure, and brute-force oracles."""

import json
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import integrate
from scipy.special import logsumexp

from .data import SPLITS, EmbeddingDataset, LabeledToken
from .exceptions import InvalidInput, InvalidSpec, TooLarge
from .probe import AttributeSchema, fit_probe
from .selection import EXHAUSTIVE_LIMIT, pick_best

GENERATOR = "numpy.random.Generator(PCG64)"


@dataclass
class SynthValue:
    name: str
    weight: float
    mean: np.ndarray
    cov: np.ndarray


@dataclass
class SynthSpec:
    d: int
    values: list
    n_per_split: tuple
    seed: int = 0
    informative_dims: list = field(default_factory=list)
    attribute: str = "Label"

    def __post_init__(self):
        self.values = [v if isinstance(v, SynthValue) else SynthValue(**v) for v in self.values]
        self.n_per_split = tuple(int(n) for n in self.n_per_split)
        self.informative_dims = sorted(int(i) for i in self.informative_dims)
        self.validate()

    def validate(self):
        d = self.d
        if d < 1:
            raise InvalidSpec("d must be positive")
        if len(self.values) < 1:
            raise InvalidSpec("at least one value is required")
        if len(self.n_per_split) != 3 or min(self.n_per_split) < 0:
            raise InvalidSpec("n_per_split needs three non-negative counts (train, validation, test)")
        weights = np.array([v.weight for v in self.values], dtype=np.float64)
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise InvalidSpec("weights must be positive and sum to 1")
        for v in self.values:
            v.mean = np.asarray(v.mean, dtype=np.float64).reshape(-1)
            v.cov = np.asarray(v.cov, dtype=np.float64)
            if v.mean.shape != (d,) or v.cov.shape != (d, d):
                raise InvalidSpec(f"value {v.name!r}: mean/cov shapes do not match d={d}")
            if not np.allclose(v.cov, v.cov.T):
                raise InvalidSpec(f"value {v.name!r}: covariance is not symmetric")
            try:
                np.linalg.cholesky(v.cov)
            except np.linalg.LinAlgError:
                raise InvalidSpec(f"value {v.name!r}: covariance is not positive definite") from None
        if any(not 0 <= i < d for i in self.informative_dims):
            raise InvalidSpec("informative_dims out of range")
        rest = [i for i in range(d) if i not in set(self.informative_dims)]
        if rest:
            ref = self.values[0]
            for v in self.values[1:]:
                if not (np.allclose(v.mean[rest], ref.mean[rest])
                        and np.allclose(v.cov[np.ix_(rest, rest)], ref.cov[np.ix_(rest, rest)])):
                    raise InvalidSpec(f"value {v.name!r} differs from {ref.name!r} outside informative_dims")

    def to_dict(self):
        return {
            "d": self.d,
            "attribute": self.attribute,
            "seed": self.seed,
            "n_per_split": list(self.n_per_split),
            "informative_dims": list(self.informative_dims),
            "values": [
                {"name": v.name, "weight": v.weight, "mean": v.mean.tolist(), "cov": v.cov.tolist()}
                for v in self.values
            ],
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(
                d=int(doc["d"]),
                values=[dict(v) for v in doc["values"]],
                n_per_split=tuple(doc["n_per_split"]),
                seed=int(doc.get("seed", 0)),
                informative_dims=list(doc.get("informative_dims", [])),
                attribute=str(doc.get("attribute", "Label")),
            )
        except (KeyError, TypeError) as err:
            raise InvalidSpec(f"malformed synthetic spec: {err}") from None

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as err:
                raise InvalidSpec(f"{path}: {err}") from None


def separated_spec(d, informative_dims=(0,), separation=8.0, weights=(0.5, 0.5),
                   n_per_split=(1000, 500, 500), seed=0, names=("A", "B"), attribute="Label"):
    """Two or more unit-variance classes whose means differ only on ``informative_dims``.

    Class ``c`` has mean ``c * separation`` on every informative dim.
    """
    values = []
    for c, (name, w) in enumerate(zip(names, weights)):
        mean = np.zeros(d)
        mean[list(informative_dims)] = c * separation
        values.append(SynthValue(name, w, mean, np.eye(d)))
    return SynthSpec(d, values, n_per_split, seed, list(informative_dims), attribute)


def generate(spec):
    """Sample a dataset; rows are ordered train, validation, test."""
    rng = np.random.default_rng(spec.seed)
    weights = np.array([v.weight for v in spec.values])
    weights = weights / weights.sum()
    chols = [np.linalg.cholesky(v.cov) for v in spec.values]
    blocks, tokens = [], []
    row = 0
    for split, n in zip(SPLITS, spec.n_per_split):
        classes = rng.choice(len(spec.values), size=n, p=weights)
        z = rng.standard_normal((n, spec.d))
        x = np.empty((n, spec.d))
        for c, v in enumerate(spec.values):
            sel = classes == c
            x[sel] = v.mean + z[sel] @ chols[c].T
        blocks.append(x)
        for c in classes:
            tokens.append(LabeledToken(row, f"w{row}", split, {spec.attribute: spec.values[c].name}))
            row += 1
    emb = np.vstack(blocks) if blocks else np.zeros((0, spec.d))
    prov = {"synthetic": spec.to_dict(), "generator": GENERATOR}
    return EmbeddingDataset(emb.astype(np.float32), tokens, f"synth-{spec.seed}", prov)


def true_mi_1d(means, variances, weights):
    """Mutual information (bits) between the class and a 1-D Gaussian mixture draw.

    Computed as ``H(V) - integral p(h) H(V | h) dh`` by adaptive quadrature.
    """
    means = np.asarray(means, dtype=np.float64)
    sds = np.sqrt(np.asarray(variances, dtype=np.float64))
    w = np.asarray(weights, dtype=np.float64)
    if not (means.shape == sds.shape == w.shape) or means.size < 1:
        raise InvalidInput("means, variances and weights must have equal length")
    w = w / w.sum()
    h_v = float(-np.sum(w * np.log2(w)))
    log_w = np.log(w)

    def integrand(h):
        lj = log_w - 0.5 * np.log(2 * np.pi) - np.log(sds) - 0.5 * ((h - means) / sds) ** 2
        lp = logsumexp(lj)
        post = lj - lp
        return float(-np.sum(np.exp(lj) * post) / np.log(2.0))

    spread = 12.0 * sds.max()
    lo, hi = means.min() - spread, means.max() + spread
    points = sorted(set(means.tolist()))
    cond, _ = integrate.quad(integrand, lo, hi, points=points, epsabs=1e-10, epsrel=1e-10, limit=1000)
    return h_v - cond


def _rows_by_split(dataset, attribute):
    rows = {s: [] for s in SPLITS}
    for t in dataset.tokens:
        if attribute in t.tag:
            rows[t.split].append(t.row_index)
    X = {s: dataset.embeddings[r].astype(np.float64) for s, r in rows.items()}
    y = {s: np.array([dataset.tokens[i].tag[attribute] for i in r], dtype=str) for s, r in rows.items()}
    return X, y


def _naive_subset_value(model, subset, X, y, criterion):
    idx = list(subset)
    H = X[:, idx]
    cols = []
    for i, v in enumerate(model.schema.values):
        g = model.gaussians[v]
        cov = g.cov[np.ix_(idx, idx)]
        prec = np.linalg.inv(cov)
        _, logdet = np.linalg.slogdet(cov)
        r = H - g.mean[idx]
        quad = np.einsum("ni,ij,nj->n", r, prec, r)
        cols.append(math.log(model.class_prior[v]) - 0.5 * (len(idx) * math.log(2 * math.pi) + logdet + quad))
    lj = np.column_stack(cols)
    top = lj.max(axis=1, keepdims=True)
    lp = lj - top - np.log(np.sum(np.exp(lj - top), axis=1, keepdims=True))
    codes = model.schema.encode(y)
    if criterion == "accuracy":
        return float(np.mean(np.argmax(lj, axis=1) == codes))
    return float(np.sum(lp[np.arange(len(codes)), codes]))


def brute_force_best_subset(dataset, attribute, k, model=None, criterion="loglik", limit=EXHAUSTIVE_LIMIT):
    """Reference enumeration with a dense inverse per subset.

    Fits the probe on the training split unless ``model`` is given and scores
    on the validation split. Returns ``(subset, value)``.
    """
    X, y = _rows_by_split(dataset, attribute)
    if model is None:
        schema = AttributeSchema(attribute, tuple(sorted(set(y["train"].tolist()))))
        model = fit_probe(X["train"], y["train"], schema)
    d = model.dim
    if not 1 <= k <= d:
        raise InvalidInput(f"k must be in [1, {d}]")
    count = math.comb(d, k)
    if count > limit:
        raise TooLarge(count, limit)
    subsets = list(combinations(range(d), k))
    values = [_naive_subset_value(model, c, X["validation"], y["validation"], criterion) for c in subsets]
    pos = pick_best(values)
    return subsets[pos], values[pos]
