"""Probe quality metrics, all information quantities in bits.

The mutual-information estimate is the plug-in label entropy minus the
probe's held-out cross-entropy, which upper-bounds the true conditional
entropy; the difference is therefore an (empirical) lower bound on MI.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateSplit, InvalidInput

LN2 = float(np.log(2.0))


def entropy_plugin(labels):
    """Entropy of the empirical label distribution, in bits."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise InvalidInput("entropy of an empty label set is undefined")
    _, counts = np.unique(labels, return_counts=True)
    p = counts / counts.sum()
    return float(-np.sum(p * np.log2(p)) + 0.0)


def majority_baseline(labels):
    """Accuracy of always predicting the most frequent label."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise InvalidInput("no labels")
    _, counts = np.unique(labels, return_counts=True)
    return float(counts.max() / labels.size)


def _gold_log_posterior(evaluator, H, labels):
    codes = evaluator.model.schema.encode(labels)
    lp = evaluator.log_posterior(H)
    if lp.shape[0] == 0:
        raise InvalidInput("no rows to evaluate")
    return lp, codes


def accuracy(evaluator, H, labels):
    """Fraction of rows whose most probable value is the gold value."""
    codes = evaluator.model.schema.encode(labels)
    if codes.size == 0:
        raise InvalidInput("no rows to evaluate")
    return float(np.mean(evaluator.predict(H) == codes))


def conditional_entropy_upper(evaluator, H, labels):
    """Average negative log2 posterior of the gold value (cross-entropy)."""
    lp, codes = _gold_log_posterior(evaluator, H, labels)
    return float(-np.mean(lp[np.arange(lp.shape[0]), codes]) / LN2)


def mi_estimate(evaluator, H, labels):
    """Plug-in entropy minus cross-entropy; may be negative and is not clamped."""
    return entropy_plugin(labels) - conditional_entropy_upper(evaluator, H, labels)


def running_max(values):
    return np.maximum.accumulate(np.asarray(values, dtype=np.float64)).tolist()


def lba(accuracies):
    """Lower-bound accuracy: running max over the nested prefix chain."""
    return running_max(accuracies)


def lbmi(mi_values):
    """Lower-bound MI: running max of the MI estimates over prefixes."""
    return running_max(mi_values)


def lbnmi(mi_values, entropy_bits):
    """LBMI normalized by the label entropy of the same split."""
    if not entropy_bits > 0:
        raise DegenerateSplit("label entropy is zero; the split has a single value")
    return [v / entropy_bits for v in lbmi(mi_values)]


@dataclass
class MetricCurve:
    """Per-prefix metrics over a nested chain of dimension subsets."""

    accuracy: list
    mi_bits: list
    loglik_nats: list
    entropy_bits: float
    majority_baseline: float = float("nan")

    @property
    def lba(self):
        return lba(self.accuracy)

    @property
    def lbmi_bits(self):
        return lbmi(self.mi_bits)

    @property
    def lbnmi(self):
        return lbnmi(self.mi_bits, self.entropy_bits)

    def rows(self):
        for i, row in enumerate(zip(self.accuracy, self.mi_bits, self.loglik_nats,
                                    self.lba, self.lbmi_bits, self.lbnmi)):
            acc, mi, ll, a_lb, mi_lb, nmi_lb = row
            yield {"prefix": i + 1, "accuracy": acc, "mi_bits": mi, "loglik_nats": ll,
                   "lba": a_lb, "lbmi": mi_lb, "lbnmi": nmi_lb}


def prefix_curve(model, dims, X_full, labels):
    """Metrics for every prefix ``dims[:1], dims[:2], ...`` on one split."""
    if len(dims) == 0:
        raise InvalidInput("no dimensions to evaluate")
    labels = np.asarray(labels).astype(str)
    h = entropy_plugin(labels)
    if not h > 0:
        raise DegenerateSplit("evaluation split contains a single value")
    accs, mis, lls = [], [], []
    codes = model.schema.encode(labels)
    n = codes.shape[0]
    for t in range(1, len(dims) + 1):
        ev = model.evaluator(dims[:t])
        lp = ev.log_posterior(ev.restrict(X_full))
        gold = lp[np.arange(n), codes]
        ll = float(np.sum(gold))
        lls.append(ll)
        accs.append(float(np.mean(np.argmax(lp, axis=1) == codes)))
        mis.append(h + ll / (n * LN2))
    return MetricCurve(accs, mis, lls, h, majority_baseline(labels))
