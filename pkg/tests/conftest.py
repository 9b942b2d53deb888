import sys

import numpy as np
import pytest

from morphoscope.gaussian import GaussianParams
from morphoscope.probe import AttributeSchema, ProbeModel


def random_pd(rng, d, jitter=0.5):
    a = rng.standard_normal((d, d))
    return a @ a.T / d + jitter * np.eye(d)


def random_gaussian(rng, d):
    return GaussianParams(rng.standard_normal(d), random_pd(rng, d))


def make_model(gaussians, prior, attribute="attr"):
    values = tuple(gaussians)
    schema = AttributeSchema(attribute, values)
    d = next(iter(gaussians.values())).dim
    return ProbeModel(schema, dict(gaussians), dict(zip(values, prior)), d)


def two_class_problem(seed, d, n_train=400, n_val=300, shift=1.0):
    """Random two-class Gaussian problem with different means and covariances."""
    rng = np.random.default_rng(seed)
    params = [(rng.standard_normal(d) * shift * k, random_pd(rng, d)) for k in (0, 1)]

    def draw(n):
        y = rng.integers(0, 2, size=n)
        X = np.empty((n, d))
        for k, (m, c) in enumerate(params):
            sel = y == k
            X[sel] = rng.multivariate_normal(m, c, size=sel.sum())
        return X, np.where(y == 0, "a", "b")

    return draw(n_train), draw(n_val)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
