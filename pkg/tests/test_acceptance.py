"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` or ``python tests/test_acceptance.py``.
The lines are repeated in the pytest terminal summary.
"""

import sys
import time

import numpy as np
import pytest
from scipy import stats
from scipy.special import logsumexp

from morphoscope.cli import main as cli_main
from morphoscope.data import EmbeddingDataset, LabeledToken, SPLITS, filter_attribute_values
from morphoscope.gaussian import GaussianParams, marginalize
from morphoscope.giw import SufficientStats, default_hyperparams, map_estimate, posterior_update, GIWHyperparams
from morphoscope.metrics import accuracy, majority_baseline, mi_estimate
from morphoscope.plot import centroid_separation, read_svg_points
from morphoscope.probe import fit_probe, gaussian_param_count
from morphoscope.selection import IncrementalScorer, exhaustive_select, greedy_select, read_trace_tsv
from morphoscope.synth import (
    SynthSpec,
    SynthValue,
    brute_force_best_subset,
    generate,
    separated_spec,
    true_mi_1d,
)
from morphoscope.unimorph import canonicalize_annotation

from conftest import random_pd

RESULTS = []


def verdict(label, ok, detail, elapsed=None):
    line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
    if elapsed is not None:
        line += f" [{elapsed:.2f}s]"
    RESULTS.append(line)
    print(line)
    assert ok, line


def split_arrays(ds, attribute):
    rows = {s: [t.row_index for t in ds.tokens if t.split == s and attribute in t.tag] for s in SPLITS}
    y_all = np.array([t.tag.get(attribute, "") for t in ds.tokens])
    return {s: (ds.embeddings[r].astype(np.float64), y_all[r]) for s, r in rows.items()}


def random_spec(seed, d, n_per_split, n_values=2):
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.full(n_values, 4.0))
    values = [SynthValue(f"v{c}", float(wc), rng.standard_normal(d) * 0.6, random_pd(rng, d))
              for c, wc in enumerate(w / w.sum())]
    return SynthSpec(d, values, n_per_split, seed, list(range(d)))


# 1 ---------------------------------------------------------------------------


def test_c1_parameter_count():
    got = (gaussian_param_count(300), gaussian_param_count(768))
    verdict("C1 parameter count", got == (45450, 296064), f"d=300 -> {got[0]}, d=768 -> {got[1]}")


# 2 ---------------------------------------------------------------------------


def test_c2_giw_posterior():
    t0 = time.perf_counter()
    data = np.array([[-1.0], [1.0]])
    post = posterior_update(default_hyperparams(data), SufficientStats.from_data(data))
    sigma = map_estimate(post).cov[0, 0]
    rel = lambda a, b: abs(a - b) / max(abs(b), 1e-300)  # noqa: E731
    hand_ok = (abs(post.mu0[0]) <= 1e-15 and rel(post.k0, 2.01) <= 1e-10 and post.nu0 == 5
               and rel(post.lambda0[0, 0], 3.0) <= 1e-10 and rel(sigma, 0.375) <= 1e-10)

    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(1000 + seed)
        d = int(rng.integers(1, 8))
        X = rng.standard_normal((int(rng.integers(4, 60)), d)) * rng.uniform(0.3, 3) + rng.standard_normal(d)
        cut = int(rng.integers(1, X.shape[0]))
        prior = GIWHyperparams(rng.standard_normal(d), rng.uniform(0.01, 3), random_pd(rng, d),
                               d + rng.uniform(0.0, 6.0))
        seq = posterior_update(posterior_update(prior, SufficientStats.from_data(X[:cut])),
                               SufficientStats.from_data(X[cut:]))
        joint = posterior_update(prior, SufficientStats.from_data(X))
        for a, b in ((seq.mu0, joint.mu0), (seq.lambda0, joint.lambda0), (seq.k0, joint.k0), (seq.nu0, joint.nu0)):
            a, b = np.asarray(a, float), np.asarray(b, float)
            worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-12))))
    elapsed = time.perf_counter() - t0
    ok = hand_ok and worst <= 1e-10 and elapsed < 1.0
    verdict("C2 GIW posterior", ok,
            f"worked example {'matches' if hand_ok else 'MISMATCH'} (Sigma*={sigma:.17g}); "
            f"sequential vs joint worst rel err {worst:.2e} over 50 instances", elapsed)


# 3 ---------------------------------------------------------------------------


def scipy_log_posterior(gaussians, prior, subset, H):
    idx = list(subset)
    lj = np.column_stack([
        np.log(prior[v]) + stats.multivariate_normal(g.mean[idx], g.cov[np.ix_(idx, idx)]).logpdf(H).reshape(-1)
        for v, g in gaussians.items()
    ])
    return lj - logsumexp(lj, axis=1, keepdims=True)


def test_c3_decomposability():
    t0 = time.perf_counter()
    worst_map = worst_mle = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(2, 65))
        n_values = int(rng.integers(2, 5))
        gaussians = {f"v{c}": GaussianParams(rng.standard_normal(d), random_pd(rng, d)) for c in range(n_values)}
        counts = rng.integers(10, 80, size=n_values)
        X_fit = np.vstack([rng.multivariate_normal(g.mean, g.cov, size=m) for g, m in zip(gaussians.values(), counts)])
        map_model = fit_probe(X_fit, np.repeat(list(gaussians), counts))
        k = int(rng.integers(1, d + 1))
        subset = [int(j) for j in rng.permutation(d)[:k]]
        g0 = gaussians["v0"]
        H = rng.multivariate_normal(g0.mean, g0.cov, size=20)[:, subset]
        got = np.exp(map_model.evaluator(subset).log_posterior(H))
        want = np.exp(scipy_log_posterior(map_model.gaussians, map_model.class_prior, subset, H))
        worst_map = max(worst_map, float(np.max(np.abs(got - want) / np.maximum(want, 1e-300))))

        if seed % 4 == 0:
            n = 3 * d + 20
            X = np.vstack([rng.multivariate_normal(g.mean, g.cov, size=n) for g in gaussians.values()])
            y = np.repeat(list(gaussians), n)
            full = fit_probe(X, y, estimator="mle")
            direct = fit_probe(X[:, subset], y, estimator="mle")
            for v in gaussians:
                m = marginalize(full.gaussians[v], subset)
                for a, b in ((m.mean, direct.gaussians[v].mean), (m.cov, direct.gaussians[v].cov)):
                    worst_mle = max(worst_mle, float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-12))))
            p_full = full.evaluator(subset).log_posterior(X[:50, subset])
            p_direct = direct.evaluator().log_posterior(X[:50, subset])
            worst_mle = max(worst_mle, float(np.max(np.abs(np.exp(p_full) - np.exp(p_direct))
                                                    / np.maximum(np.exp(p_direct), 1e-300))))
    elapsed = time.perf_counter() - t0
    ok = worst_map <= 1e-10 and worst_mle <= 1e-10 and elapsed < 10
    verdict("C3 decomposability", ok,
            f"100 pairs, worst rel err marginalized-vs-fresh {worst_map:.2e}; MLE refit {worst_mle:.2e}", elapsed)


# 4 ---------------------------------------------------------------------------


def test_c4_selection_oracles():
    t0 = time.perf_counter()
    problems = []
    for seed in range(20):
        ds = generate(random_spec(seed, 8, (300, 200, 1)))
        arr = split_arrays(ds, "Label")
        model = fit_probe(*arr["train"])
        Xv, yv = arr["validation"]
        trace = greedy_select(model, Xv, yv, max_k=3)
        best1, val1 = exhaustive_select(model, Xv, yv, 1)
        best3, val3 = exhaustive_select(model, Xv, yv, 3)
        brute3 = brute_force_best_subset(ds, "Label", 3, model=model)
        brute1 = brute_force_best_subset(ds, "Label", 1, model=model)
        step1_ok = (trace.dims[0],) == best1 == brute1[0]
        bound_ok = trace.steps[2].criterion_value <= val3 + 1e-9 * abs(val3)
        agree = best3 == brute3[0] and abs(val3 - brute3[1]) <= 1e-8 * abs(brute3[1]) \
            and abs(val1 - brute1[1]) <= 1e-8 * abs(brute1[1])
        if not (step1_ok and bound_ok and agree):
            problems.append(seed)
    elapsed = time.perf_counter() - t0
    ok = not problems and elapsed < 30
    verdict("C4 selection oracles", ok,
            "20 problems, d=8: step-1 = exhaustive k=1, greedy k=3 <= exhaustive k=3, "
            f"exhaustive = brute force (1e-8); failing seeds {problems or 'none'}", elapsed)


# 5 ---------------------------------------------------------------------------

MI_CASES = [
    ((0.0, 1.0), (1.0, 1.0), (0.5, 0.5)),
    ((0.0, 3.0), (1.0, 1.0), (0.5, 0.5)),
    ((0.0, 0.5), (1.0, 2.0), (0.3, 0.7)),
    ((0.0, 0.0), (1.0, 4.0), (0.5, 0.5)),
    ((-1.0, 2.0), (0.5, 1.5), (0.8, 0.2)),
]


def draw_1d(rng, means, variances, weights, n):
    c = rng.choice(len(weights), size=n, p=weights)
    h = np.asarray(means)[c] + np.sqrt(np.asarray(variances))[c] * rng.standard_normal(n)
    return h[:, None], np.array([f"v{i}" for i in c])


def test_c5_mi_lower_bound():
    t0 = time.perf_counter()
    rng = np.random.default_rng(55)
    parts, ok = [], True
    for means, variances, weights in MI_CASES:
        model = fit_probe(*draw_1d(rng, means, variances, weights, 100_000))
        H, y = draw_1d(rng, means, variances, weights, 100_000)
        est = mi_estimate(model.evaluator(), H, y)
        truth = true_mi_1d(means, variances, weights)
        ok &= est <= truth + 0.02
        parts.append(f"{est:.4f} vs {truth:.4f}")

    spec = separated_spec(4, informative_dims=(), separation=0.0, weights=(0.65, 0.35),
                          n_per_split=(100_000, 10_000, 100_000), seed=5)
    arr = split_arrays(generate(spec), "Label")
    model = fit_probe(*arr["train"])
    trace = greedy_select(model, *arr["validation"], max_k=4)
    ev = model.evaluator(trace.dims)
    Xt, yt = arr["test"]
    mi0 = mi_estimate(ev, ev.restrict(Xt), yt)
    acc, base = accuracy(ev, ev.restrict(Xt), yt), majority_baseline(yt)
    ok &= abs(mi0) <= 0.02 and abs(acc - base) <= 0.02
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60
    verdict("C5 MI lower bound", ok,
            f"estimate vs true MI, allowed +0.02: {', '.join(parts)}; no-signal MI {mi0:+.4f} bits, "
            f"accuracy {acc:.4f} vs majority {base:.4f}", elapsed)


# 6 ---------------------------------------------------------------------------


def test_c6_trace_monotone_and_deterministic(tmp_path):
    spec = SynthSpec(50, [SynthValue("a", 0.4, np.zeros(50), np.eye(50)),
                          SynthValue("b", 0.35, np.r_[np.full(5, 0.8), np.zeros(45)], np.eye(50)),
                          SynthValue("c", 0.25, np.r_[np.zeros(5), np.full(5, -0.6), np.zeros(40)], np.eye(50))],
                     (1500, 1000, 1), seed=6, informative_dims=range(10))
    arr = split_arrays(generate(spec), "Label")
    model = fit_probe(*arr["train"])
    texts, times = [], []
    for workers in (1, 2, 4, 8):
        t0 = time.perf_counter()
        trace = greedy_select(model, *arr["validation"], max_k=50, workers=workers)
        times.append(time.perf_counter() - t0)
        texts.append(trace.to_tsv())
    (tmp_path / "t.tsv").write_text(texts[0])
    _, rows = read_trace_tsv(tmp_path / "t.tsv")
    lba = [r["lba"] for r in rows]
    lbmi = [r["lbmi"] for r in rows]
    mono = all(np.diff(lba) >= 0) and all(np.diff(lbmi) >= 0) and len(rows) == 50
    same = len(set(texts)) == 1
    ok = mono and same and max(times) < 10
    verdict("C6 trace monotone + deterministic", ok,
            f"50 steps, LBA/LBMI non-decreasing: {mono}; workers 1/2/4/8 byte-identical: {same}",
            max(times))


# 7 ---------------------------------------------------------------------------


def test_c7_scatter_separation(tmp_path, capsys):
    t0 = time.perf_counter()
    assert cli_main(["synth", "--preset", "separated", "--d", "8", "--seed", "7", "--out", str(tmp_path)]) == 0
    flags = ["--dataset", str(tmp_path / "embeddings.iprb"), "--labels", str(tmp_path / "labels.tsv"),
             "--attribute", "Label", "--out", str(tmp_path)]
    assert cli_main(["fit", *flags]) == 0
    assert cli_main(["select", *flags, "--max-dims", "2"]) == 0
    svg_path = tmp_path / "fig.svg"
    flags[-1] = str(svg_path)
    assert cli_main(["scatter", *flags, "--model", str(tmp_path / "model.json"),
                     "--trace", str(tmp_path / "trace.tsv")]) == 0
    pts = read_svg_points(svg_path.read_text())
    sep = centroid_separation(pts["A"], pts["B"])
    elapsed = time.perf_counter() - t0
    capsys.readouterr()
    dims = read_trace_tsv(tmp_path / "trace.tsv")[0]
    verdict("C7 scatter separation", sep > 4 and elapsed < 5,
            f"greedy dims {dims}, centroid distance = {sep:.2f} within-class std (> 4)", elapsed)


# 8 ---------------------------------------------------------------------------


def test_c8_data_rules():
    tokens, r = [], 0
    for value, per_split in {"KEEP": (100, 100, 100), "DROP": (150, 120, 99), "ALSO": (101, 100, 250)}.items():
        for split, n in zip(SPLITS, per_split):
            for i in range(n):
                for _ in range(2):
                    tokens.append(LabeledToken(r, f"{value}{split}{i}", split, {"Number": value}))
                    r += 1
    ds = EmbeddingDataset(np.zeros((len(tokens), 1)), tokens)
    f = filter_attribute_values(ds, "Number")
    filter_ok = f.schema.values == ("ALSO", "KEEP") and set(f.dropped) == {"DROP"}
    canon = {raw: canonicalize_annotation(raw) for raw in ("{CMPR}", "MASC+FEM", "SG|PL")}
    canon_ok = canon == {"{CMPR}": "CMPR", "MASC+FEM": "FEM+MASC", "SG|PL": None}
    verdict("C8 data rules", filter_ok and canon_ok,
            f"kept {list(f.schema.values)} dropped {sorted(f.dropped)}; canonical forms {canon}")


# 9 ---------------------------------------------------------------------------


def test_c9_greedy_step_speed():
    rng = np.random.default_rng(9)
    d, n_train, n_val = 768, 3000, 10_000
    A = rng.standard_normal((d, d)) / np.sqrt(d)
    shift = rng.standard_normal(d) * 0.1

    def draw(n):
        y = rng.integers(0, 2, size=n)
        X = rng.standard_normal((n, d)) @ A.T + np.outer(y, shift)
        return X, np.where(y == 1, "PST", "PRS")

    model = fit_probe(*draw(n_train))
    Xv, yv = draw(n_val)
    prefix = [int(j) for j in rng.permutation(d)[:49]]
    t0 = time.perf_counter()
    scorer = IncrementalScorer(model, Xv, yv, prefix=prefix)
    cands = [j for j in range(d) if j not in set(prefix)]
    ll, _ = scorer.score(cands, workers=4)
    elapsed = time.perf_counter() - t0
    # spot-check the incremental scores against a fresh evaluation
    j = cands[int(np.argmax(ll))]
    fresh = model.evaluator(prefix + [j]).log_likelihood(Xv[:, prefix + [j]], yv)
    ok = elapsed < 60 and abs(ll.max() - fresh) <= 1e-8 * abs(fresh)
    verdict("C9 greedy step speed", ok,
            f"{len(cands)} candidates at prefix 49, N={n_val}, d={d}, workers=4 on this machine", elapsed)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
