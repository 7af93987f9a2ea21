"""End-to-end acceptance checks.

Each test prints one PASS/FAIL line (run with -s to stream them) and then
asserts, so a red run still shows exactly which criteria fell over.
"""

import math
import time
import warnings

import numpy as np
import scipy.linalg

from hglmm.cca import CcaConfig, cca_fit, make_scorer
from hglmm.cli import main
from hglmm.fisher import EncodeConfig, encode_sets, fim_diagonal, fv_raw
from hglmm.fixture import FixtureConfig, make_fixture
from hglmm.matrix_io import load_matrix
from hglmm.mixtures import (
    FitConfig,
    GmmModel,
    HglmmModel,
    LmmModel,
    e_step,
    fit_em,
    m_step_gmm,
    m_step_hglmm,
    m_step_lmm,
    weighted_median,
)
from hglmm.retrieval import evaluate_annotation, evaluate_search, metrics_from_ranks, rank
from hglmm.whitening import apply_transform, ica_fit


def _report(num, name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {num:02d} {name}: {status}{suffix}")
    assert ok, f"criterion {num:02d} {name} failed {suffix}"


def _random_model(rng, family, k, d):
    tau = rng.dirichlet(np.ones(k))
    mu = rng.standard_normal((k, d))
    sigma = rng.uniform(0.5, 2.0, (k, d))
    m = rng.standard_normal((k, d))
    s = rng.uniform(0.5, 2.0, (k, d))
    if family == "gmm":
        return GmmModel(tau, mu, sigma)
    if family == "lmm":
        return LmmModel(tau, m, s)
    b = (rng.random((k, d)) < 0.5).astype(np.float64)
    return HglmmModel(tau, mu, sigma, m, s, b)


# ---------------------------------------------------------------------------


def test_criterion_01_em_monotone_all_families():
    start = time.perf_counter()
    worst = 0.0
    for family in ("gmm", "lmm", "hglmm"):
        for seed in range(50):
            rng = np.random.default_rng(seed)
            X = np.vstack(
                [
                    rng.normal(-2.0, 1.0, (250, 8)),
                    rng.laplace(2.0, 1.5, (250, 8)),
                ]
            )
            _, rep = fit_em(X, FitConfig(K=4, max_iters=25, rel_tol=0.0, seed=seed), family)
            t = rep.log_likelihood_trace
            drops = -np.diff(t) / np.maximum.reduce([np.abs(t[:-1]), np.abs(t[1:]), np.ones_like(t[1:])])
            worst = max(worst, float(drops.max(initial=0.0)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 120.0
    _report(1, "EM log-likelihood never decreases", ok, f"worst rel drop {worst:.2e}, {elapsed:.1f}s")


def test_criterion_02_weighted_median_exhaustive():
    rng = np.random.default_rng(1)
    failures = 0
    for trial in range(1000):
        n = int(rng.integers(1, 102))
        if trial % 3 == 0:
            values = rng.integers(-6, 7, n).astype(np.float64)
            weights = rng.integers(0, 5, n).astype(np.float64)
            if weights.sum() == 0:
                weights[rng.integers(0, n)] = 1.0
        else:
            values = rng.standard_normal(n) * rng.uniform(0.5, 20.0)
            weights = rng.uniform(0.0, 1.0, n)
            weights[int(rng.integers(0, n))] += 1e-3
        got = weighted_median(values, weights)
        best, best_obj = None, None
        for cand in np.sort(np.unique(values)):
            obj = float(np.sum(weights * np.abs(values - cand)))
            if best_obj is None or obj < best_obj:
                best, best_obj = float(cand), obj
        if got != best:
            failures += 1
    _report(2, "weighted median equals exhaustive scan", failures == 0, f"{failures}/1000 mismatches")


def test_criterion_03_branch_selection_oracle():
    rng = np.random.default_rng(2)
    failures = 0
    for _ in range(200):
        n = int(rng.integers(10, 61))
        k = int(rng.integers(1, 5))
        d = int(rng.integers(1, 6))
        X = rng.standard_normal((n, d)) * rng.uniform(0.5, 3.0)
        T = rng.uniform(0.01, 1.0, (n, k))
        model = m_step_hglmm(X, T)
        for kk in range(k):
            for dd in range(d):
                lap = sum(
                    T[i, kk]
                    * (
                        -math.log(2.0 * model.s[kk, dd])
                        - abs(X[i, dd] - model.m[kk, dd]) / model.s[kk, dd]
                    )
                    for i in range(n)
                )
                gau = sum(
                    T[i, kk]
                    * (
                        -math.log(math.sqrt(2.0 * math.pi) * model.sigma[kk, dd])
                        - (X[i, dd] - model.mu[kk, dd]) ** 2
                        / (2.0 * model.sigma[kk, dd] ** 2)
                    )
                    for i in range(n)
                )
                want = 1.0 if lap > gau else 0.0
                if model.b[kk, dd] != want:
                    failures += 1
    _report(3, "hybrid branch choice matches per-dimension scores", failures == 0, f"{failures} cells off")


def test_criterion_04_reduction_consistency_bitwise():
    rng = np.random.default_rng(3)
    ok = True
    for _ in range(20):
        n = int(rng.integers(20, 80))
        k = int(rng.integers(1, 5))
        d = int(rng.integers(1, 6))
        X = rng.standard_normal((n, d))
        T = rng.uniform(0.01, 1.0, (n, k))
        gmm = m_step_gmm(X, T)
        lmm = m_step_lmm(X, T)
        hyb = m_step_hglmm(X, T)
        ok &= np.array_equal(hyb.tau, gmm.tau) and np.array_equal(hyb.tau, lmm.tau)
        ok &= np.array_equal(hyb.mu, gmm.mu) and np.array_equal(hyb.sigma, gmm.sigma)
        ok &= np.array_equal(hyb.m, lmm.m) and np.array_equal(hyb.s, lmm.s)

        as_g = HglmmModel(gmm.tau, gmm.mu, gmm.sigma, hyb.m, hyb.s, np.zeros((k, d)))
        as_l = HglmmModel(gmm.tau, gmm.mu, gmm.sigma, hyb.m, hyb.s, np.ones((k, d)))
        pure_l = LmmModel(gmm.tau, hyb.m, hyb.s)
        Tg, lg = e_step(X, gmm)
        Th, lh = e_step(X, as_g)
        ok &= np.array_equal(Tg, Th) and np.array_equal(lg, lh)
        Tl, ll = e_step(X, pure_l)
        Th, lh = e_step(X, as_l)
        ok &= np.array_equal(Tl, Th) and np.array_equal(ll, lh)

        ok &= np.array_equal(fv_raw(X, as_g), fv_raw(X, gmm))
        ok &= np.array_equal(fv_raw(X, as_l), fv_raw(X, pure_l))
        if not ok:
            break
    _report(4, "hybrid with uniform branches is bitwise the pure family", bool(ok))


def test_criterion_05_fisher_gradients_finite_difference():
    import dataclasses

    rng = np.random.default_rng(4)
    h = 1e-5
    worst = 0.0
    checked = 0
    from hglmm.mixtures import total_log_likelihood

    for family in ("gmm", "lmm", "hglmm"):
        for _ in range(20):
            model = _random_model(rng, family, 3, 4)
            X = rng.standard_normal((10, 4))
            v = fv_raw(X, model)
            for k in range(3):
                for d in range(4):
                    if family == "gmm":
                        loc_f, scale_f, lap = "mu", "sigma", False
                    elif family == "lmm":
                        loc_f, scale_f, lap = "m", "s", True
                    else:
                        lap = model.b[k, d] == 1.0
                        loc_f, scale_f = ("m", "s") if lap else ("mu", "sigma")
                    if lap and np.abs(X[:, d] - model.m[k, d]).min() < 1e-3:
                        continue  # step would straddle the kink
                    for field, idx in ((loc_f, 2 * (k * 4 + d)), (scale_f, 2 * (k * 4 + d) + 1)):
                        hi_a = getattr(model, field).copy()
                        hi_a[k, d] += h
                        lo_a = getattr(model, field).copy()
                        lo_a[k, d] -= h
                        hi = dataclasses.replace(model, **{field: hi_a})
                        lo = dataclasses.replace(model, **{field: lo_a})
                        fd = (total_log_likelihood(X, hi) - total_log_likelihood(X, lo)) / (2 * h)
                        scale = max(abs(fd), abs(v[idx]))
                        if scale > 1e-6:
                            worst = max(worst, abs(fd - v[idx]) / scale)
                        checked += 1
    ok = worst <= 1e-4 and checked > 1000
    _report(5, "gradients match finite differences", ok, f"worst rel err {worst:.2e}, {checked} coords")


def test_criterion_06_information_diagonal_closed_form():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(20):
        family = ("gmm", "lmm", "hglmm")[int(rng.integers(0, 3))]
        k = int(rng.integers(1, 6))
        d = int(rng.integers(1, 6))
        n_ref = int(rng.integers(1, 500))
        model = _random_model(rng, family, k, d)
        got = fim_diagonal(model, n_ref).values
        want = np.empty(2 * k * d)
        for kk in range(k):
            for dd in range(d):
                if family == "gmm" or (family == "hglmm" and model.b[kk, dd] == 0.0):
                    loc = n_ref * model.tau[kk] / model.sigma[kk, dd] ** 2
                    scl = 2.0 * n_ref * model.tau[kk] / model.sigma[kk, dd] ** 2
                else:
                    loc = n_ref * model.tau[kk] / model.s[kk, dd] ** 2
                    scl = loc
                want[2 * (kk * d + dd)] = loc
                want[2 * (kk * d + dd) + 1] = scl
        worst = max(worst, float(np.max(np.abs(got - want) / want)))
    _report(6, "information diagonal matches closed form", worst <= 1e-12, f"worst rel err {worst:.2e}")


def test_criterion_07_cca_against_eigen_oracle():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(20):
        Z = rng.standard_normal((200, 3))
        X = Z @ rng.standard_normal((3, 5)) + 0.4 * rng.standard_normal((200, 5))
        Y = Z @ rng.standard_normal((3, 5)) + 0.4 * rng.standard_normal((200, 5))
        model = cca_fit(X, Y)
        Xc = X - X.mean(0)
        Yc = Y - Y.mean(0)
        Cxx = Xc.T @ Xc / 199
        Cyy = Yc.T @ Yc / 199
        Cxy = Xc.T @ Yc / 199
        vals = scipy.linalg.eigh(
            Cxy @ np.linalg.solve(Cyy, Cxy.T), Cxx, eigvals_only=True
        )
        want = np.sqrt(np.clip(np.sort(vals)[::-1], 0.0, None))[: model.r]
        worst = max(worst, float(np.max(np.abs(model.correlations - want))))
    X = rng.standard_normal((100, 5))
    self_corr = cca_fit(X, X).correlations
    self_dev = float(np.max(np.abs(self_corr - 1.0)))
    ok = worst <= 1e-6 and self_dev <= 1e-8
    _report(7, "canonical correlations match eigen oracle", ok, f"max dev {worst:.2e}, self {self_dev:.2e}")


def test_criterion_08_ica_source_recovery():
    ok = True
    details = []
    for seed in (0, 1, 2):
        rng = np.random.default_rng(100 + seed)
        S = rng.uniform(-np.sqrt(3), np.sqrt(3), (4000, 2))
        A = rng.uniform(0.3, 1.5, (2, 2)) + np.eye(2)
        X = S @ A.T
        tr = ica_fit(X, 2, seed=seed)
        Z = apply_transform(tr, X)
        corr = np.abs(np.corrcoef(S.T, Z.T)[:2, 2:])
        best = max(min(corr[0, 0], corr[1, 1]), min(corr[0, 1], corr[1, 0]))
        details.append(f"{best:.3f}")
        ok &= best >= 0.95
    _report(8, "two uniform sources recovered", bool(ok), "matched |corr| " + ", ".join(details))


def test_criterion_09_ranking_metrics_oracle():
    rng = np.random.default_rng(7)
    ok = True
    for _ in range(100):
        nq = int(rng.integers(1, 15))
        nc = int(rng.integers(2, 25))
        S = np.round(rng.standard_normal((nq, nc)), 1)  # coarse values force ties
        truth_col = int(rng.integers(0, nc))
        truth = {str(i): {str(truth_col)} for i in range(nq)}
        results = rank(np.zeros((nq, 1)), np.zeros((nc, 1)), lambda *_: S, truth=truth)
        got = [r.rank_of_first_truth for r in results]
        want = []
        for row in S:
            order = sorted(range(nc), key=lambda j: (-row[j], j))
            want.append(order.index(truth_col) + 1)
        ok &= got == want
        m = metrics_from_ranks(got)
        r = np.asarray(got)
        ok &= m.recall_at[1] == float((r <= 1).mean())
        ok &= m.recall_at[5] == float((r <= 5).mean())
        ok &= m.recall_at[10] == float((r <= 10).mean())
        ok &= m.median_rank == float(np.sort(r)[(len(r) - 1) // 2])
        ok &= m.mean_rank == float(r.mean())
        ok &= m.recall_at[1] <= m.recall_at[5] <= m.recall_at[10]
        if not ok:
            break
    _report(9, "ranking and metrics match brute force", bool(ok))


def test_criterion_10_pipeline_beats_chance_every_seed():
    start = time.perf_counter()
    ok = True
    details = []
    for seed in range(5):
        fx = make_fixture(FixtureConfig(seed=seed))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            tr = ica_fit(fx.words["train"], fx.words["train"].shape[1], seed=seed)
        white = {s: apply_transform(tr, fx.words[s]) for s in ("train", "test")}
        model, _ = fit_em(white["train"], FitConfig(K=10, max_iters=12, seed=seed), "hglmm")
        config = EncodeConfig(alpha=0.5)
        fv = {s: encode_sets(white[s], fx.sets[s], model, config) for s in ("train", "test")}
        cca = cca_fit(fx.images_by_sentence["train"], fv["train"], CcaConfig(reg=0.1))
        from hglmm.cca import project

        px = project(cca, "x", fx.images["test"])
        py = project(cca, "y", fv["test"])
        scorer = make_scorer()
        ann = evaluate_annotation(
            px, fx.image_ids["test"], py, fx.sentence_ids["test"], fx.manifest, scorer
        )
        search = evaluate_search(
            py, fx.sentence_ids["test"], px, fx.image_ids["test"], fx.manifest, scorer
        )
        n_img = len(fx.image_ids["test"])
        n_sent = len(fx.sentence_ids["test"])
        ann_chance = 1.0 - math.comb(n_sent - 5, 10) / math.comb(n_sent, 10)
        search_chance = 10.0 / n_img
        ok &= ann.recall_at[10] > ann_chance
        ok &= search.recall_at[10] > search_chance
        details.append(f"seed{seed} ann {ann.recall_at[10]:.2f}>{ann_chance:.2f} srch {search.recall_at[10]:.2f}>{search_chance:.2f}")
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < 300.0
    _report(10, "pipeline beats chance on all seeds", bool(ok), f"{elapsed:.1f}s; " + "; ".join(details))


def test_criterion_11_cli_byte_determinism(tmp_path):
    corpus = tmp_path / "corpus"
    runs = {"a": tmp_path / "a", "b": tmp_path / "b"}
    assert main(["gen-fixture", "--out", str(corpus), "--seed", "0", "--images", "20", "--sentences-per-image", "3", "--latent-dim", "4", "--image-dim", "10", "--word-dim", "6"]) == 0

    def pipeline(out, threads):
        out.mkdir(exist_ok=True)
        t = ["--threads", str(threads)]
        files = {}
        steps = [
            (["whiten", "fit", "--kind", "ica", "--dim", "6", "--seed", "1",
              "--in", str(corpus / "words_train.fvm"), "--out", str(out / "ica.bin")], "ica.bin"),
            (["whiten", "apply", "--transform", str(out / "ica.bin"),
              "--in", str(corpus / "words_train.fvm"), "--out", str(out / "white_train.fvm")], "white_train.fvm"),
            (["whiten", "apply", "--transform", str(out / "ica.bin"),
              "--in", str(corpus / "words_test.fvm"), "--out", str(out / "white_test.fvm")], "white_test.fvm"),
            (["fit", "--family", "hglmm", "--k", "4", "--seed", "0", "--max-iters", "6",
              "--in", str(out / "white_train.fvm"), "--out", str(out / "model.bin"), *t], "model.bin"),
            (["encode", "--family", "hglmm", "--model", str(out / "model.bin"),
              "--in", str(out / "white_train.fvm"), "--sets", str(corpus / "sets_train.tsv"),
              "--out", str(out / "fv_train.fvm"), *t], "fv_train.fvm"),
            (["encode", "--family", "hglmm", "--model", str(out / "model.bin"),
              "--in", str(out / "white_test.fvm"), "--sets", str(corpus / "sets_test.tsv"),
              "--out", str(out / "fv_test.fvm"), *t], "fv_test.fvm"),
            (["cca", "fit", "--x", str(corpus / "images_by_sentence_train.fvm"),
              "--y", str(out / "fv_train.fvm"), "--reg", "0.05", "--out", str(out / "cca.bin")], "cca.bin"),
            (["cca", "project", "--model", str(out / "cca.bin"), "--side", "x",
              "--in", str(corpus / "images_test.fvm"), "--out", str(out / "px.fvm")], "px.fvm"),
            (["eval", "--task", "all",
              "--images", str(corpus / "images_test.fvm"),
              "--image-ids", str(corpus / "image_ids_test.txt"),
              "--sentences", str(out / "fv_test.fvm"),
              "--sentence-ids", str(corpus / "sentence_ids_test.txt"),
              "--manifest", str(corpus / "manifest.tsv"),
              "--cca-model", str(out / "cca.bin"),
              "--out", str(out / "metrics.tsv")], "metrics.tsv"),
        ]
        for argv, name in steps:
            assert main(argv) == 0, name
            files[name] = (out / name).read_bytes()
        for extra in ("metrics_table.txt", "metrics_recall.png", "metrics_ranks.png"):
            files[extra] = (out / extra).read_bytes()
        return files

    first = pipeline(runs["a"], threads=1)
    second = pipeline(runs["b"], threads=8)
    same = {name for name in first if first[name] == second[name]}
    ok = same == set(first)
    _report(11, "CLI outputs byte-identical across reruns and thread counts", ok,
            f"{len(same)}/{len(first)} files identical")
