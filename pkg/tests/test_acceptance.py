"""Acceptance suite: one test per criterion, printing a pass/fail line each.

The heavy artifacts (the 2,000-document corpus and the uniform/full_fpo
training runs over three seeds) are session fixtures shared between
criteria. Expected values marked as derived in the module are computed by
independent oracles (memoized recursion, brute-force scans) inside the
tests, never copied from the implementation under test.
"""

import itertools
import time
from dataclasses import replace
from functools import lru_cache

import numpy as np
import pytest

from focalorder.autodiff import grad_check
from focalorder.corpus import GeneratorConfig, generate_corpus
from focalorder.fpo import (
    DifficultyState,
    FpoConfig,
    advantage,
    build_step,
    difficulty_weights,
    ema_update,
    training_step,
)
from focalorder.layout import ReadingOrder
from focalorder.metrics import (
    OpKind,
    align_backtrace,
    disparity_summary,
    levenshtein,
    positional_error_profile,
    spatial_logical_mismatch,
)
from focalorder.model import ModelConfig, init_params, score_sequence
from focalorder.training import TrainConfig, evaluate, train

CRIT7_GEN = GeneratorConfig(
    n_docs=2000, elements_min=20, elements_max=40, ambiguity=0.6, seed=42
)
DESK = dict(epochs=20, batch_size=16, base_lr=1e-2)
SEEDS = (0, 1, 2)


def report(num: int, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE CRITERION {num:2d}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


@pytest.fixture(scope="session")
def corpus7():
    return generate_corpus(CRIT7_GEN)


@pytest.fixture(scope="session")
def trained_runs(corpus7):
    """Uniform and full_fpo runs over three seeds on the criterion-7 corpus."""
    runs = {}
    for mode in ("uniform", "full_fpo"):
        for seed in SEEDS:
            cfg = TrainConfig(mode=mode, seed=seed, **DESK)
            t0 = time.time()
            result = train(cfg, corpus7)
            elapsed = time.time() - t0
            ev = evaluate(result.checkpoint, corpus7, K=10)
            runs[(mode, seed)] = (result, ev, elapsed)
    return runs


def test_criterion_1_formula_exactness():
    state = DifficultyState(K=4)
    state.ema[:] = [4.0, 0.0, 0.0, 0.0]
    state.observed[:] = True
    weights_ok = difficulty_weights(state).tolist() == [1.8, 0.2, 0.2, 0.2]

    st = DifficultyState(K=1)
    st.ema[0] = 0.5
    st.observed[0] = True
    updated = ema_update(st, np.array([1.5]), np.array([1]))
    ema_ok = abs(updated.ema[0] - 0.51) <= 1e-15

    adv_ok = abs(advantage(0.8, 2.0, 0.05) - 0.9) <= 1e-15
    report(
        1,
        weights_ok and ema_ok and adv_ok,
        f"weights exact={weights_ok}, ema 0.51 exact={ema_ok}, advantage 0.9 exact={adv_ok}",
    )


def test_criterion_2_reduction_identity():
    max_gap = 0.0
    for seed in range(3):
        batch = generate_corpus(
            GeneratorConfig(
                n_docs=6, elements_min=6, elements_max=12, ambiguity=0.5, seed=100 + seed
            )
        )
        params = init_params(ModelConfig(hidden_dim=12), seed=seed)
        cfg = FpoConfig(weighting="uniform", lambda_rank=0.0)
        result = training_step(batch, params, DifficultyState(K=cfg.n_slots), cfg, seed=seed)
        # oracle: plain token-mean cross-entropy, recomputed independently
        from focalorder.autodiff import Tape

        losses = []
        for doc in batch:
            sc = score_sequence(doc, ReadingOrder(doc.gt_order), params, Tape())
            losses.extend((-sc.step_logprob_values).tolist())
        max_gap = max(max_gap, abs(result.total - float(np.mean(losses))))

    corpus = generate_corpus(
        GeneratorConfig(n_docs=12, elements_min=6, elements_max=10, ambiguity=0.5, seed=50)
    )
    small = dict(epochs=3, batch_size=4, base_lr=1e-2, model=ModelConfig(hidden_dim=12))
    standard = train(TrainConfig(mode="standard_po", seed=0, **small), corpus)
    weights_all_one = all(np.all(w == 1.0) for _, _, w in standard.weight_history)
    ema_only = train(TrainConfig(mode="ema_only", seed=0, **small), corpus)
    rank_all_zero = all(row.rank_loss == 0.0 for row in ema_only.log)

    ok = max_gap <= 1e-12 and weights_all_one and rank_all_zero
    report(
        2,
        ok,
        f"uniform vs plain CE gap {max_gap:.2e} (tol 1e-12), standard_po weights==1: "
        f"{weights_all_one}, ema_only rank==0: {rank_all_zero}",
    )


def oracle_levenshtein(a, b):
    @lru_cache(maxsize=None)
    def rec(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        cost = 0 if a[i - 1] == b[j - 1] else 1
        return min(rec(i - 1, j) + 1, rec(i, j - 1) + 1, rec(i - 1, j - 1) + cost)

    return rec(len(a), len(b))


def test_criterion_3_levenshtein_oracle_equivalence():
    t0 = time.time()
    seqs = [seq for n in range(6) for seq in itertools.product((0, 1, 2), repeat=n)]
    mismatches = 0
    for a in seqs:
        for b in seqs:
            if levenshtein(a, b) != oracle_levenshtein(a, b):
                mismatches += 1
    elapsed = time.time() - t0
    ok = mismatches == 0 and elapsed < 10.0
    report(
        3,
        ok,
        f"{len(seqs) ** 2} ordered pairs, {mismatches} mismatches, {elapsed:.1f}s (< 10s)",
    )


def test_criterion_4_alignment_conservation():
    rng = np.random.default_rng(4)
    cost_bad = profile_bad = 0
    for _ in range(1000):
        pred = rng.integers(0, 8, size=rng.integers(0, 13)).tolist()
        gt = rng.integers(0, 8, size=rng.integers(0, 13)).tolist()
        ops = align_backtrace(pred, gt)
        cost = sum(1 for op in ops if op.kind is not OpKind.MATCH)
        if cost != levenshtein(pred, gt):
            cost_bad += 1
        prof = positional_error_profile([(pred, gt)], K=10)
        if prof.error_count.sum() != cost or prof.token_count.sum() != len(gt):
            profile_bad += 1
    ok = cost_bad == 0 and profile_bad == 0
    report(4, ok, f"1000 random pairs: {cost_bad} cost mismatches, {profile_bad} profile mismatches")


def test_criterion_5_gradient_fidelity():
    t0 = time.time()
    batch = generate_corpus(
        GeneratorConfig(n_docs=2, elements_min=5, elements_max=5, ambiguity=0.5, seed=3)
    )
    params = init_params(ModelConfig(hidden_dim=5), seed=7)
    cfg = FpoConfig()  # full_fpo stack: ema_bins weighting plus ranking
    state = DifficultyState(K=10)
    state.observed[:] = True
    state.ema[:] = 1e9
    state.ema[[2, 4, 6, 8, 9]] = 1e-9
    # the touched bins sit far below the observed mean, so their weights are
    # pinned at the clip boundary and the bookkeeping is locally constant;
    # the finite-difference probe then sees the same function the tape does

    def f(_):
        tape, node, _res = build_step(batch, params, state, cfg, seed=11)
        return tape, node

    _, _, probe = build_step(batch, params, state, cfg, seed=11)
    err = grad_check(f, params.all(), step=1e-5)
    elapsed = time.time() - t0
    ok = err < 1e-4 and elapsed < 60.0
    report(
        5,
        ok,
        f"max rel err {err:.2e} (tol 1e-4), ranking pairs used {probe.pairs_used}, "
        f"{elapsed:.1f}s (< 60s)",
    )


def test_criterion_6_ema_convergence():
    c = 2.0
    state = DifficultyState(K=1)
    state.ema[0] = 0.5
    state.observed[0] = True
    start_gap = abs(state.ema[0] - c)
    hit = None
    for it in range(1, 2001):
        state = ema_update(state, np.array([c]), np.array([1]))
        bound = start_gap * 0.99**it
        assert abs(state.ema[0] - c) <= bound + 1e-12  # geometric-decay bound
        if hit is None and abs(state.ema[0] - c) < 1e-6:
            hit = it
    ok = hit is not None and hit <= 2000
    report(6, ok, f"|ema - {c}| < 1e-6 after {hit} iterations (<= 2000), bound held throughout")


def test_criterion_7_mismatch_precondition(corpus7):
    positions = []
    for doc in corpus7:
        positions.extend(spatial_logical_mismatch(doc).positions)
    positions = np.array(positions)
    inside = float(((positions >= 0.2) & (positions <= 0.8)).mean())
    ok = len(positions) > 0 and inside > 0.9
    report(
        7,
        ok,
        f"{len(positions)} mismatches over 2000 docs, {inside:.1%} inside [0.2, 0.8] (> 90%)",
    )


def test_criterion_8_disparity_flattening(trained_runs):
    middles = {"uniform": [], "full_fpo": []}
    runtimes = []
    for (mode, seed), (_res, ev, elapsed) in trained_runs.items():
        middles[mode].append(disparity_summary(ev.profile)["middle_mean"])
        runtimes.append(elapsed)
    uni = float(np.mean(middles["uniform"]))
    fpo = float(np.mean(middles["full_fpo"]))
    rel_improvement = (uni - fpo) / uni if uni > 0 else 0.0
    within_budget = max(runtimes) < 1800.0
    ok = rel_improvement >= 0.20 and within_budget
    report(
        8,
        ok,
        f"middle-region error uniform {uni:.4f} vs full_fpo {fpo:.4f}: "
        f"{rel_improvement:.1%} relative improvement (>= 20%), "
        f"slowest run {max(runtimes):.0f}s (< 1800s)",
    )


def test_criterion_9_weight_profile(trained_runs):
    ok_all = True
    details = []
    for seed in SEEDS:
        result, _ev, _ = trained_runs[("full_fpo", seed)]
        _, _, weights = result.weight_history[-1]
        mid = float(np.mean(weights[3:8]))
        boundary = float(np.mean(weights[[0, 1, 8, 9]]))
        in_range = bool(np.all(weights >= 0.2) and np.all(weights <= 1.8))
        ok_all = ok_all and mid > boundary and in_range
        details.append(f"seed {seed}: mid {mid:.2f} > boundary {boundary:.2f}, in range {in_range}")
    report(9, ok_all, "; ".join(details))


@pytest.fixture(scope="session")
def sweep_corpus():
    return generate_corpus(
        GeneratorConfig(n_docs=600, elements_min=20, elements_max=40, ambiguity=0.6, seed=42)
    )


def test_criterion_10_sensitivity_harness(sweep_corpus, tmp_path_factory):
    from focalorder.training import sensitivity_harness, write_sweep_csv

    out_dir = tmp_path_factory.mktemp("sweeps")
    cfg = TrainConfig(mode="full_fpo", epochs=8, batch_size=16, base_lr=1e-2, seed=0)

    k_rows = sensitivity_harness(cfg, sweep_corpus, "K", [1, 5, 10, 20, 50], seeds=SEEDS)
    write_sweep_csv(k_rows, str(out_dir / "sweep_k.csv"))
    beta_rows = sensitivity_harness(cfg, sweep_corpus, "beta", [0.0, 0.01, 0.05, 0.1, 0.2])
    write_sweep_csv(beta_rows, str(out_dir / "sweep_beta.csv"))

    by_k = {}
    for row in k_rows:
        by_k.setdefault(row["value"], []).append(row["mean_edit"])
    means = {k: float(np.mean(v)) for k, v in by_k.items()}
    best_k_gt1 = min(v for k, v in means.items() if k > 1)
    soft_ok = means[1] >= best_k_gt1
    complete = len(k_rows) == 15 and len(beta_rows) == 5
    ok = complete and soft_ok
    report(
        10,
        ok,
        f"K sweep mean edits {{K: edit}} = "
        f"{ {int(k): round(v, 4) for k, v in sorted(means.items())} }; "
        f"K=1 ({means[1]:.4f}) not better than best K>1 ({best_k_gt1:.4f}): {soft_ok}; "
        f"CSVs complete: {complete}",
    )


def test_criterion_11_cli_determinism(tmp_path):
    from focalorder.cli import run

    def pipeline(tag):
        corpus = tmp_path / f"corpus_{tag}.jsonl"
        ckpt = tmp_path / f"model_{tag}.ckpt"
        rep = tmp_path / f"report_{tag}.csv"
        assert run([
            "gen", "--out", str(corpus), "--docs", "40", "--seed", "7",
            "--ambiguity", "0.6", "--elements-min", "8", "--elements-max", "14",
        ]) == 0
        assert run([
            "train", "--data", str(corpus), "--mode", "full_fpo", "--out", str(ckpt),
            "--epochs", "2", "--batch", "8", "--hidden", "16", "--seed", "7",
        ]) == 0
        assert run([
            "eval", "--ckpt", str(ckpt), "--data", str(corpus), "--report", str(rep),
        ]) == 0
        return corpus.read_bytes(), ckpt.read_bytes(), rep.read_bytes()

    first = pipeline("a")
    second = pipeline("b")
    same = [a == b for a, b in zip(first, second)]
    ok = all(same)
    report(11, ok, f"corpus identical: {same[0]}, checkpoint identical: {same[1]}, report identical: {same[2]}")
