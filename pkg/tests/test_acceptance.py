"""Acceptance criteria: each test prints one PASS/FAIL line and asserts it."""

from __future__ import annotations

import math

import numpy as np
import pytest
from _oracles import brute_force_metrics, logistic_loss, max_gradient_error, random_instance

from memgate import policy as pc
from memgate.baselines import PolicyKind
from memgate.bench import harness as h
from memgate.bench import report
from memgate.bench.generate import GeneratorConfig, generate_artifacts, load_dataset
from memgate.features import FEATURE_NAMES, StateVector, candidate_distribution, entropy
from memgate.policy import ACTIONS, InvalidConfig, Knobs, Outcome, PolicyState, RewardConfig, compute_reward
from memgate.retrieval import Candidate


@pytest.fixture
def verdict(capsys):
    def emit(name: str, ok: bool, detail: str = "") -> None:
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'}: {name}" + (f" ({detail})" if detail else ""))
        assert ok, detail

    return emit


def test_reward_arithmetic(verdict):
    expected = {"verified": 2.0, "accepted": 1.0, "correct_abstain": 0.5, "false_positive": -4.0, "rejected": -1.0}
    got = {label: compute_reward(Outcome.from_label(label)) for label in expected}
    fp = compute_reward(Outcome(false_positive=True, latency_ms=10, token_cost=100))
    verdict("reward arithmetic", got == expected and fp == -5.01, f"flags={got}, fp(L=10,T=100)={fp!r}")


def test_reward_ordering_enforced(verdict):
    rng = np.random.default_rng(9)
    # half the tuples come from a coarse grid so exact ties are exercised
    grid = rng.choice(np.arange(0.0, 5.5, 0.5), size=(500, 3))
    tuples = np.vstack([grid, rng.uniform(-1.0, 6.0, size=(500, 3))])
    wrong = accepted = 0
    for a, b, g in tuples:
        try:
            RewardConfig(alpha=float(a), beta=float(b), gamma=float(g))
            ok = g > a > b
            accepted += 1
        except InvalidConfig:
            ok = not (g > a > b)
        wrong += not ok
    verdict("reward ordering gamma > alpha > beta enforced", wrong == 0, f"{accepted} accepted, {len(tuples) - accepted} rejected, {wrong} wrong")


def test_abstain_boundary_identity(verdict):
    rng = np.random.default_rng(10)
    cfg = RewardConfig()
    mismatches = 0
    for p in rng.uniform(0, 1, size=(10_000, 5)):
        p_v, p_a, p_f, p_r, p_c = (float(v) for v in p)
        _, _, dominates = pc.expected_rewards(p_v, p_a, p_f, p_r, p_c, cfg)
        side = (cfg.gamma * p_f + cfg.delta * p_r + cfg.kappa * p_c) - (cfg.alpha * p_v + cfg.beta * p_a)
        mismatches += dominates != (side > 0)
    verdict("abstain-dominates boundary identity", mismatches == 0, f"{mismatches} mismatches / 10000")


def _random_theta(rng, steps: int) -> PolicyState:
    theta = PolicyState()
    labels = ("verified", "accepted", "correct_abstain", "false_positive", "rejected", "none")
    for _ in range(steps):
        a = ACTIONS[int(rng.integers(len(ACTIONS)))]
        o = Outcome.from_label(labels[int(rng.integers(len(labels)))], float(rng.uniform(0, 60)), float(rng.uniform(0, 300)))
        z = StateVector.from_array(rng.uniform(0, 1, len(FEATURE_NAMES)))
        pc.update(theta, a, z, compute_reward(o), o, session_id=f"s{int(rng.integers(3))}")
    return theta


def test_lagrangian_offset_invariance(verdict):
    rng = np.random.default_rng(11)
    knobs = Knobs()
    changed = 0
    for _ in range(1000):
        theta = _random_theta(rng, int(rng.integers(0, 15)))
        z = StateVector.from_array(rng.uniform(0, 1, len(FEATURE_NAMES)))
        n = int(rng.integers(0, 5))
        cands = [Candidate(f"p{i}", f"p{i}-v", float(rng.uniform()), {}) for i in range(n)]
        offset = knobs.mu * float(rng.uniform(0, 0.5)) + knobs.lambda_c * float(rng.uniform(0, 5))
        base = pc.decide(z, cands, theta, knobs)
        shifted = pc.decide(z, cands, theta, knobs, lagrangian_offset=offset)
        changed += base.chosen is not shifted.chosen
    verdict("constant penalty shift leaves argmax unchanged", changed == 0, f"{changed} changes / 1000")


def test_entropy_and_margin_math(verdict):
    worst = max(abs(entropy([1.0 / k] * k) - math.log(k)) for k in range(1, 11))
    h31 = entropy(candidate_distribution([3.0, 1.0], 1e-6))
    ok = worst <= 1e-12 and abs(h31 - 0.5623) <= 1e-4
    verdict("entropy math", ok, f"max |H(uniform k) - ln k| = {worst:.2e}, H(3,1) = {h31:.6f}")


def test_hard_negative_safety(verdict, dataset):
    rows = []
    ok = True
    for seed in dataset.replay_seeds:
        run = {k: h.run_hard_negative(k, dataset.hard_negatives, dataset.bank, seed) for k in PolicyKind}
        for k in (PolicyKind.FULL_RSCB_MC, PolicyKind.RISK_SENSITIVE_THOMPSON):
            ok &= run[k].false_positive_rate == 0.0 and run[k].correct_abstention_rate == 1.0
        ok &= run[PolicyKind.STATIC_HYBRID].unsafe_injection_rate == 1.0
        ok &= run[PolicyKind.ORACLE_UPPER_BOUND].false_positive_rate == 0.0
        ok &= all(m.n_cases == 32 for m in run.values())
        rows.append(
            f"seed {seed}: full fp={run[PolicyKind.FULL_RSCB_MC].false_positive_rate:.3f}, "
            f"rs-ts fp={run[PolicyKind.RISK_SENSITIVE_THOMPSON].false_positive_rate:.3f}, "
            f"static unsafe={run[PolicyKind.STATIC_HYBRID].unsafe_injection_rate:.3f}"
        )
    verdict("hard-negative safety orderings", ok, "; ".join(rows))


def test_ablation_ordering(verdict, dataset):
    seeds = list(dataset.replay_seeds)
    res = {v: h.run_ablation(v, dataset, seeds).replay for v in h.ABLATION_VARIANTS}
    ok = True
    details = []
    for s in seeds:
        full, minus = res["full"][s], res["minus_abstention"][s]
        ok &= minus.fp_rate > full.fp_rate and minus.cumulative_reward < full.cumulative_reward
        best = max(h.ABLATION_VARIANTS, key=lambda v: res[v][s].cumulative_reward)
        ok &= all(res["oracle"][s].cumulative_reward > res[v][s].cumulative_reward for v in h.ABLATION_VARIANTS if v != "oracle")
        details.append(f"seed {s}: fp {minus.fp_rate:.3f}>{full.fp_rate:.3f}, cum {minus.cumulative_reward:.2f}<{full.cumulative_reward:.2f}, best={best}")
    verdict("ablation ordering", ok, "; ".join(details))


def test_replay_ordering(verdict, dataset):
    full = h.run_replay(PolicyKind.FULL_RSCB_MC, dataset)
    static = h.run_replay(PolicyKind.STATIC_HYBRID, dataset)
    ok = True
    details = []
    for key in list(dataset.replay_seeds) + ["pooled"]:
        f, s = full[key], static[key]
        ok &= f.success_rate > s.success_rate and f.fp_rate == 0.0 and s.fp_rate > 0.0
        details.append(f"{key}: success {f.success_rate:.3f}>{s.success_rate:.3f}, fp {f.fp_rate:.3f} vs {s.fp_rate:.3f}")
    verdict("replay ordering full vs static hybrid", ok, "; ".join(details))


def test_canonical_saturation_and_paraphrase_drop(verdict, dataset):
    r1 = {m.value: h.eval_retrieval(m, dataset.queries, dataset.bank).recall_at_1 for m in h.RetrievalMethod}
    lex = h.eval_retrieval(h.RetrievalMethod.LEXICAL_ONLY, dataset.paraphrases, dataset.bank).recall_at_1
    ok = len(dataset.queries) == 24 and all(v == 1.0 for v in r1.values()) and lex < 1.0
    verdict("canonical saturation and lexical paraphrase drop", ok, f"canonical R@1={r1}, lexical paraphrase R@1={lex:.4f}")


def test_retrieval_metric_oracle(verdict):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        bank, queries = random_instance(rng)
        m = h.eval_retrieval(h.RetrievalMethod.STATIC_HYBRID, queries, bank)
        ref = brute_force_metrics(bank, queries)
        worst = max(worst, *(abs(a - b) for a, b in zip((m.recall_at_1, m.recall_at_3, m.mrr, m.ndcg_at_3), ref)))
    verdict("retrieval metrics match brute force", worst <= 1e-9, f"max abs error {worst:.2e} over 100 instances")


def test_hot_path_latency(verdict, dataset):
    stats = h.run_hotpath([PolicyKind.FULL_RSCB_MC, PolicyKind.LINUCB], dataset, n_per_method=200)
    full, lin = stats["full_rscb_mc"], stats["linucb"]
    ok = full.n_decisions == 200 and full.p95_us < 1000.0 and lin.p95_us > full.p95_us
    verdict("hot-path latency", ok, f"full p95={full.p95_us:.1f}us, linucb p95={lin.p95_us:.1f}us")


def test_end_to_end_determinism(verdict, tmp_path):
    outputs = []
    for run in ("a", "b"):
        data = generate_artifacts(GeneratorConfig(), tmp_path / run / "data")
        bench = report.run_bench(load_dataset(data), list(report.SUITES), tmp_path / run / "bench")
        outputs.append({p.relative_to(tmp_path / run): p.read_bytes() for p in (tmp_path / run).rglob("*") if p.is_file()})
    a, b = outputs
    timing = {p for p in a if p.name in report.TIMING_FILES}
    differing = sorted(str(p) for p in set(a) | set(b) if p not in timing and a.get(p) != b.get(p))
    verdict("end-to-end determinism", not differing and len(a) == len(b), f"{len(a) - len(timing)} files compared, differing={differing}")


def test_gradient_check(verdict):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        w, x = rng.normal(0, 0.5, len(FEATURE_NAMES)), rng.uniform(0, 1, len(FEATURE_NAMES))
        b = float(rng.normal())
        worst = max(
            worst,
            max_gradient_error(pc.squared_loss, pc.squared_loss_grad, w, b, x, float(rng.uniform(-1, 1))),
            max_gradient_error(pc.squared_loss, pc.squared_loss_grad, w, b, x, float(rng.integers(2))),
            max_gradient_error(logistic_loss, pc.logistic_loss_grad, w, b, x, float(rng.integers(2))),
        )
    verdict("analytic gradients match finite differences", worst <= 1e-5, f"max relative error {worst:.2e}")
