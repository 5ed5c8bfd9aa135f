"""Release gates for the simulation library.

Each test asserts one acceptance criterion end to end at its stated
tolerance and emits a single PASS line on success; `pytest -v` therefore
reports one verdict per criterion. The shared fixtures run the four named
benchmark problems at 50 replications and a fixed budget of 2000 plays'
worth of top-fidelity cost, keeping every episode so the deterministic
invariants can be re-checked from raw counts rather than trusted from the
engine's own internal checker.
"""

from __future__ import annotations

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from mfbandit.analysis import partition_arms
from mfbandit.cli import main
from mfbandit.model import (
    Bernoulli,
    FidelityLadder,
    Gaussian,
    ProblemInstance,
    default_concentration,
    gamma,
)
from mfbandit.policies import play_cap
from mfbandit.presets import PRESETS, default_capital, preset
from mfbandit.simulator import (
    generate_instance,
    resolve_parallelism,
    run_batch,
    run_episode,
)

BASE_SEED = 20260819
REPLICATIONS = 50
PRESET_NAMES = ("paper-1", "paper-2", "paper-3", "paper-4")


def _pass(criterion: int, detail: str) -> None:
    print(f"PASS criterion {criterion}: {detail}")


@pytest.fixture(scope="module")
def preset_batches():
    """All four benchmark problems, 50 replications each, episodes kept."""
    batches = {}
    t0 = time.perf_counter()
    for name in PRESET_NAMES:
        spec = preset(name)
        batches[name] = run_batch(
            spec,
            capital=default_capital(spec),
            replications=REPLICATIONS,
            base_seed=BASE_SEED,
            parallelism=resolve_parallelism("auto"),
            keep_episodes=True,
        )
    elapsed = time.perf_counter() - t0
    return batches, elapsed


@pytest.fixture(scope="module")
def paper1_fixed():
    """One fixed instance drawn from the paper-1 generator, run 50 times."""
    instance = generate_instance(preset("paper-1"), rng=777)
    batch = run_batch(
        instance,
        capital=default_capital(preset("paper-1")),
        replications=REPLICATIONS,
        base_seed=BASE_SEED,
        parallelism=resolve_parallelism("auto"),
        keep_episodes=True,
    )
    return instance, batch


@pytest.fixture(scope="module")
def recorded_episodes():
    """Full play logs on a fixed paper-3 instance for replay checks."""
    instance = generate_instance(preset("paper-3"), rng=123)
    capital = default_capital(preset("paper-3"))
    episodes = [
        run_episode(instance, policy, capital, seed=seed, record_plays=True)
        for policy in ("mfucb", "ucb")
        for seed in (5, 6, 7)
    ]
    return instance, capital, episodes


def _all_episode_groups(preset_batches, paper1_fixed, recorded_episodes):
    """Yield (ladder, family, capital, policy, episode) over every episode."""
    batches, _ = preset_batches
    for name, batch in batches.items():
        spec = preset(name)
        for policy, eps in batch.episodes.items():
            for ep in eps:
                yield spec.ladder, spec.family, batch.capital, policy, ep
    instance, batch = paper1_fixed
    for policy, eps in batch.episodes.items():
        for ep in eps:
            yield instance.ladder, instance.family, batch.capital, policy, ep
    instance, capital, episodes = recorded_episodes
    for ep in episodes:
        yield instance.ladder, instance.family, capital, ep.policy, ep


def test_criterion_1_preset_regret_dominance(preset_batches):
    """Mean regret and its log-budget slope beat the single-fidelity baseline."""
    batches, elapsed = preset_batches
    ratios = {}
    for name in PRESET_NAMES:
        batch = batches[name]
        ck = batch.checkpoints
        half = ck.size // 2
        mf = batch.per_policy["mfucb"].mean_regret
        ucb = batch.per_policy["ucb"].mean_regret
        assert mf[-1] < ucb[-1], f"{name}: final mean regret not improved"
        slope_mf = np.polyfit(np.log(ck[half:]), mf[half:], 1)[0]
        slope_ucb = np.polyfit(np.log(ck[half:]), ucb[half:], 1)[0]
        assert slope_mf < slope_ucb, f"{name}: upper-half slope not improved"
        ratios[name] = mf[-1] / ucb[-1]
    assert ratios["paper-1"] <= 0.9
    assert ratios["paper-4"] <= 0.9
    assert elapsed < 600.0, f"preset suite took {elapsed:.1f}s"
    worst = max(ratios, key=ratios.get)
    _pass(
        1,
        f"all four presets improved; worst final-regret ratio "
        f"{ratios[worst]:.3f} ({worst}); suite ran in {elapsed:.1f}s",
    )


def test_criterion_2_deterministic_play_cap(
    preset_batches, paper1_fixed, recorded_episodes
):
    """No arm exceeds floor(rho log N / psi(gamma(m))) + 1 plays below the top."""
    checked = 0
    for ladder, family, _, _, ep in _all_episode_groups(
        preset_batches, paper1_fixed, recorded_episodes
    ):
        model = default_concentration(family)
        for m in range(1, ladder.M):
            cap = play_cap(model, ladder, 2.0, ep.N, m)
            worst = int(ep.counts[:, m - 1].max())
            assert worst <= cap, (
                f"{ep.policy} episode: fidelity {m} played {worst} > cap {cap}"
            )
        checked += 1
    _pass(2, f"play caps held exactly on {checked} episodes")


def test_criterion_3_regret_identity_and_replay(
    preset_batches, paper1_fixed, recorded_episodes
):
    """R = rtilde + Rtilde at 1e-9, re-derived independently from play logs."""
    episodes = 0
    for _, _, _, _, ep in _all_episode_groups(
        preset_batches, paper1_fixed, recorded_episodes
    ):
        gap = np.abs(ep.regret - (ep.rtilde + ep.Rtilde))
        tol = 1e-9 * np.maximum(1.0, np.abs(ep.regret))
        assert np.all(gap <= tol)
        episodes += 1

    instance, _, recorded = recorded_episodes
    costs = np.asarray(instance.ladder.costs)
    for ep in recorded:
        play_costs = costs[ep.plays_fidelity - 1]
        q = instance.mu_top[ep.plays_arm - 1]
        cum_cost = np.concatenate([[0.0], np.cumsum(play_costs)])
        cum_q = np.concatenate([[0.0], np.cumsum(play_costs * q)])
        for j, lam in enumerate(ep.checkpoints):
            n = int(np.searchsorted(cum_cost, lam, side="right")) - 1
            r = lam * instance.mu_star - cum_q[n]
            rt = (lam - cum_cost[n]) * instance.mu_star
            Rt = cum_cost[n] * instance.mu_star - cum_q[n]
            assert ep.checkpoint_plays[j] == n
            assert abs(ep.regret[j] - r) <= 1e-9 * max(1.0, abs(r))
            assert abs(ep.rtilde[j] - rt) <= 1e-9 * max(1.0, abs(rt))
            assert abs(ep.Rtilde[j] - Rt) <= 1e-9 * max(1.0, abs(Rt))
    _pass(
        3,
        f"identity held at every checkpoint of {episodes} episodes; "
        f"{len(recorded)} full replays matched",
    )


def test_criterion_4_single_fidelity_reduction():
    """With M = 1 the multi-fidelity policy is the classical one, play for play."""
    rng = np.random.default_rng(41)
    for i in range(100):
        K = int(rng.integers(2, 21))
        cost = float(rng.uniform(0.5, 4.0))
        if i % 2 == 0:
            family = Bernoulli()
            means = rng.uniform(0.05, 0.95, size=(K, 1))
        else:
            family = Gaussian(sigma=float(rng.uniform(0.1, 0.6)))
            means = rng.uniform(0.0, 1.0, size=(K, 1))
        instance = ProblemInstance(
            ladder=FidelityLadder(zetas=(0.0,), costs=(cost,)),
            means=means,
            family=family,
        )
        capital = float(cost * rng.integers(50, 150) * 1.0031)
        a = run_episode(instance, "mfucb", capital, seed=1000 + i, record_plays=True)
        b = run_episode(instance, "ucb", capital, seed=1000 + i, record_plays=True)
        assert a.N == b.N
        np.testing.assert_array_equal(a.plays_arm, b.plays_arm)
        np.testing.assert_array_equal(a.plays_fidelity, b.plays_fidelity)
        np.testing.assert_array_equal(a.plays_reward, b.plays_reward)
        np.testing.assert_array_equal(a.regret, b.regret)
        assert a.spent == b.spent
    _pass(4, "100 single-fidelity episodes gave identical decision traces")


def test_criterion_5_partition_oracle_equivalence():
    """partition_arms agrees with a raw set-builder oracle on 1000 instances."""
    rng = np.random.default_rng(53)
    for _ in range(1000):
        K = int(rng.integers(2, 11))
        M = int(rng.integers(1, 5))
        z = np.sort(rng.uniform(0.02, 0.4, size=M - 1))[::-1]
        ladder = FidelityLadder(
            zetas=tuple(float(x) for x in z) + (0.0,),
            costs=tuple(np.cumsum(rng.uniform(0.5, 4.0, size=M))),
        )
        mu_top = rng.uniform(0.0, 1.0, size=K)
        means = np.empty((K, M))
        means[:, M - 1] = mu_top
        for m in range(M - 1):
            lo = np.clip(mu_top - ladder.zetas[m], 0.0, 1.0)
            hi = np.clip(mu_top + ladder.zetas[m], 0.0, 1.0)
            means[:, m] = rng.uniform(lo, hi)
        instance = ProblemInstance(ladder=ladder, means=means, family=Bernoulli())

        model = default_concentration(instance.family)
        g = [gamma(ladder, model, m) for m in range(1, M)]
        mu_star = float(means[:, M - 1].max())
        optimal = {k for k in range(1, K + 1) if means[k - 1, M - 1] == mu_star}

        def d(k, m):
            return mu_star - means[k - 1, m - 1] - ladder.zetas[m - 1]

        sets = {}
        for m in range(1, M):
            sets[m] = {
                k
                for k in range(1, K + 1)
                if k not in optimal
                and d(k, m) > 2.0 * g[m - 1]
                and all(d(k, ell) <= 2.0 * g[ell - 1] for ell in range(1, m))
            }
        sets[M] = {
            k
            for k in range(1, K + 1)
            if k not in optimal
            and all(d(k, ell) <= 2.0 * g[ell - 1] for ell in range(1, M))
        }
        one = {
            m: {k for k in sets[m] if all(d(k, ell) <= 0.0 for ell in range(1, m))}
            for m in sets
        }
        two = {m: sets[m] - one[m] for m in sets}
        cand = {
            (m, k): tuple([ell for ell in range(1, m) if d(k, ell) > 0.0] + [m])
            for m in sets
            for k in two[m]
        }

        part = partition_arms(instance)
        assert set(part.sets["K*"]) == optimal
        for m in range(1, M + 1):
            assert set(part.sets[f"K({m})"]) == sets[m], f"K({m}) mismatch"
            assert set(part.subsplit_one[m]) == one[m]
            assert set(part.subsplit_two[m]) == two[m]
        assert part.candidate_sets == cand

        pieces = [set(part.sets["K*"])] + [
            set(part.sets[f"K({m})"]) for m in range(1, M + 1)
        ]
        union = set()
        total = 0
        for piece in pieces:
            union |= piece
            total += len(piece)
        assert union == set(range(1, K + 1)) and total == K
    _pass(5, "1000 random partitions matched the oracle, disjoint and exhaustive")


def test_criterion_6_fidelity_usage(paper1_fixed):
    """Cheaply dismissed arms stay cheap; the baseline never leaves the top."""
    instance, batch = paper1_fixed
    part = partition_arms(instance)
    k1 = np.asarray(part.sets["K(1)"], dtype=np.int64) - 1
    assert k1.size > 0, "paper-1 instance has no fidelity-1-resolvable arms"
    mean_counts = batch.per_policy["mfucb"].mean_counts
    above = mean_counts[k1, 1] + mean_counts[k1, 2]
    assert float(above.max()) <= 20.0, f"max mean T(2)+T(3) = {above.max():.2f}"
    ucb_counts = batch.per_policy["ucb"].mean_counts
    assert float(ucb_counts[:, :2].sum()) == 0.0
    assert float(ucb_counts[:, 2].sum()) > 0.0
    _pass(
        6,
        f"{k1.size} fidelity-1 arms averaged at most {above.max():.2f} "
        f"higher-fidelity plays; baseline spent 100% at the top",
    )


def test_criterion_7_budget_accounting(
    preset_batches, paper1_fixed, recorded_episodes
):
    """Play counts live in [floor(L/cost_top), floor(L/cost_bottom)], spend <= L."""
    checked = 0
    for ladder, _, capital, policy, ep in _all_episode_groups(
        preset_batches, paper1_fixed, recorded_episodes
    ):
        n_lo = int(Fraction(capital) / Fraction(ladder.costs[-1]))
        n_hi = int(Fraction(capital) / Fraction(ladder.costs[0]))
        assert n_lo <= ep.N <= n_hi, f"{policy}: N={ep.N} outside [{n_lo}, {n_hi}]"
        assert ep.spent <= capital
        checked += 1
    _pass(7, f"budget bounds held exactly on {checked} episodes")


def test_criterion_8_parallel_determinism(tmp_path, monkeypatch):
    """Worker count must not leak into any output byte."""
    monkeypatch.delenv("MFBANDIT_THREADS", raising=False)
    outs = {}
    for workers in (1, 8):
        out = tmp_path / f"p{workers}"
        code = main(
            [
                "run",
                "--preset",
                "paper-3",
                "--seed",
                str(BASE_SEED),
                "--parallelism",
                str(workers),
                "--out",
                str(out),
            ]
        )
        assert code == 0
        outs[workers] = out
    names = ("regret_mfucb.csv", "regret_ucb.csv", "plays_mfucb.csv", "plays_ucb.csv")
    for name in names:
        a = (outs[1] / name).read_bytes()
        b = (outs[8] / name).read_bytes()
        assert a == b, f"{name} differs between parallelism 1 and 8"
    _pass(8, f"{len(names)} CSV files byte-identical across parallelism 1 vs 8")
