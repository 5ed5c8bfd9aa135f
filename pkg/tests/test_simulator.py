"""Tests for episode execution, regret accounting, generators, and batches.

The compiled episode loop is held to exact trace equality with the pure
reference loop, and regret values are re-derived by a replay oracle that
recomputes everything from the play log.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from mfbandit.model import (
    Bernoulli,
    FidelityLadder,
    Gaussian,
    ProblemInstance,
    validate_instance,
)
from mfbandit.simulator import (
    GaussianSample,
    GeneratorSpec,
    UniformGrid,
    checkpoint_grid,
    episode_seed,
    generate_instance,
    resolve_parallelism,
    run_batch,
    run_episode,
    sample_reward,
)


LADDER_2 = FidelityLadder(zetas=(0.2, 0.0), costs=(1.0, 10.0))


def bernoulli_instance(K=4, seed=0):
    spec = GeneratorSpec(
        K=K,
        ladder=LADDER_2,
        family=Bernoulli(),
        high_fidelity_means=UniformGrid(0.1, 0.9),
    )
    return generate_instance(spec, np.random.default_rng(seed))


def replay_regret(instance, result, checkpoints):
    """Recompute regret at each checkpoint from the raw play log."""
    costs = np.asarray(instance.ladder.costs)
    play_costs = costs[result.plays_fidelity - 1]
    q = instance.mu_top[result.plays_arm - 1]
    cum_cost = np.concatenate([[0.0], np.cumsum(play_costs)])
    cum_q = np.concatenate([[0.0], np.cumsum(play_costs * q)])
    out = []
    for lam in checkpoints:
        n = int(np.searchsorted(cum_cost, lam, side="right")) - 1
        r = lam * instance.mu_star - cum_q[n]
        rt = (lam - cum_cost[n]) * instance.mu_star
        Rt = cum_cost[n] * instance.mu_star - cum_q[n]
        out.append((n, r, rt, Rt))
    return out


class TestSampleReward:
    def test_degenerate_bernoulli(self):
        inst = ProblemInstance(
            ladder=FidelityLadder(zetas=(0.0,), costs=(1.0,)),
            means=np.array([[1.0]]),
            family=Bernoulli(),
        )
        rng = np.random.default_rng(0)
        draws = [sample_reward(inst, 1, 1, rng) for _ in range(1000)]
        assert set(draws) == {1.0}

    def test_bernoulli_mean(self):
        inst = ProblemInstance(
            ladder=FidelityLadder(zetas=(0.0,), costs=(1.0,)),
            means=np.array([[0.3]]),
            family=Bernoulli(),
        )
        rng = np.random.default_rng(1)
        draws = np.array([sample_reward(inst, 1, 1, rng) for _ in range(100_000)])
        assert set(np.unique(draws)) <= {0.0, 1.0}
        assert abs(draws.mean() - 0.3) < 0.01

    def test_gaussian_mean(self):
        inst = ProblemInstance(
            ladder=FidelityLadder(zetas=(0.0,), costs=(1.0,)),
            means=np.array([[0.0]]),
            family=Gaussian(sigma=0.2),
        )
        rng = np.random.default_rng(2)
        draws = np.array([sample_reward(inst, 1, 1, rng) for _ in range(100_000)])
        assert abs(draws.mean()) < 0.003
        assert abs(draws.std() - 0.2) < 0.003


class TestCheckpointGrid:
    def test_shape_and_endpoints(self):
        grid = checkpoint_grid(20_000.0, LADDER_2)
        assert grid.shape == (20,)
        assert grid[0] == 50.0 * 10.0
        assert grid[-1] == 20_000.0
        assert np.all(np.diff(grid) > 0)

    def test_log_spacing(self):
        grid = checkpoint_grid(1_000_000.0, LADDER_2, count=10)
        ratios = grid[1:] / grid[:-1]
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-9)

    def test_small_budget_collapses(self):
        grid = checkpoint_grid(300.0, LADDER_2)
        np.testing.assert_array_equal(grid, [300.0])


class TestRunEpisode:
    def test_degenerate_budget(self):
        """A budget below the cheapest cost buys nothing; regret is all slack."""
        inst = bernoulli_instance()
        res = run_episode(inst, "mfucb", 0.5, seed=3)
        assert res.N == 0
        assert res.spent == 0.0
        assert res.regret[-1] == pytest.approx(0.5 * inst.mu_star, rel=1e-12)
        assert res.Rtilde[-1] == 0.0
        assert res.rtilde[-1] == pytest.approx(0.5 * inst.mu_star, rel=1e-12)

    def test_single_arm_single_fidelity(self):
        """Only optimal plays exist, so the played part contributes nothing."""
        inst = ProblemInstance(
            ladder=FidelityLadder(zetas=(0.0,), costs=(3.0,)),
            means=np.array([[0.6]]),
            family=Bernoulli(),
        )
        res = run_episode(inst, "mfucb", 100.0, seed=4)
        assert res.N == math.floor(100.0 / 3.0)
        assert res.Rtilde[-1] == pytest.approx(0.0, abs=1e-12)
        expect = (100.0 - res.N * 3.0) * 0.6
        assert res.rtilde[-1] == pytest.approx(expect, rel=1e-12)
        assert res.regret[-1] == pytest.approx(expect, rel=1e-12)

    @pytest.mark.parametrize("policy", ["mfucb", "ucb"])
    @pytest.mark.parametrize("engine_name", ["python", "numba"])
    def test_replay_oracle(self, policy, engine_name):
        """Reported regret matches a from-scratch replay of the play log."""
        inst = bernoulli_instance(K=2, seed=5)
        checkpoints = [10.0, 25.0, 50.0]
        res = run_episode(
            inst,
            policy,
            50.0,
            checkpoints=checkpoints,
            seed=6,
            record_plays=True,
            engine_name=engine_name,
        )
        for j, (n, r, rt, Rt) in enumerate(replay_regret(inst, res, checkpoints)):
            assert res.checkpoint_plays[j] == n
            assert abs(res.regret[j] - r) <= 1e-9 * max(1.0, abs(r))
            assert abs(res.rtilde[j] - rt) <= 1e-9 * max(1.0, abs(rt))
            assert abs(res.Rtilde[j] - Rt) <= 1e-9 * max(1.0, abs(Rt))

    def test_log_consistency(self):
        inst = bernoulli_instance(K=3, seed=7)
        res = run_episode(inst, "mfucb", 120.0, seed=8, record_plays=True)
        assert len(res.plays_arm) == res.N
        costs = np.asarray(inst.ladder.costs)
        assert res.spent == pytest.approx(
            costs[res.plays_fidelity - 1].sum(), rel=1e-12
        )
        for k in range(1, inst.K + 1):
            for m in range(1, inst.M + 1):
                expect = int(
                    np.sum((res.plays_arm == k) & (res.plays_fidelity == m))
                )
                assert res.counts[k - 1, m - 1] == expect

    @pytest.mark.parametrize("policy", ["mfucb", "ucb"])
    def test_engines_agree_exactly(self, policy):
        """Compiled and reference loops produce identical traces."""
        rng = np.random.default_rng(9)
        for trial in range(20):
            K = int(rng.integers(1, 7))
            M = int(rng.integers(1, 5))
            z = np.sort(rng.uniform(0.05, 0.4, size=M - 1))[::-1]
            zetas = tuple(float(x) for x in z) + (0.0,)
            costs = tuple(np.cumsum(rng.uniform(0.5, 4.0, size=M)))
            ladder = FidelityLadder(zetas=zetas, costs=costs)
            if trial % 2 == 0:
                family = Bernoulli()
                grid = UniformGrid(0.5, 0.9)
            else:
                family = Gaussian(sigma=float(rng.uniform(0.1, 1.0)))
                grid = UniformGrid(0.0, 1.0)
            spec = GeneratorSpec(
                K=K, ladder=ladder, family=family, high_fidelity_means=grid
            )
            inst = generate_instance(spec, rng)
            # A budget off any exact cost multiple keeps the stopping margin
            # fat relative to float accumulation drift.
            capital = float(costs[-1] * rng.integers(20, 60) * 1.0031)
            seed = int(rng.integers(0, 2**32))
            kwargs = dict(seed=seed, record_plays=True,
                          checkpoints=[capital / 4, capital / 2, capital])
            rp = run_episode(inst, policy, capital, engine_name="python", **kwargs)
            rn = run_episode(inst, policy, capital, engine_name="numba", **kwargs)
            assert rp.N == rn.N
            assert rp.spent == rn.spent
            np.testing.assert_array_equal(rp.plays_arm, rn.plays_arm)
            np.testing.assert_array_equal(rp.plays_fidelity, rn.plays_fidelity)
            np.testing.assert_array_equal(rp.plays_reward, rn.plays_reward)
            np.testing.assert_array_equal(rp.counts, rn.counts)
            np.testing.assert_array_equal(rp.regret, rn.regret)
            np.testing.assert_array_equal(rp.checkpoint_plays, rn.checkpoint_plays)

    def test_seed_determinism(self):
        inst = bernoulli_instance(K=4, seed=10)
        a = run_episode(inst, "mfucb", 300.0, seed=11, record_plays=True)
        b = run_episode(inst, "mfucb", 300.0, seed=11, record_plays=True)
        np.testing.assert_array_equal(a.plays_arm, b.plays_arm)
        np.testing.assert_array_equal(a.plays_reward, b.plays_reward)
        np.testing.assert_array_equal(a.regret, b.regret)

    def test_mean_shift_leaves_decisions_unchanged(self):
        """Shifting a Gaussian instance shifts rewards, not decisions."""
        rng = np.random.default_rng(12)
        K, shift = 5, 0.5
        top = rng.integers(16, 56, size=K) / 64.0
        low = np.clip(top + rng.integers(-12, 13, size=K) / 64.0, None, None)
        low = np.clip(low, top - 0.2, top + 0.2)
        means = np.column_stack([low, top])
        family = Gaussian(sigma=0.25)
        base = ProblemInstance(ladder=LADDER_2, means=means, family=family)
        moved = ProblemInstance(
            ladder=LADDER_2, means=means + shift, family=family
        )
        a = run_episode(base, "mfucb", 400.0, seed=13, record_plays=True)
        b = run_episode(moved, "mfucb", 400.0, seed=13, record_plays=True)
        np.testing.assert_array_equal(a.plays_arm, b.plays_arm)
        np.testing.assert_array_equal(a.plays_fidelity, b.plays_fidelity)
        np.testing.assert_allclose(
            b.plays_reward - a.plays_reward, shift, atol=1e-12
        )
        np.testing.assert_allclose(a.regret, b.regret, atol=1e-8)

    def test_plays_absent_by_default(self):
        inst = bernoulli_instance()
        res = run_episode(inst, "ucb", 100.0, seed=14)
        assert res.plays_arm is None
        assert res.plays_fidelity is None
        assert res.plays_reward is None

    def test_argument_validation(self):
        inst = bernoulli_instance()
        with pytest.raises(ValueError):
            run_episode(inst, "greedy", 100.0)
        with pytest.raises(ValueError):
            run_episode(inst, "mfucb", 0.0)
        with pytest.raises(ValueError):
            run_episode(inst, "mfucb", 100.0, checkpoints=[50.0, 50.0])
        with pytest.raises(ValueError):
            run_episode(inst, "mfucb", 100.0, checkpoints=[50.0, 200.0])
        with pytest.raises(ValueError):
            run_episode(inst, "mfucb", 100.0, rho=0.0)


class TestGenerateInstance:
    def test_grid_means_at_top_fidelity(self):
        inst = bernoulli_instance(K=5, seed=15)
        np.testing.assert_allclose(
            inst.means[:, -1], np.linspace(0.1, 0.9, 5), rtol=1e-15
        )

    def test_bands_hold(self):
        rng = np.random.default_rng(16)
        lad = FidelityLadder(zetas=(0.3, 0.1, 0.0), costs=(1.0, 5.0, 25.0))
        spec = GeneratorSpec(
            K=50,
            ladder=lad,
            family=Gaussian(sigma=0.5),
            high_fidelity_means=GaussianSample(),
        )
        for _ in range(10):
            inst = generate_instance(spec, rng)
            assert validate_instance(inst) == []
            diff = np.abs(inst.means[:, -1:] - inst.means)
            slack = 1e-12 * np.maximum(1.0, np.abs(inst.means[:, -1:]))
            assert np.all(diff <= np.asarray(lad.zetas)[None, :] + slack)

    def test_bernoulli_clamped(self):
        rng = np.random.default_rng(17)
        spec = GeneratorSpec(
            K=200,
            ladder=LADDER_2,
            family=Bernoulli(),
            high_fidelity_means=UniformGrid(0.1, 0.9),
        )
        inst = generate_instance(spec, rng)
        assert inst.means.min() >= 0.001
        assert inst.means.max() <= 0.999

    def test_suppression_pins_band_minimum(self):
        rng = np.random.default_rng(18)
        lad = FidelityLadder(zetas=(1.0, 0.5, 0.2, 0.0), costs=(1.0, 5.0, 20.0, 50.0))
        spec = GeneratorSpec(
            K=40,
            ladder=lad,
            family=Gaussian(sigma=1.0),
            high_fidelity_means=GaussianSample(),
            optimal_arm_suppression=True,
        )
        inst = generate_instance(spec, rng)
        kstar = inst.optimal_arms[0]
        for m in range(1, lad.M):
            assert inst.means[kstar - 1, m - 1] == inst.means[
                kstar - 1, -1
            ] - lad.zetas[m - 1]

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            GeneratorSpec(
                K=3,
                ladder=LADDER_2,
                family=Bernoulli(),
                high_fidelity_means=UniformGrid(0.0, 0.9),
            )
        with pytest.raises(ValueError):
            GeneratorSpec(
                K=3,
                ladder=LADDER_2,
                family=Bernoulli(),
                high_fidelity_means=GaussianSample(),
            )
        with pytest.raises(ValueError):
            GeneratorSpec(
                K=3,
                ladder=LADDER_2,
                family=Bernoulli(),
                high_fidelity_means=UniformGrid(0.1, 0.9),
                optimal_arm_suppression=True,
            )
        with pytest.raises(ValueError):
            UniformGrid(0.9, 0.1)
        with pytest.raises(ValueError):
            GeneratorSpec(
                K=0,
                ladder=LADDER_2,
                family=Bernoulli(),
                high_fidelity_means=UniformGrid(0.1, 0.9),
            )

    def test_rng_normalization(self):
        spec = GeneratorSpec(
            K=6,
            ladder=LADDER_2,
            family=Bernoulli(),
            high_fidelity_means=UniformGrid(0.1, 0.9),
        )
        a = generate_instance(spec, 21)
        b = generate_instance(spec, np.random.default_rng(21))
        c = generate_instance(spec, np.random.SeedSequence(21))
        np.testing.assert_array_equal(a.means, b.means)
        np.testing.assert_array_equal(a.means, c.means)


class TestRunBatch:
    def test_single_replication_is_identity(self):
        inst = bernoulli_instance(K=4, seed=22)
        batch = run_batch(
            inst, 200.0, replications=1, base_seed=23, keep_episodes=True
        )
        for policy in ("mfucb", "ucb"):
            agg = batch.per_policy[policy]
            episode = run_episode(
                inst,
                policy,
                200.0,
                checkpoints=batch.checkpoints,
                seed=episode_seed(23, 0, policy),
            )
            np.testing.assert_array_equal(agg.mean_regret, episode.regret)
            np.testing.assert_array_equal(agg.std_regret, np.zeros_like(episode.regret))
            np.testing.assert_array_equal(agg.mean_counts, episode.counts)
            assert agg.replications == 1

    def test_ucb_never_leaves_top_fidelity(self):
        inst = bernoulli_instance(K=4, seed=24)
        batch = run_batch(inst, 300.0, replications=3, base_seed=25)
        counts = batch.per_policy["ucb"].mean_counts
        assert np.all(counts[:, :-1] == 0.0)
        assert counts[:, -1].sum() > 0

    def test_parallelism_does_not_change_results(self):
        spec = GeneratorSpec(
            K=8,
            ladder=LADDER_2,
            family=Bernoulli(),
            high_fidelity_means=UniformGrid(0.1, 0.9),
        )
        serial = run_batch(spec, 500.0, replications=8, base_seed=26, parallelism=1)
        threaded = run_batch(spec, 500.0, replications=8, base_seed=26, parallelism=4)
        for policy in ("mfucb", "ucb"):
            a, b = serial.per_policy[policy], threaded.per_policy[policy]
            np.testing.assert_array_equal(a.mean_regret, b.mean_regret)
            np.testing.assert_array_equal(a.std_regret, b.std_regret)
            np.testing.assert_array_equal(a.rep_regret, b.rep_regret)
            np.testing.assert_array_equal(a.mean_counts, b.mean_counts)

    def test_spec_redraws_instance_per_replication(self):
        spec = GeneratorSpec(
            K=8,
            ladder=LADDER_2,
            family=Bernoulli(),
            high_fidelity_means=UniformGrid(0.1, 0.9),
        )
        batch = run_batch(
            spec, 400.0, replications=4, base_seed=27, keep_episodes=True
        )
        regrets = batch.per_policy["mfucb"].rep_regret[:, -1]
        assert len(set(np.round(regrets, 6))) > 1
        assert batch.instance_ref.K == 8

    def test_fixed_instance_shared(self):
        inst = bernoulli_instance(K=4, seed=28)
        batch = run_batch(inst, 200.0, replications=2, base_seed=29)
        assert batch.instance_ref is inst

    def test_policy_subset(self):
        inst = bernoulli_instance(K=3, seed=30)
        batch = run_batch(inst, 150.0, policies=("ucb",), replications=2, base_seed=31)
        assert set(batch.per_policy) == {"ucb"}

    def test_std_uses_population_convention(self):
        inst = bernoulli_instance(K=3, seed=32)
        batch = run_batch(inst, 150.0, replications=3, base_seed=33)
        agg = batch.per_policy["mfucb"]
        np.testing.assert_allclose(
            agg.std_regret, agg.rep_regret.std(axis=0, ddof=0), rtol=1e-12
        )

    def test_replications_validated(self):
        inst = bernoulli_instance()
        with pytest.raises(ValueError):
            run_batch(inst, 100.0, replications=0)


class TestSeedScheme:
    def test_episode_seed_layout(self):
        ss = episode_seed(7, 3, "ucb")
        assert list(ss.entropy) == [7, 3, 2]
        ss = episode_seed(7, 3, "mfucb")
        assert list(ss.entropy) == [7, 3, 1]

    def test_policies_use_disjoint_streams(self):
        inst = bernoulli_instance(K=4, seed=34)
        batch = run_batch(inst, 200.0, replications=1, base_seed=35, keep_episodes=True)
        eps = {p: batch.episodes[p][0] for p in ("mfucb", "ucb")}
        assert eps["mfucb"].seed_repr != eps["ucb"].seed_repr


class TestResolveParallelism:
    def test_auto_positive(self):
        assert resolve_parallelism("auto") >= 1

    def test_integer_passthrough(self):
        assert resolve_parallelism(3) == 3

    def test_env_override(self, monkeypatch):
        monkeypatch.setenv("MFBANDIT_THREADS", "2")
        assert resolve_parallelism("auto") == 2
        assert resolve_parallelism(6) == 2

    def test_invalid(self):
        with pytest.raises(ValueError):
            resolve_parallelism(0)
        with pytest.raises(ValueError):
            resolve_parallelism("fast")
