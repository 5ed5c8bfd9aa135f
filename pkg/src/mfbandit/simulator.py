"""Episode execution under a capital budget, generators, and batch runs.

An episode repeatedly asks a policy for an (arm, fidelity) decision, samples
a reward, and charges the fidelity's cost against the budget. The decision
that would overspend is refused and ends the episode, so the number of plays
N is the largest n whose cumulative cost stays within the budget; the policy
itself never sees the budget.

Regret against a budget checkpoint L_j charges the full checkpoint,
R = L_j * mu_star - sum(cost_t * q_t), where q_t is the target mean of the
arm played (whatever the fidelity) and the sum runs over the longest play
prefix affordable within L_j. It splits exactly into the unused-capital
penalty rtilde = (L_j - spent) * mu_star and the cost-weighted pseudo-regret
Rtilde = sum(cost_t * (mu_star - q_t)).

Every episode is checked on completion: budget safety, the play-count range
floor(L / costs(M)) <= N <= floor(L / costs(1)), the deterministic per-
fidelity play cap, and the R = rtilde + Rtilde identity. A breach raises
InvariantViolation rather than returning corrupt results.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

from . import engine
from .model import (
    Bernoulli,
    ConcentrationModel,
    FidelityLadder,
    Gaussian,
    ProblemInstance,
    RewardFamily,
    default_concentration,
    gammas,
    psi,
    validate_instance,
)
from .policies import fresh_state, mfucb_select, mfucb_update, play_cap, ucb_select

__all__ = [
    "BatchResult",
    "EpisodeResult",
    "GaussianSample",
    "GeneratorSpec",
    "InvariantViolation",
    "POLICIES",
    "PolicyAggregate",
    "UniformGrid",
    "checkpoint_grid",
    "generate_instance",
    "run_batch",
    "run_episode",
    "sample_reward",
]

POLICIES = ("mfucb", "ucb")

# Pre-drawn variate buffers are sized at floor(capital / costs(1)) plays; cap
# the allocation so a mistyped budget fails fast instead of thrashing.
_MAX_BUFFER = 50_000_000


def _exact_floor_div(a: float, b: float) -> int:
    """floor(a / b) over the exact rational values of the floats.

    Float division can round a / b across an integer when a is an exact
    multiple of b, which matters for play-count bounds and buffer sizing.
    """
    return int(Fraction(a) / Fraction(b))


class InvariantViolation(Exception):
    """A simulated episode broke a structural guarantee."""

    def __init__(self, message: str, details: dict | None = None):
        super().__init__(message)
        self.details = details or {}


# ---------------------------------------------------------------------------
# Instance generation


@dataclass(frozen=True, slots=True)
class UniformGrid:
    """Target means laid out as K evenly spaced values from lo to hi."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ValueError(f"grid requires lo < hi, got [{self.lo}, {self.hi}]")


@dataclass(frozen=True, slots=True)
class GaussianSample:
    """Target means drawn independently from a standard normal."""


@dataclass(frozen=True, slots=True)
class GeneratorSpec:
    """Recipe for random problem instances.

    Lower-fidelity means are drawn uniformly within the zeta(m) band around
    each target mean (clamped into [0.001, 0.999] for Bernoulli rewards).
    With optimal_arm_suppression, the best arm's lower-fidelity means are
    pinned to the band minimum, making cheap fidelities actively misleading
    about the winner; that option only makes sense for unclamped (Gaussian)
    rewards.
    """

    K: int
    ladder: FidelityLadder
    family: RewardFamily
    high_fidelity_means: Union[UniformGrid, GaussianSample]
    optimal_arm_suppression: bool = False

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if isinstance(self.family, Bernoulli):
            if isinstance(self.high_fidelity_means, GaussianSample):
                raise ValueError(
                    "Bernoulli rewards need bounded target means; use a grid"
                )
            if not (0.0 < self.high_fidelity_means.lo and self.high_fidelity_means.hi < 1.0):
                raise ValueError(
                    "Bernoulli target means must lie strictly inside (0, 1)"
                )
            if self.optimal_arm_suppression:
                raise ValueError(
                    "optimal_arm_suppression applies to Gaussian problems only"
                )


def generate_instance(spec: GeneratorSpec, rng) -> ProblemInstance:
    """Draw one instance from a generator spec.

    rng may be a Generator, SeedSequence, or int. Draw order is fixed: target
    means first (when sampled), then one uniform band per fidelity 1..M-1.
    """
    rng = np.random.default_rng(rng)
    K, M = spec.K, spec.ladder.M
    zetas = spec.ladder.zetas
    if isinstance(spec.high_fidelity_means, UniformGrid):
        mu_top = np.linspace(spec.high_fidelity_means.lo, spec.high_fidelity_means.hi, K)
    else:
        mu_top = rng.standard_normal(K)
    means = np.empty((K, M))
    means[:, M - 1] = mu_top
    bern = isinstance(spec.family, Bernoulli)
    for m in range(1, M):
        z = zetas[m - 1]
        band = rng.uniform(mu_top - z, mu_top + z)
        if bern:
            band = np.clip(band, 0.001, 0.999)
        means[:, m - 1] = band
    if spec.optimal_arm_suppression and M > 1:
        k_star = int(np.argmax(mu_top))
        for m in range(1, M):
            means[k_star, m - 1] = mu_top[k_star] - zetas[m - 1]
    instance = ProblemInstance(ladder=spec.ladder, means=means, family=spec.family)
    violations = validate_instance(instance)
    if violations:
        raise ValueError("generated instance is invalid: " + "; ".join(violations))
    return instance


def sample_reward(instance: ProblemInstance, arm: int, fidelity: int, rng) -> float:
    """One reward draw for (arm, fidelity), both 1-based.

    Uses the same transform as the episode engine: a uniform variate
    thresholded at the mean for Bernoulli, mean + sigma * normal otherwise.
    """
    mu = float(instance.means[arm - 1, fidelity - 1])
    if isinstance(instance.family, Bernoulli):
        return 1.0 if rng.random() < mu else 0.0
    return mu + instance.family.sigma * rng.standard_normal()


# ---------------------------------------------------------------------------
# Episodes


@dataclass(frozen=True)
class EpisodeResult:
    """Outcome of one budgeted episode.

    regret, rtilde, and Rtilde are aligned with checkpoints; checkpoint_plays
    and checkpoint_spent give the play prefix realizing each checkpoint. The
    play log arrays (1-based arm and fidelity ids) are present only when the
    episode was run with record_plays.
    """

    policy: str
    N: int
    spent: float
    counts: np.ndarray
    checkpoints: np.ndarray
    regret: np.ndarray
    rtilde: np.ndarray
    Rtilde: np.ndarray
    checkpoint_plays: np.ndarray
    checkpoint_spent: np.ndarray
    seed_repr: str
    plays_arm: np.ndarray | None = None
    plays_fidelity: np.ndarray | None = None
    plays_reward: np.ndarray | None = None


def checkpoint_grid(capital: float, ladder: FidelityLadder, count: int = 20) -> np.ndarray:
    """Default evaluation grid: count log-spaced budgets ending at capital.

    The grid starts at 50 plays' worth of top-fidelity capital; a budget at
    or below that start collapses to the single checkpoint [capital].
    """
    start = 50.0 * ladder.costs[-1]
    if capital <= start:
        return np.array([float(capital)])
    grid = np.geomspace(start, float(capital), count)
    grid[0] = start
    grid[-1] = float(capital)
    return grid


def _resolve_checkpoints(checkpoints, capital: float) -> np.ndarray:
    if checkpoints is None:
        return np.array([float(capital)])
    ck = np.asarray(checkpoints, dtype=np.float64)
    if ck.ndim != 1 or ck.size < 1:
        raise ValueError("checkpoints must be a nonempty 1-d sequence")
    if np.any(ck <= 0):
        raise ValueError("checkpoints must be positive")
    if np.any(np.diff(ck) <= 0):
        raise ValueError("checkpoints must be strictly increasing")
    if ck[-1] > capital:
        raise ValueError(
            f"checkpoints must not exceed capital {capital}, got max {ck[-1]}"
        )
    return ck


def _run_python_loop(
    instance: ProblemInstance,
    model: ConcentrationModel,
    policy: str,
    capital: float,
    rho: float,
    checkpoints: np.ndarray,
    variates: np.ndarray,
    record: bool,
):
    """Reference loop over the policies module; mirrors the kernel exactly."""
    ladder = instance.ladder
    state = fresh_state(instance.K, instance.M, rho)
    select = mfucb_select if policy == "mfucb" else ucb_select
    mu_top = instance.mu_top
    bern = isinstance(instance.family, Bernoulli)
    sigma = 0.0 if bern else instance.family.sigma
    J = checkpoints.shape[0]
    ck_spent = np.zeros(J)
    ck_q = np.zeros(J)
    ck_n = np.zeros(J, np.int64)
    plays: list[tuple[int, int, float]] = []
    spent = 0.0
    cum_q = 0.0
    j = 0
    while True:
        decision = select(state, model, ladder)
        cost = ladder.costs[decision.fidelity - 1]
        while j < J and spent + cost > checkpoints[j]:
            ck_spent[j] = spent
            ck_q[j] = cum_q
            ck_n[j] = state.t - 1
            j += 1
        if spent + cost > capital:
            break
        if state.t > variates.shape[0]:
            raise InvariantViolation("variate buffer exhausted in reference loop")
        u = variates[state.t - 1]
        mu = instance.means[decision.arm - 1, decision.fidelity - 1]
        reward = (1.0 if u < mu else 0.0) if bern else mu + sigma * u
        state = mfucb_update(state, decision, reward)
        spent += cost
        cum_q += cost * mu_top[decision.arm - 1]
        if record:
            plays.append((decision.arm, decision.fidelity, reward))
    N = state.t - 1
    while j < J:
        ck_spent[j] = spent
        ck_q[j] = cum_q
        ck_n[j] = N
        j += 1
    return state.counts.copy(), spent, cum_q, N, ck_spent, ck_q, ck_n, plays


def run_episode(
    instance: ProblemInstance,
    policy: str,
    capital: float,
    *,
    rho: float = 2.0,
    checkpoints=None,
    seed=0,
    concentration: ConcentrationModel | None = None,
    record_plays: bool = False,
    engine_name: str = "numba",
) -> EpisodeResult:
    """Run one episode of a policy against the instance.

    Args:
        instance: the problem; must pass validate_instance.
        policy: "mfucb" or "ucb".
        capital: episode budget; a budget below the cheapest cost yields a
            valid zero-play episode.
        rho: exploration parameter of the confidence widths.
        checkpoints: ascending budgets (each <= capital) at which regret is
            reported; defaults to the single checkpoint [capital].
        seed: int, SeedSequence, or Generator driving the reward stream.
        concentration: width model; defaults to the family's canonical one.
        record_plays: keep the full (arm, fidelity, reward) log.
        engine_name: "numba" for the compiled loop, "python" for the
            reference loop over the policies module.
    """
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}, got {policy!r}")
    if not capital > 0:
        raise ValueError(f"capital must be positive, got {capital}")
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    violations = validate_instance(instance)
    if violations:
        raise ValueError("invalid instance: " + "; ".join(violations))
    model = concentration or default_concentration(instance.family)
    ladder = instance.ladder
    ck = _resolve_checkpoints(checkpoints, capital)
    rng = np.random.default_rng(seed)
    bern = isinstance(instance.family, Bernoulli)
    # Cheapest cost the policy can emit bounds the play count and with it the
    # variate demand (the baseline never leaves the top fidelity).
    floor_cost = ladder.costs[-1] if policy == "ucb" else ladder.costs[0]
    # Small headroom on top of the exact bound: the loop accumulates spent in
    # floats, so a zero-margin budget can admit one play past the ideal floor.
    nmax = _exact_floor_div(capital, floor_cost) + 4
    if nmax > _MAX_BUFFER:
        raise ValueError(
            f"capital supports up to {nmax} plays; the buffered sampler is "
            f"capped at {_MAX_BUFFER}"
        )
    variates = rng.random(nmax) if bern else rng.standard_normal(nmax)

    if engine_name == "python":
        counts, spent, cum_q, N, ck_spent, ck_q, ck_n, plays = _run_python_loop(
            instance, model, policy, capital, rho, ck, variates, record_plays
        )
        if record_plays:
            plays_arm = np.array([p[0] for p in plays], np.int32)
            plays_fid = np.array([p[1] for p in plays], np.int32)
            plays_reward = np.array([p[2] for p in plays])
        else:
            plays_arm = plays_fid = plays_reward = None
    elif engine_name == "numba":
        engine.warmup()
        K, M = instance.K, instance.M
        counts = np.zeros((K, M), np.int64)
        sums = np.zeros((K, M))
        mean_pz = np.zeros((K, M))
        isc = np.zeros((K, M))
        ck_spent = np.zeros(ck.shape[0])
        ck_q = np.zeros(ck.shape[0])
        ck_n = np.zeros(ck.shape[0], np.int64)
        rec_size = nmax if record_plays else 0
        plays_arm = np.zeros(rec_size, np.int32)
        plays_fid = np.zeros(rec_size, np.int32)
        plays_reward = np.zeros(rec_size)
        status, spent, cum_q, N = engine.episode_kernel(
            instance.means,
            np.ascontiguousarray(instance.mu_top),
            np.asarray(ladder.zetas),
            np.asarray(ladder.costs),
            gammas(ladder, model),
            model.c_psi,
            float(rho),
            float(capital),
            ck,
            variates,
            bern,
            0.0 if bern else instance.family.sigma,
            policy == "mfucb",
            counts,
            sums,
            mean_pz,
            isc,
            ck_spent,
            ck_q,
            ck_n,
            record_plays,
            plays_arm,
            plays_fid,
            plays_reward,
        )
        if status != engine.STATUS_OK:
            raise InvariantViolation(
                f"episode kernel stopped with status {status}",
                {"status": int(status), "N": int(N), "spent": float(spent)},
            )
        if record_plays:
            plays_arm = plays_arm[:N] + 1
            plays_fid = plays_fid[:N] + 1
            plays_reward = plays_reward[:N]
        else:
            plays_arm = plays_fid = plays_reward = None
    else:
        raise ValueError(f"unknown engine {engine_name!r}")

    mu_star = instance.mu_star
    regret = ck * mu_star - ck_q
    rtilde = (ck - ck_spent) * mu_star
    Rtilde = ck_spent * mu_star - ck_q
    result = EpisodeResult(
        policy=policy,
        N=int(N),
        spent=float(spent),
        counts=counts,
        checkpoints=ck,
        regret=regret,
        rtilde=rtilde,
        Rtilde=Rtilde,
        checkpoint_plays=ck_n,
        checkpoint_spent=ck_spent,
        seed_repr=repr(seed),
        plays_arm=plays_arm,
        plays_fidelity=plays_fid,
        plays_reward=plays_reward,
    )
    _check_episode_invariants(result, instance, model, capital, rho)
    return result


def _check_episode_invariants(
    result: EpisodeResult,
    instance: ProblemInstance,
    model: ConcentrationModel,
    capital: float,
    rho: float,
) -> None:
    """Always-on structural checks; raises InvariantViolation on breach."""
    ladder = instance.ladder
    details = {"policy": result.policy, "seed": result.seed_repr, "N": result.N}
    if result.spent > capital:
        raise InvariantViolation(
            f"spent {result.spent!r} exceeds capital {capital!r}",
            {**details, "spent": result.spent, "capital": capital},
        )
    n_lo = _exact_floor_div(capital, ladder.costs[-1])
    n_hi = _exact_floor_div(capital, ladder.costs[0])
    if not n_lo <= result.N <= n_hi:
        raise InvariantViolation(
            f"play count {result.N} outside [{n_lo}, {n_hi}]",
            {**details, "n_lo": n_lo, "n_hi": n_hi},
        )
    if int(result.counts.sum()) != result.N:
        raise InvariantViolation(
            f"counts sum {int(result.counts.sum())} != N = {result.N}", details
        )
    if result.N >= 1:
        for m in range(1, ladder.M):
            cap = play_cap(model, ladder, rho, result.N, m)
            worst = int(result.counts[:, m - 1].max())
            if worst > cap:
                raise InvariantViolation(
                    f"fidelity {m} play cap breached: {worst} > {cap}",
                    {**details, "m": m, "cap": cap, "worst": worst},
                )
    gap = np.abs(result.regret - (result.rtilde + result.Rtilde))
    tol = 1e-9 * np.maximum(1.0, np.abs(result.regret))
    if np.any(gap > tol):
        j = int(np.argmax(gap - tol))
        raise InvariantViolation(
            f"regret identity broken at checkpoint {j}: gap {gap[j]!r}",
            {**details, "checkpoint": float(result.checkpoints[j])},
        )


# ---------------------------------------------------------------------------
# Batches


@dataclass(frozen=True)
class PolicyAggregate:
    """Replication averages for one policy.

    rep_regret holds the per-replication regret matrix (replications x
    checkpoints); standard deviations are population (ddof = 0) so a single
    replication reports 0 rather than NaN.
    """

    policy: str
    checkpoints: np.ndarray
    mean_regret: np.ndarray
    std_regret: np.ndarray
    mean_rtilde: np.ndarray
    mean_Rtilde: np.ndarray
    rep_regret: np.ndarray
    mean_counts: np.ndarray
    mean_plays: float
    replications: int


@dataclass(frozen=True)
class BatchResult:
    """Aggregated replications for each requested policy.

    instance_ref is the replication-0 instance; when the batch was given a
    generator spec the other replications saw their own fresh instances, so
    reports derived from instance_ref are labeled as such downstream.
    """

    problem: Union[ProblemInstance, GeneratorSpec]
    instance_ref: ProblemInstance
    capital: float
    rho: float
    replications: int
    base_seed: int
    checkpoints: np.ndarray
    per_policy: dict
    episodes: dict | None = None


def _rep_instance(problem, base_seed: int, rep: int) -> ProblemInstance:
    if isinstance(problem, GeneratorSpec):
        return generate_instance(
            problem, np.random.SeedSequence([base_seed, rep, 0])
        )
    return problem


def episode_seed(base_seed: int, rep: int, policy: str) -> np.random.SeedSequence:
    """Reward-stream seed for (replication, policy).

    Stream 0 of a replication draws its instance; stream 1 + p feeds policy
    p in the canonical order mfucb, ucb. The layout is independent of which
    policies a batch actually requests.
    """
    return np.random.SeedSequence([base_seed, rep, 1 + POLICIES.index(policy)])


def run_batch(
    problem: Union[ProblemInstance, GeneratorSpec],
    capital: float,
    *,
    policies=POLICIES,
    rho: float = 2.0,
    checkpoints=None,
    replications: int = 1,
    base_seed: int = 0,
    parallelism: int = 1,
    keep_episodes: bool = False,
    engine_name: str = "numba",
) -> BatchResult:
    """Run replications x policies episodes and aggregate.

    Replication r regenerates its instance from the generator spec (or reuses the
    fixed instance) and runs every policy on it. All randomness derives from
    SeedSequence([base_seed, r, stream]), so results are identical for any
    parallelism degree; aggregation fills per-replication slots by index.
    """
    policies = tuple(p for p in POLICIES if p in policies)
    if not policies:
        raise ValueError("at least one known policy is required")
    if replications < 1:
        raise ValueError(f"replications must be >= 1, got {replications}")
    if parallelism < 1:
        raise ValueError(f"parallelism must be >= 1, got {parallelism}")
    ladder = problem.ladder
    ck = checkpoint_grid(capital, ladder) if checkpoints is None else _resolve_checkpoints(checkpoints, capital)

    if engine_name == "numba":
        engine.warmup()

    def one_rep(rep: int):
        inst = _rep_instance(problem, base_seed, rep)
        results = {}
        for pol in policies:
            results[pol] = run_episode(
                inst,
                pol,
                capital,
                rho=rho,
                checkpoints=ck,
                seed=episode_seed(base_seed, rep, pol),
                engine_name=engine_name,
            )
        return inst, results

    if parallelism == 1 or replications == 1:
        reps = [one_rep(r) for r in range(replications)]
    else:
        with ThreadPoolExecutor(max_workers=min(parallelism, replications)) as pool:
            futures = [pool.submit(one_rep, r) for r in range(replications)]
            reps = [f.result() for f in futures]

    instance_ref = reps[0][0]
    J = ck.shape[0]
    per_policy = {}
    episodes = {pol: [] for pol in policies} if keep_episodes else None
    for pol in policies:
        rep_regret = np.zeros((replications, J))
        rep_rtilde = np.zeros((replications, J))
        rep_Rtilde = np.zeros((replications, J))
        counts_total = np.zeros(
            (instance_ref.K, instance_ref.M), np.int64
        )
        n_total = 0
        for r, (_, results) in enumerate(reps):
            ep = results[pol]
            rep_regret[r] = ep.regret
            rep_rtilde[r] = ep.rtilde
            rep_Rtilde[r] = ep.Rtilde
            counts_total += ep.counts
            n_total += ep.N
            if keep_episodes:
                episodes[pol].append(ep)
        per_policy[pol] = PolicyAggregate(
            policy=pol,
            checkpoints=ck,
            mean_regret=rep_regret.mean(axis=0),
            std_regret=rep_regret.std(axis=0),
            mean_rtilde=rep_rtilde.mean(axis=0),
            mean_Rtilde=rep_Rtilde.mean(axis=0),
            rep_regret=rep_regret,
            mean_counts=counts_total / float(replications),
            mean_plays=n_total / float(replications),
            replications=replications,
        )
    if keep_episodes:
        episodes = {pol: tuple(eps) for pol, eps in episodes.items()}
    return BatchResult(
        problem=problem,
        instance_ref=instance_ref,
        capital=float(capital),
        rho=rho,
        replications=replications,
        base_seed=base_seed,
        checkpoints=ck,
        per_policy=per_policy,
        episodes=episodes,
    )


def resolve_parallelism(value) -> int:
    """Map "auto" or an int to a worker count, honoring MFBANDIT_THREADS."""
    env = os.environ.get("MFBANDIT_THREADS")
    if env is not None:
        n = int(env)
        if n < 1:
            raise ValueError(f"MFBANDIT_THREADS must be >= 1, got {env}")
        return n
    if value == "auto":
        return os.cpu_count() or 1
    n = int(value)
    if n < 1:
        raise ValueError(f"parallelism must be >= 1, got {value}")
    return n
