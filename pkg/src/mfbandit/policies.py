"""Decision rules over play statistics.

Two policies share the same upper-confidence machinery. The multi-fidelity
rule plays the arm whose cheapest-to-certify bound is highest and escalates
an arm's fidelity only once the confidence width at the current level drops
below the switch threshold gamma(m). The baseline ignores the lower
fidelities and always plays at level M.

Both selectors are pure functions of the state; mfucb_update returns a new
state and never mutates its input. These reference implementations favor
clarity; the batch simulator runs a compiled equivalent (see engine).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ConcentrationModel, FidelityLadder, gamma, psi, psi_inv

__all__ = [
    "PolicyState",
    "StepDecision",
    "bound_k",
    "bound_mks",
    "fresh_state",
    "mfucb_select",
    "mfucb_update",
    "play_cap",
    "ucb_select",
]


@dataclass(frozen=True, slots=True)
class StepDecision:
    """One round's choice: play arm (1-based) at fidelity (1-based)."""

    arm: int
    fidelity: int


@dataclass(frozen=True, slots=True)
class PolicyState:
    """Play statistics after t-1 rounds.

    counts[k-1, m-1] is the number of plays of arm k at fidelity m, sums the
    matching cumulative reward. t = 1 + counts.sum() is the index of the
    round about to be decided.
    """

    t: int
    counts: np.ndarray
    sums: np.ndarray
    rho: float

    def __post_init__(self) -> None:
        counts = np.array(self.counts, dtype=np.int64, order="C")
        sums = np.array(self.sums, dtype=np.float64, order="C")
        if counts.shape != sums.shape or counts.ndim != 2:
            raise ValueError("counts and sums must be matching K x M matrices")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        if not (self.rho > 0):
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.t != 1 + int(counts.sum()):
            raise ValueError(
                f"t = {self.t} inconsistent with counts.sum() = {int(counts.sum())}"
            )
        counts.flags.writeable = False
        sums.flags.writeable = False
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "sums", sums)

    @property
    def K(self) -> int:
        return self.counts.shape[0]

    @property
    def M(self) -> int:
        return self.counts.shape[1]


def fresh_state(K: int, M: int, rho: float = 2.0) -> PolicyState:
    """State before any play."""
    return PolicyState(
        t=1, counts=np.zeros((K, M), np.int64), sums=np.zeros((K, M)), rho=rho
    )


def bound_mks(
    state: PolicyState,
    model: ConcentrationModel,
    ladder: FidelityLadder,
    k: int,
    m: int,
) -> float:
    """Fidelity-m upper bound on arm k's target mean.

    Empirical mean plus confidence width psi_inv(rho log t / s) plus the
    bias allowance zeta(m). An unplayed cell (s = 0) has width psi_inv(inf)
    = +inf per the 1/s = inf convention.
    """
    s = int(state.counts[k - 1, m - 1])
    zeta = ladder.zetas[m - 1]
    if s == 0:
        return math.inf
    width = psi_inv(model, state.rho * math.log(state.t) / s)
    return state.sums[k - 1, m - 1] / s + width + zeta


def bound_k(
    state: PolicyState, model: ConcentrationModel, ladder: FidelityLadder, k: int
) -> float:
    """min over fidelities of bound_mks; the quantity maximized over arms."""
    return min(bound_mks(state, model, ladder, k, m) for m in range(1, ladder.M + 1))


def _all_arm_bounds(
    state: PolicyState, model: ConcentrationModel, ladder: FidelityLadder
) -> np.ndarray:
    """Vector of bound_k over all arms, computed cell-wise like bound_mks."""
    K, M = state.counts.shape
    cell = np.full((K, M), np.inf)
    played = state.counts > 0
    if played.any():
        s = state.counts[played].astype(np.float64)
        width = psi_inv(model, state.rho * math.log(state.t) / s)
        zeta = np.broadcast_to(np.asarray(ladder.zetas), (K, M))[played]
        cell[played] = state.sums[played] / s + width + zeta
    return cell.min(axis=1)


def mfucb_select(
    state: PolicyState, model: ConcentrationModel, ladder: FidelityLadder
) -> StepDecision:
    """Multi-fidelity selection.

    Arm: argmax of bound_k, lowest index on ties. Fidelity: the smallest
    m < M whose confidence width at the chosen arm is still at least
    gamma(m) (an unplayed cell counts as infinite width), otherwise M.
    """
    bounds = _all_arm_bounds(state, model, ladder)
    arm_pos = int(np.argmax(bounds))
    logt = math.log(state.t)
    for m in range(1, ladder.M):
        s = int(state.counts[arm_pos, m - 1])
        if s == 0:
            return StepDecision(arm=arm_pos + 1, fidelity=m)
        width = psi_inv(model, state.rho * logt / s)
        if width >= gamma(ladder, model, m):
            return StepDecision(arm=arm_pos + 1, fidelity=m)
    return StepDecision(arm=arm_pos + 1, fidelity=ladder.M)


def ucb_select(
    state: PolicyState, model: ConcentrationModel, ladder: FidelityLadder
) -> StepDecision:
    """Single-fidelity baseline: argmax of the level-M bound, always play M."""
    K, M = state.counts.shape
    bounds = np.full(K, np.inf)
    s_top = state.counts[:, M - 1]
    played = s_top > 0
    if played.any():
        s = s_top[played].astype(np.float64)
        width = psi_inv(model, state.rho * math.log(state.t) / s)
        bounds[played] = state.sums[played, M - 1] / s + width + ladder.zetas[M - 1]
    arm_pos = int(np.argmax(bounds))
    return StepDecision(arm=arm_pos + 1, fidelity=M)


def mfucb_update(
    state: PolicyState, decision: StepDecision, reward: float
) -> PolicyState:
    """Record one observed reward; returns the successor state."""
    K, M = state.counts.shape
    if not 1 <= decision.arm <= K:
        raise ValueError(f"arm {decision.arm} out of range 1..{K}")
    if not 1 <= decision.fidelity <= M:
        raise ValueError(f"fidelity {decision.fidelity} out of range 1..{M}")
    counts = state.counts.copy()
    sums = state.sums.copy()
    counts[decision.arm - 1, decision.fidelity - 1] += 1
    sums[decision.arm - 1, decision.fidelity - 1] += reward
    return PolicyState(t=state.t + 1, counts=counts, sums=sums, rho=state.rho)


def play_cap(
    model: ConcentrationModel, ladder: FidelityLadder, rho: float, n: int, m: int
) -> int:
    """Deterministic cap on plays at fidelity m < M within an n-play episode.

    The policy plays an arm at level m only while the width there is at
    least gamma(m), so T(m, k) <= floor(rho log n / psi(gamma(m))) + 1 holds
    for every arm on every episode, with no randomness involved.
    """
    if n < 1:
        return 0
    g = gamma(ladder, model, m)
    return int(math.floor(rho * math.log(n) / psi(model, g))) + 1
