"""Core domain types for multi-fidelity bandit problems.

A problem exposes each arm at M fidelity levels. Level M is the target
distribution; level m < M is a cheap approximation whose mean is known to
lie within zeta(m) of the target mean, and each play at level m costs
costs(m) units of capital.

Conventions used throughout the package: scalar arm and fidelity arguments
(and scalar ids inside reports) are 1-based, matching the usual notation
where fidelity m runs over 1..M. Dense arrays over arms or fidelities are
ordinary numpy arrays indexed from 0, so position m-1 holds level m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "Bernoulli",
    "ConcentrationModel",
    "FidelityLadder",
    "Gaussian",
    "GapMatrix",
    "ProblemInstance",
    "RewardFamily",
    "bernoulli",
    "check_decay_assumption",
    "DecayCheck",
    "DecayReport",
    "default_concentration",
    "fidelity_threshold",
    "gamma",
    "gammas",
    "gaps",
    "psi",
    "psi_inv",
    "subgaussian",
    "validate_instance",
]


# ---------------------------------------------------------------------------
# Reward distribution families


@dataclass(frozen=True, slots=True)
class Gaussian:
    """Normal rewards with known standard deviation sigma."""

    sigma: float

    def __post_init__(self) -> None:
        if not (self.sigma > 0):
            raise ValueError(f"Gaussian sigma must be positive, got {self.sigma}")


@dataclass(frozen=True, slots=True)
class Bernoulli:
    """Rewards in {0, 1}; the mean is the success probability."""


RewardFamily = Union[Gaussian, Bernoulli]


# ---------------------------------------------------------------------------
# Concentration model


@dataclass(frozen=True, slots=True)
class ConcentrationModel:
    """Quadratic concentration rate psi(eps) = eps^2 / c_psi.

    The family fixes c_psi: sub-Gaussian with scale sigma uses c_psi = 2
    sigma^2, Bernoulli uses psi(eps) = 2 eps^2, i.e. c_psi = 1/2 (the
    Hoeffding rate, identical to sub-Gaussian with sigma = 1/2). nu is the
    leading constant of the tail bound nu * exp(-s * psi(eps)); it enters
    reported constants only, never decisions.
    """

    family: str
    sigma: float | None = None
    nu: float = 1.0

    def __post_init__(self) -> None:
        if self.family not in ("subgaussian", "bernoulli"):
            raise ValueError(f"unknown concentration family {self.family!r}")
        if self.family == "subgaussian":
            if self.sigma is None or not (self.sigma > 0):
                raise ValueError("subgaussian family requires sigma > 0")
        elif self.sigma is not None:
            raise ValueError("bernoulli family takes no sigma")
        if not (self.nu > 0):
            raise ValueError(f"nu must be positive, got {self.nu}")

    @property
    def c_psi(self) -> float:
        """Coefficient in psi(eps) = eps^2 / c_psi."""
        if self.family == "subgaussian":
            return 2.0 * self.sigma * self.sigma
        return 0.5


def subgaussian(sigma: float, nu: float = 1.0) -> ConcentrationModel:
    """Concentration model for sigma-sub-Gaussian observations."""
    return ConcentrationModel(family="subgaussian", sigma=sigma, nu=nu)


def bernoulli(nu: float = 1.0) -> ConcentrationModel:
    """Concentration model for Bernoulli observations (Hoeffding rate)."""
    return ConcentrationModel(family="bernoulli", nu=nu)


def default_concentration(family: RewardFamily, nu: float = 1.0) -> ConcentrationModel:
    """Canonical concentration model for a reward family."""
    if isinstance(family, Gaussian):
        return subgaussian(family.sigma, nu=nu)
    if isinstance(family, Bernoulli):
        return bernoulli(nu=nu)
    raise TypeError(f"unknown reward family {family!r}")


def psi(model: ConcentrationModel, eps):
    """Concentration rate psi(eps) = eps^2 / c_psi.

    Accepts scalars or arrays; eps must be nonnegative (+inf allowed and
    maps to +inf).
    """
    eps_arr = np.asarray(eps, dtype=np.float64)
    if np.any(eps_arr < 0):
        raise ValueError(f"psi requires eps >= 0, got {eps}")
    out = eps_arr * eps_arr / model.c_psi
    return float(out) if np.isscalar(eps) or eps_arr.ndim == 0 else out


def psi_inv(model: ConcentrationModel, rate):
    """Inverse rate psi_inv(r) = sqrt(c_psi * r).

    Accepts scalars or arrays; rate must be nonnegative. +inf propagates to
    +inf, realizing the 1/s = inf convention for unplayed cells.
    """
    rate_arr = np.asarray(rate, dtype=np.float64)
    if np.any(rate_arr < 0):
        raise ValueError(f"psi_inv requires rate >= 0, got {rate}")
    out = np.sqrt(model.c_psi * rate_arr)
    return float(out) if np.isscalar(rate) or rate_arr.ndim == 0 else out


# ---------------------------------------------------------------------------
# Fidelity ladder


@dataclass(frozen=True, slots=True)
class FidelityLadder:
    """The (zeta(m), costs(m)) structure shared by every arm of an instance.

    zetas must be strictly decreasing with zetas[-1] == 0 exactly (the top
    fidelity is unbiased); costs must be strictly increasing and positive.
    """

    zetas: tuple[float, ...]
    costs: tuple[float, ...]

    def __post_init__(self) -> None:
        zetas = tuple(float(z) for z in self.zetas)
        costs = tuple(float(c) for c in self.costs)
        object.__setattr__(self, "zetas", zetas)
        object.__setattr__(self, "costs", costs)
        if len(zetas) < 1:
            raise ValueError("ladder needs at least one fidelity")
        if len(zetas) != len(costs):
            raise ValueError(
                f"zetas and costs lengths differ: {len(zetas)} vs {len(costs)}"
            )
        if zetas[-1] != 0.0:
            raise ValueError(f"top fidelity must have zeta 0, got {zetas[-1]}")
        if any(z < 0 for z in zetas):
            raise ValueError("zetas must be nonnegative")
        if any(a <= b for a, b in zip(zetas, zetas[1:])):
            raise ValueError(f"zetas must be strictly decreasing, got {zetas}")
        if any(c <= 0 for c in costs):
            raise ValueError("costs must be positive")
        if any(a >= b for a, b in zip(costs, costs[1:])):
            raise ValueError(f"costs must be strictly increasing, got {costs}")

    @property
    def M(self) -> int:
        return len(self.zetas)

    def zeta(self, m: int) -> float:
        """zeta at fidelity m (1-based)."""
        if not 1 <= m <= self.M:
            raise IndexError(f"fidelity {m} out of range 1..{self.M}")
        return self.zetas[m - 1]

    def cost(self, m: int) -> float:
        """Cost of one play at fidelity m (1-based)."""
        if not 1 <= m <= self.M:
            raise IndexError(f"fidelity {m} out of range 1..{self.M}")
        return self.costs[m - 1]


def fidelity_threshold(
    model: ConcentrationModel, zeta: float, cost_low: float, cost_high: float
) -> float:
    """Switch threshold psi_inv((cost_low / cost_high) * psi(zeta)).

    For the quadratic rate this reduces to zeta * sqrt(cost_low / cost_high),
    so equal costs give back zeta itself.
    """
    return psi_inv(model, (cost_low / cost_high) * psi(model, zeta))


def gamma(ladder: FidelityLadder, model: ConcentrationModel, m: int) -> float:
    """Fidelity-switch threshold gamma(m) for 1 <= m <= M-1.

    The policy escalates past fidelity m once its confidence width at m
    drops below this value. Undefined at the top fidelity.
    """
    if not 1 <= m <= ladder.M - 1:
        raise IndexError(
            f"gamma is defined for 1 <= m <= M-1 = {ladder.M - 1}, got m = {m}"
        )
    return fidelity_threshold(
        model, ladder.zetas[m - 1], ladder.costs[m - 1], ladder.costs[m]
    )


def gammas(ladder: FidelityLadder, model: ConcentrationModel) -> np.ndarray:
    """All switch thresholds as an array of length M-1 (empty when M = 1)."""
    return np.array(
        [gamma(ladder, model, m) for m in range(1, ladder.M)], dtype=np.float64
    )


# ---------------------------------------------------------------------------
# Problem instances


@dataclass(frozen=True)
class ProblemInstance:
    """Arm means at every fidelity plus the sampling family and ladder.

    means has shape (K, M); column M-1 holds the target means. mu_star and
    optimal_arms (1-based ids of the argmax set) are derived on construction.
    Band and range invariants are checked by validate_instance, not here, so
    deliberately broken instances can be constructed and reported on.
    """

    ladder: FidelityLadder
    means: np.ndarray
    family: RewardFamily
    mu_star: float = field(init=False)
    optimal_arms: tuple[int, ...] = field(init=False)

    def __post_init__(self) -> None:
        means = np.array(self.means, dtype=np.float64, order="C")
        if means.ndim != 2:
            raise ValueError(f"means must be a K x M matrix, got shape {means.shape}")
        K, M = means.shape
        if K < 1:
            raise ValueError("instance needs at least one arm")
        if M != self.ladder.M:
            raise ValueError(
                f"means has {M} fidelity columns but ladder has {self.ladder.M}"
            )
        means.flags.writeable = False
        object.__setattr__(self, "means", means)
        mu_star = float(means[:, -1].max())
        optimal = tuple(int(k) + 1 for k in np.flatnonzero(means[:, -1] == mu_star))
        object.__setattr__(self, "mu_star", mu_star)
        object.__setattr__(self, "optimal_arms", optimal)

    @property
    def K(self) -> int:
        return self.means.shape[0]

    @property
    def M(self) -> int:
        return self.means.shape[1]

    @property
    def mu_top(self) -> np.ndarray:
        """Target means, shape (K,)."""
        return self.means[:, -1]


def validate_instance(instance: ProblemInstance) -> list[str]:
    """Check every structural invariant; returns violations, empty if ok.

    Violations are data rather than exceptions so that generators and the
    CLI can report all problems at once.
    """
    violations: list[str] = []
    ladder = instance.ladder
    means = instance.means
    K, M = means.shape
    zetas = np.asarray(ladder.zetas)
    # A mean pinned at the band edge (mu_M - zeta) can round a few ulps past
    # zeta when the difference is recomputed, so the check carries a
    # scale-aware slack far below any modeling-relevant violation.
    slack = 16.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(means[:, -1:]))
    band = np.abs(means[:, -1:] - means) - zetas[None, :]
    for k, m in zip(*np.nonzero(band > slack)):
        violations.append(
            f"band exceeded at (k={k + 1}, m={m + 1}): "
            f"|mu_M - mu_m| = {abs(means[k, -1] - means[k, m])!r} "
            f"> zeta = {zetas[m]!r}"
        )
    if isinstance(instance.family, Bernoulli):
        for k, m in zip(*np.nonzero((means < 0.0) | (means > 1.0))):
            violations.append(
                f"mean outside [0,1] at (k={k + 1}, m={m + 1}): {means[k, m]!r}"
            )
    if not np.all(np.isfinite(means)):
        violations.append("means contain non-finite values")
    # Ladder invariants are enforced at construction; recheck them anyway so
    # the report is complete for hand-built objects.
    if ladder.zetas[-1] != 0.0:
        violations.append("ladder: top fidelity zeta is not 0")
    if any(a <= b for a, b in zip(ladder.zetas, ladder.zetas[1:])):
        violations.append("ladder: zetas not strictly decreasing")
    if any(c <= 0 for c in ladder.costs):
        violations.append("ladder: costs not positive")
    if any(a >= b for a, b in zip(ladder.costs, ladder.costs[1:])):
        violations.append("ladder: costs not strictly increasing")
    return violations


# ---------------------------------------------------------------------------
# Gaps


@dataclass(frozen=True, slots=True)
class GapMatrix:
    """deltas[k-1, m-1] = mu_star - mean(k, m) - zeta(m).

    A positive entry certifies from fidelity-m information alone that arm k
    is suboptimal. Column M is nonnegative and vanishes exactly on the
    optimal arms.
    """

    deltas: np.ndarray

    def __post_init__(self) -> None:
        deltas = np.array(self.deltas, dtype=np.float64, order="C")
        deltas.flags.writeable = False
        object.__setattr__(self, "deltas", deltas)


def gaps(instance: ProblemInstance) -> GapMatrix:
    """Gap matrix of the instance."""
    zetas = np.asarray(instance.ladder.zetas)
    return GapMatrix(instance.mu_star - instance.means - zetas[None, :])


# ---------------------------------------------------------------------------
# Decay assumption


@dataclass(frozen=True, slots=True)
class DecayCheck:
    """One rung of the decay report: sum_{i<=m} 1/psi(zeta(i)) vs 1/psi(zeta(m+1))."""

    m: int
    partial_sum: float
    bound: float
    ok: bool


@dataclass(frozen=True, slots=True)
class DecayReport:
    ok: bool
    checks: tuple[DecayCheck, ...]


def check_decay_assumption(
    ladder: FidelityLadder, model: ConcentrationModel
) -> DecayReport:
    """Check sum_{i=1}^m 1/psi(zeta(i)) <= 1/psi(zeta(m+1)) for every m < M.

    The m = M-1 comparison is against 1/psi(0) = +inf and always passes.
    Violations are advisory: the policy is well defined without the
    assumption, so callers should warn rather than reject.
    """
    checks: list[DecayCheck] = []
    partial = 0.0
    for m in range(1, ladder.M):
        rate = psi(model, ladder.zetas[m - 1])
        partial += 1.0 / rate
        next_rate = psi(model, ladder.zetas[m])
        bound = math.inf if next_rate == 0.0 else 1.0 / next_rate
        checks.append(DecayCheck(m=m, partial_sum=partial, bound=bound, ok=partial <= bound))
    return DecayReport(ok=all(c.ok for c in checks), checks=tuple(checks))
