"""Named benchmark problems.

Four standard configurations spanning both reward families, two to five
fidelity levels, and cost ratios from 3x to 100x between adjacent levels.
The Gaussian problems pin the best arm's cheap-fidelity means to the bottom
of their bias band, so the low fidelities actively mislead about the winner
and a policy must escalate to find it.

Capital is not part of a preset; the conventional default is 2000 plays'
worth of top-fidelity cost (see default_capital).
"""

from __future__ import annotations

from .model import Bernoulli, FidelityLadder, Gaussian
from .simulator import GaussianSample, GeneratorSpec, UniformGrid

__all__ = ["PRESETS", "default_capital", "preset"]

PRESETS: dict[str, GeneratorSpec] = {
    "paper-1": GeneratorSpec(
        K=500,
        ladder=FidelityLadder(zetas=(0.2, 0.1, 0.0), costs=(1.0, 10.0, 1000.0)),
        family=Gaussian(sigma=0.2),
        high_fidelity_means=UniformGrid(0.0, 1.0),
        optimal_arm_suppression=True,
    ),
    "paper-2": GeneratorSpec(
        K=500,
        ladder=FidelityLadder(
            zetas=(1.0, 0.5, 0.2, 0.0), costs=(1.0, 5.0, 20.0, 50.0)
        ),
        family=Gaussian(sigma=1.0),
        high_fidelity_means=GaussianSample(),
        optimal_arm_suppression=True,
    ),
    "paper-3": GeneratorSpec(
        K=200,
        ladder=FidelityLadder(zetas=(0.2, 0.0), costs=(1.0, 10.0)),
        family=Bernoulli(),
        high_fidelity_means=UniformGrid(0.1, 0.9),
        optimal_arm_suppression=False,
    ),
    "paper-4": GeneratorSpec(
        K=1000,
        ladder=FidelityLadder(
            zetas=(0.5, 0.2, 0.1, 0.05, 0.0), costs=(1.0, 3.0, 10.0, 30.0, 100.0)
        ),
        family=Bernoulli(),
        high_fidelity_means=UniformGrid(0.1, 0.9),
        optimal_arm_suppression=False,
    ),
}


def preset(name: str) -> GeneratorSpec:
    """Look up a preset by name; raises KeyError with the known names."""
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        ) from None


def default_capital(spec: GeneratorSpec) -> float:
    """Conventional budget: 2000 top-fidelity plays' worth of capital."""
    return 2000.0 * spec.ladder.costs[-1]
