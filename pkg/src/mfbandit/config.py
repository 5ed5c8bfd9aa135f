"""Experiment configuration: JSON ingestion, validation, and echoes.

A config is a single JSON object; every field has a default except the
problem. Validation is collected, not fail-fast, and each message carries
the file line of the offending key where one can be found, so a bad config
reports all of its problems at once and none of the simulation starts.

The manifest written next to run outputs embeds the resolved config under a
"config" key; load_config accepts such a manifest directly, which makes any
finished run reproducible from its own output directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .model import Bernoulli, FidelityLadder, Gaussian, ProblemInstance, validate_instance
from .presets import PRESETS, default_capital, preset
from .simulator import (
    GaussianSample,
    GeneratorSpec,
    UniformGrid,
    checkpoint_grid,
    resolve_parallelism,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "instance_from_dict",
    "instance_to_dict",
    "load_config",
    "load_instance_file",
    "spec_from_dict",
    "spec_to_dict",
]

DEFAULT_POLICIES = ("mfucb", "ucb")
DEFAULT_CHECKPOINTS = "log:20"
DEFAULT_REPLICATIONS = 10
DEFAULT_SEED = 0
DEFAULT_RHO = 2.0
DEFAULT_PARALLELISM = "auto"
DEFAULT_OUTPUT_DIR = "out"


class ConfigError(Exception):
    """Invalid configuration; messages are ready to print, one per problem."""

    def __init__(self, messages: list[str]):
        super().__init__("\n".join(messages))
        self.messages = list(messages)


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully resolved experiment."""

    problem: Union[ProblemInstance, GeneratorSpec]
    problem_echo: dict
    policies: tuple[str, ...]
    rho: float
    capital: float
    checkpoints: np.ndarray
    replications: int
    base_seed: int
    parallelism_requested: object
    parallelism: int
    output_dir: Path

    def echo(self) -> dict:
        """JSON-ready echo that load_config accepts back unchanged."""
        return {
            "problem": self.problem_echo,
            "policies": list(self.policies),
            "rho": self.rho,
            "capital": self.capital,
            "checkpoints": [float(c) for c in self.checkpoints],
            "replications": self.replications,
            "base_seed": self.base_seed,
            "parallelism": self.parallelism_requested,
            "output_dir": str(self.output_dir),
        }


def _key_line(text: str | None, key: str) -> int | None:
    if text is None:
        return None
    for i, line in enumerate(text.splitlines(), 1):
        if f'"{key}"' in line:
            return i
    return None


class _Collector:
    def __init__(self, source: str, text: str | None):
        self.source = source
        self.text = text
        self.messages: list[str] = []

    def add(self, key: str | None, msg: str) -> None:
        line = _key_line(self.text, key) if key else None
        if line is not None:
            self.messages.append(f"{self.source}:{line}: {msg}")
        else:
            self.messages.append(f"{self.source}: {msg}")

    def raise_if_any(self) -> None:
        if self.messages:
            raise ConfigError(self.messages)


# ---------------------------------------------------------------------------
# Problem serialization


def spec_to_dict(spec: GeneratorSpec) -> dict:
    family: dict = (
        {"family": "bernoulli"}
        if isinstance(spec.family, Bernoulli)
        else {"family": "gaussian", "sigma": spec.family.sigma}
    )
    means = (
        "gaussian_sample"
        if isinstance(spec.high_fidelity_means, GaussianSample)
        else {"grid": [spec.high_fidelity_means.lo, spec.high_fidelity_means.hi]}
    )
    return {
        "K": spec.K,
        "zetas": list(spec.ladder.zetas),
        "costs": list(spec.ladder.costs),
        **family,
        "means": means,
        "optimal_arm_suppression": spec.optimal_arm_suppression,
    }


def _parse_family(d: dict, col: _Collector, key_prefix: str):
    family = d.get("family")
    if family == "bernoulli":
        if "sigma" in d:
            col.add("sigma", f"{key_prefix}: sigma only applies to the gaussian family")
            return None
        return Bernoulli()
    if family == "gaussian":
        sigma = d.get("sigma")
        if not isinstance(sigma, (int, float)) or isinstance(sigma, bool) or sigma <= 0:
            col.add("sigma", f"{key_prefix}: gaussian family requires sigma > 0")
            return None
        return Gaussian(sigma=float(sigma))
    col.add("family", f"{key_prefix}: family must be \"gaussian\" or \"bernoulli\"")
    return None


def _parse_ladder(d: dict, col: _Collector, key_prefix: str) -> FidelityLadder | None:
    zetas = d.get("zetas")
    costs = d.get("costs")
    if not isinstance(zetas, list) or not isinstance(costs, list):
        col.add("zetas", f"{key_prefix}: zetas and costs must be lists of numbers")
        return None
    try:
        return FidelityLadder(zetas=tuple(zetas), costs=tuple(costs))
    except (TypeError, ValueError) as exc:
        col.add("zetas", f"{key_prefix}: invalid ladder: {exc}")
        return None


def spec_from_dict(d: dict, col: _Collector) -> GeneratorSpec | None:
    ladder = _parse_ladder(d, col, "problem.spec")
    family = _parse_family(d, col, "problem.spec")
    K = d.get("K")
    if not isinstance(K, int) or isinstance(K, bool) or K < 1:
        col.add("K", "problem.spec: K must be an integer >= 1")
        return None
    means = d.get("means")
    if means == "gaussian_sample":
        hf = GaussianSample()
    elif isinstance(means, dict) and isinstance(means.get("grid"), list) and len(means["grid"]) == 2:
        try:
            hf = UniformGrid(float(means["grid"][0]), float(means["grid"][1]))
        except (TypeError, ValueError) as exc:
            col.add("means", f"problem.spec: invalid grid: {exc}")
            return None
    else:
        col.add(
            "means",
            'problem.spec: means must be "gaussian_sample" or {"grid": [lo, hi]}',
        )
        return None
    suppression = d.get("optimal_arm_suppression", False)
    if not isinstance(suppression, bool):
        col.add("optimal_arm_suppression", "problem.spec: must be true or false")
        return None
    if ladder is None or family is None:
        return None
    try:
        return GeneratorSpec(
            K=K,
            ladder=ladder,
            family=family,
            high_fidelity_means=hf,
            optimal_arm_suppression=suppression,
        )
    except ValueError as exc:
        col.add("K", f"problem.spec: {exc}")
        return None


def instance_to_dict(instance: ProblemInstance) -> dict:
    family: dict = (
        {"family": "bernoulli"}
        if isinstance(instance.family, Bernoulli)
        else {"family": "gaussian", "sigma": instance.family.sigma}
    )
    return {
        "zetas": list(instance.ladder.zetas),
        "costs": list(instance.ladder.costs),
        **family,
        "means": [[float(x) for x in row] for row in instance.means],
    }


def instance_from_dict(d: dict, col: _Collector) -> ProblemInstance | None:
    ladder = _parse_ladder(d, col, "instance")
    family = _parse_family(d, col, "instance")
    means = d.get("means")
    if not isinstance(means, list) or not means or not all(isinstance(r, list) for r in means):
        col.add("means", "instance: means must be a nonempty list of per-arm rows")
        return None
    if ladder is None or family is None:
        return None
    try:
        instance = ProblemInstance(
            ladder=ladder, means=np.array(means, dtype=np.float64), family=family
        )
    except ValueError as exc:
        col.add("means", f"instance: {exc}")
        return None
    for violation in validate_instance(instance):
        col.add("means", f"instance: {violation}")
    return instance


# ---------------------------------------------------------------------------
# Config loading


def _parse_problem(raw: dict, overrides: dict, col: _Collector):
    if overrides.get("preset"):
        name = overrides["preset"]
        if name not in PRESETS:
            col.add(None, f"argument --preset: unknown preset {name!r}; "
                          f"available: {', '.join(sorted(PRESETS))}")
            return None, {}
        return preset(name), {"preset": name}
    problem = raw.get("problem")
    if problem is None:
        col.add(None, "no problem given: pass --preset or a config with a "
                      '"problem" entry')
        return None, {}
    if not isinstance(problem, dict):
        col.add("problem", 'problem must be an object with one of the keys '
                           '"preset", "spec", "instance"')
        return None, {}
    if "preset" in problem:
        name = problem["preset"]
        if name not in PRESETS:
            col.add("preset", f"unknown preset {name!r}; available: "
                              f"{', '.join(sorted(PRESETS))}")
            return None, {}
        return preset(name), {"preset": name}
    if "spec" in problem:
        if not isinstance(problem["spec"], dict):
            col.add("spec", "problem.spec must be an object")
            return None, {}
        spec = spec_from_dict(problem["spec"], col)
        return spec, ({"spec": spec_to_dict(spec)} if spec else {})
    if "instance" in problem:
        if not isinstance(problem["instance"], dict):
            col.add("instance", "problem.instance must be an object")
            return None, {}
        inst = instance_from_dict(problem["instance"], col)
        return inst, ({"instance": instance_to_dict(inst)} if inst else {})
    col.add("problem", 'problem needs one of the keys "preset", "spec", "instance"')
    return None, {}


def load_config(config_path: str | None, overrides: dict | None = None) -> ExperimentConfig:
    """Build the resolved experiment from a config file and CLI overrides.

    overrides uses the CLI flag names (preset, capital, replications, seed,
    rho, parallelism, out); entries that are None are ignored. Raises
    ConfigError carrying one message per problem found.
    """
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    text: str | None = None
    raw: dict = {}
    source = config_path or "<defaults>"
    if config_path is not None:
        path = Path(config_path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError([f"{config_path}: cannot read config: {exc}"]) from exc
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                [f"{config_path}:{exc.lineno}: invalid JSON: {exc.msg}"]
            ) from exc
        if not isinstance(raw, dict):
            raise ConfigError([f"{config_path}: config must be a JSON object"])
        if isinstance(raw.get("config"), dict):
            raw = raw["config"]  # manifest form
    col = _Collector(source, text)

    problem, problem_echo = _parse_problem(raw, overrides, col)

    policies = raw.get("policies", list(DEFAULT_POLICIES))
    if (
        not isinstance(policies, list)
        or not policies
        or any(p not in DEFAULT_POLICIES for p in policies)
        or len(set(policies)) != len(policies)
    ):
        col.add("policies", 'policies must be a nonempty subset of ["mfucb", "ucb"]')
        policies = list(DEFAULT_POLICIES)
    policies = tuple(p for p in DEFAULT_POLICIES if p in policies)

    def numeric(key: str, default, minimum=None, integer=False, flag=None):
        if key in overrides:
            value, where = overrides[key], f"argument --{flag or key}"
        elif key in raw:
            value, where = raw[key], None
        else:
            return default
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        if ok and integer:
            ok = isinstance(value, int) or float(value).is_integer()
        if ok and minimum is not None:
            ok = value >= minimum
        if not ok:
            kind = "an integer" if integer else "a number"
            bound = f" >= {minimum}" if minimum is not None else ""
            if where:
                col.add(None, f"{where}: {key} must be {kind}{bound}, got {value!r}")
            else:
                col.add(key, f"{key} must be {kind}{bound}, got {value!r}")
            return default
        return int(value) if integer else float(value)

    rho = numeric("rho", DEFAULT_RHO, minimum=1e-12)
    replications = numeric("replications", DEFAULT_REPLICATIONS, minimum=1, integer=True)
    base_seed = numeric("base_seed", DEFAULT_SEED, minimum=0, integer=True, flag="seed")
    if "seed" in overrides:
        base_seed = numeric("seed", base_seed, minimum=0, integer=True)
    if isinstance(base_seed, int) and base_seed >= 2**64:
        col.add("base_seed", f"base_seed must fit in 64 bits, got {base_seed}")
        base_seed = DEFAULT_SEED

    capital = None
    if "capital" in overrides or "capital" in raw:
        capital = numeric("capital", None, minimum=None)
        if capital is not None and capital <= 0:
            col.add("capital", f"capital must be positive, got {capital}")
            capital = None
    if capital is None and problem is not None:
        capital = default_capital(problem) if isinstance(problem, GeneratorSpec) else (
            2000.0 * problem.ladder.costs[-1]
        )

    parallelism_requested = overrides.get("parallelism", raw.get("parallelism", DEFAULT_PARALLELISM))
    parallelism = 1
    try:
        parallelism = resolve_parallelism(parallelism_requested)
    except (TypeError, ValueError):
        col.add("parallelism", f'parallelism must be "auto" or an integer >= 1, '
                               f"got {parallelism_requested!r}")
        parallelism_requested = DEFAULT_PARALLELISM

    checkpoints_raw = raw.get("checkpoints", DEFAULT_CHECKPOINTS)
    checkpoints = None
    if problem is not None and capital is not None:
        ladder = problem.ladder
        if isinstance(checkpoints_raw, str):
            if checkpoints_raw.startswith("log:"):
                try:
                    count = int(checkpoints_raw[4:])
                except ValueError:
                    count = 0
                if count < 1:
                    col.add("checkpoints", f'checkpoints "log:<count>" needs a positive '
                                           f"count, got {checkpoints_raw!r}")
                else:
                    checkpoints = checkpoint_grid(capital, ladder, count)
            else:
                col.add("checkpoints", f'checkpoints must be "log:<count>" or a list, '
                                       f"got {checkpoints_raw!r}")
        elif isinstance(checkpoints_raw, list):
            try:
                ck = np.asarray(checkpoints_raw, dtype=np.float64)
                if ck.ndim != 1 or ck.size < 1 or np.any(ck <= 0) or np.any(np.diff(ck) <= 0):
                    raise ValueError("must be a strictly increasing list of positive numbers")
                if ck[-1] > capital:
                    raise ValueError(f"must not exceed capital {capital}")
                checkpoints = ck
            except (TypeError, ValueError) as exc:
                col.add("checkpoints", f"invalid checkpoints: {exc}")
        else:
            col.add("checkpoints", f'checkpoints must be "log:<count>" or a list, '
                                   f"got {checkpoints_raw!r}")

    out = overrides.get("out", raw.get("output_dir", DEFAULT_OUTPUT_DIR))
    if not isinstance(out, (str, Path)):
        col.add("output_dir", f"output_dir must be a path, got {out!r}")
        out = DEFAULT_OUTPUT_DIR

    col.raise_if_any()
    assert problem is not None and capital is not None and checkpoints is not None
    return ExperimentConfig(
        problem=problem,
        problem_echo=problem_echo,
        policies=policies,
        rho=rho,
        capital=capital,
        checkpoints=checkpoints,
        replications=replications,
        base_seed=base_seed,
        parallelism_requested=parallelism_requested,
        parallelism=parallelism,
        output_dir=Path(out),
    )


def load_instance_file(path: str) -> ProblemInstance:
    """Parse and validate a standalone instance JSON file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read instance: {exc}"]) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}:{exc.lineno}: invalid JSON: {exc.msg}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError([f"{path}: instance must be a JSON object"])
    col = _Collector(path, text)
    instance = instance_from_dict(raw, col)
    col.raise_if_any()
    assert instance is not None
    return instance
