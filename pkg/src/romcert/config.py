"""Scenario configuration: YAML files with strictly validated keys.

Every key mirrors one input of the construction pipeline; unknown keys are
rejected so a typo cannot silently change a guarantee-bearing parameter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .benchmarks import Benchmark, ReachAvoidSpec, SafetySpec, TrackingSpec, benchmark, benchmark_names
from .errors import ConfigError
from .systems import LtiPlant

_TOP_KEYS = {"plant", "reduction", "data", "property", "run", "output_dir"}
_REDUCTION_KEYS = {"n_hat", "kappa_hat", "epsilon", "a_hat_decay", "b_hat_scale"}
_DATA_KEYS = {"tau", "samples", "seed", "excitation_bound", "derivative_mode"}
_PROPERTY_KEYS = {
    "kind", "dims", "lower", "upper", "on_sum", "gain",
    "start_lower", "start_upper", "target_lower", "target_upper", "obstacles", "speed",
}
_RUN_KEYS = {"horizon", "tau", "num_runs", "rom_input_bound"}
_KINDS = ("safety", "reach-avoid", "tracking", "verification")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    plant: LtiPlant
    benchmark_name: str | None
    n_hat: int
    kappa_hat: float
    epsilon: float
    a_hat_decay: float
    b_hat_scale: float
    data_tau: float
    samples: int
    seed: int
    excitation_bound: float
    derivative_mode: str
    kind: str
    task: object
    horizon: float
    cosim_tau: float
    num_runs: int
    rom_input_bound: float
    output_dir: str | None = None

    def __post_init__(self):
        n = self.plant.state_dim
        if not (0.0 < self.epsilon < self.kappa_hat):
            raise ConfigError(
                f"epsilon must satisfy 0 < epsilon < kappa_hat, got epsilon={self.epsilon}, "
                f"kappa_hat={self.kappa_hat}"
            )
        if self.samples <= n:
            raise ConfigError(f"samples = {self.samples} must exceed the state dimension n = {n}")
        if not (1 <= self.n_hat <= n):
            raise ConfigError(f"n_hat = {self.n_hat} must lie in [1, n] with n = {n}")
        if self.kind not in _KINDS:
            raise ConfigError(f"property kind must be one of {_KINDS}, got {self.kind!r}")
        if self.data_tau <= 0 or self.cosim_tau <= 0 or self.horizon <= 0:
            raise ConfigError("tau values and horizon must be positive")
        if self.derivative_mode not in ("exact", "fd"):
            raise ConfigError(f"derivative_mode must be 'exact' or 'fd', got {self.derivative_mode!r}")


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}; allowed: {sorted(allowed)}")


def _array(v, name: str) -> np.ndarray:
    try:
        return np.asarray(v, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be numeric: {exc}") from exc


def _parse_task(kind: str, prop: dict):
    if kind == "safety":
        for req in ("dims", "lower", "upper"):
            if req not in prop:
                raise ConfigError(f"safety property requires {req!r}")
        return SafetySpec(
            dims=tuple(int(d) for d in prop["dims"]),
            lower=_array(prop["lower"], "lower"),
            upper=_array(prop["upper"], "upper"),
            on_sum=bool(prop.get("on_sum", False)),
            gain=float(prop.get("gain", 1.0)),
        )
    if kind == "reach-avoid":
        for req in ("dims", "start_lower", "start_upper", "target_lower", "target_upper"):
            if req not in prop:
                raise ConfigError(f"reach-avoid property requires {req!r}")
        obstacles = tuple(
            (_array(o[0], "obstacle lower"), _array(o[1], "obstacle upper"))
            for o in prop.get("obstacles", [])
        )
        return ReachAvoidSpec(
            dims=tuple(int(d) for d in prop["dims"]),
            start_lower=_array(prop["start_lower"], "start_lower"),
            start_upper=_array(prop["start_upper"], "start_upper"),
            target_lower=_array(prop["target_lower"], "target_lower"),
            target_upper=_array(prop["target_upper"], "target_upper"),
            obstacles=obstacles,
            speed=float(prop.get("speed", 0.5)),
            gain=float(prop.get("gain", 1.0)),
        )
    if kind in ("tracking", "verification"):
        extra = set(prop) - {"kind"}
        if extra:
            raise ConfigError(f"{kind} property takes no further keys, got {sorted(extra)}")
        return TrackingSpec() if kind == "tracking" else None
    raise ConfigError(f"unhandled property kind {kind!r}")


def from_benchmark(bench: Benchmark, seed: int = 1, derivative_mode: str = "exact") -> ScenarioConfig:
    """Default scenario for a registry benchmark."""
    kind = {"safety": "safety", "reach-while-avoid": "reach-avoid", "tracking": "tracking"}[bench.specification]
    return ScenarioConfig(
        name=bench.name,
        plant=bench.plant,
        benchmark_name=bench.name,
        n_hat=bench.rom_dim,
        kappa_hat=bench.kappa_hat,
        epsilon=bench.epsilon,
        a_hat_decay=bench.a_hat_decay,
        b_hat_scale=bench.b_hat_scale,
        data_tau=bench.data_tau,
        samples=bench.sample_count,
        seed=seed,
        excitation_bound=bench.excitation_bound,
        derivative_mode=derivative_mode,
        kind=kind,
        task=bench.task,
        horizon=bench.horizon,
        cosim_tau=bench.cosim_tau,
        num_runs=bench.num_runs,
        rom_input_bound=bench.rom_input_bound,
    )


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must contain a mapping at the top level")
    _check_keys(raw, _TOP_KEYS, "top level")

    plant_raw = raw.get("plant")
    if plant_raw is None:
        raise ConfigError("config requires a 'plant' entry (benchmark name or inline matrices)")
    bench = None
    if isinstance(plant_raw, str):
        bench = benchmark(plant_raw)
        plant = bench.plant
    elif isinstance(plant_raw, dict):
        _check_keys(plant_raw, {"a", "b"}, "plant")
        a = _array(plant_raw["a"], "plant.a")
        b_raw = plant_raw.get("b")
        b = _array(b_raw, "plant.b") if b_raw is not None else np.zeros((a.shape[0], 0))
        plant = LtiPlant(a, b)
    else:
        raise ConfigError("'plant' must be a benchmark name or a mapping with keys a, b")

    red = dict(raw.get("reduction") or {})
    _check_keys(red, _REDUCTION_KEYS, "reduction")
    dat = dict(raw.get("data") or {})
    _check_keys(dat, _DATA_KEYS, "data")
    prop = dict(raw.get("property") or {})
    _check_keys(prop, _PROPERTY_KEYS, "property")
    run = dict(raw.get("run") or {})
    _check_keys(run, _RUN_KEYS, "run")

    kind = prop.get("kind")
    if kind is None:
        if bench is None:
            raise ConfigError("property.kind is required for inline plants")
        kind = {"safety": "safety", "reach-while-avoid": "reach-avoid", "tracking": "tracking"}[bench.specification]

    def pick(section, key, bench_attr, fallback=None):
        if key in section:
            return section[key]
        if bench is not None:
            return getattr(bench, bench_attr)
        if fallback is not None:
            return fallback
        raise ConfigError(f"missing required key {key!r} (no benchmark defaults available)")

    explicit_task_keys = set(prop) - {"kind"}
    if bench is not None and not explicit_task_keys and kind != "verification":
        task = bench.task
    else:
        task = _parse_task(kind, prop)

    kappa_hat = float(pick(red, "kappa_hat", "kappa_hat"))
    return ScenarioConfig(
        name=path.stem,
        plant=plant,
        benchmark_name=bench.name if bench is not None else None,
        n_hat=int(pick(red, "n_hat", "rom_dim")),
        kappa_hat=kappa_hat,
        epsilon=float(red.get("epsilon", bench.epsilon if bench is not None else kappa_hat / 3.0)),
        a_hat_decay=float(pick(red, "a_hat_decay", "a_hat_decay", 0.01)),
        b_hat_scale=float(pick(red, "b_hat_scale", "b_hat_scale", 1.0)),
        data_tau=float(pick(dat, "tau", "data_tau")),
        samples=int(pick(dat, "samples", "sample_count")),
        seed=int(dat.get("seed", 1)),
        excitation_bound=float(pick(dat, "excitation_bound", "excitation_bound", 1.0)),
        derivative_mode=str(dat.get("derivative_mode", "exact")),
        kind=kind,
        task=task,
        horizon=float(pick(run, "horizon", "horizon", 10.0)),
        cosim_tau=float(pick(run, "tau", "cosim_tau", 1e-3)),
        num_runs=int(pick(run, "num_runs", "num_runs", 10)),
        rom_input_bound=float(pick(run, "rom_input_bound", "rom_input_bound", 10.0)),
        output_dir=raw.get("output_dir"),
    )


def resolve_scenario(spec: str, seed: int | None = None, derivative_mode: str | None = None) -> ScenarioConfig:
    """Accept either a config file path or a bare benchmark name."""
    p = Path(spec)
    if p.exists():
        cfg = load_config(p)
    elif spec in benchmark_names():
        cfg = from_benchmark(benchmark(spec))
    else:
        raise ConfigError(f"{spec!r} is neither a config file nor a benchmark name {benchmark_names()}")
    updates = {}
    if seed is not None:
        updates["seed"] = seed
    if derivative_mode is not None:
        updates["derivative_mode"] = derivative_mode
    if updates:
        import dataclasses
        cfg = dataclasses.replace(cfg, **updates)
    return cfg
