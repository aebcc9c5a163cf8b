"""Benchmark plant registry.

Five desk-scale plants with their default reduction settings, excitation
boxes and specification sets.  The matrices are constants for the first
four; the 25-state plant is generated from a fixed seed so that every run
of the toolkit sees the same system.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BenchmarkLookupError, RomcertError
from .systems import LtiPlant

MOTOR_A = np.array([
    [-18.925, 0.0, 0.22572, 80.823, 29.973],
    [0.0, -18.925, -80.823, 0.22572, 0.017978],
    [-0.22572, 80.823, -76.569, 0.0, -0.26957],
    [-80.823, -0.22572, 0.0, -76.569, -122.93],
    [29.973, 0.017978, 0.26957, 122.93, -194.95],
])
MOTOR_B = np.array([
    [5.3423, 0.0, 0.02, 6.8169, 4.5252],
    [0.0, -5.3423, 6.8169, -0.02, 0.003],
]).T

SPACECRAFT_A = np.array([
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [-3.1623, 0.0017, -4.0404, 0.0022],
    [-0.0017, -3.1623, -0.0022, -4.0404],
])
SPACECRAFT_B = np.array([
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
]).T

GLUCOSE_A = np.array([
    [-1.73, 1.73, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.45, -3.15, 0.0, 0.90, 0.72, 1.06, 0.0],
    [0.0, 0.76, -0.76, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.08, 0.32, -0.76, 0.0, 0.0, 0.0],
    [0.0, 1.41, 0.0, 0.0, 1.19, 0.0, 0.0],
    [0.0, 1.41, 0.0, 0.0, 0.0, -1.87, 0.45],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.05, -0.46],
])
GLUCOSE_B = np.array([[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]]).T

CART_A = np.array([
    [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
    [-1.0, -1.0, 19.6, 1.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
    [1.0, 1.0, -39.2, -2.0, 9.8, 1.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
    [0.0, 0.0, 19.6, 1.0, -19.6, -2.0],
])
CART_B = np.array([[0.0, 1.0, 0.0, -1.0, 0.0, 0.0]]).T

HIGH25_SEED = 2025


@dataclass(frozen=True)
class SafetySpec:
    """Keep selected output components inside an axis-aligned box.

    With ``on_sum`` the box constrains the sum of all output components
    instead of individual ones (used for the metabolic benchmark, where the
    quantity of interest is total concentration).
    """

    dims: tuple[int, ...]
    lower: np.ndarray
    upper: np.ndarray
    on_sum: bool = False
    gain: float = 1.0


@dataclass(frozen=True)
class ReachAvoidSpec:
    """Steer two output components from a start box to a target box."""

    dims: tuple[int, int]
    start_lower: np.ndarray
    start_upper: np.ndarray
    target_lower: np.ndarray
    target_upper: np.ndarray
    obstacles: tuple[tuple[np.ndarray, np.ndarray], ...]
    speed: float
    gain: float = 1.0


@dataclass(frozen=True)
class TrackingSpec:
    """Certificate construction only; no closed-loop task is attached."""


@dataclass(frozen=True)
class Benchmark:
    name: str
    plant: LtiPlant
    rom_dim: int
    specification: str
    sample_count: int
    reference_runtime: float  # seconds, order-of-magnitude reference
    data_tau: float
    kappa_hat: float
    epsilon: float
    a_hat_decay: float
    b_hat_scale: float
    excitation_bound: float  # excitation inputs drawn from [-b, b]^m
    rom_input_bound: float   # |u_hat_i| <= bound for synthesized policies
    cosim_tau: float
    horizon: float
    num_runs: int
    task: object = None

    @property
    def state_dim(self) -> int:
        return self.plant.state_dim

    @property
    def input_dim(self) -> int:
        return self.plant.input_dim


def _high25_plant(seed: int = HIGH25_SEED) -> LtiPlant:
    """Seeded 25-state plant: stable spread spectrum plus one unstable pair.

    Eigenvalues come in distinct complex pairs; a repeated real eigenvalue
    would make every zero-input trajectory rank deficient (its eigenspace
    coordinates evolve proportionally), so the two unstable modes are
    realized as the conjugate pair 0.5 +/- 1.3i.  Regenerates until the
    drift is full rank and every unstable mode is controllable.
    """
    rng = np.random.default_rng(seed)
    for _ in range(50):
        sig = rng.uniform(-1.2, -0.25, 11)
        om = np.sort(rng.uniform(0.4, 9.0, 11))
        blocks = [np.array([[s, w], [-w, s]]) for s, w in zip(sig, om)]
        blocks.append(np.array([[-0.8]]))
        blocks.append(np.array([[0.5, 1.3], [-1.3, 0.5]]))
        d = np.zeros((25, 25))
        i = 0
        for blk in blocks:
            k = blk.shape[0]
            d[i:i + k, i:i + k] = blk
            i += k
        q, _ = np.linalg.qr(rng.standard_normal((25, 25)))
        a = q @ d @ q.T
        b = rng.uniform(-1.0, 1.0, (25, 2))
        if np.linalg.matrix_rank(a) < 25:
            continue
        if not is_stabilizable(a, b):
            continue
        return LtiPlant(a, b)
    raise RomcertError("failed to generate a stabilizable 25-state plant")


def is_stabilizable(a: np.ndarray, b: np.ndarray, tol: float = 1e-8) -> bool:
    """PBH test: every eigenvalue with nonnegative real part is controllable."""
    n = a.shape[0]
    for lam in np.linalg.eigvals(a):
        if lam.real < -tol:
            continue
        m = np.hstack([a - lam * np.eye(n), b])
        s = np.linalg.svd(m, compute_uv=False)
        if s[-1] <= tol * s[0]:
            return False
    return True


def _box(lo, hi):
    return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)


def _registry() -> dict[str, Benchmark]:
    motor = Benchmark(
        name="motor",
        plant=LtiPlant(MOTOR_A, MOTOR_B),
        rom_dim=1,
        specification="safety",
        sample_count=6,
        reference_runtime=0.10,
        data_tau=0.01,
        kappa_hat=3.0,
        epsilon=1.0,
        a_hat_decay=0.005,
        b_hat_scale=1.0,
        excitation_bound=1.0,
        rom_input_bound=10.0,
        cosim_tau=1e-3,
        horizon=10.0,
        num_runs=30,
        task=SafetySpec(
            dims=(0, 1, 2),
            lower=np.array([1.0, 1.0, 0.3]),
            upper=np.array([1.5, 1.5, 0.7]),
            gain=1.0,
        ),
    )
    spacecraft = Benchmark(
        name="spacecraft",
        plant=LtiPlant(SPACECRAFT_A, SPACECRAFT_B),
        rom_dim=2,
        specification="reach-while-avoid",
        sample_count=10,
        reference_runtime=0.11,
        data_tau=0.3,
        kappa_hat=5.0,
        epsilon=1.0,
        a_hat_decay=1e-4,
        b_hat_scale=0.1,
        excitation_bound=1.0,
        rom_input_bound=6.0,
        cosim_tau=1e-3,
        horizon=40.0,
        num_runs=30,
        task=ReachAvoidSpec(
            dims=(0, 1),
            start_lower=np.array([0.0, 0.0]),
            start_upper=np.array([1.0, 1.0]),
            target_lower=np.array([9.0, 9.0]),
            target_upper=np.array([10.0, 10.0]),
            # debris layout is not recoverable from the source material;
            # fixed boxes leaving corridors wider than the inflated margin
            obstacles=(
                _box([2.5, 1.0], [4.0, 4.8]),
                _box([5.3, 5.2], [6.8, 9.2]),
                _box([1.2, 6.2], [2.6, 7.6]),
            ),
            speed=0.45,
            gain=1.2,
        ),
    )
    glucose = Benchmark(
        name="glucose",
        plant=LtiPlant(GLUCOSE_A, GLUCOSE_B),
        rom_dim=1,
        specification="safety",
        sample_count=250,
        reference_runtime=0.52,
        data_tau=0.01,
        kappa_hat=1.5,
        epsilon=1.0,
        a_hat_decay=0.001,
        b_hat_scale=1.0,
        excitation_bound=1.0,
        rom_input_bound=10.0,
        cosim_tau=1e-3,
        horizon=20.0,
        num_runs=10,
        task=SafetySpec(
            dims=tuple(range(7)),
            lower=np.array([30.0]),
            upper=np.array([40.0]),
            on_sum=True,
            gain=0.02,
        ),
    )
    cart = Benchmark(
        name="cart",
        plant=LtiPlant(CART_A, CART_B),
        rom_dim=1,
        specification="tracking",
        sample_count=7,
        reference_runtime=0.17,
        data_tau=0.1,
        kappa_hat=2.0,
        epsilon=1.0,
        a_hat_decay=0.002,
        b_hat_scale=1.0,
        excitation_bound=1.0,
        rom_input_bound=10.0,
        cosim_tau=1e-3,
        horizon=10.0,
        num_runs=0,
        task=TrackingSpec(),
    )
    high25 = Benchmark(
        name="high25",
        plant=_high25_plant(),
        rom_dim=2,
        specification="reach-while-avoid",
        sample_count=48,
        reference_runtime=0.68,
        data_tau=0.25,
        kappa_hat=0.6,
        epsilon=0.2,
        a_hat_decay=1e-4,
        b_hat_scale=0.05,
        excitation_bound=1.0,
        rom_input_bound=6.0,
        cosim_tau=1e-3,
        horizon=120.0,
        num_runs=30,
        task=ReachAvoidSpec(
            dims=(0, 1),
            start_lower=np.array([4.0, 0.0]),
            start_upper=np.array([5.0, 1.0]),
            target_lower=np.array([0.0, 3.5]),
            target_upper=np.array([1.0, 6.0]),
            obstacles=(
                _box([1.8, 1.6], [3.1, 2.9]),
                _box([3.6, 2.4], [4.6, 3.6]),
            ),
            speed=0.05,
            gain=1.0,
        ),
    )
    return {b.name: b for b in (motor, spacecraft, glucose, cart, high25)}


_CACHE: dict[str, Benchmark] | None = None


def benchmark(name: str) -> Benchmark:
    """Look up a benchmark by name; raises listing valid names on a miss."""
    global _CACHE
    if _CACHE is None:
        _CACHE = _registry()
    try:
        return _CACHE[name]
    except KeyError:
        valid = ", ".join(sorted(_CACHE))
        raise BenchmarkLookupError(f"unknown benchmark {name!r}; valid names: {valid}") from None


def benchmark_names() -> tuple[str, ...]:
    global _CACHE
    if _CACHE is None:
        _CACHE = _registry()
    return tuple(_CACHE)


def benchmark_table() -> list[tuple[str, int, int, str, int, float]]:
    """Rows (name, n, n_hat, specification, T, reference runtime)."""
    return [
        (b.name, b.state_dim, b.rom_dim, b.specification, b.sample_count, b.reference_runtime)
        for b in (benchmark(n) for n in benchmark_names())
    ]


def metadata_document(bench: Benchmark) -> str:
    """Human/machine-readable dump of a benchmark's bounds and sets."""
    lines = [
        f"benchmark {bench.name}",
        f"n = {bench.state_dim}",
        f"m = {bench.input_dim}",
        f"n_hat = {bench.rom_dim}",
        f"specification = {bench.specification}",
        f"T = {bench.sample_count}",
        f"data_tau = {bench.data_tau:.17g}",
        f"kappa_hat = {bench.kappa_hat:.17g}",
        f"epsilon = {bench.epsilon:.17g}",
        f"a_hat_decay = {bench.a_hat_decay:.17g}",
        f"b_hat_scale = {bench.b_hat_scale:.17g}",
        f"excitation_bound = {bench.excitation_bound:.17g}",
        f"rom_input_bound = {bench.rom_input_bound:.17g}",
    ]
    task = bench.task
    if isinstance(task, SafetySpec):
        kind = "sum of outputs" if task.on_sum else "outputs " + str(list(task.dims))
        lines.append(f"safe box on {kind}: lower = {task.lower.tolist()}, upper = {task.upper.tolist()}")
    elif isinstance(task, ReachAvoidSpec):
        lines.append(f"position outputs: {list(task.dims)}")
        lines.append(f"start box: {task.start_lower.tolist()} .. {task.start_upper.tolist()}")
        lines.append(f"target box: {task.target_lower.tolist()} .. {task.target_upper.tolist()}")
        for i, (lo, hi) in enumerate(task.obstacles):
            lines.append(f"obstacle {i}: {lo.tolist()} .. {hi.tolist()}")
    elif isinstance(task, TrackingSpec):
        lines.append("no closed-loop task (certificate construction only)")
    return "\n".join(lines) + "\n"
