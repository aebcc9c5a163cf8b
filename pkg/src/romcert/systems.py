"""Continuous-time LTI plants and fixed-step simulation.

The plant matrices here play the role of the ground truth.  They feed the
simulator and the oracle-mode derivative, never the certificate pipeline,
which sees trajectories only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InsufficientDataError, IntegrationDivergedError, RomcertError


def _frozen_array(a, shape=None, name="array") -> np.ndarray:
    out = np.array(a, dtype=float)
    if shape is not None and out.shape != shape:
        raise RomcertError(f"{name} has shape {out.shape}, expected {shape}")
    if not np.all(np.isfinite(out)):
        raise RomcertError(f"{name} contains non-finite entries")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class LtiPlant:
    """Ground-truth linear plant x' = A x + B u with full-state output."""

    a_matrix: np.ndarray
    b_matrix: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a_matrix, dtype=float))
        if a.shape[0] != a.shape[1]:
            raise RomcertError(f"a_matrix must be square, got {a.shape}")
        b = np.asarray(self.b_matrix, dtype=float).reshape(a.shape[0], -1)
        object.__setattr__(self, "a_matrix", _frozen_array(a, name="a_matrix"))
        object.__setattr__(self, "b_matrix", _frozen_array(b, name="b_matrix"))

    @property
    def state_dim(self) -> int:
        return self.a_matrix.shape[0]

    @property
    def input_dim(self) -> int:
        return self.b_matrix.shape[1]


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled state/input history of one simulation."""

    times: np.ndarray
    states: np.ndarray  # (T, n)
    inputs: np.ndarray  # (T, m)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.atleast_2d(np.asarray(self.states, dtype=float))
        u = np.asarray(self.inputs, dtype=float).reshape(x.shape[0], -1)
        if not (len(t) == x.shape[0] == u.shape[0]):
            raise RomcertError("times, states and inputs must share their length")
        dt = np.diff(t)
        if len(dt) and (np.any(dt <= 0) or not np.allclose(dt, dt[0], rtol=1e-9, atol=1e-12)):
            raise RomcertError("times must be strictly increasing with uniform spacing")
        object.__setattr__(self, "times", _frozen_array(t, name="times"))
        object.__setattr__(self, "states", _frozen_array(x, name="states"))
        object.__setattr__(self, "inputs", _frozen_array(u, name="inputs"))

    @property
    def tau(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def __len__(self) -> int:
        return len(self.times)


def rk4_step(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step for x' = f(x), local error O(dt^5)."""
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_transition(a: np.ndarray, b: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact one-step RK4 propagators (Phi, Gamma) for x' = A x + B u under ZOH.

    For a linear system with the input held over the step, classical RK4
    reduces to x+ = Phi x + Gamma u with Phi the degree-4 Taylor polynomial
    of expm(A dt).  Precomputing these makes long co-simulations one matvec
    per step while remaining bit-identical to the generic stepper.
    """
    n = a.shape[0]
    eye = np.eye(n)
    a2 = a @ a
    a3 = a2 @ a
    a4 = a3 @ a
    phi = eye + dt * a + (dt**2 / 2.0) * a2 + (dt**3 / 6.0) * a3 + (dt**4 / 24.0) * a4
    gamma = (dt * eye + (dt**2 / 2.0) * a + (dt**3 / 6.0) * a2 + (dt**4 / 24.0) * a3) @ b
    return phi, gamma


def simulate(
    plant: LtiPlant,
    x0: np.ndarray,
    input_signal: Callable[[float], np.ndarray] | None,
    tau: float,
    steps: int,
) -> Trajectory:
    """Integrate the plant with fixed-step RK4 and zero-order-hold inputs.

    ``input_signal`` maps a sample time to the input vector held over the
    following interval; ``None`` means zero input.  Returns states at
    t = 0, tau, ..., steps*tau.
    """
    if tau <= 0:
        raise RomcertError("tau must be positive")
    if steps < 1:
        raise RomcertError("steps must be at least 1")
    n, m = plant.state_dim, plant.input_dim
    x = np.asarray(x0, dtype=float).reshape(n)
    a, b = plant.a_matrix, plant.b_matrix

    times = np.arange(steps + 1) * tau
    states = np.empty((steps + 1, n))
    inputs = np.zeros((steps + 1, m))
    states[0] = x
    for k in range(steps):
        u = np.zeros(m) if input_signal is None else np.asarray(input_signal(times[k]), dtype=float).reshape(m)
        inputs[k] = u
        x = rk4_step(lambda z: a @ z + b @ u, x, tau)
        if not np.all(np.isfinite(x)):
            raise IntegrationDivergedError(k + 1, times[k + 1])
        states[k + 1] = x
    # input at the final sample, for alignment with the state grid
    if input_signal is not None:
        inputs[steps] = np.asarray(input_signal(times[steps]), dtype=float).reshape(m)
    return Trajectory(times, states, inputs)


def exact_derivative(plant: LtiPlant, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Oracle-mode state derivative A x + B u (noise-free by definition)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (plant.state_dim,):
        raise RomcertError(f"state has shape {x.shape}, expected ({plant.state_dim},)")
    if u.shape != (plant.input_dim,):
        raise RomcertError(f"input has shape {u.shape}, expected ({plant.input_dim},)")
    return plant.a_matrix @ x + plant.b_matrix @ u


def finite_difference_derivatives(traj: Trajectory) -> np.ndarray:
    """Forward-difference derivative estimates at the first T-1 samples.

    The approximation error is proportional to the sampling interval tau;
    callers opting into this mode trade exactness for measurability.
    """
    if len(traj) < 2:
        raise InsufficientDataError("finite differences need at least two samples")
    dt = traj.tau
    return (traj.states[1:] - traj.states[:-1]) / dt
