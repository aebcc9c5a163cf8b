"""Interface map, desk-scale ROM policies, and plant/ROM co-simulation.

The interface u = F (x - Theta x_hat) + Xi x_hat + Psi u_hat makes the
joint plant/ROM pair a single linear system driven by the ROM input, so a
co-simulation is one precomputed RK4 transition per step.  Policies are
stateless maps from the ROM state to a clamped ROM input; they stand in
for an external symbolic synthesis tool on the fully actuated ROM.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .certificate import Certificate
from .benchmarks import ReachAvoidSpec, SafetySpec
from .errors import IntegrationDivergedError, PlanningInfeasibleError, RomcertError, SafetyMarginError
from .rom import Rom
from .simfunc import ClosenessBound, SfConstants, evaluate_sf
from .systems import LtiPlant, rk4_transition


def refine_input(x: np.ndarray, x_hat: np.ndarray, u_hat: np.ndarray, rom: Rom, f_gain: np.ndarray) -> np.ndarray:
    """Refine a ROM input to a plant input through the interface map."""
    e = np.asarray(x, dtype=float) - rom.theta @ np.asarray(x_hat, dtype=float)
    return f_gain @ e + rom.xi @ np.asarray(x_hat, dtype=float) + rom.psi @ np.asarray(u_hat, dtype=float)


def sf_constants(cert: Certificate) -> SfConstants:
    if cert.rho is None:
        raise RomcertError("certificate has no rho yet")
    return SfConstants(alpha=cert.alpha, kappa_hat=cert.kappa_hat, epsilon=cert.epsilon, rho=cert.rho)


def error_margin(cert: Certificate, u_hat_sup: float, v0: float = 0.0) -> float:
    """Certified tracking margin: steady bound plus the initial-offset term at t = 0."""
    c = sf_constants(cert)
    return c.rho / (c.alpha * c.kappa) * u_hat_sup + (v0 / c.alpha if v0 > 0 else 0.0)


# ---------------------------------------------------------------------------
# Policies


@dataclass(frozen=True)
class SafetyPolicy:
    """Saturated proportional hold at the safe-box preimage center."""

    center: np.ndarray            # x_hat equilibrium target
    gain: float
    input_bound: float
    margin: float                 # certified tracking margin used for shrinking
    u_hat_sup: float              # guaranteed policy sup norm
    start_lower: np.ndarray       # admissible x_hat start window (margin-shrunk)
    start_upper: np.ndarray
    output_map: np.ndarray        # constrained rows of theta (or their sum)

    def __call__(self, x_hat: np.ndarray) -> np.ndarray:
        x_hat = np.asarray(x_hat, dtype=float)
        return np.clip(self.gain * (self.center - x_hat), -self.input_bound, self.input_bound)

    def sample_start(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.start_lower, self.start_upper)


def _constrained_output_map(rom: Rom, spec: SafetySpec) -> np.ndarray:
    if spec.on_sum:
        return rom.theta.sum(axis=0, keepdims=True)
    return rom.theta[np.asarray(spec.dims, dtype=int), :]


def safety_controller(rom: Rom, cert: Certificate, spec: SafetySpec, input_bound: float) -> SafetyPolicy:
    """Hold the constrained ROM outputs inside the safe box.

    The start window is the box preimage shrunk by the certified margin;
    margin and the policy's input magnitude are solved as a short fixed
    point (the margin scales with the input the policy needs, which scales
    with the window the margin leaves).
    """
    cmap = _constrained_output_map(rom, spec)
    n_hat = rom.reduced_dim
    if n_hat != 1:
        raise RomcertError("safety_controller currently supports one-dimensional ROMs")
    coeffs = cmap[:, 0]
    center_out = 0.5 * (spec.lower + spec.upper)
    x_center = float(coeffs @ center_out / (coeffs @ coeffs))

    margin = 0.0
    u_sup = 0.0
    window = (x_center, x_center)
    for _ in range(6):
        lo = np.where(coeffs > 0, spec.lower + margin, spec.upper - margin) / coeffs
        hi = np.where(coeffs > 0, spec.upper - margin, spec.lower + margin) / coeffs
        left, right = float(lo.max()), float(hi.min())
        if left > right:
            raise SafetyMarginError(
                f"safe box preimage is empty after shrinking by the certified margin {margin:.4g}"
            )
        window = (left, right)
        half = 0.5 * (right - left)
        u_sup = min(spec.gain * half + abs(np.clip(x_center, left, right)) * _drift_gain(rom), input_bound)
        margin = error_margin(cert, u_sup)

    widths = spec.upper - spec.lower
    if np.any(widths < 2.0 * margin):
        raise SafetyMarginError(
            f"safe box (smallest width {widths.min():.4g}) is smaller than twice the certified "
            f"error margin {margin:.4g}"
        )
    return SafetyPolicy(
        center=np.array([np.clip(x_center, *window)]),
        gain=spec.gain,
        input_bound=input_bound,
        margin=margin,
        u_hat_sup=u_sup,
        start_lower=np.array([window[0]]),
        start_upper=np.array([window[1]]),
        output_map=cmap,
    )


def _drift_gain(rom: Rom) -> float:
    # worst-case input needed to cancel the ROM's own drift at the hold point
    bh = rom.b_hat
    return float(np.linalg.norm(rom.a_hat, 2) / max(np.linalg.svd(bh, compute_uv=False)[-1], 1e-300))


@dataclass(frozen=True)
class WaypointPolicy:
    """Track a planned waypoint chain with saturated proportional feedback.

    Stateless: the active waypoint is the successor of the nearest one, so
    the policy is a pure function of the ROM state and is safe to share
    across runs and threads.
    """

    waypoints: np.ndarray         # (W, 2) positions, last one inside the target
    position_map: np.ndarray      # 2 x n_hat rows of theta
    input_gain: np.ndarray        # maps desired position velocity to u_hat
    speed: float
    gain: float
    input_bound: float
    margin: float
    u_hat_sup: float
    target_lower: np.ndarray
    target_upper: np.ndarray
    capture_radius: float

    def __call__(self, x_hat: np.ndarray) -> np.ndarray:
        x_hat = np.asarray(x_hat, dtype=float)
        batched = x_hat.ndim == 2
        pos = x_hat @ self.position_map.T if batched else self.position_map @ x_hat
        pos2 = np.atleast_2d(pos)
        d = np.linalg.norm(pos2[:, None, :] - self.waypoints[None, :, :], axis=2)
        nearest = np.argmin(d, axis=1)
        # target the successor unless the nearest waypoint is still far away
        advance = d[np.arange(len(pos2)), nearest] <= self.capture_radius
        target_idx = np.minimum(nearest + advance, len(self.waypoints) - 1)
        target = self.waypoints[target_idx]
        err = target - pos2
        vel = self.gain * err
        nrm = np.linalg.norm(vel, axis=1, keepdims=True)
        scale = np.minimum(1.0, self.speed / np.maximum(nrm, 1e-300))
        vel = vel * scale
        u = vel @ self.input_gain.T
        u = np.clip(u, -self.input_bound, self.input_bound)
        return u if batched else u[0]

    def reached(self, x_hat: np.ndarray) -> bool:
        pos = self.position_map @ np.asarray(x_hat, dtype=float)
        return bool(
            np.all(pos >= self.target_lower + self.margin) and np.all(pos <= self.target_upper - self.margin)
        )


def _grid_path(start: np.ndarray, goal: np.ndarray, obstacles, domain_lo, domain_hi, cells: int = 50):
    """Breadth-first path of cell centers avoiding inflated obstacles."""
    span = domain_hi - domain_lo
    step = span / cells

    def cell_of(p):
        idx = np.floor((p - domain_lo) / step).astype(int)
        return tuple(np.clip(idx, 0, cells - 1))

    def center(c):
        return domain_lo + (np.array(c) + 0.5) * step

    blocked = np.zeros((cells, cells), dtype=bool)
    for lo, hi in obstacles:
        i0 = np.clip(np.floor((lo - domain_lo) / step).astype(int), 0, cells - 1)
        i1 = np.clip(np.ceil((hi - domain_lo) / step).astype(int), 0, cells)
        blocked[i0[0]:i1[0], i0[1]:i1[1]] = True

    s, g = cell_of(start), cell_of(goal)
    if blocked[s] or blocked[g]:
        raise PlanningInfeasibleError("start or goal cell is covered by an inflated obstacle")
    prev = {s: None}
    queue = [s]
    while queue:
        cur = queue.pop(0)
        if cur == g:
            break
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nxt = (cur[0] + dx, cur[1] + dy)
            if 0 <= nxt[0] < cells and 0 <= nxt[1] < cells and nxt not in prev and not blocked[nxt]:
                prev[nxt] = cur
                queue.append(nxt)
    if g not in prev:
        raise PlanningInfeasibleError("no obstacle-free grid path from start to target after inflation")
    path = [g]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    path.reverse()
    pts = [center(c) for c in path]
    # keep corners only; intermediate collinear cells add nothing
    keep = [pts[0]]
    for a, b, c in zip(pts, pts[1:], pts[2:]):
        if not np.allclose(b - a, c - b):
            keep.append(b)
    keep.append(pts[-1])
    return np.array(keep), float(np.linalg.norm(step))


def reach_avoid_controller(
    rom: Rom,
    cert: Certificate,
    spec: ReachAvoidSpec,
    input_bound: float,
) -> WaypointPolicy:
    """Plan a waypoint chain through the inflated obstacle field and track it."""
    cmap = rom.theta[np.asarray(spec.dims, dtype=int), :]
    if cmap.shape[0] != 2:
        raise RomcertError("reach_avoid_controller expects two position outputs")
    pos_b = cmap @ rom.b_hat
    if np.linalg.cond(pos_b) > 1e8:
        raise RomcertError("position outputs are not controllable through the reduced inputs")
    input_gain = np.linalg.inv(pos_b)

    u_sup = min(float(np.linalg.norm(input_gain, 2)) * spec.speed, input_bound * np.sqrt(pos_b.shape[0]))
    margin = error_margin(cert, u_sup)

    target_widths = spec.target_upper - spec.target_lower
    if np.any(target_widths < 2.0 * margin):
        raise SafetyMarginError(
            f"target box (smallest width {target_widths.min():.4g}) is smaller than twice the "
            f"certified error margin {margin:.4g}"
        )

    start = 0.5 * (spec.start_lower + spec.start_upper)
    goal = 0.5 * (spec.target_lower + spec.target_upper)
    all_pts = [spec.start_lower, spec.start_upper, spec.target_lower, spec.target_upper]
    for lo, hi in spec.obstacles:
        all_pts.extend([lo, hi])
    domain_lo = np.min(all_pts, axis=0) - 1.0
    domain_hi = np.max(all_pts, axis=0) + 1.0

    track_slack = 0.25 * float(np.min(domain_hi - domain_lo)) / 50.0 + margin
    inflated = tuple((lo - track_slack, hi + track_slack) for lo, hi in spec.obstacles)
    waypoints, cell_diag = _grid_path(start, goal, inflated, domain_lo, domain_hi)

    return WaypointPolicy(
        waypoints=waypoints,
        position_map=cmap,
        input_gain=input_gain,
        speed=spec.speed,
        gain=spec.gain,
        input_bound=input_bound,
        margin=margin,
        u_hat_sup=u_sup,
        target_lower=spec.target_lower,
        target_upper=spec.target_upper,
        capture_radius=cell_diag,
    )


# ---------------------------------------------------------------------------
# Co-simulation


@dataclass(frozen=True)
class CosimRecord:
    """Paired plant/ROM run with the certified bound alongside the error.

    The stored grid may be strided for large runs; ``max_output_error``,
    ``max_bound_violation`` and the task flags are evaluated on the full
    integration grid.
    """

    times: np.ndarray
    plant_states: np.ndarray    # (K, n)
    rom_states: np.ndarray      # (K, n_hat)
    rom_inputs: np.ndarray      # (K, m_hat)
    refined_inputs: np.ndarray  # (K, m)
    output_error: np.ndarray    # (K,)
    bound: ClosenessBound
    max_output_error: float
    max_bound_violation: float
    u_hat_sup: float
    always_contained: bool = True   # tracked outputs stayed in contain_box
    obstacle_hit: bool = False      # tracked outputs entered some avoid box
    final_tracked: np.ndarray | None = None

    @property
    def dominated(self) -> bool:
        return self.max_bound_violation <= 1e-9


def cosimulate(
    plant: LtiPlant,
    rom: Rom,
    cert: Certificate,
    policy,
    x0: np.ndarray,
    x_hat0: np.ndarray,
    tau: float,
    horizon: float,
    record_stride: int | None = None,
) -> CosimRecord:
    records = cosimulate_batch(
        plant, rom, cert, policy,
        np.atleast_2d(np.asarray(x0, dtype=float)),
        np.atleast_2d(np.asarray(x_hat0, dtype=float)),
        tau, horizon, record_stride,
    )
    return records[0]


def cosimulate_batch(
    plant: LtiPlant,
    rom: Rom,
    cert: Certificate,
    policy,
    x0s: np.ndarray,
    x_hat0s: np.ndarray,
    tau: float,
    horizon: float,
    record_stride: int | None = None,
) -> list[CosimRecord]:
    """Run many co-simulations on a shared grid (vectorized over runs)."""
    if cert.rho is None:
        raise RomcertError("certificate has no rho; compute the interface feedforward first")
    n, m = plant.state_dim, plant.input_dim
    n_hat, m_hat = rom.reduced_dim, rom.reduced_input_dim
    a, b = plant.a_matrix, plant.b_matrix
    f = cert.f_gain
    theta, xi, psi = rom.theta, rom.xi, rom.psi

    steps = int(round(horizon / tau))
    if steps < 1:
        raise RomcertError("horizon must cover at least one step")
    if record_stride is None:
        record_stride = max(1, steps // 4000)

    a_joint = np.block([
        [a + b @ f, b @ (xi - f @ theta)],
        [np.zeros((n_hat, n)), rom.a_hat],
    ])
    b_joint = np.vstack([b @ psi, rom.b_hat])
    phi, gamma = rk4_transition(a_joint, b_joint, tau)

    runs = x0s.shape[0]
    z = np.hstack([x0s, x_hat0s]).astype(float)          # (runs, n + n_hat)
    v0 = np.array([evaluate_sf(x0s[r], x_hat0s[r], cert.p_matrix, theta) for r in range(runs)])

    consts = sf_constants(cert)
    kept_idx = list(range(0, steps + 1, record_stride))
    if kept_idx[-1] != steps:
        kept_idx.append(steps)
    kept_pos = {k: i for i, k in enumerate(kept_idx)}
    kk = len(kept_idx)

    states = np.empty((runs, kk, n))
    rom_states = np.empty((runs, kk, n_hat))
    rom_inputs = np.zeros((runs, kk, m_hat))
    refined = np.zeros((runs, kk, m))
    errors = np.empty((runs, kk))

    u_sup = np.zeros(runs)
    err_full = np.empty((runs, steps + 1))

    for k in range(steps + 1):
        x = z[:, :n]
        xh = z[:, n:]
        uh = np.atleast_2d(policy(xh)) if policy is not None else np.zeros((runs, m_hat))
        err_full[:, k] = np.linalg.norm(x - xh @ theta.T, axis=1)
        u_sup = np.maximum(u_sup, np.linalg.norm(uh, axis=1))
        if k in kept_pos:
            i = kept_pos[k]
            states[:, i] = x
            rom_states[:, i] = xh
            rom_inputs[:, i] = uh
            refined[:, i] = (x - xh @ theta.T) @ f.T + xh @ xi.T + uh @ psi.T
            errors[:, i] = err_full[:, k]
        if k < steps:
            z = z @ phi.T + uh @ gamma.T
            if not np.all(np.isfinite(z)):
                raise IntegrationDivergedError(k + 1, (k + 1) * tau)

    # dominance is checked on the full integration grid against the final
    # bound curve (whole-run sup of the ROM input)
    t_full = np.arange(steps + 1) * tau
    steady = consts.rho / (consts.alpha * consts.kappa)
    bound_full = (v0[:, None] / consts.alpha) * np.exp(-consts.kappa * t_full)[None, :] \
        + steady * u_sup[:, None]
    viol = err_full - bound_full

    times = np.array(kept_idx, dtype=float) * tau
    out = []
    for r in range(runs):
        bound = ClosenessBound.on_grid(float(v0[r]), float(u_sup[r]), consts, times)
        out.append(CosimRecord(
            times=times,
            plant_states=states[r],
            rom_states=rom_states[r],
            rom_inputs=rom_inputs[r],
            refined_inputs=refined[r],
            output_error=errors[r],
            bound=bound,
            max_output_error=float(err_full[r].max()),
            max_bound_violation=float(viol[r].max()),
            u_hat_sup=float(u_sup[r]),
        ))
    return out
