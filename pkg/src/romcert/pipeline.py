"""End-to-end scenario runs: data to certificate to ROM to co-simulation.

``run_scenario`` executes the construction stages in order, collects every
residual check into a summary, and writes the artifact bundle (certificate
and ROM documents, data CSVs, per-run co-simulation CSVs, bound curves and
figures) into the output directory.  ``reverify`` replays all checks from
the serialized artifacts alone.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import plots
from .benchmarks import ReachAvoidSpec, SafetySpec, TrackingSpec
from .certificate import (
    Certificate,
    closed_loop_reconstruction_check,
    solve_feasibility,
    verify_certificate,
)
from .config import ScenarioConfig
from .data import DataSet, ResidualCheck, UniformExcitation, collect, identity_factor_check, load_bundle, save_bundle
from .docio import load_certificate, load_rom, save_certificate, save_rom
from .errors import RomcertError
from .refine import (
    CosimRecord,
    cosimulate_batch,
    reach_avoid_controller,
    safety_controller,
    sf_constants,
)
from .rom import (
    Rom,
    build_data_representation,
    check_range_condition,
    choose_a_hat,
    choose_b_hat,
    reduction_residual,
    solve_reduction_equation,
)
from .simfunc import check_sf_conditions, compute_psi, compute_rho, verify_autonomous

STAGES = (
    "collect trajectories",
    "pseudoinverse factors",
    "feasibility solve",
    "certificate verification",
    "data representation",
    "reduced matrices",
    "reduction equation",
    "interface feedforward",
    "closeness constants",
    "synthesis and co-simulation",
)


class StageError(RomcertError):
    def __init__(self, stage: int, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage} ({STAGES[stage - 1]}) failed: {cause}")


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    checks: list[ResidualCheck]
    cert: Certificate | None = None
    rom: Rom | None = None
    records: list[CosimRecord] = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    out_dir: Path | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _stage(idx: int):
    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, StageError):
                raise StageError(idx, exc) from exc
            return False

    return _Ctx()


def _theta_aim(config: ScenarioConfig):
    task = config.task
    if isinstance(task, SafetySpec):
        if task.on_sum:
            return None, None
        center = 0.5 * (task.lower + task.upper)
        return np.asarray(task.dims, dtype=int), center
    if isinstance(task, ReachAvoidSpec):
        return np.asarray(task.dims, dtype=int), None
    return None, None


def run_scenario(config: ScenarioConfig, out_dir: str | Path | None = None) -> ScenarioResult:
    t_start = time.perf_counter()
    result = ScenarioResult(config=config, checks=[])
    checks = result.checks
    plant = config.plant
    n = plant.state_dim

    if out_dir is None:
        out_dir = config.output_dir
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        result.out_dir = out_dir

    if config.kind == "verification" and plant.input_dim != 0:
        raise StageError(1, RomcertError("verification mode requires an input-free plant"))

    with _stage(1):
        t0 = time.perf_counter()
        policy = UniformExcitation(-config.excitation_bound, config.excitation_bound, config.seed)
        data = collect(plant, None, policy, config.data_tau, config.samples, config.derivative_mode)
        result.timings["collect_s"] = time.perf_counter() - t0

    if config.kind == "verification":
        return _run_verification(config, data, result, t_start)

    with _stage(2):
        pass  # qbar is produced inside the solve; its identity is checked below

    with _stage(3):
        t0 = time.perf_counter()
        cert = solve_feasibility(data, config.kappa_hat, epsilon=config.epsilon)
        result.timings["solve_s"] = time.perf_counter() - t0
        result.notes.extend(cert.warnings)

    with _stage(4):
        report = verify_certificate(data, cert)
        checks.extend(report.checks)
        qbar_check = identity_factor_check(data.xbar0, cert.qbar_matrix, tolerance=1e-10)
        checks.append(ResidualCheck("identity ||Xbar0 Qbar - I||", qbar_check.value, 1e-10))
        cl_eigs = np.linalg.eigvals(data.x1 @ cert.q_matrix)
        checks.append(ResidualCheck(
            "closed-loop decay max Re eig(X1 Q) + kappa_hat/2",
            float(cl_eigs.real.max() + config.kappa_hat / 2.0),
            1e-6,
        ))

    with _stage(5):
        rep = build_data_representation(data, cert)

    with _stage(6):
        a_hat = choose_a_hat(config.n_hat, config.a_hat_decay)
        b_hat = choose_b_hat(config.n_hat, config.b_hat_scale)

    with _stage(7):
        aim_dims, aim_point = _theta_aim(config)
        theta, xi = solve_reduction_equation(rep, a_hat, config.n_hat, aim_dims=aim_dims, aim_point=aim_point)
        checks.append(ResidualCheck(
            "reduction residual ||A_data Theta - Theta A_hat + B_data Xi||",
            reduction_residual(rep, a_hat, theta, xi),
            1e-7,
        ))
        checks.append(ResidualCheck(
            "range condition holds",
            0.0 if check_range_condition(rep, theta) else 1.0,
            0.5,
        ))

    with _stage(8):
        psi = compute_psi(rep, cert.p_matrix, theta, b_hat)
        rom = Rom(a_hat=a_hat, b_hat=b_hat, theta=theta, xi=xi, psi=psi)
        result.rom = rom

    with _stage(9):
        rho = compute_rho(rep, cert.p_matrix, theta, b_hat, psi, cert.epsilon)
        cert = cert.with_rho(rho)
        result.cert = cert
        sf_report = check_sf_conditions(
            plant, cert, rom, sample_count=1000, seed=config.seed,
            input_bound=config.rom_input_bound, raise_on_violation=False,
        )
        checks.append(ResidualCheck("sf lower-bound sampling max violation", sf_report.max_lower_violation, 1e-9))
        checks.append(ResidualCheck("sf decay sampling max violation", sf_report.max_decay_violation, 1e-9))

    with _stage(10):
        records = _run_task(config, plant, cert, rom, checks, result)
        result.records = records

    result.timings["total_s"] = time.perf_counter() - t_start
    if out_dir is not None:
        _write_artifacts(result, data)
    return result


def _run_task(config, plant, cert, rom, checks, result) -> list[CosimRecord]:
    task = config.task
    consts = sf_constants(cert)
    if isinstance(task, TrackingSpec) or config.num_runs == 0:
        result.notes.append("certificate-construction scenario: no closed-loop task attached")
        return []

    rng = np.random.default_rng((config.seed, 17))
    if isinstance(task, SafetySpec):
        policy = safety_controller(rom, cert, task, config.rom_input_bound)
        result.notes.append(
            f"safety margin {policy.margin:.6g} with policy input sup {policy.u_hat_sup:.6g}"
        )
        x_hat0 = np.array([policy.sample_start(rng) for _ in range(config.num_runs)]).reshape(config.num_runs, -1)
        track = np.zeros((len(task.lower), plant.state_dim))
        if task.on_sum:
            track[0, :] = 1.0
        else:
            for i, d in enumerate(task.dims):
                track[i, d] = 1.0
        contain = (task.lower, task.upper)
        avoid = ()
    else:  # ReachAvoidSpec
        policy = reach_avoid_controller(rom, cert, task, config.rom_input_bound)
        result.notes.append(
            f"reach-avoid margin {policy.margin:.6g} with policy input sup {policy.u_hat_sup:.6g}; "
            f"{len(policy.waypoints)} waypoints"
        )
        dims = np.asarray(task.dims, dtype=int)
        smap = rom.theta[dims, :]
        p0 = rng.uniform(task.start_lower, task.start_upper, (config.num_runs, 2))
        x_hat0 = p0 @ np.linalg.inv(smap).T
        track = np.zeros((2, plant.state_dim))
        for i, d in enumerate(dims):
            track[i, d] = 1.0
        contain = None
        avoid = task.obstacles

    x0 = x_hat0 @ rom.theta.T  # matched starts: the transient bound term vanishes
    records = cosimulate_batch(
        plant, rom, cert, policy, x0, x_hat0, config.cosim_tau, config.horizon,
        track_map=track, contain_box=contain, avoid_boxes=avoid,
    )

    worst_viol = max(r.max_bound_violation for r in records)
    checks.append(ResidualCheck("co-simulation bound dominance max violation", worst_viol, 1e-9))
    max_err = max(r.max_output_error for r in records)
    result.notes.append(f"max co-simulated output error {max_err:.6g} over {len(records)} runs")

    if isinstance(task, SafetySpec):
        bad = sum(0 if r.always_contained else 1 for r in records)
        checks.append(ResidualCheck("safety runs outside the safe box", float(bad), 0.0))
    else:
        missed = 0
        hit = 0
        for r in records:
            final = r.final_tracked
            reached = bool(np.all(final >= task.target_lower) and np.all(final <= task.target_upper))
            missed += 0 if reached else 1
            hit += 1 if r.obstacle_hit else 0
        checks.append(ResidualCheck("reach-avoid runs missing the target", float(missed), 0.0))
        checks.append(ResidualCheck("reach-avoid runs touching an obstacle", float(hit), 0.0))
    return records


def _run_verification(config, data, result, t_start) -> ScenarioResult:
    checks = result.checks
    with _stage(3):
        t0 = time.perf_counter()
        theta, a_hat, cert = verify_autonomous(data, config.kappa_hat, config.n_hat, epsilon=config.epsilon)
        result.timings["solve_s"] = time.perf_counter() - t0
    with _stage(4):
        zero_view = DataSet(
            data.u0, data.xbar0, data.xbar1, data.xbar0, data.xbar1, data.tau, data.shared_initial_state
        )
        report = verify_certificate(zero_view, cert)
        checks.extend(report.checks)
    with _stage(7):
        a_data = data.xbar1 @ cert.qbar_matrix
        resid = float(np.linalg.norm(a_data @ theta - theta @ a_hat, "fro"))
        checks.append(ResidualCheck("invariance residual ||A_data Theta - Theta A_hat||", resid, 1e-7))
    with _stage(10):
        n = config.plant.state_dim
        n_hat = config.n_hat
        rom = Rom(
            a_hat=a_hat,
            b_hat=np.zeros((n_hat, 0)),
            theta=theta,
            xi=np.zeros((0, n_hat)),
            psi=np.zeros((0, 0)),
        )
        result.rom = rom
        result.cert = cert
        rng = np.random.default_rng((config.seed, 23))
        x0 = rng.uniform(-1.0, 1.0, (config.num_runs, n))
        # scale starts so the initial bound (v0/alpha) dominates the initial error
        proj = np.linalg.solve(theta.T @ theta, theta.T @ x0.T).T
        e0 = np.linalg.norm(x0 - proj @ theta.T, axis=1, keepdims=True)
        x0 = x0 * (2.0 / np.maximum(e0, 1e-12))
        x_hat0 = np.linalg.solve(theta.T @ theta, theta.T @ x0.T).T
        records = cosimulate_batch(config.plant, rom, cert, None, x0, x_hat0, config.cosim_tau, config.horizon)
        result.records = records
        worst = max(r.max_bound_violation for r in records)
        checks.append(ResidualCheck("autonomous bound dominance max violation", worst, 1e-9))
    result.timings["total_s"] = time.perf_counter() - t_start
    if result.out_dir is not None:
        _write_artifacts(result, data)
    return result


# ---------------------------------------------------------------------------
# Artifacts


def _write_artifacts(result: ScenarioResult, data: DataSet) -> None:
    out = result.out_dir
    save_bundle(data, out)
    if result.cert is not None:
        save_certificate(result.cert, out / "certificate.txt")
    if result.rom is not None:
        save_rom(result.rom, out / "rom.txt")
    for k, rec in enumerate(result.records):
        _write_run_csv(rec, out / f"run_{k}.csv")
    if result.records:
        _write_bound_csv(result.records, out / "bound_curve.csv")
    (out / "summary.txt").write_text(summary_text(result))
    plots.render_figures(result, out)


def _write_run_csv(rec: CosimRecord, path: Path) -> None:
    n = rec.plant_states.shape[1]
    n_hat = rec.rom_states.shape[1]
    m_hat = rec.rom_inputs.shape[1]
    m = rec.refined_inputs.shape[1]
    header = (
        ["t"]
        + [f"x{i+1}" for i in range(n)]
        + [f"xhat{i+1}" for i in range(n_hat)]
        + [f"uhat{i+1}" for i in range(m_hat)]
        + [f"u{i+1}" for i in range(m)]
        + ["error", "bound"]
    )
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, t in enumerate(rec.times):
            row = (
                [f"{t:.17g}"]
                + [f"{v:.17g}" for v in rec.plant_states[i]]
                + [f"{v:.17g}" for v in rec.rom_states[i]]
                + [f"{v:.17g}" for v in rec.rom_inputs[i]]
                + [f"{v:.17g}" for v in rec.refined_inputs[i]]
                + [f"{rec.output_error[i]:.17g}", f"{rec.bound.values[i]:.17g}"]
            )
            w.writerow(row)


def _write_bound_csv(records: list[CosimRecord], path: Path) -> None:
    times = records[0].times
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "bound"] + [f"empirical_error_{k}" for k in range(len(records))])
        bound = np.max([r.bound.values for r in records], axis=0)
        for i, t in enumerate(times):
            w.writerow(
                [f"{t:.17g}", f"{bound[i]:.17g}"] + [f"{r.output_error[i]:.17g}" for r in records]
            )


def summary_text(result: ScenarioResult) -> str:
    lines = [f"scenario {result.config.name}"]
    cert = result.cert
    if cert is not None and cert.rho is not None:
        c = sf_constants(cert)
        lines.append(f"alpha = {c.alpha:.17g}")
        lines.append(f"kappa_hat = {c.kappa_hat:.17g}")
        lines.append(f"epsilon = {c.epsilon:.17g}")
        lines.append(f"kappa = {c.kappa:.17g}")
        lines.append(f"rho = {c.rho:.17g}")
        lines.append(f"steady bound per unit input = {c.rho / (c.alpha * c.kappa):.17g}")
    if result.records:
        u_sup = max(r.u_hat_sup for r in result.records)
        max_err = max(r.max_output_error for r in result.records)
        bound_at_sup = max(r.bound.steady_value + r.bound.v0 / cert.alpha for r in result.records)
        lines.append(f"recorded sup ||u_hat|| = {u_sup:.17g}")
        lines.append(f"max empirical output error = {max_err:.17g}")
        lines.append(f"max bound value = {bound_at_sup:.17g}")
    for key, val in sorted(result.timings.items()):
        lines.append(f"timing {key} = {val:.6g}")
    for note in result.notes:
        lines.append(f"note: {note}")
    for c in result.checks:
        status = "PASS" if c.passed else "FAIL"
        lines.append(f"CHECK [{status}] {c.name} | value = {c.value:.12g} | tol = {c.tolerance:.12g}")
    lines.append(f"result: {'all checks passed' if result.passed else 'CHECK FAILURES PRESENT'}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Reverification from serialized artifacts


def reverify(directory: str | Path) -> tuple[list[ResidualCheck], bool]:
    """Recompute all data-side checks from the serialized artifact bundle.

    Returns the recomputed checks and whether their verdicts match the
    ones recorded in summary.txt (for the check names both sides share).
    """
    directory = Path(directory)
    cert = load_certificate(directory / "certificate.txt")
    rom = load_rom(directory / "rom.txt")
    data = load_bundle(directory)

    checks: list[ResidualCheck] = []
    report = verify_certificate(data, cert)
    checks.extend(report.checks)
    checks.append(ResidualCheck(
        "identity ||Xbar0 Qbar - I||",
        identity_factor_check(data.xbar0, cert.qbar_matrix, 1e-10).value,
        1e-10,
    ))
    cl_eigs = np.linalg.eigvals(data.x1 @ cert.q_matrix)
    checks.append(ResidualCheck(
        "closed-loop decay max Re eig(X1 Q) + kappa_hat/2",
        float(cl_eigs.real.max() + cert.kappa_hat / 2.0),
        1e-6,
    ))
    rep = build_data_representation(data, cert)
    checks.append(ResidualCheck(
        "reduction residual ||A_data Theta - Theta A_hat + B_data Xi||",
        reduction_residual(rep, rom.a_hat, rom.theta, rom.xi),
        1e-7,
    ))
    checks.append(ResidualCheck(
        "range condition holds",
        0.0 if check_range_condition(rep, rom.theta) else 1.0,
        0.5,
    ))
    if cert.rho is not None and rom.reduced_input_dim > 0:
        # the data-based representation doubles as the sampling dynamics,
        # keeping reverification free of any ground-truth plant
        from .systems import LtiPlant

        pseudo_plant = LtiPlant(rep.a_data, rep.b_data)
        sf_report = check_sf_conditions(
            pseudo_plant, cert, rom, sample_count=1000, seed=1, raise_on_violation=False
        )
        checks.append(ResidualCheck("sf lower-bound sampling max violation", sf_report.max_lower_violation, 1e-9))
        checks.append(ResidualCheck("sf decay sampling max violation", sf_report.max_decay_violation, 1e-9))

    matches = True
    summary_path = directory / "summary.txt"
    if summary_path.exists():
        recorded = _parse_summary_verdicts(summary_path.read_text())
        for c in checks:
            if c.name in recorded and recorded[c.name] != c.passed:
                matches = False
    return checks, matches


def _parse_summary_verdicts(text: str) -> dict[str, bool]:
    out = {}
    for line in text.splitlines():
        if not line.startswith("CHECK ["):
            continue
        verdict = line.split("]", 1)[0].removeprefix("CHECK [")
        name = line.split("] ", 1)[1].split(" | ", 1)[0]
        out[name] = verdict == "PASS"
    return out
