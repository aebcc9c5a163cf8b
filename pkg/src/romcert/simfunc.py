"""Quadratic simulation function: constants, conditions and the error bound.

V(x, x_hat) = (x - Theta x_hat)^T P (x - Theta x_hat) certifies output
closeness through two inequalities: alpha ||y - y_hat||^2 <= V and
LV <= -kappa V + rho ||u_hat||^2 along the interfaced dynamics.  The
resulting guarantee on the output error is

    ||y(t) - y_hat(t)||  <=  (1/alpha) V(x0, x_hat0) e^(-kappa t)
                             + rho / (alpha kappa) * sup ||u_hat||.

The transient shape e^(-kappa t) instantiates the decaying comparison
function; it reproduces the reported steady terms exactly because the
steady part is independent of that choice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .certificate import Certificate, solve_feasibility
from .data import DataSet
from .errors import GramConditioningError, RomcertError, SfViolationError, VerificationInfeasibleError
from .rom import DataRepresentation, Rom
from .systems import LtiPlant

GRAM_COND_LIMIT = 1e12


@dataclass(frozen=True)
class SfConstants:
    alpha: float
    kappa_hat: float
    epsilon: float
    rho: float

    def __post_init__(self):
        if self.alpha <= 0:
            raise RomcertError("alpha must be positive")
        if not (0.0 < self.epsilon < self.kappa_hat):
            raise RomcertError("epsilon must lie in (0, kappa_hat)")
        if self.rho < 0:
            raise RomcertError("rho must be nonnegative")

    @property
    def kappa(self) -> float:
        return self.kappa_hat - self.epsilon


def evaluate_sf(x: np.ndarray, x_hat: np.ndarray, p: np.ndarray, theta: np.ndarray) -> float:
    """Quadratic form (x - Theta x_hat)^T P (x - Theta x_hat)."""
    x = np.asarray(x, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    theta = np.atleast_2d(theta)
    if x.shape[0] != theta.shape[0] or x_hat.shape[0] != theta.shape[1]:
        raise RomcertError(
            f"dimension mismatch: x {x.shape}, x_hat {x_hat.shape}, theta {theta.shape}"
        )
    e = x - theta @ x_hat
    return float(e @ p @ e)


def sqrtm_psd(p: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition, eigenvalues floored at 0."""
    w, v = np.linalg.eigh(0.5 * (p + p.T))
    return v @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ v.T


def compute_psi(rep: DataRepresentation, p: np.ndarray, theta: np.ndarray, b_hat: np.ndarray) -> np.ndarray:
    """P-weighted least-squares feedforward: argmin ||sqrt(P)(b_data Psi - Theta b_hat)||."""
    b = rep.b_data
    gram = b.T @ p @ b
    if gram.size and np.linalg.cond(gram) > GRAM_COND_LIMIT:
        raise GramConditioningError(
            f"input Gram matrix b_data^T P b_data has condition number {np.linalg.cond(gram):.2e}; "
            "strengthen the input excitation or rescale b_hat"
        )
    return np.linalg.solve(gram, b.T @ p @ theta @ np.atleast_2d(b_hat))


def compute_rho(
    rep: DataRepresentation,
    p: np.ndarray,
    theta: np.ndarray,
    b_hat: np.ndarray,
    psi: np.ndarray,
    epsilon: float,
) -> float:
    """rho = (1/epsilon) ||sqrt(P) (b_data Psi - Theta b_hat)||_2^2 (spectral norm)."""
    if epsilon <= 0:
        raise RomcertError("epsilon must be positive")
    mismatch = rep.b_data @ np.atleast_2d(psi) - np.atleast_2d(theta) @ np.atleast_2d(b_hat)
    return float(np.linalg.norm(sqrtm_psd(p) @ mismatch, 2) ** 2 / epsilon)


def closeness_bound(
    v0: float,
    alpha: float,
    kappa: float,
    rho: float,
    u_hat_sup: float,
    t,
):
    """Guaranteed output-error bound (1/alpha) v0 e^(-kappa t) + rho/(alpha kappa) u_hat_sup.

    ``t`` may be a scalar or an array of times.
    """
    if alpha <= 0 or kappa <= 0:
        raise RomcertError("alpha and kappa must be positive")
    t = np.asarray(t, dtype=float)
    out = (v0 / alpha) * np.exp(-kappa * t) + (rho / (alpha * kappa)) * u_hat_sup
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ClosenessBound:
    """Bound curve evaluated on a time grid."""

    v0: float
    u_hat_sup: float
    constants: SfConstants
    times: np.ndarray
    values: np.ndarray

    @classmethod
    def on_grid(cls, v0: float, u_hat_sup: float, constants: SfConstants, times: np.ndarray):
        vals = closeness_bound(v0, constants.alpha, constants.kappa, constants.rho, u_hat_sup, times)
        return cls(v0, u_hat_sup, constants, np.asarray(times, dtype=float), np.asarray(vals, dtype=float))

    @property
    def steady_value(self) -> float:
        c = self.constants
        return c.rho / (c.alpha * c.kappa) * self.u_hat_sup


@dataclass(frozen=True)
class SfConditionReport:
    samples: int
    max_lower_violation: float   # condition: alpha ||y - y_hat||^2 <= V
    max_decay_violation: float   # condition: LV <= -kappa V + rho ||u_hat||^2
    witness: tuple | None

    @property
    def passed(self) -> bool:
        return self.witness is None


def check_sf_conditions(
    plant: LtiPlant,
    cert: Certificate,
    rom: Rom,
    sample_count: int,
    seed: int,
    state_bound: float = 2.0,
    rom_state_bound: float = 2.0,
    input_bound: float = 6.0,
    slack: float = 1e-9,
    raise_on_violation: bool = True,
) -> SfConditionReport:
    """Sample random (x, x_hat, u_hat) triples and test both SF conditions.

    The decay condition is evaluated with the analytic directional
    derivative of V along the true plant dynamics under the interface map;
    the certificate is exercised against the ground truth, not against its
    own data.
    """
    if cert.rho is None:
        raise RomcertError("certificate has no rho; compute the interface feedforward first")
    rng = np.random.default_rng(seed)
    n = plant.state_dim
    n_hat = rom.reduced_dim
    m_hat = rom.reduced_input_dim
    p = cert.p_matrix
    theta, xi, psi = rom.theta, rom.xi, rom.psi
    a, b = plant.a_matrix, plant.b_matrix
    alpha, kappa, rho = cert.alpha, cert.kappa, cert.rho

    xs = rng.uniform(-state_bound, state_bound, (sample_count, n))
    xhs = rng.uniform(-rom_state_bound, rom_state_bound, (sample_count, n_hat))
    uhs = rng.uniform(-input_bound, input_bound, (sample_count, m_hat))

    err = xs - xhs @ theta.T
    v_vals = np.einsum("ij,jk,ik->i", err, p, err)
    lower_viol = alpha * np.einsum("ij,ij->i", err, err) - v_vals

    us = err @ cert.f_gain.T + xhs @ xi.T + uhs @ psi.T
    plant_drift = xs @ a.T + us @ b.T
    rom_drift = (xhs @ rom.a_hat.T + uhs @ rom.b_hat.T) @ theta.T
    lie = 2.0 * np.einsum("ij,jk,ik->i", err, p, plant_drift - rom_drift)
    decay_viol = lie - (-kappa * v_vals + rho * np.einsum("ij,ij->i", uhs, uhs))

    witness = None
    worst_lower = float(lower_viol.max())
    worst_decay = float(decay_viol.max())
    if worst_lower > slack:
        i = int(np.argmax(lower_viol))
        witness = ("lower-bound", xs[i], xhs[i], uhs[i])
    elif worst_decay > slack:
        i = int(np.argmax(decay_viol))
        witness = ("decay", xs[i], xhs[i], uhs[i])

    report = SfConditionReport(sample_count, worst_lower, worst_decay, witness)
    if witness is not None and raise_on_violation:
        cond, x_w, xh_w, uh_w = witness
        viol = worst_lower if cond == "lower-bound" else worst_decay
        raise SfViolationError(cond, viol, (x_w, xh_w, uh_w))
    return report


def verify_autonomous(
    data_zero_input: DataSet,
    kappa_hat: float,
    n_hat: int,
    epsilon: float | None = None,
    residual_tol: float = 1e-7,
) -> tuple[np.ndarray, np.ndarray, Certificate]:
    """Verification mode for input-free plants.

    Solves the decay condition on the zero-input matrices, then builds
    Theta from real eigenvectors (and planar blocks of complex pairs) of
    the reconstructed drift so that a_data Theta = Theta a_hat holds with
    a_hat the least-squares compression of the drift onto span(Theta).
    Dominant (slowest) modes are preferred.  The feedforward term is
    absent, so the bound carries rho = 0.
    """
    data = data_zero_input
    if data.input_dim > 0 and np.linalg.norm(data.u0) > 0:
        raise RomcertError("verification mode requires zero-input data")
    zero_view = DataSet(
        data.u0, data.xbar0, data.xbar1, data.xbar0, data.xbar1, data.tau, data.shared_initial_state
    )
    cert = solve_feasibility(zero_view, kappa_hat, epsilon=epsilon)
    a_data = data.xbar1 @ cert.qbar_matrix

    eigvals, eigvecs = np.linalg.eig(a_data)
    order = np.argsort(-eigvals.real)  # slowest (dominant) modes first
    cols: list[np.ndarray] = []
    used = set()
    for i in order:
        if len(cols) >= n_hat or i in used:
            continue
        lam, vec = eigvals[i], eigvecs[:, i]
        if abs(lam.imag) < 1e-10:
            cols.append(vec.real / np.linalg.norm(vec.real))
            used.add(i)
        else:
            if n_hat - len(cols) < 2:
                continue  # a complex pair needs a 2-D slot
            j = int(np.argmin(np.abs(eigvals - lam.conjugate())))
            for v in (vec.real, vec.imag):
                cols.append(v / np.linalg.norm(v))
            used.update((i, j))
    if len(cols) < n_hat:
        raise VerificationInfeasibleError(
            f"no real invariant subspace of dimension {n_hat}: the drift offers only "
            f"{len(cols)} real directions among its dominant modes"
        )
    theta = np.column_stack(cols[:n_hat])
    a_hat = np.linalg.solve(theta.T @ theta, theta.T @ a_data @ theta)
    resid = float(np.linalg.norm(a_data @ theta - theta @ a_hat, "fro"))
    if resid > residual_tol:
        raise VerificationInfeasibleError(
            f"invariance residual {resid:.2e} exceeds {residual_tol:g} for n_hat = {n_hat}"
        )
    return theta, a_hat, cert.with_rho(0.0)
