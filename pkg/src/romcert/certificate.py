"""Feasibility solve for the data-based decay certificate.

Finds H such that X0 H is symmetric positive definite and
X1 H + (X1 H)^T + kappa_hat X0 H is negative semidefinite.  P is the
inverse of X0 H, Q = H P then reproduces the identity X0 Q = I, and
F = U0 Q is the stabilizing feedback gain of the interface map.

The solver is deliberately behind a contract: any method producing an H
that passes ``verify_certificate`` is acceptable.  We parametrize
H = pinv(X0) Y + N Z with N a null-space basis of X0, which keeps X0 H
equal to the symmetric decision variable Y up to machine precision and
removes every equality constraint from the conic program.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np
import scipy.linalg as sla

from .data import DataSet, ResidualCheck, right_pseudoinverse
from .errors import InfeasibleError, RomcertError
from .systems import LtiPlant

COND_WARN_THRESHOLD = 1e12


@dataclass(frozen=True)
class Certificate:
    """Solution of the feasibility problem plus derived constants."""

    h_matrix: np.ndarray   # T x n decision variable
    p_matrix: np.ndarray   # n x n symmetric positive definite
    q_matrix: np.ndarray   # T x n, equal to H P
    qbar_matrix: np.ndarray  # T x n right pseudoinverse of xbar0
    f_gain: np.ndarray     # m x n feedback gain U0 Q
    kappa_hat: float
    epsilon: float
    rho: float | None = None  # filled once the interface feedforward exists
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("h_matrix", "p_matrix", "q_matrix", "qbar_matrix", "f_gain"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (0.0 < self.epsilon < self.kappa_hat):
            raise RomcertError(f"epsilon must lie in (0, kappa_hat); got {self.epsilon} vs {self.kappa_hat}")

    @property
    def alpha(self) -> float:
        return float(np.linalg.eigvalsh(self.p_matrix).min())

    @property
    def kappa(self) -> float:
        return self.kappa_hat - self.epsilon

    def with_rho(self, rho: float) -> "Certificate":
        return dataclasses.replace(self, rho=float(rho))


def _conic_attempts():
    """(solver, kwargs, regularizer) attempts in a fixed, deterministic order."""
    yield cp.CLARABEL, {}, 0.0
    yield cp.CLARABEL, {}, 1e-8
    yield cp.CLARABEL, {"max_iter": 100000}, 1e-6
    yield cp.SCS, {"eps": 1e-10, "max_iters": 100000}, 0.0


def solve_feasibility(
    data: DataSet,
    kappa_hat: float,
    pd_margin: float = 1.0,
    epsilon: float | None = None,
    lmi_margin: float = 1e-4,
) -> Certificate:
    """Solve the decay LMI and assemble the certificate (rho unset).

    The positive-definiteness floor ``pd_margin`` also fixes the overall
    scale of the solution (the problem is homogeneous in H); the default
    of 1 keeps absolute residuals of downstream identities near machine
    precision.  ``epsilon`` defaults to kappa_hat / 3.
    """
    if kappa_hat <= 0:
        raise RomcertError("kappa_hat must be positive")
    if epsilon is None:
        epsilon = kappa_hat / 3.0
    x0, x1, u0 = data.x0, data.x1, data.u0
    n, t_count = x0.shape

    x0_pinv = right_pseudoinverse(x0)
    null_basis = sla.null_space(x0)  # T x (T - n)
    g_range = x1 @ x0_pinv
    g_null = x1 @ null_basis

    h_value = None
    status = ""
    for solver, kwargs, reg in _conic_attempts():
        y = cp.Variable((n, n), symmetric=True)
        z = cp.Variable((t_count - n, n))
        t = cp.Variable()
        s_expr = g_range @ y + g_null @ z
        constraints = [
            y >> pd_margin * np.eye(n),
            y << t * np.eye(n),
            s_expr + s_expr.T + kappa_hat * y << -lmi_margin * np.eye(n),
        ]
        objective = t + reg * cp.sum_squares(g_null @ z) if reg else t
        problem = cp.Problem(cp.Minimize(objective), constraints)
        try:
            problem.solve(solver=solver, **kwargs)
        except cp.error.SolverError:
            continue
        status = problem.status
        if status in ("infeasible", "infeasible_inaccurate"):
            raise InfeasibleError(
                f"decay condition with kappa_hat = {kappa_hat:g} is infeasible; the feasibility "
                "problem is solvable exactly when the pair (A, B) behind the data is stabilizable "
                "and the requested decay is achievable through the input channels"
            )
        if y.value is None:
            continue
        candidate = x0_pinv @ y.value + null_basis @ z.value
        if _candidate_ok(x0, x1, candidate, kappa_hat, pd_margin):
            h_value = candidate
            break

    if h_value is None:
        raise InfeasibleError(
            f"no conic solver produced a feasible certificate (last status: {status or 'none'}); "
            "if the plant has an uncontrollable unstable mode the problem is infeasible by "
            "stabilizability, otherwise try a smaller kappa_hat"
        )

    m_prod = x0 @ h_value
    m_sym = 0.5 * (m_prod + m_prod.T)  # absorb residual solver asymmetry
    p = np.linalg.inv(m_sym)
    p = 0.5 * (p + p.T)
    q = h_value @ p
    f_gain = u0 @ q if data.input_dim > 0 else np.zeros((0, n))
    qbar = right_pseudoinverse(data.xbar0)

    warnings = []
    cond = float(np.linalg.cond(m_sym))
    if cond > COND_WARN_THRESHOLD:
        warnings.append(f"X0 H is ill-conditioned (condition number {cond:.3e} > {COND_WARN_THRESHOLD:.0e})")

    return Certificate(
        h_matrix=h_value,
        p_matrix=p,
        q_matrix=q,
        qbar_matrix=qbar,
        f_gain=f_gain,
        kappa_hat=float(kappa_hat),
        epsilon=float(epsilon),
        warnings=tuple(warnings),
    )


def _candidate_ok(x0, x1, h, kappa_hat, pd_margin) -> bool:
    m_prod = x0 @ h
    if np.linalg.norm(m_prod - m_prod.T, "fro") > 1e-7:
        return False
    m_sym = 0.5 * (m_prod + m_prod.T)
    if np.linalg.eigvalsh(m_sym).min() < 0.5 * pd_margin:
        return False
    s = x1 @ h + h.T @ x1.T + kappa_hat * m_sym
    return bool(np.linalg.eigvalsh(s).max() < 1e-7)


@dataclass(frozen=True)
class CertificateReport:
    checks: tuple[ResidualCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __str__(self) -> str:
        return "\n".join(str(c) for c in self.checks)


def verify_certificate(data: DataSet, cert: Certificate, tolerance: float = 1e-7) -> CertificateReport:
    """Independent residual checks on a certificate, pass/fail at 1e-7."""
    x0, x1 = data.x0, data.x1
    n = data.state_dim
    h = cert.h_matrix
    m_prod = x0 @ h
    sym_resid = float(np.linalg.norm(m_prod - m_prod.T, "fro"))
    lmin = float(np.linalg.eigvalsh(0.5 * (m_prod + m_prod.T)).min())
    s = x1 @ h + h.T @ x1.T + cert.kappa_hat * 0.5 * (m_prod + m_prod.T)
    lmax = float(np.linalg.eigvalsh(s).max())
    id_resid = float(np.linalg.norm(x0 @ cert.q_matrix - np.eye(n), "fro"))
    checks = (
        ResidualCheck("symmetry ||X0 H - (X0 H)^T||", sym_resid, tolerance),
        # positive definiteness: report -lambda_min so "value <= tol" means lambda_min > 0
        ResidualCheck("positive definiteness -lambda_min(X0 H)", -lmin, 0.0),
        ResidualCheck("decay LMI lambda_max(X1 H + H^T X1^T + kappa_hat X0 H)", lmax, tolerance),
        ResidualCheck("identity ||X0 Q - I||", id_resid, tolerance),
    )
    return CertificateReport(checks)


def closed_loop_reconstruction_check(plant: LtiPlant, data: DataSet, cert: Certificate) -> float:
    """Oracle-only residual ||X1 Q - (A + B F)||_F; exact-mode data forces ~0."""
    closed_loop = plant.a_matrix + plant.b_matrix @ cert.f_gain
    return float(np.linalg.norm(data.x1 @ cert.q_matrix - closed_loop, "fro"))
