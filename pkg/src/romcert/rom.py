"""Data-based system representation and reduced-order model construction.

The drift and input matrices are reconstructed purely from trajectories:
a_data = xbar1 @ qbar and b_data = (x1 Q - xbar1 qbar) @ pinv(u0 Q).  The
reduction equation  a_data Theta = Theta A_hat - b_data Xi  is homogeneous
and linear in (Theta, Xi); its solution space is the null space of a
Kronecker-lifted operator, from which we pick a combination whose Theta
has well-separated columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .certificate import Certificate
from .data import DataSet, numeric_rank
from .errors import ReductionInfeasibleError, RomcertError

REDUCTION_TOL = 1e-7
FULL_RANK_SIGMA = 1e-6


@dataclass(frozen=True)
class DataRepresentation:
    """Trajectory-only reconstruction of the plant matrices."""

    a_data: np.ndarray  # n x n
    b_data: np.ndarray  # n x m

    def __post_init__(self):
        a = np.asarray(self.a_data, dtype=float)
        b = np.asarray(self.b_data, dtype=float).reshape(a.shape[0], -1)
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a_data", a)
        object.__setattr__(self, "b_data", b)


@dataclass(frozen=True)
class Rom:
    """Reduced model (a_hat, b_hat, c_hat = theta) plus interface gains."""

    a_hat: np.ndarray   # n_hat x n_hat, Hurwitz
    b_hat: np.ndarray   # n_hat x m_hat
    theta: np.ndarray   # n x n_hat reduction matrix; also the ROM output map
    xi: np.ndarray      # m x n_hat interface gain
    psi: np.ndarray     # m x m_hat interface feedforward

    def __post_init__(self):
        for name in ("a_hat", "b_hat", "theta", "xi", "psi"):
            arr = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.linalg.eigvals(self.a_hat).real.max() >= 0:
            raise RomcertError("a_hat must be Hurwitz (all eigenvalues in the open left half-plane)")
        n_hat = self.a_hat.shape[0]
        if self.theta.shape[1] != n_hat:
            raise RomcertError("theta must have n_hat columns")
        if numeric_rank(self.theta) < n_hat:
            raise RomcertError("theta must have full column rank")

    @property
    def c_hat(self) -> np.ndarray:
        return self.theta

    @property
    def reduced_dim(self) -> int:
        return self.a_hat.shape[0]

    @property
    def reduced_input_dim(self) -> int:
        return self.b_hat.shape[1]


def build_data_representation(data: DataSet, cert: Certificate) -> DataRepresentation:
    """Recover (a_data, b_data) from the five sampled matrices."""
    a_data = data.xbar1 @ cert.qbar_matrix
    m = data.input_dim
    if m == 0:
        return DataRepresentation(a_data, np.zeros((data.state_dim, 0)))
    f = cert.f_gain
    if numeric_rank(f) < m:
        raise ReductionInfeasibleError(
            f"feedback gain U0 Q has rank {numeric_rank(f)} < m = {m}; the input matrix cannot "
            "be recovered (excitation did not separate the input directions)"
        )
    b_data = (data.x1 @ cert.q_matrix - a_data) @ np.linalg.pinv(f)
    return DataRepresentation(a_data, b_data)


def choose_a_hat(n_hat: int, decay: float) -> np.ndarray:
    """Reduced drift -decay * I; diagonal keeps Hurwitzness trivial."""
    if decay <= 0:
        raise RomcertError("decay must be positive")
    return -decay * np.eye(n_hat)


def choose_b_hat(n_hat: int, scale: float = 1.0) -> np.ndarray:
    """Fully actuated reduced input matrix scale * I (m_hat = n_hat).

    The scale regulates the certified error constant: a smaller reduced
    input matrix shrinks the feedforward mismatch quadratically while the
    reduced inputs only grow linearly.
    """
    if scale <= 0:
        raise RomcertError("scale must be positive")
    return scale * np.eye(n_hat)


def reduction_residual(rep: DataRepresentation, a_hat: np.ndarray, theta: np.ndarray, xi: np.ndarray) -> float:
    return float(np.linalg.norm(rep.a_data @ theta - theta @ a_hat + rep.b_data @ xi, "fro"))


def lifted_operator(rep: DataRepresentation, a_hat: np.ndarray) -> np.ndarray:
    """Kronecker lift of (Theta, Xi) -> a_data Theta - Theta a_hat + b_data Xi.

    Acts on [vec(Theta); vec(Xi)] with column-major vec; shape
    (n*n_hat) x (n*n_hat + m*n_hat).
    """
    n = rep.a_data.shape[0]
    m = rep.b_data.shape[1]
    n_hat = a_hat.shape[0]
    eye_nh = np.eye(n_hat)
    theta_block = np.kron(eye_nh, rep.a_data) - np.kron(a_hat.T, np.eye(n))
    xi_block = np.kron(eye_nh, rep.b_data)
    return np.hstack([theta_block, xi_block])


def check_range_condition(rep: DataRepresentation, theta: np.ndarray, tol: float = 1e-8) -> bool:
    """True iff every column of a_data Theta lies in span([Theta | b_data])."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if theta.ndim == 2 and theta.shape[0] == 1 and rep.a_data.shape[0] > 1:
        theta = theta.T
    target = rep.a_data @ theta
    basis = np.hstack([theta, rep.b_data])
    resid = target - basis @ np.linalg.pinv(basis) @ target
    col_norms = np.linalg.norm(resid, axis=0)
    scale = np.maximum(1.0, np.linalg.norm(target, axis=0))
    return bool(np.all(col_norms <= tol * scale))


def _normalize_columns(theta: np.ndarray, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # valid per column because a_hat is diagonal there; the generic path
    # normalizes globally instead
    theta = theta.copy()
    xi = xi.copy()
    for j in range(theta.shape[1]):
        nrm = np.linalg.norm(theta[:, j])
        if nrm > 0:
            theta[:, j] /= nrm
            xi[:, j] /= nrm
        i = int(np.argmax(np.abs(theta[:, j])))
        if theta[i, j] < 0:
            theta[:, j] *= -1.0
            xi[:, j] *= -1.0
    return theta, xi


def _pick_aligned(w_theta: np.ndarray, aim_point: np.ndarray, aim_dims) -> np.ndarray:
    """Coefficients maximizing the mass of theta along aim_point (restricted rows)."""
    rows = np.asarray(aim_dims, dtype=int) if aim_dims is not None else np.arange(w_theta.shape[0])
    wd = w_theta[rows, :]
    c = np.asarray(aim_point, dtype=float).reshape(-1, 1)
    num = wd.T @ c @ c.T @ wd
    den = w_theta.T @ w_theta
    vals, vecs = sla.eigh(num, den + 1e-14 * np.eye(den.shape[0]))
    return vecs[:, -1]


def solve_reduction_equation(
    rep: DataRepresentation,
    a_hat: np.ndarray,
    n_hat: int,
    aim_dims=None,
    aim_point=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Solve the homogeneous reduction equation for (Theta, Xi).

    The solution space is the null space of the Kronecker-lifted operator.
    For the diagonal ``a_hat`` used throughout, columns of (Theta, Xi)
    decouple: column j ranges over null([a_data + d_j I | b_data]).  Within
    that space the combination maximizing the smallest singular value of
    Theta (optionally restricted to the rows in ``aim_dims``) is taken from
    an SVD; ``aim_point`` instead tilts a one-column Theta toward a target
    output direction.  Columns are normalized to unit Euclidean norm.
    """
    a_hat = np.atleast_2d(np.asarray(a_hat, dtype=float))
    n = rep.a_data.shape[0]
    m = rep.b_data.shape[1]
    if n_hat > n:
        raise RomcertError(f"n_hat = {n_hat} exceeds the state dimension {n}")
    if a_hat.shape != (n_hat, n_hat):
        raise RomcertError(f"a_hat has shape {a_hat.shape}, expected ({n_hat}, {n_hat})")
    if np.linalg.eigvals(a_hat).real.max() >= 0:
        raise RomcertError("a_hat must be Hurwitz")

    diagonal = np.allclose(a_hat, np.diag(np.diag(a_hat)), atol=0.0)
    if diagonal:
        theta, xi = _solve_diagonal(rep, np.diag(a_hat), aim_dims, aim_point)
    else:
        theta, xi = _solve_generic(rep, a_hat, n_hat)

    smin = np.linalg.svd(theta, compute_uv=False)[-1] if theta.size else 0.0
    if smin <= FULL_RANK_SIGMA:
        raise ReductionInfeasibleError(
            f"no full-column-rank Theta in the solution space (smallest singular value "
            f"{smin:.2e}); the range condition check identifies whether any solution exists"
        )
    resid = reduction_residual(rep, a_hat, theta, xi)
    if resid > REDUCTION_TOL:
        raise ReductionInfeasibleError(f"reduction residual {resid:.2e} exceeds {REDUCTION_TOL:g}")
    return theta, xi


def _solve_diagonal(rep, diag_entries, aim_dims, aim_point):
    n = rep.a_data.shape[0]
    m = rep.b_data.shape[1]
    n_hat = len(diag_entries)
    uniform = np.allclose(diag_entries, diag_entries[0])

    families = []
    for d in diag_entries:
        ker = sla.null_space(np.hstack([rep.a_data - d * np.eye(n), rep.b_data]))
        if ker.shape[1] == 0:
            raise ReductionInfeasibleError(
                f"the column family for diagonal entry {d:g} is empty; no nontrivial solution"
            )
        families.append(ker)

    if uniform:
        # one shared family: the smallest-singular-value-optimal combination
        # is the top right-singular block of the (row-restricted) theta part
        ker = families[0]
        w_theta = ker[:n, :]
        if aim_point is not None and n_hat == 1:
            g = _pick_aligned(w_theta, aim_point, aim_dims)[:, None]
        else:
            rows = np.asarray(aim_dims, dtype=int) if aim_dims is not None else np.arange(n)
            _, svals, vt = np.linalg.svd(w_theta[rows, :], full_matrices=False)
            if len(svals) < n_hat:
                raise ReductionInfeasibleError(
                    f"solution family supports at most {len(svals)} independent columns, need {n_hat}"
                )
            g = vt[:n_hat].T
        z = ker @ g
        theta, xi = z[:n, :], z[n:, :]
        if aim_dims is not None and len(aim_dims) == n_hat and n_hat > 1:
            theta, xi = _align_rows(theta, xi, aim_dims)
    else:
        # distinct diagonal entries: greedy column choice, most orthogonal to
        # the columns picked so far, then one refinement pass over each column
        cols = [None] * n_hat

        def pick(j):
            others = [cols[i] for i in range(n_hat) if i != j and cols[i] is not None]
            w_theta = families[j][:n, :]
            if others:
                chosen = np.column_stack([z[:n] for z in others])
                proj = np.eye(n) - chosen @ np.linalg.pinv(chosen)
                _, _, vt = np.linalg.svd(proj @ w_theta, full_matrices=False)
            else:
                _, _, vt = np.linalg.svd(w_theta, full_matrices=False)
            return families[j] @ vt[0]

        for j in range(n_hat):
            cols[j] = pick(j)
        for j in range(n_hat):
            cols[j] = pick(j)
        z = np.column_stack(cols)
        theta, xi = z[:n, :], z[n:, :]
    return _normalize_columns(theta, xi)


def _align_rows(theta, xi, aim_dims):
    # rotation freedom exists only for scalar a_hat blocks; orient theta so
    # its selected rows form a symmetric positive block (polar factor)
    rows = np.asarray(aim_dims, dtype=int)
    u, _, vt = np.linalg.svd(theta[rows, :])
    rot = vt.T @ u.T
    return theta @ rot, xi @ rot


def _solve_generic(rep, a_hat, n_hat):
    n = rep.a_data.shape[0]
    m = rep.b_data.shape[1]
    op = lifted_operator(rep, a_hat)
    basis = sla.null_space(op)
    if basis.shape[1] == 0:
        raise ReductionInfeasibleError("the lifted reduction operator has a trivial null space")

    def unpack(coeff):
        z = basis @ coeff
        return z[: n * n_hat].reshape((n, n_hat), order="F"), z[n * n_hat:].reshape((m, n_hat), order="F")

    def smin_of(coeff):
        theta, _ = unpack(coeff)
        s = np.linalg.svd(theta, compute_uv=False)
        return s[-1] / max(np.linalg.norm(coeff), 1e-300)

    k = basis.shape[1]
    best = max(range(k), key=lambda i: smin_of(np.eye(k)[i]))
    coeff = np.eye(k)[best]
    # one refinement pass: line-search a mixing angle toward each basis direction
    angles = np.linspace(-np.pi / 2, np.pi / 2, 61)
    for i in range(k):
        e_i = np.eye(k)[i]
        cands = [np.cos(a) * coeff + np.sin(a) * e_i for a in angles]
        coeff = max(cands, key=smin_of)
        coeff = coeff / np.linalg.norm(coeff)
    theta, xi = unpack(coeff)
    nrm = np.linalg.norm(theta, "fro")
    if nrm > 0:
        theta, xi = theta / nrm, xi / nrm
    return theta, xi
