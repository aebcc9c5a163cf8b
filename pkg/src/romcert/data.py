"""Trajectory data collection and the sampled-matrix algebra.

Two trajectories are recorded from the same initial state: one under a
random excitation and one with the input held at zero.  The five sampled
matrices (inputs, states, state derivatives, and the zero-input pair) are
everything the certificate pipeline is allowed to see.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DocumentFormatError,
    ExcitationRankError,
    RomcertError,
    RankError,
    SampleCountError,
    SingularDriftError,
)
from .systems import LtiPlant, Trajectory, exact_derivative, finite_difference_derivatives, simulate

RANK_RTOL = 1e-8  # sigma_min > RANK_RTOL * sigma_max counts toward numeric rank


@dataclass(frozen=True)
class UniformExcitation:
    """I.i.d. uniform inputs over a box, held over each sampling interval."""

    lower: float = -1.0
    upper: float = 1.0
    seed: int = 0

    def draw(self, m: int, count: int, attempt: int) -> np.ndarray:
        rng = np.random.default_rng((self.seed, attempt))
        return rng.uniform(self.lower, self.upper, (m, count))

    def draw_state(self, n: int, attempt: int) -> np.ndarray:
        rng = np.random.default_rng((self.seed, attempt, 1))
        return rng.uniform(self.lower, self.upper, n)


@dataclass(frozen=True)
class DataSet:
    """The five sampled matrices plus sampling metadata."""

    u0: np.ndarray     # m x T excited inputs
    x0: np.ndarray     # n x T excited states
    x1: np.ndarray     # n x T excited state derivatives
    xbar0: np.ndarray  # n x T zero-input states
    xbar1: np.ndarray  # n x T zero-input state derivatives
    tau: float
    shared_initial_state: np.ndarray

    def __post_init__(self):
        for name in ("u0", "x0", "x1", "xbar0", "xbar1", "shared_initial_state"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n, t = self.x0.shape
        if self.x1.shape != (n, t) or self.xbar0.shape != (n, t) or self.xbar1.shape != (n, t):
            raise RomcertError("all state matrices must be n x T")
        if self.u0.shape[1] != t:
            raise RomcertError("u0 must have T columns")
        if t <= n:
            raise SampleCountError(
                f"T = {t} samples with n = {n} states: the sample count must exceed the state "
                "dimension for the state matrices to have full row rank"
            )
        if self.tau <= 0:
            raise RomcertError("tau must be positive")
        if not np.allclose(self.x0[:, 0], self.xbar0[:, 0], rtol=0, atol=1e-12):
            raise RomcertError("excited and zero-input trajectories must share their initial state")
        for name, mat in (("x0", self.x0), ("xbar0", self.xbar0)):
            r = numeric_rank(mat)
            if r < n:
                raise ExcitationRankError(name, r, n)

    @property
    def state_dim(self) -> int:
        return self.x0.shape[0]

    @property
    def input_dim(self) -> int:
        return self.u0.shape[0]

    @property
    def sample_count(self) -> int:
        return self.x0.shape[1]


def numeric_rank(mat: np.ndarray, rtol: float = RANK_RTOL) -> int:
    if mat.size == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    return int(np.sum(s > rtol * s[0]))


def right_pseudoinverse(mat: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Right pseudoinverse M+ with M @ M+ = I for full-row-rank M."""
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    p = mat.shape[0]
    r = numeric_rank(mat, rtol)
    if r < p:
        raise RankError(
            f"matrix of shape {mat.shape} has numeric rank {r} < {p} "
            f"(tolerance sigma_min > {rtol:g} * sigma_max); right pseudoinverse undefined"
        )
    return np.linalg.pinv(mat)


@dataclass(frozen=True)
class ResidualCheck:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tolerance)

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.value:.3e} (tol {self.tolerance:.1e})"


def identity_factor_check(x: np.ndarray, q: np.ndarray, tolerance: float = 1e-8) -> ResidualCheck:
    """Report ||X Q - I||_F against the factorization tolerance."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    q = np.atleast_2d(np.asarray(q, dtype=float))
    n = x.shape[0]
    resid = float(np.linalg.norm(x @ q - np.eye(n), "fro"))
    return ResidualCheck("identity_factor", resid, tolerance)


def collect(
    plant: LtiPlant,
    x_init: np.ndarray | None,
    input_policy: UniformExcitation,
    tau: float,
    sample_count: int,
    derivative_mode: str = "exact",
    retries: int = 20,
) -> DataSet:
    """Record the excited/zero-input trajectory pair and assemble a DataSet.

    Rank requirements (both state matrices full row rank, stacked
    input/state matrix rank n+m) are verified; on failure the excitation is
    redrawn, and from halfway through the retry budget the initial state is
    redrawn too.  ``derivative_mode`` selects the oracle derivative
    (default, noise-free) or forward differences with O(tau) error.
    """
    n, m = plant.state_dim, plant.input_dim
    t_count = sample_count
    if t_count <= n:
        raise SampleCountError(
            f"T = {t_count} samples requested with n = {n} states: the sample count must be "
            "greater than the state dimension"
        )
    if derivative_mode not in ("exact", "fd"):
        raise RomcertError(f"derivative_mode must be 'exact' or 'fd', got {derivative_mode!r}")

    last_failure = None
    last_rank = 0
    for attempt in range(retries):
        if x_init is None or (attempt >= retries // 2 and last_failure in ("xbar0", "x0")):
            x_start = input_policy.draw_state(n, attempt)
        else:
            x_start = np.asarray(x_init, dtype=float).reshape(n)
        u_cols = input_policy.draw(m, t_count, attempt)

        # one extra step so forward differences cover all T samples
        steps = t_count if derivative_mode == "fd" else t_count - 1
        excited = simulate(plant, x_start, lambda t: u_cols[:, min(int(round(t / tau)), t_count - 1)], tau, steps)
        zero_in = simulate(plant, x_start, None, tau, steps)

        x0 = excited.states[:t_count].T
        xbar0 = zero_in.states[:t_count].T
        if derivative_mode == "exact":
            x1 = plant.a_matrix @ x0 + plant.b_matrix @ u_cols
            xbar1 = plant.a_matrix @ xbar0
        else:
            x1 = finite_difference_derivatives(excited)[:t_count].T
            xbar1 = finite_difference_derivatives(zero_in)[:t_count].T

        r = numeric_rank(x0)
        if r < n:
            last_failure, last_rank = "x0", r
            continue
        r = numeric_rank(xbar0)
        if r < n:
            last_failure, last_rank = "xbar0", r
            continue
        if m > 0:
            r = numeric_rank(np.vstack([u_cols, x0]))
            if r < n + m:
                last_failure, last_rank = "stacked [u0; x0]", r
                continue
        return DataSet(u_cols, x0, x1, xbar0, xbar1, tau, x_start)

    if last_failure == "xbar0" and numeric_rank(plant.a_matrix) < n:
        raise SingularDriftError(
            "zero-input states cannot reach full row rank: the plant drift matrix is rank "
            "deficient, so the autonomous flow stays in a proper subspace"
        )
    required = n + m if last_failure == "stacked [u0; x0]" else n
    raise ExcitationRankError(last_failure or "x0", last_rank, required, f"after {retries} retries")


# ---------------------------------------------------------------------------
# CSV bundle round-trip

_BUNDLE_MATRICES = ("u0", "x0", "x1", "xbar0", "xbar1")


def save_bundle(data: DataSet, directory: str | Path) -> list[Path]:
    """Write one CSV per matrix; values carry 17 significant digits."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name in _BUNDLE_MATRICES:
        mat = getattr(data, name)
        path = directory / f"data_{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([name, f"tau={data.tau:.17g}", f"T={data.sample_count}"])
            for row in np.atleast_2d(mat):
                w.writerow([f"{v:.17g}" for v in row])
        written.append(path)
    return written


def load_bundle(directory: str | Path) -> DataSet:
    directory = Path(directory)
    mats = {}
    tau = None
    t_count = None
    for name in _BUNDLE_MATRICES:
        path = directory / f"data_{name}.csv"
        if not path.exists():
            raise DocumentFormatError(f"bundle is missing {path.name}")
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][0] != name:
            raise DocumentFormatError(f"unexpected header in {path.name}", line=1, field=name)
        try:
            tau_here = float(rows[0][1].split("=", 1)[1])
            t_here = int(rows[0][2].split("=", 1)[1])
        except (IndexError, ValueError) as exc:
            raise DocumentFormatError(f"malformed header in {path.name}: {exc}", line=1) from exc
        if tau is None:
            tau, t_count = tau_here, t_here
        elif tau != tau_here or t_count != t_here:
            raise DocumentFormatError(f"{path.name} disagrees on tau/T with the rest of the bundle", line=1)
        try:
            body = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
        except ValueError as exc:
            raise DocumentFormatError(f"non-numeric entry in {path.name}: {exc}") from exc
        if body.size == 0:
            body = body.reshape(0, t_count)
        mats[name] = body
    return DataSet(
        mats["u0"], mats["x0"], mats["x1"], mats["xbar0"], mats["xbar1"],
        tau, mats["x0"][:, 0].copy(),
    )
