"""Exception types shared across the toolkit."""


class RomcertError(Exception):
    """Base class for all toolkit errors."""


class IntegrationDivergedError(RomcertError):
    """State became non-finite during fixed-step integration."""

    def __init__(self, step: int, time: float):
        self.step = step
        self.time = time
        super().__init__(f"integration diverged at step {step} (t = {time:g}): state is non-finite")


class InsufficientDataError(RomcertError):
    """Too few samples for the requested operation."""


class BenchmarkLookupError(RomcertError, KeyError):
    """Unknown benchmark name."""


class SampleCountError(RomcertError):
    """Sample count T does not exceed the state dimension n.

    Both sampled state matrices must have full row rank n, which is only
    possible with strictly more than n columns of data.
    """


class ExcitationRankError(RomcertError):
    """A collected data matrix failed its rank requirement after retries."""

    def __init__(self, matrix_name: str, rank: int, required: int, detail: str = ""):
        self.matrix_name = matrix_name
        self.rank = rank
        self.required = required
        msg = f"excitation failed: {matrix_name} has numeric rank {rank}, need {required}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class SingularDriftError(RomcertError):
    """Zero-input trajectory cannot reach full row rank.

    The autonomous flow of a rank-deficient drift matrix is confined to a
    proper subspace, so no choice of initial state makes the zero-input
    state matrix full row rank.  A known-input-matrix fallback is not
    implemented.
    """


class RankError(RomcertError):
    """Matrix does not have the row rank required for a right pseudoinverse."""


class InfeasibleError(RomcertError):
    """The data-based feasibility problem has no solution.

    The problem is solvable exactly when the (unknown) pair (A, B) behind
    the data is stabilizable; infeasibility indicates an uncontrollable
    unstable mode, or a decay request kappa_hat beyond what the input
    channels can enforce.
    """


class ReductionInfeasibleError(RomcertError):
    """No full-column-rank reduction matrix exists in the solution space.

    Solvability is equivalent to a range condition: the image of the
    reduced subspace under the drift must be contained in the span of the
    subspace and the input directions.
    """


class VerificationInfeasibleError(RomcertError):
    """No real invariant subspace of the requested dimension was found."""


class GramConditioningError(RomcertError):
    """The weighted input Gram matrix is numerically singular.

    Usually fixed by stronger input excitation or by rescaling the reduced
    input matrix b_hat.
    """


class SfViolationError(RomcertError):
    """A sampled state/input triple violated a simulation-function condition."""

    def __init__(self, condition: str, violation: float, witness):
        self.condition = condition
        self.violation = violation
        self.witness = witness
        super().__init__(
            f"simulation-function condition {condition} violated by {violation:.3e} at x={witness[0]}, "
            f"x_hat={witness[1]}, u_hat={witness[2]}"
        )


class SafetyMarginError(RomcertError):
    """Safe set is too small for the certified tracking error margin."""


class PlanningInfeasibleError(RomcertError):
    """No obstacle-free path exists on the planning grid after inflation."""


class ConfigError(RomcertError):
    """Scenario configuration is malformed or violates a precondition."""


class DocumentFormatError(RomcertError):
    """A serialized certificate/ROM/data document failed to parse."""

    def __init__(self, msg: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        loc = ""
        if line is not None:
            loc += f" at line {line}"
        if field is not None:
            loc += f" (field {field!r})"
        super().__init__(msg + loc)
