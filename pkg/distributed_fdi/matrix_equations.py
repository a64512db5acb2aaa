"""
Dense linear-algebra kernels shared by the whole toolkit.

Lyapunov equations and the filter algebraic Riccati equation are solved with
``scipy.linalg``; the H2 norm is computed from Gramians; the H− index is the
minimum over a frequency grid of the smallest singular value of the frequency
response.  Every function is a pure function of its arguments and is safe to
call concurrently.

Filter Riccati equation
-----------------------
For a noise covariance R = D_d·D_dᵀ ≻ 0 the pre-whitened equation is::

    Ā·Y + Y·Āᵀ − Y·Cᵀ·R⁻¹·C·Y + W = 0
    Ā = A − S·R⁻¹·C,   S = B_d·D_dᵀ,   W = B_d·B_dᵀ − S·R⁻¹·Sᵀ

and the nominal gain is L = (Y·Cᵀ + S)·R⁻¹.  With R = I this is exactly the
unit-covariance filter equation.  The stabilizing solution is reached by
Newton–Kleinman iteration, each step one Lyapunov solve.
"""

import dataclasses
import typing

import numpy
import numpy.typing
import scipy.linalg
import structlog

import distributed_fdi.exceptions

logger = structlog.get_logger()

FloatArray = numpy.typing.NDArray[numpy.float64]

MAXIMUM_NUMBER_OF_NEWTON_KLEINMAN_ITERATIONS = 50

TOLERANCE_OF_RICCATI_RESIDUAL = 1e-8

TOLERANCE_OF_NEGATIVE_EIGENVALUES_OF_RICCATI_SOLUTION = 1e-9

# Real-part tolerance used by the PBH test: eigenvalues at or to the right of
# −tolerance count as marginal or unstable.
TOLERANCE_OF_MARGINAL_EIGENVALUES = 1e-9


def default_frequency_grid() -> FloatArray:
    """1000 log-spaced frequencies in [1e−3, 1e3] rad/s."""
    return numpy.logspace(-3.0, 3.0, 1000)


def as_read_only_matrix(values: typing.Any, number_of_rows: int | None = None) -> FloatArray:
    """
    Convert ``values`` to a fresh two-dimensional float array that cannot be
    written to.

    A one-dimensional input is read as a column.  When ``number_of_rows`` is
    given and ``values`` is empty, the result has that many rows and no
    columns, which is how an absent signal channel is represented.
    """
    matrix = numpy.array(values, dtype=numpy.float64)
    if matrix.size == 0 and number_of_rows is not None:
        matrix = numpy.zeros((number_of_rows, 0))
    elif matrix.ndim == 0:
        matrix = matrix.reshape(1, 1)
    elif matrix.ndim == 1:
        matrix = matrix.reshape(-1, 1)
    elif matrix.ndim != 2:
        raise distributed_fdi.exceptions.DimensionMismatchError(f"Expected a matrix, got an array of rank {matrix.ndim}.")
    matrix.setflags(write=False)
    return matrix


@dataclasses.dataclass(frozen=True, eq=False)
class StateSpace:
    """
    Continuous-time state-space realization G(s) = C(sI − A)⁻¹B + D.

    Attributes:
        A: n×n dynamics matrix.
        B: n×m input matrix.
        C: p×n output matrix.
        D: p×m feedthrough matrix.
    """

    A: FloatArray
    B: FloatArray
    C: FloatArray
    D: FloatArray

    def __post_init__(self) -> None:
        A = as_read_only_matrix(self.A)
        B = as_read_only_matrix(self.B, number_of_rows=A.shape[0])
        C = as_read_only_matrix(self.C)
        D = as_read_only_matrix(self.D, number_of_rows=C.shape[0])
        number_of_states = A.shape[0]
        if A.shape != (number_of_states, number_of_states):
            raise distributed_fdi.exceptions.DimensionMismatchError(f"A must be square, got {A.shape}.")
        if B.shape[0] != number_of_states or C.shape[1] != number_of_states:
            raise distributed_fdi.exceptions.DimensionMismatchError(
                f"B {B.shape} and C {C.shape} do not match A {A.shape}."
            )
        if D.shape != (C.shape[0], B.shape[1]):
            raise distributed_fdi.exceptions.DimensionMismatchError(
                f"D must be {(C.shape[0], B.shape[1])}, got {D.shape}."
            )
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @property
    def number_of_states(self) -> int:
        return int(self.A.shape[0])

    @property
    def number_of_inputs(self) -> int:
        return int(self.B.shape[1])

    @property
    def number_of_outputs(self) -> int:
        return int(self.C.shape[0])

    @property
    def is_strictly_proper(self) -> bool:
        return not bool(numpy.any(self.D != 0.0))

    def frequency_response(self, frequencies_in_radians_per_second: numpy.typing.ArrayLike) -> numpy.ndarray:
        """
        Evaluate G(jω) at every frequency.

        Returns:
            A complex array of shape (number of frequencies, p, m).
        """
        frequencies = numpy.asarray(frequencies_in_radians_per_second, dtype=numpy.float64).reshape(-1)
        if self.number_of_states == 0:
            return numpy.broadcast_to(self.D.astype(complex), (frequencies.size, *self.D.shape)).copy()
        identity = numpy.eye(self.number_of_states)
        resolvent_arguments = 1j * frequencies[:, None, None] * identity[None, :, :] - self.A[None, :, :]
        right_hand_sides = numpy.broadcast_to(self.B, (frequencies.size, *self.B.shape))
        state_responses = numpy.linalg.solve(resolvent_arguments, right_hand_sides)
        return self.C[None, :, :] @ state_responses + self.D[None, :, :]


@dataclasses.dataclass(frozen=True, eq=False)
class CareSolution:
    """
    Stabilizing solution of the filter Riccati equation.

    Attributes:
        Y: Symmetric positive semidefinite Riccati solution.
        L_nominal: Nominal filter gain (Y·Cᵀ + B_d·D_dᵀ)·R⁻¹.
        residual_norm: Frobenius norm of the Riccati equation evaluated at Y.
        number_of_newton_iterations: Lyapunov solves spent by Newton–Kleinman.
    """

    Y: FloatArray
    L_nominal: FloatArray
    residual_norm: float
    number_of_newton_iterations: int


# ──────────────────────────────────────────────────────────────────────────────
#  Stability
# ──────────────────────────────────────────────────────────────────────────────


def spectral_abscissa(A: numpy.typing.ArrayLike) -> float:
    """Largest real part of the eigenvalues of ``A`` (−∞ for an empty matrix)."""
    matrix = numpy.asarray(A, dtype=numpy.float64)
    if matrix.size == 0:
        return float("-inf")
    return float(numpy.max(scipy.linalg.eigvals(matrix).real))


def is_hurwitz(A: numpy.typing.ArrayLike, margin: float = 0.0) -> bool:
    """True iff every eigenvalue of ``A`` has real part strictly below −margin."""
    return spectral_abscissa(A) < -margin


def _require_hurwitz(A: FloatArray, what: str) -> None:
    abscissa = spectral_abscissa(A)
    if not abscissa < 0.0:
        raise distributed_fdi.exceptions.NotHurwitzError(
            f"{what} is not Hurwitz: largest eigenvalue real part is {abscissa:.6g}."
        )


def unobservable_eigenvalues(
    A: numpy.typing.ArrayLike,
    C: numpy.typing.ArrayLike,
    minimum_real_part: float = float("-inf"),
) -> list[complex]:
    """
    Eigenvalues λ of ``A`` with real part ≥ ``minimum_real_part`` at which the
    PBH matrix [λI − A; C] loses column rank.

    Repeated eigenvalues are reported once.
    """
    dynamics = numpy.asarray(A, dtype=numpy.float64)
    output = numpy.asarray(C, dtype=numpy.float64).reshape(-1, dynamics.shape[0])
    number_of_states = dynamics.shape[0]
    scale = max(1.0, float(numpy.linalg.norm(dynamics)), float(numpy.linalg.norm(output)))
    rank_tolerance = 1e-9 * scale

    reported: list[complex] = []
    for eigenvalue in scipy.linalg.eigvals(dynamics):
        if eigenvalue.real < minimum_real_part:
            continue
        if any(abs(eigenvalue - seen) <= 1e-7 * max(1.0, abs(seen)) for seen in reported):
            continue
        pencil = numpy.vstack([eigenvalue * numpy.eye(number_of_states) - dynamics, output.astype(complex)])
        smallest_singular_value = numpy.linalg.svd(pencil, compute_uv=False)[-1]
        if smallest_singular_value <= rank_tolerance:
            reported.append(complex(eigenvalue))
    return reported


def is_detectable(A: numpy.typing.ArrayLike, C: numpy.typing.ArrayLike) -> bool:
    """PBH detectability of (C, A): every marginal or unstable mode is observable."""
    return not unobservable_eigenvalues(A, C, minimum_real_part=-TOLERANCE_OF_MARGINAL_EIGENVALUES)


# ──────────────────────────────────────────────────────────────────────────────
#  Lyapunov equations and the H2 norm
# ──────────────────────────────────────────────────────────────────────────────


def solve_lyapunov(A: numpy.typing.ArrayLike, Q: numpy.typing.ArrayLike) -> FloatArray:
    """
    Solve A·P + P·Aᵀ + Q = 0 for a Hurwitz ``A``.

    Raises:
        NotHurwitzError: ``A`` has an eigenvalue with nonnegative real part.
        DimensionMismatchError: ``A`` and ``Q`` are not square of equal size.
    """
    dynamics = numpy.asarray(A, dtype=numpy.float64)
    right_hand_side = numpy.asarray(Q, dtype=numpy.float64)
    if dynamics.ndim != 2 or dynamics.shape[0] != dynamics.shape[1] or right_hand_side.shape != dynamics.shape:
        raise distributed_fdi.exceptions.DimensionMismatchError(
            f"Lyapunov equation needs square A and Q of equal size, got {dynamics.shape} and {right_hand_side.shape}."
        )
    _require_hurwitz(dynamics, "A")
    solution = scipy.linalg.solve_continuous_lyapunov(dynamics, -right_hand_side)
    return (solution + solution.T) / 2.0


def observability_gramian(system: StateSpace) -> FloatArray:
    """Y with Aᵀ·Y + Y·A + Cᵀ·C = 0."""
    return solve_lyapunov(system.A.T, system.C.T @ system.C)


def controllability_gramian(system: StateSpace) -> FloatArray:
    """Q with A·Q + Q·Aᵀ + B·Bᵀ = 0."""
    return solve_lyapunov(system.A, system.B @ system.B.T)


def h2_norm(system: StateSpace, gramian: typing.Literal["observability", "controllability"] = "observability") -> float:
    """
    H2 norm of a strictly proper, stable system.

    ``gramian`` selects the trace formula: √trace(Bᵀ·Y·B) with the
    observability Gramian or √trace(C·Q·Cᵀ) with the controllability Gramian.

    Raises:
        NotStrictlyProperError: D has a nonzero entry.
        NotHurwitzError: A is not Hurwitz.
    """
    if not system.is_strictly_proper:
        raise distributed_fdi.exceptions.NotStrictlyProperError()
    if system.number_of_states == 0:
        return 0.0
    if gramian == "observability":
        squared_norm = float(numpy.trace(system.B.T @ observability_gramian(system) @ system.B))
    else:
        squared_norm = float(numpy.trace(system.C @ controllability_gramian(system) @ system.C.T))
    return float(numpy.sqrt(max(squared_norm, 0.0)))


# ──────────────────────────────────────────────────────────────────────────────
#  Filter Riccati equation
# ──────────────────────────────────────────────────────────────────────────────


def _riccati_residual(
    prewhitened_dynamics: FloatArray,
    Y: FloatArray,
    quadratic_weight: FloatArray,
    constant_term: FloatArray,
) -> float:
    residual = (
        prewhitened_dynamics @ Y + Y @ prewhitened_dynamics.T - Y @ quadratic_weight @ Y + constant_term
    )
    return float(numpy.linalg.norm(residual, "fro"))


def _initial_stabilizing_gain(prewhitened_dynamics: FloatArray, C: FloatArray) -> FloatArray:
    """
    K₀ with Ā − K₀·C Hurwitz: zero when Ā already is, otherwise the gain of
    the unit-weight filter Riccati equation.
    """
    number_of_states, number_of_outputs = prewhitened_dynamics.shape[0], C.shape[0]
    if is_hurwitz(prewhitened_dynamics):
        return numpy.zeros((number_of_states, number_of_outputs))
    try:
        unit_weight_solution = scipy.linalg.solve_continuous_are(
            prewhitened_dynamics.T,
            C.T,
            numpy.eye(number_of_states),
            numpy.eye(number_of_outputs),
        )
    except (numpy.linalg.LinAlgError, ValueError) as error:
        raise distributed_fdi.exceptions.NoStabilizingSolutionError(
            f"No stabilizing initial gain for Newton–Kleinman: {error}"
        ) from error
    return unit_weight_solution @ C.T


def solve_filter_care(
    A: numpy.typing.ArrayLike,
    C: numpy.typing.ArrayLike,
    Bd: numpy.typing.ArrayLike,
    Dd: numpy.typing.ArrayLike,
    maximum_number_of_iterations: int = MAXIMUM_NUMBER_OF_NEWTON_KLEINMAN_ITERATIONS,
) -> CareSolution:
    """
    Stabilizing solution of the pre-whitened filter Riccati equation.

    Raises:
        SingularNoiseError: D_d·D_dᵀ is not positive definite.
        NotDetectableError: (C, A) fails the PBH detectability test.
        NoStabilizingSolutionError: the iteration does not end at a
            stabilizing positive semidefinite solution.
    """
    dynamics = as_read_only_matrix(A)
    output = as_read_only_matrix(C)
    number_of_states, number_of_outputs = dynamics.shape[0], output.shape[0]
    disturbance_input = as_read_only_matrix(Bd, number_of_rows=number_of_states)
    disturbance_feedthrough = as_read_only_matrix(Dd, number_of_rows=number_of_outputs)
    if (
        dynamics.shape != (number_of_states, number_of_states)
        or output.shape[1] != number_of_states
        or disturbance_feedthrough.shape[1] != disturbance_input.shape[1]
    ):
        raise distributed_fdi.exceptions.DimensionMismatchError(
            f"Inconsistent Riccati data: A {dynamics.shape}, C {output.shape}, "
            f"Bd {disturbance_input.shape}, Dd {disturbance_feedthrough.shape}."
        )

    noise_covariance = disturbance_feedthrough @ disturbance_feedthrough.T
    eigenvalues_of_noise_covariance = numpy.linalg.eigvalsh(noise_covariance)
    if number_of_outputs > 0 and eigenvalues_of_noise_covariance[0] <= 1e-12 * max(
        1.0, float(eigenvalues_of_noise_covariance[-1])
    ):
        raise distributed_fdi.exceptions.SingularNoiseError(
            f"D_d·D_dᵀ has smallest eigenvalue {eigenvalues_of_noise_covariance[0]:.3g}."
        )
    if not is_detectable(dynamics, output):
        raise distributed_fdi.exceptions.NotDetectableError()

    inverse_of_noise_covariance = numpy.linalg.inv(noise_covariance)
    cross_covariance = disturbance_input @ disturbance_feedthrough.T
    prewhitened_dynamics = dynamics - cross_covariance @ inverse_of_noise_covariance @ output
    constant_term = (
        disturbance_input @ disturbance_input.T
        - cross_covariance @ inverse_of_noise_covariance @ cross_covariance.T
    )
    constant_term = (constant_term + constant_term.T) / 2.0
    quadratic_weight = output.T @ inverse_of_noise_covariance @ output

    gain = _initial_stabilizing_gain(prewhitened_dynamics, output)
    Y = numpy.zeros((number_of_states, number_of_states))
    converged = False
    number_of_iterations = 0
    for number_of_iterations in range(1, maximum_number_of_iterations + 1):
        closed_loop = prewhitened_dynamics - gain @ output
        if not is_hurwitz(closed_loop):
            raise distributed_fdi.exceptions.NoStabilizingSolutionError(
                "Newton–Kleinman lost stability of the closed loop."
            )
        next_Y = solve_lyapunov(closed_loop, gain @ noise_covariance @ gain.T + constant_term)
        change = float(numpy.linalg.norm(next_Y - Y, "fro"))
        Y = next_Y
        gain = Y @ output.T @ inverse_of_noise_covariance
        if change <= 1e-13 * max(1.0, float(numpy.linalg.norm(Y, "fro"))):
            converged = True
            break
    if not converged:
        logger.warning(
            "newton_kleinman_stalled",
            number_of_iterations=number_of_iterations,
            residual_norm=_riccati_residual(prewhitened_dynamics, Y, quadratic_weight, constant_term),
        )

    residual_norm = _riccati_residual(prewhitened_dynamics, Y, quadratic_weight, constant_term)
    scale = max(1.0, float(numpy.linalg.norm(constant_term, "fro")))
    if not residual_norm < TOLERANCE_OF_RICCATI_RESIDUAL * scale:
        raise distributed_fdi.exceptions.NoStabilizingSolutionError(
            f"Riccati residual {residual_norm:.3g} exceeds tolerance."
        )
    smallest_eigenvalue_of_Y = float(numpy.linalg.eigvalsh(Y)[0]) if number_of_states else 0.0
    if smallest_eigenvalue_of_Y < -TOLERANCE_OF_NEGATIVE_EIGENVALUES_OF_RICCATI_SOLUTION * max(
        1.0, float(numpy.linalg.norm(Y, 2))
    ):
        raise distributed_fdi.exceptions.NoStabilizingSolutionError(
            f"Riccati solution is indefinite (smallest eigenvalue {smallest_eigenvalue_of_Y:.3g})."
        )

    L_nominal = (Y @ output.T + cross_covariance) @ inverse_of_noise_covariance
    if not is_hurwitz(dynamics - L_nominal @ output):
        raise distributed_fdi.exceptions.NoStabilizingSolutionError("A − L·C is not Hurwitz.")

    Y.setflags(write=False)
    L_nominal.setflags(write=False)
    return CareSolution(
        Y=Y,
        L_nominal=L_nominal,
        residual_norm=residual_norm,
        number_of_newton_iterations=number_of_iterations,
    )


# ──────────────────────────────────────────────────────────────────────────────
#  H− index
# ──────────────────────────────────────────────────────────────────────────────


def validate_frequency_grid(grid: numpy.typing.ArrayLike) -> FloatArray:
    """Return ``grid`` as a float vector after checking it is nonempty, positive and strictly increasing."""
    frequencies = numpy.asarray(grid, dtype=numpy.float64).reshape(-1)
    if frequencies.size == 0:
        raise distributed_fdi.exceptions.InvalidFrequencyGridError("The frequency grid is empty.")
    if not numpy.all(numpy.isfinite(frequencies)) or numpy.any(frequencies <= 0.0):
        raise distributed_fdi.exceptions.InvalidFrequencyGridError("Frequencies must be finite and strictly positive.")
    if numpy.any(numpy.diff(frequencies) <= 0.0):
        raise distributed_fdi.exceptions.InvalidFrequencyGridError("Frequencies must be strictly increasing.")
    return frequencies


def h_minus_index(system: StateSpace, grid: numpy.typing.ArrayLike | None = None) -> float:
    """
    Minimum over ``grid`` of the smallest singular value of G(jω).

    A system with more inputs than outputs (or with no input) has index 0
    because G(jω) has a nontrivial kernel at every frequency.

    Raises:
        InvalidFrequencyGridError: ``grid`` is empty, unsorted or not positive.
        NotHurwitzError: A is not Hurwitz.
    """
    frequencies = validate_frequency_grid(default_frequency_grid() if grid is None else grid)
    if system.number_of_states:
        _require_hurwitz(system.A, "A")
    if system.number_of_inputs == 0 or system.number_of_inputs > system.number_of_outputs:
        return 0.0
    singular_values = numpy.linalg.svd(system.frequency_response(frequencies), compute_uv=False)
    return float(numpy.min(singular_values[:, -1]))
