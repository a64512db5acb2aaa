"""
Distributed observer synthesis.

For every agent the observer gain is split as L = 𝐋 + ΔL:

1. ``nominal_gain`` solves the filter Riccati equation of the relative model
   and returns the H2-optimal gain 𝐋 together with its solution Y.
2. ``build_lmi_program`` writes the multi-objective semidefinite program over
   (P, N, Q, Z, α₁, α₂) that trades disturbance robustness (α₁ = γ₁²) against
   fault sensitivity (α₂ = γ₂²); the correction is ΔL = P⁻¹N.
3. ``verify_synthesis`` recomputes the achieved H2 norm, the H− index over a
   frequency grid and the closed-loop spectral abscissa from the final gain,
   independently of the certificate.

Constraint set
--------------
With 𝐀 = 𝒜 − 𝐋𝓒̄, 𝐁_f = 𝓑_f − 𝐋𝓓̄_f, 𝐁_d = 𝓑_d − 𝐋𝓓̄_d and the margin ε::

    gain_coupling           [Q, Nᵀ; N, P] ⪰ 0
    nominal_h2_budget       trace(Q) − α₁ + trace(𝓒̄Y𝓒̄ᵀ) ≤ 0
    h2_certificate          [Z, (P𝐁_d − N𝓓̄_d)ᵀ; P𝐁_d − N𝓓̄_d, P] ⪰ 0
    h2_trace_budget         trace(Z) ≤ α₁
    decay_rate              𝐀ᵀP + P𝐀 − N𝓒̄ − 𝓒̄ᵀNᵀ + 𝓒̄ᵀ𝓒̄ + 2σP ⪯ −εI
    fault_sensitivity       [𝓓̄_fᵀ𝓓̄_f − α₂I, Fᵀ; F, −(𝐀ᵀP + P𝐀 − N𝓒̄ − 𝓒̄ᵀNᵀ) + 𝓒̄ᵀ𝓒̄] ⪰ εI
                            F = N𝓓̄_f − P𝐁_f + 𝓒̄ᵀ𝓓̄_f
    positive_certificate    P ⪰ εI

and the objective maximize β₂α₂ − β₁α₁.  ``decay_rate`` makes P an upper
bound of the observability Gramian of the error dynamics, so together with
``h2_certificate`` the strictly proper part of the disturbance-to-residual map
has squared H2 norm at most α₁.  ``fault_sensitivity`` is the H− condition
with the storage matrix −P and bounds the fault-to-residual singular values
from below by √α₂ at every frequency.
"""

import dataclasses
import time
import types
import typing

import cvxpy
import numpy
import numpy.typing
import pydantic
import structlog

import distributed_fdi.exceptions
import distributed_fdi.integrations.semidefinite_program_solver
import distributed_fdi.matrix_equations
import distributed_fdi.network_model

logger = structlog.get_logger()

FloatArray = distributed_fdi.matrix_equations.FloatArray

TOLERANCE_OF_VERIFICATION = 1e-6

TOLERANCE_OF_CONSTRAINT_MARGINS = 1e-7

FaultSensitivityMode = typing.Literal["auto", "required", "off"]

RelativeFaultModel = typing.Literal["stacked", "output_identity"]


class SynthesisOptions(pydantic.BaseModel):
    """
    Designer choices for one observer synthesis.

    β₁ weighs disturbance robustness and β₂ fault sensitivity in the objective
    β₂γ₂² − β₁γ₁².
    """

    beta_1: float = pydantic.Field(default=1.0, gt=0.0, description="Weight of the H2 bound γ₁² (robustness).")

    beta_2: float = pydantic.Field(default=1.0, gt=0.0, description="Weight of the H− bound γ₂² (sensitivity).")

    lmi_margin: float = pydantic.Field(
        default=1e-6,
        gt=0.0,
        description="Relative strictness margin ε of the strict matrix inequalities, scaled by max(1, ‖𝐀‖).",
    )

    minimum_decay_rate: float = pydantic.Field(
        default=0.0,
        ge=0.0,
        description="Guaranteed exponential decay rate σ of the estimation error (adds 2σP to the decay constraint).",
    )

    fault_sensitivity: FaultSensitivityMode = pydantic.Field(
        default="auto",
        description=(
            "'auto' adds the H− constraint only when the relative fault feedthrough has full column rank; "
            "'required' adds it with γ₂² ≥ ε; 'off' fixes γ₂ to zero."
        ),
    )

    relative_fault_model: RelativeFaultModel = pydantic.Field(
        default="stacked",
        description=(
            "'stacked' uses the stacked agent fault matrices; 'output_identity' designs for faults entering "
            "every relative output directly (zero fault input, identity fault feedthrough)."
        ),
    )

    noise_floor_ratio: float = pydantic.Field(
        default=1e-2,
        ge=0.0,
        lt=1.0,
        description=(
            "Measurement-noise covariance eigenvalues are lifted to at least this fraction of the largest one "
            "by a fictitious sensor-noise channel. Zero disables the floor."
        ),
    )

    solver_tolerance: float = pydantic.Field(
        default=1e-8,
        gt=0.0,
        description="Feasibility and duality-gap tolerance passed to the conic solvers.",
    )

    number_of_bisection_steps: int = pydantic.Field(
        default=20,
        ge=1,
        description="Bisection steps on γ₂² used when the joint program cannot be solved accurately.",
    )

    lowest_frequency_of_verification_grid_in_radians_per_second: float = pydantic.Field(default=1e-3, gt=0.0)

    highest_frequency_of_verification_grid_in_radians_per_second: float = pydantic.Field(default=1e3, gt=0.0)

    number_of_points_in_verification_grid: int = pydantic.Field(default=1000, ge=1)

    model_config = pydantic.ConfigDict(extra="forbid", frozen=True)

    @pydantic.model_validator(mode="after")
    def _check_frequency_range(self) -> "SynthesisOptions":
        if (
            self.highest_frequency_of_verification_grid_in_radians_per_second
            <= self.lowest_frequency_of_verification_grid_in_radians_per_second
        ):
            raise ValueError("the verification grid needs its highest frequency above its lowest frequency")
        return self

    def frequency_grid(self) -> FloatArray:
        """Log-spaced verification grid."""
        return numpy.logspace(
            numpy.log10(self.lowest_frequency_of_verification_grid_in_radians_per_second),
            numpy.log10(self.highest_frequency_of_verification_grid_in_radians_per_second),
            self.number_of_points_in_verification_grid,
        )


@dataclasses.dataclass(frozen=True)
class VerificationReport:
    """
    A-posteriori check of a synthesized gain.

    Attributes:
        h2_of_Trd: H2 norm of the strictly proper part of the
            disturbance-to-residual map (∞ when the closed loop is unstable).
        norm_of_disturbance_feedthrough: Spectral norm of 𝓓̄_d, reported
            separately because a direct feedthrough has no finite H2 norm.
        hminus_of_Trf: Smallest singular value of the fault-to-residual map
            over the verification grid (0 when the closed loop is unstable).
        max_closed_loop_real_part: Spectral abscissa of 𝒜 − L𝓒̄.
        gamma_1, gamma_2: Bounds the norms are checked against.
        lmi_residuals: Minimum-eigenvalue margin of every constraint, when a
            certificate was substituted back.
    """

    h2_of_Trd: float
    norm_of_disturbance_feedthrough: float
    hminus_of_Trf: float
    max_closed_loop_real_part: float
    gamma_1: float
    gamma_2: float
    lmi_residuals: typing.Mapping[str, float] = dataclasses.field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return (
            self.max_closed_loop_real_part < 0.0
            and self.h2_of_Trd <= self.gamma_1 * (1.0 + TOLERANCE_OF_VERIFICATION)
            and self.hminus_of_Trf >= self.gamma_2 * (1.0 - TOLERANCE_OF_VERIFICATION)
        )

    @property
    def certificate_is_valid(self) -> bool:
        return all(margin >= -TOLERANCE_OF_CONSTRAINT_MARGINS for margin in self.lmi_residuals.values())


@dataclasses.dataclass(frozen=True, eq=False)
class Certificate:
    """Numerical values of the decision variables."""

    P: FloatArray
    N: FloatArray
    Q: FloatArray
    Z: FloatArray
    alpha_1: float
    alpha_2: float


@dataclasses.dataclass(frozen=True, eq=False)
class SynthesisResult:
    """
    Observer gain of one agent with its certificate and verification.

    ``design_model`` is the relative model every quantity refers to: the
    agent's relative model after the fault-model substitution and the
    measurement-noise floor.
    """

    agent_id: int
    design_model: distributed_fdi.network_model.RelativeModel
    Y: FloatArray
    L_nominal: FloatArray
    certificate: Certificate
    delta_L: FloatArray
    L: FloatArray
    verification: VerificationReport
    includes_fault_sensitivity: bool
    was_noise_regularized: bool
    name_of_solver: str
    number_of_solver_iterations: int | None
    residual_norm_of_riccati_equation: float
    used_bisection: bool = False

    @property
    def P(self) -> FloatArray:
        return self.certificate.P

    @property
    def N(self) -> FloatArray:
        return self.certificate.N

    @property
    def Q(self) -> FloatArray:
        return self.certificate.Q

    @property
    def alpha_1(self) -> float:
        return self.certificate.alpha_1

    @property
    def alpha_2(self) -> float:
        return self.certificate.alpha_2

    @property
    def gamma_1(self) -> float:
        return float(numpy.sqrt(max(self.certificate.alpha_1, 0.0)))

    @property
    def gamma_2(self) -> float:
        return float(numpy.sqrt(max(self.certificate.alpha_2, 0.0)))

    @property
    def achieved_h2(self) -> float:
        return self.verification.h2_of_Trd

    @property
    def achieved_hminus(self) -> float:
        return self.verification.hminus_of_Trf

    @property
    def passed(self) -> bool:
        return self.verification.passed


# ──────────────────────────────────────────────────────────────────────────────
#  Design model
# ──────────────────────────────────────────────────────────────────────────────


def regularize_measurement_noise(
    relative_model: distributed_fdi.network_model.RelativeModel,
    noise_floor_ratio: float,
) -> distributed_fdi.network_model.RelativeModel:
    """
    Lift the small eigenvalues of R = 𝓓̄_d·𝓓̄_dᵀ with a fictitious sensor noise.

    When λ_min(R) < ratio·λ_max(R), √δ·I is appended to 𝓓̄_d (and zero
    columns to 𝓑_d) with δ = ratio·λ_max(R), or δ = ratio when R = 0.
    Otherwise the model is returned unchanged.
    """
    if noise_floor_ratio <= 0.0:
        return relative_model
    noise_covariance = relative_model.D_d_bar @ relative_model.D_d_bar.T
    eigenvalues = numpy.linalg.eigvalsh(noise_covariance)
    largest_eigenvalue = float(eigenvalues[-1])
    if float(eigenvalues[0]) >= noise_floor_ratio * largest_eigenvalue and largest_eigenvalue > 0.0:
        return relative_model

    noise_floor = noise_floor_ratio * largest_eigenvalue if largest_eigenvalue > 0.0 else noise_floor_ratio
    logger.info(
        "measurement_noise_regularized",
        agent_id=relative_model.agent_id,
        smallest_eigenvalue=float(eigenvalues[0]),
        largest_eigenvalue=largest_eigenvalue,
        noise_floor=noise_floor,
    )
    return relative_model.with_disturbance_channels(
        numpy.hstack([relative_model.B_d, numpy.zeros((relative_model.mu, relative_model.xi_y))]),
        numpy.hstack([relative_model.D_d_bar, numpy.sqrt(noise_floor) * numpy.eye(relative_model.xi_y)]),
    )


def prepare_design_model(
    relative_model: distributed_fdi.network_model.RelativeModel,
    options: SynthesisOptions,
) -> distributed_fdi.network_model.RelativeModel:
    """Apply the relative fault model and the measurement-noise floor."""
    if options.relative_fault_model == "output_identity":
        relative_model = relative_model.with_fault_channels(
            numpy.zeros((relative_model.mu, relative_model.xi_y)),
            numpy.eye(relative_model.xi_y),
        )
    return regularize_measurement_noise(relative_model, options.noise_floor_ratio)


def nominal_gain(
    relative_model: distributed_fdi.network_model.RelativeModel,
) -> distributed_fdi.matrix_equations.CareSolution:
    """
    H2-optimal gain 𝐋 = (Y𝓒̄ᵀ + 𝓑_d𝓓̄_dᵀ)R⁻¹ of the relative model.

    The returned solution carries both Y and 𝐋; errors propagate from
    ``solve_filter_care``.
    """
    return distributed_fdi.matrix_equations.solve_filter_care(
        relative_model.A,
        relative_model.C_bar,
        relative_model.B_d,
        relative_model.D_d_bar,
    )


# ──────────────────────────────────────────────────────────────────────────────
#  Semidefinite program
# ──────────────────────────────────────────────────────────────────────────────

# The constraints are written once against this small algebra so the same
# expressions build the cvxpy program and evaluate the margins of a numerical
# certificate.
_CVXPY_ALGEBRA = types.SimpleNamespace(block=cvxpy.bmat, trace=cvxpy.trace)
_NUMPY_ALGEBRA = types.SimpleNamespace(block=numpy.block, trace=numpy.trace)


@dataclasses.dataclass(frozen=True, eq=False)
class _ProgramData:
    relative_model: distributed_fdi.network_model.RelativeModel
    nominal_closed_loop: FloatArray
    nominal_fault_input: FloatArray
    nominal_disturbance_input: FloatArray
    trace_of_nominal_h2: float
    epsilon: float
    minimum_decay_rate: float
    includes_fault_sensitivity: bool
    requires_positive_fault_sensitivity: bool


def _normalized_constraints(
    data: _ProgramData,
    P: typing.Any,
    N: typing.Any,
    Q: typing.Any,
    Z: typing.Any,
    alpha_1: typing.Any,
    alpha_2: typing.Any,
    algebra: types.SimpleNamespace,
) -> dict[str, typing.Any]:
    """Every constraint as an expression that must be positive semidefinite (or a nonnegative scalar)."""
    model = data.relative_model
    C_bar = model.C_bar
    mu = model.mu
    output_term = C_bar.T @ C_bar
    lyapunov_term = (
        data.nominal_closed_loop.T @ P + P @ data.nominal_closed_loop - N @ C_bar - C_bar.T @ N.T
    )

    constraints: dict[str, typing.Any] = {
        "gain_coupling": algebra.block([[Q, N.T], [N, P]]),
        "nominal_h2_budget": alpha_1 - algebra.trace(Q) - data.trace_of_nominal_h2,
    }
    certificate_of_disturbance_input = P @ data.nominal_disturbance_input - N @ model.D_d_bar
    constraints["h2_certificate"] = algebra.block(
        [[Z, certificate_of_disturbance_input.T], [certificate_of_disturbance_input, P]]
    )
    constraints["h2_trace_budget"] = alpha_1 - algebra.trace(Z)
    constraints["decay_rate"] = (
        -data.epsilon * numpy.eye(mu) - lyapunov_term - output_term - 2.0 * data.minimum_decay_rate * P
    )
    if data.includes_fault_sensitivity:
        fault_coupling = N @ model.D_f_bar - P @ data.nominal_fault_input + C_bar.T @ model.D_f_bar
        number_of_fault_channels = model.xi_f
        constraints["fault_sensitivity"] = algebra.block(
            [
                [
                    model.D_f_bar.T @ model.D_f_bar - alpha_2 * numpy.eye(number_of_fault_channels),
                    fault_coupling.T,
                ],
                [fault_coupling, -lyapunov_term + output_term],
            ]
        ) - data.epsilon * numpy.eye(number_of_fault_channels + mu)
    constraints["positive_certificate"] = P - data.epsilon * numpy.eye(mu)
    if data.requires_positive_fault_sensitivity:
        constraints["minimum_fault_sensitivity"] = alpha_2 - data.epsilon
    return constraints


def _is_scalar(expression: typing.Any) -> bool:
    return len(getattr(expression, "shape", ())) == 0


@dataclasses.dataclass(frozen=True, eq=False)
class LmiProgram:
    """
    The cvxpy program of one agent together with its variables.

    Attributes:
        problem: The ``cvxpy.Problem`` to hand to a solver.
        variables: Decision variables by name (P, N, Q, Z, alpha_1, alpha_2).
        constraint_names: Names of the matrix and scalar inequalities, in order.
        epsilon: Margin of the strict inequalities.
        includes_fault_sensitivity: Whether the H− constraint is present.
    """

    problem: cvxpy.Problem
    variables: typing.Mapping[str, cvxpy.Variable]
    constraint_names: tuple[str, ...]
    epsilon: float
    includes_fault_sensitivity: bool
    _data: _ProgramData

    @property
    def number_of_decision_scalars(self) -> int:
        """Free scalars, counting one triangle of each symmetric matrix."""
        count = 0
        for variable in self.variables.values():
            if variable.attributes.get("symmetric"):
                size = variable.shape[0]
                count += size * (size + 1) // 2
            else:
                count += int(numpy.prod(variable.shape, dtype=int))
        return count

    def read_certificate(self) -> Certificate:
        """Values of the variables after a solve."""
        values = {name: variable.value for name, variable in self.variables.items()}
        if any(value is None for value in values.values()):
            raise distributed_fdi.exceptions.SolverStalledError("The solver returned no values.")

        def symmetric(matrix: typing.Any) -> FloatArray:
            array = numpy.asarray(matrix, dtype=numpy.float64)
            return (array + array.T) / 2.0

        return Certificate(
            P=symmetric(values["P"]),
            N=numpy.asarray(values["N"], dtype=numpy.float64),
            Q=symmetric(values["Q"]),
            Z=symmetric(values["Z"]),
            alpha_1=float(values["alpha_1"]),
            alpha_2=float(values["alpha_2"]),
        )

    def constraint_matrices(self, certificate: Certificate) -> dict[str, typing.Any]:
        """The normalized constraint expressions evaluated at ``certificate``."""
        return _normalized_constraints(
            self._data,
            certificate.P,
            certificate.N,
            certificate.Q,
            certificate.Z,
            certificate.alpha_1,
            certificate.alpha_2,
            _NUMPY_ALGEBRA,
        )

    def constraint_margins(self, certificate: Certificate) -> dict[str, float]:
        """Smallest eigenvalue (or slack) of every constraint at ``certificate``; ≥ 0 means satisfied."""
        margins: dict[str, float] = {}
        for name, value in self.constraint_matrices(certificate).items():
            if _is_scalar(value):
                margins[name] = float(value)
            else:
                matrix = numpy.asarray(value, dtype=numpy.float64)
                margins[name] = float(numpy.linalg.eigvalsh((matrix + matrix.T) / 2.0)[0])
        return margins


def _fault_channels_are_zero(relative_model: distributed_fdi.network_model.RelativeModel) -> bool:
    return not numpy.any(relative_model.B_f) and not numpy.any(relative_model.D_f_bar)


def _has_full_column_rank(matrix: FloatArray) -> bool:
    return matrix.shape[1] > 0 and int(numpy.linalg.matrix_rank(matrix)) == matrix.shape[1]


def build_lmi_program(
    relative_model: distributed_fdi.network_model.RelativeModel,
    L_nominal: numpy.typing.ArrayLike,
    Y: numpy.typing.ArrayLike,
    options: SynthesisOptions,
    fixed_alpha_2: float | None = None,
) -> LmiProgram:
    """
    Build the semidefinite program of one agent.

    With ``fixed_alpha_2`` the program becomes a feasibility problem at that
    fault sensitivity that minimizes β₁α₁, which is what the bisection
    fallback solves.
    """
    nominal_gain_matrix = numpy.asarray(L_nominal, dtype=numpy.float64)
    riccati_solution = numpy.asarray(Y, dtype=numpy.float64)
    model = relative_model
    nominal_closed_loop = model.A - nominal_gain_matrix @ model.C_bar

    if options.fault_sensitivity == "off":
        includes_fault_sensitivity = False
    elif options.fault_sensitivity == "required":
        includes_fault_sensitivity = True
    else:
        includes_fault_sensitivity = _has_full_column_rank(model.D_f_bar)
    requires_positive_fault_sensitivity = options.fault_sensitivity == "required"

    data = _ProgramData(
        relative_model=model,
        nominal_closed_loop=nominal_closed_loop,
        nominal_fault_input=model.B_f - nominal_gain_matrix @ model.D_f_bar,
        nominal_disturbance_input=model.B_d - nominal_gain_matrix @ model.D_d_bar,
        trace_of_nominal_h2=float(numpy.trace(model.C_bar @ riccati_solution @ model.C_bar.T)),
        epsilon=options.lmi_margin * max(1.0, float(numpy.linalg.norm(nominal_closed_loop, 2))),
        minimum_decay_rate=options.minimum_decay_rate,
        includes_fault_sensitivity=includes_fault_sensitivity,
        requires_positive_fault_sensitivity=requires_positive_fault_sensitivity,
    )

    variables = {
        "P": cvxpy.Variable((model.mu, model.mu), symmetric=True, name="P"),
        "N": cvxpy.Variable((model.mu, model.xi_y), name="N"),
        "Q": cvxpy.Variable((model.xi_y, model.xi_y), symmetric=True, name="Q"),
        "Z": cvxpy.Variable((model.xi_d, model.xi_d), symmetric=True, name="Z"),
        "alpha_1": cvxpy.Variable(name="alpha_1"),
        "alpha_2": cvxpy.Variable(name="alpha_2"),
    }
    expressions = _normalized_constraints(
        data,
        variables["P"],
        variables["N"],
        variables["Q"],
        variables["Z"],
        variables["alpha_1"],
        variables["alpha_2"],
        _CVXPY_ALGEBRA,
    )
    constraints = [
        expression >= 0 if _is_scalar(expression) else (expression + expression.T) / 2 >> 0
        for expression in expressions.values()
    ]

    if fixed_alpha_2 is not None:
        constraints.append(variables["alpha_2"] == fixed_alpha_2)
        objective = cvxpy.Minimize(options.beta_1 * variables["alpha_1"])
    else:
        if not includes_fault_sensitivity:
            constraints.append(variables["alpha_2"] == 0.0)
        objective = cvxpy.Maximize(options.beta_2 * variables["alpha_2"] - options.beta_1 * variables["alpha_1"])

    return LmiProgram(
        problem=cvxpy.Problem(objective, constraints),
        variables=variables,
        constraint_names=tuple(expressions),
        epsilon=data.epsilon,
        includes_fault_sensitivity=includes_fault_sensitivity,
        _data=data,
    )


def _solve_by_bisection_on_fault_sensitivity(
    design_model: distributed_fdi.network_model.RelativeModel,
    care_solution: distributed_fdi.matrix_equations.CareSolution,
    options: SynthesisOptions,
    solver: distributed_fdi.integrations.semidefinite_program_solver.SemidefiniteProgramSolver,
) -> tuple[LmiProgram, distributed_fdi.integrations.semidefinite_program_solver.SolverOutcome]:
    """
    Largest γ₂² for which the fixed-γ₂ program solves accurately, found by bisection.

    Raises:
        InfeasibleError: the program is infeasible at the lowest admissible γ₂².
        SolverStalledError: the lowest admissible γ₂² cannot be solved accurately.
    """

    def attempt(
        alpha_2: float,
    ) -> tuple[LmiProgram, distributed_fdi.integrations.semidefinite_program_solver.SolverOutcome]:
        program = build_lmi_program(design_model, care_solution.L_nominal, care_solution.Y, options, alpha_2)
        outcome = solver.solve(program.problem)
        if not outcome.is_accurate:
            raise distributed_fdi.exceptions.SolverStalledError(
                f"Fixed fault-sensitivity program at {alpha_2:.6g} solved only inaccurately."
            )
        return program, outcome

    probe = build_lmi_program(design_model, care_solution.L_nominal, care_solution.Y, options)
    lower = probe.epsilon if options.fault_sensitivity == "required" else 0.0
    accepted = attempt(lower)
    if not probe.includes_fault_sensitivity:
        return accepted

    # γ₂² cannot exceed the smallest eigenvalue of 𝓓̄_fᵀ𝓓̄_f (top-left block of the H− constraint).
    upper = float(numpy.linalg.eigvalsh(design_model.D_f_bar.T @ design_model.D_f_bar)[0])
    for _ in range(options.number_of_bisection_steps):
        middle = (lower + upper) / 2.0
        try:
            accepted = attempt(middle)
            lower = middle
        except (distributed_fdi.exceptions.InfeasibleError, distributed_fdi.exceptions.SolverStalledError):
            upper = middle
    return accepted


# ──────────────────────────────────────────────────────────────────────────────
#  Synthesis and verification
# ──────────────────────────────────────────────────────────────────────────────


def verify_synthesis(
    relative_model: distributed_fdi.network_model.RelativeModel,
    L: numpy.typing.ArrayLike,
    gamma_1: float,
    gamma_2: float,
    grid: numpy.typing.ArrayLike | None = None,
    lmi_residuals: typing.Mapping[str, float] | None = None,
) -> VerificationReport:
    """Recompute the achieved norms of the gain ``L``; never raises on an unstable gain."""
    gain = numpy.asarray(L, dtype=numpy.float64)
    model = relative_model
    closed_loop = model.A - gain @ model.C_bar
    max_closed_loop_real_part = distributed_fdi.matrix_equations.spectral_abscissa(closed_loop)

    if max_closed_loop_real_part < 0.0:
        disturbance_path = distributed_fdi.matrix_equations.StateSpace(
            closed_loop,
            model.B_d - gain @ model.D_d_bar,
            model.C_bar,
            numpy.zeros((model.xi_y, model.xi_d)),
        )
        fault_path = distributed_fdi.matrix_equations.StateSpace(
            closed_loop,
            model.B_f - gain @ model.D_f_bar,
            model.C_bar,
            model.D_f_bar,
        )
        h2_of_Trd = distributed_fdi.matrix_equations.h2_norm(disturbance_path)
        hminus_of_Trf = distributed_fdi.matrix_equations.h_minus_index(fault_path, grid)
    else:
        h2_of_Trd = float("inf")
        hminus_of_Trf = 0.0

    return VerificationReport(
        h2_of_Trd=h2_of_Trd,
        norm_of_disturbance_feedthrough=float(numpy.linalg.norm(model.D_d_bar, 2)) if model.D_d_bar.size else 0.0,
        hminus_of_Trf=hminus_of_Trf,
        max_closed_loop_real_part=max_closed_loop_real_part,
        gamma_1=gamma_1,
        gamma_2=gamma_2,
        lmi_residuals=dict(lmi_residuals or {}),
    )


def synthesize_observer(
    relative_model: distributed_fdi.network_model.RelativeModel,
    options: SynthesisOptions,
    solver: distributed_fdi.integrations.semidefinite_program_solver.SemidefiniteProgramSolver | None = None,
) -> SynthesisResult:
    """
    Synthesize agent i's observer gain L = 𝐋 + P⁻¹N and verify it.

    Raises:
        InfeasibleError: no certificate exists at the requested margin.
        SolverStalledError: neither the joint program nor the bisection
            fallback could be solved accurately.
        UnstableResultError: the recovered gain does not stabilize 𝒜 − L𝓒̄.
        NotDetectableError, SingularNoiseError, NoStabilizingSolutionError:
            propagated from the nominal gain.
    """
    solver = solver or distributed_fdi.integrations.semidefinite_program_solver.SemidefiniteProgramSolver(
        tolerance=options.solver_tolerance
    )
    started_at = time.perf_counter()
    design_model = prepare_design_model(relative_model, options)
    care_solution = nominal_gain(design_model)

    if design_model.xi_f == 0:
        raise distributed_fdi.exceptions.InfeasibleError(
            f"Agent {relative_model.agent_id} has no fault channel in its neighborhood."
        )
    if _fault_channels_are_zero(design_model):
        logger.warning("fault_channels_are_zero", agent_id=relative_model.agent_id)
        options = options.model_copy(update={"fault_sensitivity": "required"})

    program = build_lmi_program(design_model, care_solution.L_nominal, care_solution.Y, options)
    used_bisection = False
    try:
        outcome = solver.solve(program.problem)
    except distributed_fdi.exceptions.SolverStalledError:
        outcome = None
    if outcome is None or not outcome.is_accurate:
        logger.warning("observer_synthesis_falls_back_to_bisection", agent_id=relative_model.agent_id)
        program, outcome = _solve_by_bisection_on_fault_sensitivity(design_model, care_solution, options, solver)
        used_bisection = True

    certificate = program.read_certificate()
    delta_L = numpy.linalg.solve(certificate.P, certificate.N)
    L = care_solution.L_nominal + delta_L
    gamma_1 = float(numpy.sqrt(max(certificate.alpha_1, 0.0)))
    gamma_2 = float(numpy.sqrt(max(certificate.alpha_2, 0.0)))
    verification = verify_synthesis(
        design_model,
        L,
        gamma_1,
        gamma_2,
        options.frequency_grid(),
        program.constraint_margins(certificate),
    )
    if not verification.max_closed_loop_real_part < 0.0:
        raise distributed_fdi.exceptions.UnstableResultError(
            f"Agent {relative_model.agent_id}: spectral abscissa of the error dynamics is "
            f"{verification.max_closed_loop_real_part:.6g}."
        )

    for matrix in (delta_L, L):
        matrix.setflags(write=False)
    result = SynthesisResult(
        agent_id=relative_model.agent_id,
        design_model=design_model,
        Y=care_solution.Y,
        L_nominal=care_solution.L_nominal,
        certificate=certificate,
        delta_L=delta_L,
        L=L,
        verification=verification,
        includes_fault_sensitivity=program.includes_fault_sensitivity,
        was_noise_regularized=design_model.xi_d > relative_model.xi_d,
        name_of_solver=outcome.name_of_solver,
        number_of_solver_iterations=outcome.number_of_iterations,
        residual_norm_of_riccati_equation=care_solution.residual_norm,
        used_bisection=used_bisection,
    )
    log_method = logger.info if result.passed else logger.warning
    log_method(
        "observer_synthesis_completed",
        agent_id=relative_model.agent_id,
        gamma_1=result.gamma_1,
        gamma_2=result.gamma_2,
        achieved_h2=result.achieved_h2,
        achieved_hminus=result.achieved_hminus,
        max_closed_loop_real_part=verification.max_closed_loop_real_part,
        passed=result.passed,
        duration_in_seconds=round(time.perf_counter() - started_at, 4),
    )
    return result
