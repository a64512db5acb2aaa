"""
Conic solver access for the observer synthesis, backed by ``cvxpy``.

The synthesis module builds a ``cvxpy.Problem``; this module chooses the
solver, passes the tolerance, maps the solver status onto the toolkit's
exception hierarchy and reports the iteration count and solve time.

Solver selection
----------------
The primary solver (``CLARABEL`` by default, an interior-point method) is
tried first.  When it is not installed, raises ``cvxpy.error.SolverError`` or
stops at an inaccurate point, the fallback solver (``SCS`` by default) is
tried.  An inaccurate point is still returned when no solver reaches its
tolerance, so the caller can decide whether to retry with a different
formulation.  This includes the case where the fallback certifies
infeasibility after the primary stopped at an inaccurate optimum: the
primary point is kept.  A solver error from both raises
``SolverStalledError``.
"""

import dataclasses

import cvxpy
import structlog

import distributed_fdi.configuration
import distributed_fdi.exceptions

logger = structlog.get_logger()

_STATUSES_OF_INFEASIBILITY = {cvxpy.INFEASIBLE, cvxpy.INFEASIBLE_INACCURATE}


@dataclasses.dataclass(frozen=True)
class SolverOutcome:
    """
    Result of one call to ``SemidefiniteProgramSolver.solve``.

    Attributes:
        status: The ``cvxpy`` status string of the accepted solve.
        name_of_solver: Solver that produced the accepted point.
        optimal_value: Objective value at that point.
        number_of_iterations: Iterations reported by the solver, when known.
        solve_time_in_seconds: Solve time reported by the solver, when known.
    """

    status: str
    name_of_solver: str
    optimal_value: float
    number_of_iterations: int | None
    solve_time_in_seconds: float | None

    @property
    def is_accurate(self) -> bool:
        return self.status == cvxpy.OPTIMAL


class SemidefiniteProgramSolver:
    """Solve small dense semidefinite programs with a primary and a fallback solver."""

    def __init__(
        self,
        name_of_solver: str = distributed_fdi.configuration.DEFAULT_NAME_OF_SEMIDEFINITE_PROGRAM_SOLVER,
        name_of_fallback_solver: str | None = (
            distributed_fdi.configuration.DEFAULT_NAME_OF_FALLBACK_SEMIDEFINITE_PROGRAM_SOLVER
        ),
        tolerance: float = 1e-8,
    ) -> None:
        """
        Args:
            name_of_solver: ``cvxpy`` name of the primary solver.
            name_of_fallback_solver: ``cvxpy`` name of the solver tried after
                the primary one; ``None`` disables the fallback.
            tolerance: Feasibility and duality-gap tolerance passed to the
                solvers that accept one.
        """
        self._names_of_solvers = [name_of_solver.upper()]
        if name_of_fallback_solver and name_of_fallback_solver.upper() != name_of_solver.upper():
            self._names_of_solvers.append(name_of_fallback_solver.upper())
        self._tolerance = tolerance

    @classmethod
    def from_configuration(
        cls,
        configuration: distributed_fdi.configuration.DistributedFdiConfiguration,
        tolerance: float = 1e-8,
    ) -> "SemidefiniteProgramSolver":
        return cls(
            name_of_solver=configuration.name_of_semidefinite_program_solver,
            name_of_fallback_solver=configuration.name_of_fallback_semidefinite_program_solver,
            tolerance=tolerance,
        )

    def _options_for_solver(self, name_of_solver: str) -> dict[str, float | int]:
        if name_of_solver == "CLARABEL":
            return {"tol_gap_abs": self._tolerance, "tol_gap_rel": self._tolerance, "tol_feas": self._tolerance}
        if name_of_solver == "SCS":
            return {"eps_abs": self._tolerance, "eps_rel": self._tolerance, "max_iters": 200_000}
        return {}

    def solve(self, problem: cvxpy.Problem) -> SolverOutcome:
        """
        Solve ``problem`` in place and describe the accepted point.

        Raises:
            InfeasibleError: a solver certified infeasibility and no earlier
                solver returned an inaccurate optimum.
            SolverStalledError: no solver produced a point.
        """
        inaccurate_outcome: SolverOutcome | None = None
        reported_infeasibility = False
        for name_of_solver in self._names_of_solvers:
            try:
                problem.solve(solver=name_of_solver, **self._options_for_solver(name_of_solver))
            except cvxpy.error.SolverError as error:
                logger.warning("semidefinite_program_solver_failed", solver=name_of_solver, error=str(error))
                continue

            status = problem.status
            if status == cvxpy.INFEASIBLE and inaccurate_outcome is not None:
                logger.warning(
                    "semidefinite_program_solver_disagreed",
                    solver=name_of_solver,
                    status=status,
                    kept_solver=inaccurate_outcome.name_of_solver,
                )
                break
            if status == cvxpy.INFEASIBLE:
                raise distributed_fdi.exceptions.InfeasibleError(
                    f"{name_of_solver} certified the observer synthesis program infeasible."
                )
            if status in _STATUSES_OF_INFEASIBILITY:
                reported_infeasibility = True
                logger.warning("semidefinite_program_solver_inaccurate", solver=name_of_solver, status=status)
                continue

            statistics = problem.solver_stats
            outcome = SolverOutcome(
                status=status,
                name_of_solver=name_of_solver,
                optimal_value=float(problem.value) if problem.value is not None else float("nan"),
                number_of_iterations=getattr(statistics, "num_iters", None),
                solve_time_in_seconds=getattr(statistics, "solve_time", None),
            )
            if outcome.is_accurate:
                logger.debug(
                    "semidefinite_program_solved",
                    solver=name_of_solver,
                    number_of_iterations=outcome.number_of_iterations,
                    solve_time_in_seconds=outcome.solve_time_in_seconds,
                )
                return outcome
            logger.warning("semidefinite_program_solver_inaccurate", solver=name_of_solver, status=status)
            if status == cvxpy.OPTIMAL_INACCURATE and inaccurate_outcome is None:
                inaccurate_outcome = outcome

        if inaccurate_outcome is not None:
            # A later attempt may have overwritten the variable values.
            if inaccurate_outcome.name_of_solver != self._names_of_solvers[-1]:
                problem.solve(
                    solver=inaccurate_outcome.name_of_solver,
                    **self._options_for_solver(inaccurate_outcome.name_of_solver),
                )
            return inaccurate_outcome
        if reported_infeasibility:
            raise distributed_fdi.exceptions.InfeasibleError(
                "The observer synthesis program is infeasible up to solver accuracy."
            )
        raise distributed_fdi.exceptions.SolverStalledError(
            f"No solver among {self._names_of_solvers} reached its tolerance."
        )
