"""
Service-layer orchestrator for a distributed fault diagnosis run.

The service turns a validated ``ScenarioConfig`` into the run's output
directory in four stages::

    synthesize  one observer per agent (fanned out over a thread pool)
    simulate    the closed-loop network with the synthesized gains
    calibrate   fault-free Monte Carlo thresholds
    diagnose    sliding RMS, fault patterns and one verdict per decision window

Every stage failure is a ``DistributedFdiError`` whose ``exit_code`` becomes
the run's exit code.  The stages that did complete still write their files,
and every report written after a failure carries ``failed: true``.  Files are
written once, in a fixed order, after the last stage has returned.
"""

import concurrent.futures
import dataclasses
import pathlib
import time
import typing

import numpy
import structlog

import distributed_fdi.configuration
import distributed_fdi.contracts_shared_across_layers.reports
import distributed_fdi.contracts_shared_across_layers.scenario
import distributed_fdi.exceptions
import distributed_fdi.fdi_evaluation
import distributed_fdi.integrations.output_files
import distributed_fdi.integrations.semidefinite_program_solver
import distributed_fdi.logging_config
import distributed_fdi.network_model
import distributed_fdi.prometheus_metrics
import distributed_fdi.simulation
import distributed_fdi.synthesis

logger = structlog.get_logger()

reports = distributed_fdi.contracts_shared_across_layers.reports
output_files = distributed_fdi.integrations.output_files

LastStage = typing.Literal["synthesis", "simulation", "evaluation"]

_STATUS_OF_SYNTHESIS_ERROR: dict[type[distributed_fdi.exceptions.DistributedFdiError], str] = {
    distributed_fdi.exceptions.InfeasibleError: "infeasible",
    distributed_fdi.exceptions.SolverStalledError: "stalled",
    distributed_fdi.exceptions.UnstableResultError: "unstable",
}


@dataclasses.dataclass
class PipelineOutcome:
    """Everything a run produced, complete or not; ``None`` marks a stage that did not run."""

    scenario: distributed_fdi.contracts_shared_across_layers.scenario.ScenarioConfig
    exit_code: int = distributed_fdi.exceptions.EXIT_CODE_FOR_SUCCESS
    failure_detail: str | None = None
    synthesis_report: reports.SynthesisReport | None = None
    trajectory: distributed_fdi.simulation.Trajectory | None = None
    thresholds: distributed_fdi.fdi_evaluation.Thresholds | None = None
    evaluation: distributed_fdi.fdi_evaluation.EvaluationSeries | None = None
    verdicts: list[distributed_fdi.fdi_evaluation.Verdict] = dataclasses.field(default_factory=list)

    @property
    def failed(self) -> bool:
        return self.exit_code != distributed_fdi.exceptions.EXIT_CODE_FOR_SUCCESS

    def record_failure(self, error: distributed_fdi.exceptions.DistributedFdiError) -> None:
        if not self.failed:
            self.exit_code = error.exit_code
            self.failure_detail = error.detail


class FaultDiagnosisPipelineService:
    """
    Run the synthesis, simulation and diagnosis stages of one scenario.

    The service holds only runtime configuration; the scenario is passed to
    every call, so one instance can serve several scenarios in turn.
    """

    def __init__(
        self,
        configuration: distributed_fdi.configuration.DistributedFdiConfiguration | None = None,
    ) -> None:
        """
        Args:
            configuration: Runtime settings (worker threads, solvers, CSV
                precision, metrics file name).  Defaults to the environment.
        """
        self._configuration = configuration or distributed_fdi.configuration.DistributedFdiConfiguration()

    # ── Synthesis ────────────────────────────────────────────────────────

    def _synthesize_agent(
        self,
        scenario: distributed_fdi.contracts_shared_across_layers.scenario.ScenarioConfig,
        agents: list[distributed_fdi.network_model.AgentModel],
        topology: distributed_fdi.network_model.Topology,
        agent_id: int,
    ) -> tuple[reports.AgentSynthesisReport, int]:
        options = scenario.design_options()
        relative_model = distributed_fdi.network_model.build_relative_model(agents, topology, agent_id)
        neighborhood = distributed_fdi.network_model.validate_neighborhood(relative_model)
        logger.info(
            "neighborhood_validated",
            agent_id=agent_id,
            is_detectable=neighborhood.is_detectable,
            is_observable=neighborhood.is_observable,
            rank_of_noise_covariance=neighborhood.rank_of_noise_covariance,
        )
        solver = distributed_fdi.integrations.semidefinite_program_solver.SemidefiniteProgramSolver.from_configuration(
            self._configuration, tolerance=options.solver_tolerance
        )

        started_at = time.perf_counter()
        try:
            result = distributed_fdi.synthesis.synthesize_observer(relative_model, options, solver)
        except distributed_fdi.exceptions.DistributedFdiError as error:
            status = _STATUS_OF_SYNTHESIS_ERROR.get(type(error), "error")
            logger.error("observer_synthesis_failed", agent_id=agent_id, status=status, detail=error.detail)
            distributed_fdi.prometheus_metrics.counter_of_observer_syntheses.labels(outcome=status).inc()
            return (
                reports.AgentSynthesisReport(
                    agent_id=agent_id,
                    status=typing.cast(reports.SynthesisStatus, status),
                    detail=error.detail,
                    neighbor_ids=list(relative_model.neighbor_ids),
                ),
                error.exit_code,
            )
        finally:
            distributed_fdi.prometheus_metrics.histogram_of_duration_of_observer_synthesis_in_seconds.observe(
                time.perf_counter() - started_at
            )

        status = "passed" if result.passed else "failed_verification"
        distributed_fdi.prometheus_metrics.counter_of_observer_syntheses.labels(outcome=status).inc()
        distributed_fdi.prometheus_metrics.gauge_of_closed_loop_spectral_abscissa.labels(agent=str(agent_id)).set(
            result.verification.max_closed_loop_real_part
        )
        report = reports.AgentSynthesisReport(
            agent_id=agent_id,
            status=typing.cast(reports.SynthesisStatus, status),
            detail=None if result.passed else distributed_fdi.exceptions.VerificationFailedError.default_detail,
            neighbor_ids=list(relative_model.neighbor_ids),
            gamma_1=result.gamma_1,
            gamma_2=result.gamma_2,
            achieved_h2=result.achieved_h2,
            achieved_hminus=result.achieved_hminus,
            max_closed_loop_real_part=result.verification.max_closed_loop_real_part,
            lmi_residuals=dict(result.verification.lmi_residuals),
            includes_fault_sensitivity=result.includes_fault_sensitivity,
            was_noise_regularized=result.was_noise_regularized,
            used_bisection=result.used_bisection,
            name_of_solver=result.name_of_solver,
            number_of_solver_iterations=result.number_of_solver_iterations,
            residual_norm_of_riccati_equation=result.residual_norm_of_riccati_equation,
            gain=result.L.tolist(),
        )
        exit_code = (
            distributed_fdi.exceptions.EXIT_CODE_FOR_SUCCESS
            if result.passed
            else distributed_fdi.exceptions.EXIT_CODE_FOR_VERIFICATION_FAILURE
        )
        return report, exit_code

    def synthesize(
        self,
        scenario: distributed_fdi.contracts_shared_across_layers.scenario.ScenarioConfig,
    ) -> tuple[reports.SynthesisReport, int]:
        """
        Synthesize every agent's observer.

        Returns the report and the exit code of the first agent, in id
        order, that did not pass (0 when all passed).
        """
        agents = scenario.agent_models()
        topology = scenario.topology_model()
        with concurrent.futures.ThreadPoolExecutor(
            max_workers=self._configuration.maximum_number_of_worker_threads,
            thread_name_prefix="observer_synthesis",
        ) as executor:
            outcomes = list(
                executor.map(
                    lambda agent_id: self._synthesize_agent(scenario, agents, topology, agent_id),
                    topology.agent_ids,
                )
            )
        exit_code = next(
            (code for _, code in outcomes if code != distributed_fdi.exceptions.EXIT_CODE_FOR_SUCCESS),
            distributed_fdi.exceptions.EXIT_CODE_FOR_SUCCESS,
        )
        report = reports.SynthesisReport(
            scenario=scenario.name,
            failed=exit_code != distributed_fdi.exceptions.EXIT_CODE_FOR_SUCCESS,
            agents=[agent_report for agent_report, _ in outcomes],
        )
        return report, exit_code

    # ── Simulation and diagnosis ─────────────────────────────────────────

    @staticmethod
    def network_scenario(
        scenario: distributed_fdi.contracts_shared_across_layers.scenario.ScenarioConfig,
        synthesis_report: reports.SynthesisReport,
    ) -> distributed_fdi.simulation.NetworkScenario:
        """Bundle the scenario with the gains of ``synthesis_report``."""
        gains = {}
        for agent_report in synthesis_report.agents:
            if agent_report.gain is None:
                raise distributed_fdi.exceptions.ScenarioValidationError(
                    f"The synthesis report has no observer gain for agent {agent_report.agent_id}."
                )
            gains[agent_report.agent_id] = numpy.array(agent_report.gain, dtype=numpy.float64)
        return distributed_fdi.simulation.NetworkScenario(
            agents=tuple(scenario.agent_models()),
            topology=scenario.topology_model(),
            gains=gains,
            signals=scenario.agent_signals(),
            initial_states=scenario.initial_state_vectors(),
            horizon=scenario.horizon,
            step=scenario.step,
            master_seed=scenario.seed,
        )

    def calibrate(
        self,
        scenario: distributed_fdi.contracts_shared_across_layers.scenario.ScenarioConfig,
        network_scenario: distributed_fdi.simulation.NetworkScenario,
    ) -> distributed_fdi.fdi_evaluation.Thresholds:
        options = scenario.evaluation
        return distributed_fdi.fdi_evaluation.calibrate_thresholds(
            network_scenario,
            number_of_runs=options.number_of_monte_carlo_runs,
            safety_factor=options.safety_factor,
            settle_time=options.settle_time_in_seconds,
            window_length_in_samples=options.window_length_in_samples(scenario.step),
            per_channel=options.per_channel_thresholds,
            maximum_number_of_worker_threads=self._configuration.maximum_number_of_worker_threads,
        )

    @staticmethod
    def diagnose(
        scenario: distributed_fdi.contracts_shared_across_layers.scenario.ScenarioConfig,
        trajectory: distributed_fdi.simulation.Trajectory,
        thresholds: distributed_fdi.fdi_evaluation.Thresholds,
    ) -> tuple[distributed_fdi.fdi_evaluation.EvaluationSeries, list[distributed_fdi.fdi_evaluation.Verdict]]:
        """Evaluate the residuals and isolate once per decision window."""
        options = scenario.evaluation
        topology = scenario.topology_model()
        evaluation = distributed_fdi.fdi_evaluation.evaluate_trajectory(
            trajectory, options.window_length_in_samples(scenario.step)
        )
        windows = options.decision_windows or [(min(options.settle_time_in_seconds, scenario.horizon), scenario.horizon)]
        verdicts = []
        for window in windows:
            patterns = distributed_fdi.fdi_evaluation.generate_flags(
                evaluation, thresholds, window, options.debounce_time_in_seconds
            )
            for verdict in distributed_fdi.fdi_evaluation.isolate(patterns, topology):
                distributed_fdi.prometheus_metrics.counter_of_isolation_verdicts.labels(status=verdict.status).inc()
                logger.info(
                    "isolation_verdict",
                    window=list(verdict.window),
                    status=verdict.status,
                    culprit=verdict.culprit,
                    evidence={str(agent_id): bits for agent_id, bits in verdict.evidence.items()},
                )
                verdicts.append(verdict)
        return evaluation, verdicts

    def _evaluate(self, outcome: PipelineOutcome, network_scenario: distributed_fdi.simulation.NetworkScenario) -> None:
        assert outcome.trajectory is not None
        try:
            if outcome.thresholds is None:
                outcome.thresholds = self.calibrate(outcome.scenario, network_scenario)
            outcome.evaluation, outcome.verdicts = self.diagnose(outcome.scenario, outcome.trajectory, outcome.thresholds)
        except distributed_fdi.exceptions.DistributedFdiError as error:
            outcome.record_failure(error)

    # ── Entry points ─────────────────────────────────────────────────────

    def run(
        self,
        scenario: distributed_fdi.contracts_shared_across_layers.scenario.ScenarioConfig,
        output_directory: pathlib.Path,
        last_stage: LastStage = "evaluation",
    ) -> int:
        """Run the stages up to ``last_stage``, write the outputs and return the exit code."""
        outcome = PipelineOutcome(scenario=scenario)
        with distributed_fdi.logging_config.run_context(scenario.name, scenario.seed):
            logger.info("pipeline_started", last_stage=last_stage)
            try:
                outcome.synthesis_report, synthesis_exit_code = self.synthesize(scenario)
                unverified = [
                    agent_report.agent_id
                    for agent_report in outcome.synthesis_report.agents
                    if agent_report.status == "failed_verification"
                ]
                if unverified and synthesis_exit_code == distributed_fdi.exceptions.EXIT_CODE_FOR_VERIFICATION_FAILURE:
                    raise distributed_fdi.exceptions.VerificationFailedError(
                        f"Observers of agents {unverified} failed verification."
                    )
                if synthesis_exit_code != distributed_fdi.exceptions.EXIT_CODE_FOR_SUCCESS:
                    outcome.exit_code = synthesis_exit_code
                    outcome.failure_detail = "observer synthesis did not pass for every agent"
                elif last_stage != "synthesis":
                    network_scenario = self.network_scenario(scenario, outcome.synthesis_report)
                    outcome.trajectory = distributed_fdi.simulation.simulate_scenario(network_scenario)
                    if last_stage == "evaluation":
                        self._evaluate(outcome, network_scenario)
            except distributed_fdi.exceptions.DistributedFdiError as error:
                outcome.record_failure(error)

            self._write_outputs(outcome, output_directory)
        return outcome.exit_code

    def evaluate_saved_run(
        self,
        scenario: distributed_fdi.contracts_shared_across_layers.scenario.ScenarioConfig,
        output_directory: pathlib.Path,
    ) -> int:
        """
        Evaluate the ``trajectory.csv`` of an earlier run in ``output_directory``.

        Thresholds come from ``thresholds.json`` when present; otherwise they
        are calibrated with the gains of ``synthesis_report.json``.
        """
        outcome = PipelineOutcome(scenario=scenario)
        with distributed_fdi.logging_config.run_context(scenario.name, scenario.seed):
            try:
                outcome.trajectory = output_files.read_trajectory_csv(
                    output_directory / output_files.NAME_OF_TRAJECTORY
                )
                path_of_thresholds = output_directory / output_files.NAME_OF_THRESHOLDS
                if path_of_thresholds.is_file():
                    outcome.thresholds = thresholds_from_report(
                        reports.ThresholdsReport.model_validate_json(path_of_thresholds.read_text(encoding="utf-8"))
                    )
                path_of_synthesis_report = output_directory / output_files.NAME_OF_SYNTHESIS_REPORT
                if not path_of_synthesis_report.is_file():
                    raise distributed_fdi.exceptions.ScenarioParseError(f"{path_of_synthesis_report} does not exist.")
                synthesis_report = reports.SynthesisReport.model_validate_json(
                    path_of_synthesis_report.read_text(encoding="utf-8")
                )
                self._evaluate(outcome, self.network_scenario(scenario, synthesis_report))
            except distributed_fdi.exceptions.DistributedFdiError as error:
                outcome.record_failure(error)

            self._write_outputs(outcome, output_directory, include_trajectory=False)
        return outcome.exit_code

    # ── Outputs ──────────────────────────────────────────────────────────

    def _write_outputs(
        self,
        outcome: PipelineOutcome,
        output_directory: pathlib.Path,
        include_trajectory: bool = True,
    ) -> None:
        output_directory.mkdir(parents=True, exist_ok=True)
        significant_digits = self._configuration.number_of_significant_digits_in_csv

        output_files.write_json_model(
            output_directory / output_files.NAME_OF_EFFECTIVE_CONFIGURATION, outcome.scenario
        )
        if outcome.synthesis_report is not None:
            output_files.write_json_model(
                output_directory / output_files.NAME_OF_SYNTHESIS_REPORT, outcome.synthesis_report
            )
        if include_trajectory and outcome.trajectory is not None:
            output_files.write_trajectory_csv(
                output_directory / output_files.NAME_OF_TRAJECTORY, outcome.trajectory, significant_digits
            )
        if outcome.thresholds is not None:
            output_files.write_json_model(
                output_directory / output_files.NAME_OF_THRESHOLDS, thresholds_to_report(outcome.thresholds)
            )
            if outcome.evaluation is not None:
                output_files.write_evaluation_csv(
                    output_directory / output_files.NAME_OF_EVALUATION,
                    outcome.evaluation,
                    outcome.thresholds,
                    significant_digits,
                )
        if outcome.evaluation is not None or outcome.failed:
            output_files.write_json_model(
                output_directory / output_files.NAME_OF_VERDICTS,
                reports.VerdictsReport(
                    scenario=outcome.scenario.name,
                    failed=outcome.failed,
                    verdicts=[verdict_to_record(verdict) for verdict in outcome.verdicts],
                ),
            )
        output_files.write_summary(output_directory / output_files.NAME_OF_SUMMARY, summarize(outcome))
        distributed_fdi.prometheus_metrics.write_metrics_to_textfile(
            output_directory / self._configuration.name_of_metrics_file
        )
        logger.info(
            "pipeline_outputs_written",
            output_directory=str(output_directory),
            exit_code=outcome.exit_code,
            failed=outcome.failed,
        )


# ──────────────────────────────────────────────────────────────────────────────
#  Conversions
# ──────────────────────────────────────────────────────────────────────────────


def thresholds_to_report(thresholds: distributed_fdi.fdi_evaluation.Thresholds) -> reports.ThresholdsReport:
    return reports.ThresholdsReport(
        per_agent=dict(thresholds.per_agent),
        per_channel=(
            {agent_id: [float(value) for value in values] for agent_id, values in thresholds.per_channel.items()}
            if thresholds.per_channel is not None
            else None
        ),
        number_of_runs=thresholds.number_of_runs,
        seeds=list(thresholds.seeds),
        safety_factor=thresholds.safety_factor,
        settle_time_in_seconds=thresholds.settle_time,
        window_length_in_samples=thresholds.window_length_in_samples,
    )


def thresholds_from_report(report: reports.ThresholdsReport) -> distributed_fdi.fdi_evaluation.Thresholds:
    return distributed_fdi.fdi_evaluation.Thresholds(
        per_agent=dict(report.per_agent),
        per_channel=(
            {agent_id: numpy.array(values, dtype=numpy.float64) for agent_id, values in report.per_channel.items()}
            if report.per_channel is not None
            else None
        ),
        number_of_runs=report.number_of_runs,
        seeds=tuple(report.seeds),
        safety_factor=report.safety_factor,
        settle_time=report.settle_time_in_seconds,
        window_length_in_samples=report.window_length_in_samples,
    )


def verdict_to_record(verdict: distributed_fdi.fdi_evaluation.Verdict) -> reports.VerdictRecord:
    return reports.VerdictRecord(
        window=verdict.window,
        status=verdict.status,
        culprit=verdict.culprit,
        reporter=verdict.reporter,
        evidence=dict(verdict.evidence),
        candidates=list(verdict.candidates),
    )


def summarize(outcome: PipelineOutcome) -> list[str]:
    """Human-readable lines of ``summary.txt``; no timings, so reruns compare equal."""
    lines = [
        f"scenario: {outcome.scenario.name}",
        f"kind: {outcome.scenario.kind}",
        f"seed: {outcome.scenario.seed}",
        f"status: {'failed' if outcome.failed else 'ok'}",
        f"exit_code: {outcome.exit_code}",
    ]
    if outcome.failure_detail:
        lines.append(f"failure: {outcome.failure_detail}")
    if outcome.synthesis_report is not None:
        lines.append("synthesis:")
        for agent_report in outcome.synthesis_report.agents:
            if agent_report.gamma_1 is None:
                lines.append(f"  agent {agent_report.agent_id}: {agent_report.status} ({agent_report.detail})")
            else:
                lines.append(
                    f"  agent {agent_report.agent_id}: {agent_report.status} "
                    f"gamma_1={agent_report.gamma_1:.6g} gamma_2={agent_report.gamma_2:.6g} "
                    f"h2={agent_report.achieved_h2:.6g} hminus={agent_report.achieved_hminus:.6g} "
                    f"abscissa={agent_report.max_closed_loop_real_part:.6g}"
                )
    if outcome.thresholds is not None:
        lines.append("thresholds:")
        lines += [
            f"  agent {agent_id}: {value:.6g}" for agent_id, value in sorted(outcome.thresholds.per_agent.items())
        ]
    if outcome.verdicts:
        lines.append("verdicts:")
        for verdict in outcome.verdicts:
            evidence = " ".join(f"{agent_id}:{bits}" for agent_id, bits in sorted(verdict.evidence.items()))
            culprit = "" if verdict.culprit is None else f" culprit={verdict.culprit}"
            lines.append(
                f"  [{verdict.window[0]:g}, {verdict.window[1]:g}] {verdict.status}{culprit} evidence={evidence}"
            )
    return lines


def run_pipeline(
    config: distributed_fdi.contracts_shared_across_layers.scenario.ScenarioConfig,
    output_directory: pathlib.Path,
    configuration: distributed_fdi.configuration.DistributedFdiConfiguration | None = None,
) -> int:
    """Full synthesize → simulate → evaluate → isolate run; returns the exit code."""
    return FaultDiagnosisPipelineService(configuration).run(config, output_directory)
