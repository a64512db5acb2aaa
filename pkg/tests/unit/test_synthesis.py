"""
Tests for distributed_fdi/synthesis.py.

The solver-backed tests run the real cvxpy program on the packaged
four-agent example; acceptance is the verifier's verdict and the substituted
constraint margins, not specific γ values.
"""

import numpy
import pydantic
import pytest
import structlog.testing

import distributed_fdi.cli.scenario_loading
import distributed_fdi.exceptions
import distributed_fdi.matrix_equations
import distributed_fdi.network_model
import distributed_fdi.synthesis


def _toy_relative_model(
    B_d=((1.0,), (0.0,)),
    D_d_bar=((1.0,),),
    B_f=((1.0,), (0.0,)),
    D_f_bar=((0.5,),),
) -> distributed_fdi.network_model.RelativeModel:
    """Two scalar agents with dynamics −1 and −2 observed through y₁ − y₂."""
    as_matrix = distributed_fdi.matrix_equations.as_read_only_matrix
    return distributed_fdi.network_model.RelativeModel(
        agent_id=1,
        member_ids=(1, 2),
        state_dimensions=(1, 1),
        A=as_matrix(numpy.diag([-1.0, -2.0])),
        B_u=as_matrix(numpy.zeros((2, 0)), number_of_rows=2),
        B_f=as_matrix(B_f, number_of_rows=2),
        B_d=as_matrix(B_d, number_of_rows=2),
        C_bar=as_matrix([[1.0, -1.0]]),
        D_f_bar=as_matrix(D_f_bar, number_of_rows=1),
        D_d_bar=as_matrix(D_d_bar, number_of_rows=1),
    )


def _relative_model(agents, topology, agent_id):
    return distributed_fdi.network_model.build_relative_model(agents, topology, agent_id)


class TestSynthesisOptions:
    def test_defaults(self):
        options = distributed_fdi.synthesis.SynthesisOptions()

        assert options.beta_1 == 1.0
        assert options.beta_2 == 1.0
        assert options.lmi_margin > 0.0
        assert options.frequency_grid().shape == (1000,)
        assert options.frequency_grid()[0] == pytest.approx(1e-3)
        assert options.frequency_grid()[-1] == pytest.approx(1e3)

    @pytest.mark.parametrize("field", ["beta_1", "beta_2", "lmi_margin"])
    def test_nonpositive_weights_are_rejected(self, field):
        with pytest.raises(pydantic.ValidationError):
            distributed_fdi.synthesis.SynthesisOptions(**{field: 0.0})

    def test_inverted_verification_grid_is_rejected(self):
        with pytest.raises(pydantic.ValidationError, match="highest frequency"):
            distributed_fdi.synthesis.SynthesisOptions(
                lowest_frequency_of_verification_grid_in_radians_per_second=10.0,
                highest_frequency_of_verification_grid_in_radians_per_second=1.0,
            )

    def test_unknown_field_is_rejected(self):
        with pytest.raises(pydantic.ValidationError):
            distributed_fdi.synthesis.SynthesisOptions(gamma=1.0)


class TestDesignModel:
    def test_singular_noise_is_lifted_on_the_hub_agent(self, four_agent_models, four_agent_topology):
        relative_model = _relative_model(four_agent_models, four_agent_topology, 1)

        regularized = distributed_fdi.synthesis.regularize_measurement_noise(relative_model, 1e-2)

        assert regularized.xi_d == relative_model.xi_d + relative_model.xi_y
        largest_raw_eigenvalue = numpy.linalg.eigvalsh(relative_model.D_d_bar @ relative_model.D_d_bar.T)[-1]
        eigenvalues = numpy.linalg.eigvalsh(regularized.D_d_bar @ regularized.D_d_bar.T)
        assert eigenvalues[0] >= 1e-2 * largest_raw_eigenvalue * (1.0 - 1e-9)
        numpy.testing.assert_array_equal(regularized.B_d[:, relative_model.xi_d :], 0.0)

    def test_well_conditioned_noise_is_left_alone(self, four_agent_models, four_agent_topology):
        relative_model = _relative_model(four_agent_models, four_agent_topology, 4)

        assert distributed_fdi.synthesis.regularize_measurement_noise(relative_model, 1e-2) is relative_model

    def test_zero_ratio_disables_the_floor(self, four_agent_models, four_agent_topology):
        relative_model = _relative_model(four_agent_models, four_agent_topology, 1)

        assert distributed_fdi.synthesis.regularize_measurement_noise(relative_model, 0.0) is relative_model

    def test_output_identity_fault_model(self, four_agent_models, four_agent_topology):
        relative_model = _relative_model(four_agent_models, four_agent_topology, 2)
        options = distributed_fdi.synthesis.SynthesisOptions(relative_fault_model="output_identity")

        design_model = distributed_fdi.synthesis.prepare_design_model(relative_model, options)

        numpy.testing.assert_array_equal(design_model.B_f, numpy.zeros((relative_model.mu, relative_model.xi_y)))
        numpy.testing.assert_array_equal(design_model.D_f_bar, numpy.eye(relative_model.xi_y))


class TestNominalGain:
    def test_two_state_toy_neighborhood(self):
        relative_model = _toy_relative_model()

        solution = distributed_fdi.synthesis.nominal_gain(relative_model)

        assert solution.residual_norm < 1e-8
        assert distributed_fdi.matrix_equations.is_hurwitz(relative_model.A - solution.L_nominal @ relative_model.C_bar)
        numpy.testing.assert_allclose(
            solution.L_nominal,
            solution.Y @ relative_model.C_bar.T + relative_model.B_d @ relative_model.D_d_bar.T,
            atol=1e-12,
        )

    def test_noise_free_dynamics_with_hurwitz_matrix_gives_zero(self):
        relative_model = _toy_relative_model(B_d=((0.0,), (0.0,)), D_d_bar=((1.0,),))

        solution = distributed_fdi.synthesis.nominal_gain(relative_model)

        numpy.testing.assert_allclose(solution.Y, numpy.zeros((2, 2)), atol=1e-12)
        numpy.testing.assert_allclose(solution.L_nominal, numpy.zeros((2, 1)), atol=1e-12)

    def test_second_agent_of_the_four_agent_example(self, four_agent_models, four_agent_topology):
        design_model = distributed_fdi.synthesis.prepare_design_model(
            _relative_model(four_agent_models, four_agent_topology, 2), distributed_fdi.synthesis.SynthesisOptions()
        )

        solution = distributed_fdi.synthesis.nominal_gain(design_model)

        assert design_model.mu == 8
        assert distributed_fdi.matrix_equations.spectral_abscissa(
            design_model.A - solution.L_nominal @ design_model.C_bar
        ) < 0.0

    def test_raw_hub_neighborhood_has_singular_noise(self, four_agent_models, four_agent_topology):
        with pytest.raises(distributed_fdi.exceptions.SingularNoiseError):
            distributed_fdi.synthesis.nominal_gain(_relative_model(four_agent_models, four_agent_topology, 1))


class TestBuildLmiProgram:
    def test_decision_scalars_of_the_leaf_agent(self, four_agent_models, four_agent_topology):
        relative_model = _relative_model(four_agent_models, four_agent_topology, 4)
        solution = distributed_fdi.synthesis.nominal_gain(relative_model)

        program = distributed_fdi.synthesis.build_lmi_program(
            relative_model, solution.L_nominal, solution.Y, distributed_fdi.synthesis.SynthesisOptions()
        )

        # P: 15, N: 10, Q: 3, Z: 3, α₁ and α₂.
        assert program.number_of_decision_scalars == 33
        assert program.variables["P"].shape == (5, 5)
        assert program.variables["N"].shape == (5, 2)
        assert program.variables["Q"].shape == (2, 2)

    def test_fault_sensitivity_follows_the_rank_of_the_fault_feedthrough(self):
        relative_model = _toy_relative_model(B_f=((1.0, 0.0), (0.0, 1.0)), D_f_bar=((0.5, -0.5),))
        solution = distributed_fdi.synthesis.nominal_gain(relative_model)

        automatic = distributed_fdi.synthesis.build_lmi_program(
            relative_model, solution.L_nominal, solution.Y, distributed_fdi.synthesis.SynthesisOptions()
        )
        required = distributed_fdi.synthesis.build_lmi_program(
            relative_model,
            solution.L_nominal,
            solution.Y,
            distributed_fdi.synthesis.SynthesisOptions(fault_sensitivity="required"),
        )
        full_rank = distributed_fdi.synthesis.build_lmi_program(
            _toy_relative_model(), solution.L_nominal, solution.Y, distributed_fdi.synthesis.SynthesisOptions()
        )

        assert not automatic.includes_fault_sensitivity
        assert "fault_sensitivity" not in automatic.constraint_names
        assert required.includes_fault_sensitivity
        assert "minimum_fault_sensitivity" in required.constraint_names
        assert full_rank.includes_fault_sensitivity

    def test_zero_coupling_reduces_to_the_certificate_block(self):
        relative_model = _toy_relative_model()
        solution = distributed_fdi.synthesis.nominal_gain(relative_model)
        program = distributed_fdi.synthesis.build_lmi_program(
            relative_model, solution.L_nominal, solution.Y, distributed_fdi.synthesis.SynthesisOptions()
        )
        P = numpy.array([[2.0, 0.5], [0.5, 1.0]])
        certificate = distributed_fdi.synthesis.Certificate(
            P=P, N=numpy.zeros((2, 1)), Q=numpy.zeros((1, 1)), Z=numpy.zeros((1, 1)), alpha_1=1.0, alpha_2=0.0
        )

        gain_coupling = program.constraint_matrices(certificate)["gain_coupling"]

        expected = numpy.zeros((3, 3))
        expected[1:, 1:] = P
        numpy.testing.assert_array_equal(gain_coupling, expected)
        assert program.constraint_margins(certificate)["gain_coupling"] == pytest.approx(0.0, abs=1e-12)

    def test_zero_fault_path_makes_the_sensitivity_block_negative(self):
        relative_model = _toy_relative_model(B_f=((0.0,), (0.0,)), D_f_bar=((0.0,),))
        solution = distributed_fdi.synthesis.nominal_gain(relative_model)
        program = distributed_fdi.synthesis.build_lmi_program(
            relative_model,
            solution.L_nominal,
            solution.Y,
            distributed_fdi.synthesis.SynthesisOptions(fault_sensitivity="required"),
        )
        certificate = distributed_fdi.synthesis.Certificate(
            P=numpy.eye(2), N=numpy.zeros((2, 1)), Q=numpy.zeros((1, 1)), Z=numpy.zeros((1, 1)), alpha_1=1.0,
            alpha_2=program.epsilon,
        )

        top_left = program.constraint_matrices(certificate)["fault_sensitivity"][0, 0]

        assert top_left == pytest.approx(-2.0 * program.epsilon)


class TestVerifySynthesis:
    def test_nominal_gain_achieves_the_riccati_trace(self, four_agent_models, four_agent_topology):
        relative_model = _relative_model(four_agent_models, four_agent_topology, 4)
        solution = distributed_fdi.synthesis.nominal_gain(relative_model)
        optimum = numpy.sqrt(numpy.trace(relative_model.C_bar @ solution.Y @ relative_model.C_bar.T))

        report = distributed_fdi.synthesis.verify_synthesis(relative_model, solution.L_nominal, numpy.inf, 0.0)

        assert report.h2_of_Trd == pytest.approx(optimum, rel=1e-6)
        assert report.norm_of_disturbance_feedthrough > 0.0

    def test_vacuous_bounds_always_pass(self):
        relative_model = _toy_relative_model()
        solution = distributed_fdi.synthesis.nominal_gain(relative_model)

        report = distributed_fdi.synthesis.verify_synthesis(relative_model, solution.L_nominal, numpy.inf, 0.0)

        assert report.passed
        assert report.max_closed_loop_real_part < 0.0

    def test_destabilizing_gain_fails(self):
        relative_model = _toy_relative_model()

        report = distributed_fdi.synthesis.verify_synthesis(relative_model, [[-5.0], [0.0]], numpy.inf, 0.0)

        assert report.max_closed_loop_real_part == pytest.approx(4.0)
        assert not report.passed
        assert report.h2_of_Trd == numpy.inf

    def test_negative_constraint_margin_invalidates_the_certificate(self):
        relative_model = _toy_relative_model()
        solution = distributed_fdi.synthesis.nominal_gain(relative_model)

        report = distributed_fdi.synthesis.verify_synthesis(
            relative_model, solution.L_nominal, numpy.inf, 0.0, lmi_residuals={"decay_rate": -1e-3}
        )

        assert report.passed
        assert not report.certificate_is_valid


class TestSynthesizeObserver:
    def test_hub_agent_passes_verification(self, four_agent_scenario, four_agent_models, four_agent_topology):
        result = distributed_fdi.synthesis.synthesize_observer(
            _relative_model(four_agent_models, four_agent_topology, 1), four_agent_scenario.design_options()
        )

        assert result.passed
        assert result.was_noise_regularized
        assert result.achieved_h2 <= result.gamma_1 * (1.0 + 1e-6)
        assert result.achieved_hminus >= result.gamma_2 * (1.0 - 1e-6)
        assert result.verification.max_closed_loop_real_part < 0.0
        assert result.verification.certificate_is_valid
        assert numpy.linalg.eigvalsh(result.P)[0] > 0.0

    def test_correction_is_recovered_from_the_certificate(self, four_agent_scenario, four_agent_models, four_agent_topology):
        result = distributed_fdi.synthesis.synthesize_observer(
            _relative_model(four_agent_models, four_agent_topology, 4), four_agent_scenario.design_options()
        )

        numpy.testing.assert_allclose(result.delta_L, numpy.linalg.solve(result.P, result.N), rtol=1e-12, atol=1e-12)
        numpy.testing.assert_allclose(result.L - result.L_nominal, result.delta_L, rtol=1e-12, atol=1e-12)

    def test_dominant_robustness_weight_approaches_the_riccati_optimum(self, four_agent_models, four_agent_topology):
        relative_model = _relative_model(four_agent_models, four_agent_topology, 4)
        optimum = numpy.sqrt(
            numpy.trace(
                relative_model.C_bar @ distributed_fdi.synthesis.nominal_gain(relative_model).Y @ relative_model.C_bar.T
            )
        )

        result = distributed_fdi.synthesis.synthesize_observer(
            relative_model, distributed_fdi.synthesis.SynthesisOptions(beta_1=1e4)
        )

        assert result.gamma_1 >= optimum * (1.0 - 1e-6)
        assert result.gamma_1 == pytest.approx(optimum, rel=0.05)

    def test_sensitivity_grows_with_its_weight(self):
        sensor_scenario = distributed_fdi.cli.scenario_loading.load_preset(2)
        relative_model = _relative_model(sensor_scenario.agent_models(), sensor_scenario.topology_model(), 4)
        design_options = sensor_scenario.design_options()

        gammas = [
            distributed_fdi.synthesis.synthesize_observer(
                relative_model, design_options.model_copy(update={"beta_2": beta_2})
            ).gamma_2
            for beta_2 in (0.5, 1.0, 2.0)
        ]

        assert gammas[0] <= gammas[1] * (1.0 + 1e-4) + 1e-6
        assert gammas[1] <= gammas[2] * (1.0 + 1e-4) + 1e-6

    def test_neighborhood_without_fault_channels_is_infeasible(self):
        relative_model = _toy_relative_model(B_f=(), D_f_bar=())

        with pytest.raises(distributed_fdi.exceptions.InfeasibleError):
            distributed_fdi.synthesis.synthesize_observer(relative_model, distributed_fdi.synthesis.SynthesisOptions())

    def test_zeroed_fault_channels_are_infeasible(self):
        relative_model = _toy_relative_model(B_f=((0.0,), (0.0,)), D_f_bar=((0.0,),))

        with pytest.raises(distributed_fdi.exceptions.InfeasibleError):
            distributed_fdi.synthesis.synthesize_observer(relative_model, distributed_fdi.synthesis.SynthesisOptions())

    def test_completion_is_logged(self):
        with structlog.testing.capture_logs() as captured:
            result = distributed_fdi.synthesis.synthesize_observer(
                _toy_relative_model(), distributed_fdi.synthesis.SynthesisOptions()
            )

        events = [entry for entry in captured if entry["event"] == "observer_synthesis_completed"]
        assert len(events) == 1
        assert events[0]["agent_id"] == 1
        assert events[0]["passed"] is result.passed
