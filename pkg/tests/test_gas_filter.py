import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankgas.gas_filter import (
    FilterDivergence,
    ModelSpec,
    PanelDataset,
    ParameterVector,
    filter_path,
    initial_worth,
    total_loglik,
    unconditional_worth,
)
from rankgas.plackett_luce import Ranking, log_pmf
from rankgas.simulation import design_params, simulate_panel


def _mr_params(n, m=0, alpha=0.3, phi=0.5, seed=0):
    rng = np.random.default_rng(seed)
    omega = rng.normal(size=n)
    omega -= omega.mean()
    return ParameterVector(omega, rng.normal(size=m), [alpha], [phi])


def _panel(spec, params, t_len, seed=1, top=None):
    data, latent = simulate_panel(params, spec, t_len, np.random.default_rng(seed), top=top)
    return data, latent


class TestModelSpec:
    @pytest.mark.parametrize("kwargs", [
        dict(universe_size=3, score_order=1, variant="static"),
        dict(universe_size=3, score_order=1, ar_order=0, variant="mean-reverting"),
        dict(universe_size=3, score_order=1, ar_order=2, variant="random-walk"),
        dict(universe_size=3, variant="sideways"),
        dict(universe_size=3, absent_mode="ignore"),
        dict(universe_size=0),
    ])
    def test_rejects_inconsistent_orders(self, kwargs):
        with pytest.raises(ValueError):
            ModelSpec(**kwargs)

    def test_free_dimension(self):
        assert ModelSpec.mean_reverting(5, 2, 1, 2).n_free == 5 + 2 + 1 + 2 - 1
        assert ModelSpec.static(5, 1).n_free == 5
        # phi is fixed at one, so it is not free
        assert ModelSpec.random_walk(24, 1).n_free == 25


class TestParameterVector:
    def test_rejects_nonzero_sum(self):
        with pytest.raises(ValueError, match="sum to zero"):
            ParameterVector([1.0, 0.5])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=5, max_size=5))
    def test_free_round_trip(self, theta):
        spec = ModelSpec.mean_reverting(4, 0, 1, 1)
        params = ParameterVector.from_free(theta, spec)
        assert abs(params.omega.sum()) <= 1e-12 * max(1.0, np.abs(params.omega).sum())
        np.testing.assert_array_equal(params.to_free(spec), theta)

    def test_random_walk_phi_fixed(self):
        spec = ModelSpec.random_walk(3)
        params = ParameterVector.from_free([0.1, 0.2, 0.3], spec)
        assert params.phi.tolist() == [1.0]

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="do not match"):
            ParameterVector(np.zeros(3), [1.0]).check(ModelSpec.static(3))

    def test_read_only(self):
        params = ParameterVector(np.zeros(3))
        with pytest.raises(ValueError):
            params.omega[0] = 1.0


class TestUnconditionalWorth:
    def test_single_lag(self):
        spec = ModelSpec.mean_reverting(2, 0, 1, 1)
        params = ParameterVector([0.2, -0.2], alpha=[0.0], phi=[0.6])
        np.testing.assert_allclose(unconditional_worth(params, spec), [0.5, -0.5], atol=1e-15)

    def test_design_range(self):
        spec = ModelSpec.mean_reverting(20, 1)
        fbar = unconditional_worth(design_params(20), spec)
        assert fbar.min() == pytest.approx(-4.0, abs=1e-12)
        assert fbar.max() == pytest.approx(4.0, abs=1e-12)

    def test_static_is_omega(self):
        params = ParameterVector([1.0, -1.0])
        np.testing.assert_array_equal(unconditional_worth(params, ModelSpec.static(2)), [1, -1])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=8), st.floats(-0.95, 0.95))
    def test_zero_sum(self, omega, phi):
        omega = np.array(omega) - np.mean(omega)
        params = ParameterVector(omega, alpha=[0.1], phi=[phi])
        spec = ModelSpec.mean_reverting(len(omega))
        assert abs(unconditional_worth(params, spec).sum()) <= 1e-10 * max(1, np.abs(omega).sum() / (1 - phi))

    def test_unit_root_rejected(self):
        with pytest.raises(ValueError):
            unconditional_worth(ParameterVector([0.0, 0.0], alpha=[0.1], phi=[1.0]),
                                ModelSpec.mean_reverting(2))
        with pytest.raises(ValueError):
            unconditional_worth(ParameterVector([0.0, 0.0], alpha=[0.1], phi=[1.0]),
                                ModelSpec.random_walk(2))

    def test_random_walk_start(self):
        params = ParameterVector([0.3, -0.3], alpha=[0.1], phi=[1.0])
        np.testing.assert_array_equal(initial_worth(params, ModelSpec.random_walk(2)), [0.3, -0.3])
        spec = ModelSpec.random_walk(2, rw_init="zero")
        np.testing.assert_array_equal(initial_worth(params, spec), [0.0, 0.0])


class TestFilterPath:
    def test_static_collapses(self, rng):
        spec = ModelSpec.static(4)
        omega = np.array([0.8, 0.1, -0.4, -0.5])
        rankings = [Ranking(4, rng.permutation(4)[: rng.integers(1, 5)]) for _ in range(12)]
        data = PanelDataset.from_rankings(rankings, participants=np.ones((12, 4), bool))
        out = filter_path(ParameterVector(omega), spec, data)
        np.testing.assert_array_equal(out.worth_path, np.tile(omega, (12, 1)))
        expected = sum(log_pmf(r, omega) for r in rankings)
        assert out.total_loglik == pytest.approx(expected, abs=1e-12)

    def test_one_recursion_step(self):
        # one period with worths 1 and score (0.5, -0.5); the next worth is
        # alpha * 0.5 + phi * 1 for the first item
        spec = ModelSpec.mean_reverting(2)
        params = ParameterVector([0.0, 0.0], alpha=[0.4], phi=[0.5])
        data = PanelDataset.from_rankings([Ranking(2, [0, 1])] * 2)
        out = filter_path(params, spec, data, f0=np.array([2.0, 2.0]))
        # period 1 worths: phi * f0 = 1 each, so the score is (0.5, -0.5)
        np.testing.assert_allclose(out.worth_path[0], [1.0, 1.0])
        np.testing.assert_allclose(out.score_path[0], [0.5, -0.5])
        assert out.worth_path[1, 0] == pytest.approx(0.7, abs=1e-15)

    def test_output_invariants(self):
        spec = ModelSpec.mean_reverting(6, 1)
        params = _mr_params(6, 1)
        data, _ = _panel(spec, params, 30, top=3)
        out = filter_path(params, spec, data)
        assert out.total_loglik == pytest.approx(out.per_period_loglik.sum(), abs=1e-12)
        np.testing.assert_allclose(out.score_path.sum(axis=1), 0.0, atol=1e-10 * 6)
        assert total_loglik(params, spec, data) == out.total_loglik

    @pytest.mark.parametrize("absent_mode", ["partial-likelihood", "zero-score"])
    def test_reproduces_simulated_path(self, absent_mode):
        spec = ModelSpec.mean_reverting(20, 1, absent_mode=absent_mode)
        params = design_params(20)
        data, latent = _panel(spec, params, 40)
        out = filter_path(params, spec, data)
        np.testing.assert_allclose(out.worth_path, latent, atol=1e-12, rtol=0)

    def test_reproduces_random_walk_path(self):
        spec = ModelSpec.random_walk(5)
        params = ParameterVector(np.linspace(-0.1, 0.1, 5), alpha=[0.3], phi=[1.0])
        data, latent = _panel(spec, params, 25, top=2)
        np.testing.assert_allclose(filter_path(params, spec, data).worth_path, latent,
                                   atol=1e-12, rtol=0)

    @pytest.mark.parametrize("phi", [0.9, 0.5, -0.7])
    def test_geometric_convergence(self, phi, rng):
        spec = ModelSpec.mean_reverting(4)
        omega = np.array([0.6, 0.2, -0.3, -0.5])
        params = ParameterVector(omega, alpha=[0.0], phi=[phi])
        rankings = [Ranking(4, rng.permutation(4)) for _ in range(30)]
        data = PanelDataset.from_rankings(rankings)
        fbar = omega / (1 - phi)
        f0 = fbar + np.array([3.0, -1.0, 2.0, -4.0])
        out = filter_path(params, spec, data, f0=f0)
        gap0 = np.linalg.norm(f0 - fbar)
        for t in range(30):
            assert np.linalg.norm(out.worth_path[t] - fbar) <= abs(phi) ** (t + 1) * gap0 + 1e-12

    def test_deterministic(self):
        spec = ModelSpec.mean_reverting(8, 1)
        params = _mr_params(8, 1)
        data, _ = _panel(spec, params, 20)
        a = filter_path(params, spec, data)
        b = filter_path(params, spec, data)
        assert a.worth_path.tobytes() == b.worth_path.tobytes()
        assert a.score_path.tobytes() == b.score_path.tobytes()
        assert a.per_period_loglik.tobytes() == b.per_period_loglik.tobytes()

    def test_covariate_shift(self):
        spec = ModelSpec.mean_reverting(5, 2)
        params = ParameterVector(np.linspace(-1, 1, 5), [0.7, -1.3], [0.0], [0.0])
        data, _ = _panel(spec, params, 10)
        cov = data.covariates.copy()
        cov[4, 2, 1] += 0.25
        shifted = PanelDataset(data.orders, data.n_ranked, cov, data.participants)
        base = filter_path(params, spec, data).worth_path
        moved = filter_path(params, spec, shifted).worth_path
        diff = moved - base
        assert diff[4, 2] == pytest.approx(-1.3 * 0.25, abs=1e-14)
        diff[4, 2] = 0.0
        np.testing.assert_array_equal(diff, 0.0)

    def test_zero_score_absent_item(self, rng):
        n, t_len, t0 = 5, 20, 6
        spec = ModelSpec.mean_reverting(n, 1, absent_mode="zero-score")
        params = ParameterVector(np.linspace(-1, 1, n), [0.5], [0.6], [0.7])
        part = np.ones((t_len, n), dtype=bool)
        part[t0:, 4] = False
        data, latent = simulate_panel(params, spec, t_len, rng, participants=part)
        out = filter_path(params, spec, data)
        x = data.covariates[:, 4, 0]
        # the first absent period still feels the score of period t0 - 1
        for t in range(t0 + 1, t_len):
            expected = params.omega[4] + 0.5 * x[t] + 0.7 * out.worth_path[t - 1, 4]
            assert out.worth_path[t, 4] == expected
        np.testing.assert_array_equal(out.score_path[t0:, 4], 0.0)

    @pytest.mark.parametrize("absent_mode", ["partial-likelihood", "zero-score"])
    def test_relabeling_invariance(self, absent_mode):
        spec = ModelSpec.mean_reverting(7, 1, absent_mode=absent_mode)
        params = _mr_params(7, 1)
        part = np.random.default_rng(3).random((15, 7)) < 0.7
        part[:, 0] = True
        data, _ = simulate_panel(params, spec, 15, np.random.default_rng(4),
                                 top=2, participants=part)
        perm = np.random.default_rng(5).permutation(7)
        moved = ParameterVector(params.omega[perm], params.beta, params.alpha, params.phi)
        a = filter_path(params, spec, data).total_loglik
        b = filter_path(moved, spec, data.permuted(perm)).total_loglik
        assert b == pytest.approx(a, abs=1e-10)

    def test_divergence_signalled(self):
        spec = ModelSpec.mean_reverting(3)
        params = ParameterVector([1.0, 0.0, -1.0], alpha=[0.5], phi=[3.0])
        data = PanelDataset.from_rankings([Ranking(3, [0, 1, 2])] * 30)
        with pytest.raises(FilterDivergence) as err:
            filter_path(params, spec, data)
        assert err.value.period is not None
        assert total_loglik(params, spec, data) == -np.inf

    def test_dimension_checks(self):
        data = PanelDataset.from_rankings([Ranking(3, [0, 1, 2])])
        with pytest.raises(ValueError):
            filter_path(ParameterVector(np.zeros(2)), ModelSpec.static(2), data)
        with pytest.raises(ValueError):
            filter_path(ParameterVector(np.zeros(3)), ModelSpec.static(3), data, f0=np.zeros(2))


class TestPanelDataset:
    def test_ranked_items_must_participate(self):
        with pytest.raises(ValueError, match="participants"):
            PanelDataset.from_rankings([Ranking(3, [0, 1])],
                                       participants=np.array([[True, False, True]]))

    def test_non_finite_covariates(self):
        with pytest.raises(ValueError, match="non-finite"):
            PanelDataset.from_rankings([Ranking(2, [0, 1])],
                                       covariates=np.full((1, 2, 1), np.nan))

    def test_permuted_round_trip(self, rng):
        data = PanelDataset.from_rankings([Ranking(4, rng.permutation(4)[:2]) for _ in range(5)])
        perm = [2, 0, 3, 1]
        inverse = np.argsort(perm)
        back = data.permuted(perm).permuted(inverse)
        np.testing.assert_array_equal(back.orders, data.orders)
        assert back.item_labels == data.item_labels
