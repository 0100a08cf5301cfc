import numpy as np
import pytest

from randens.ensemble import (
    DiversityStrategy,
    Ensemble,
    diversity,
    fraction_count,
    member_forecasts,
    predict_ensemble,
    train_ensemble,
)
from randens.errors import InvalidParameter
from randens.patterns import CodingVariables, TrainingSet, decode, encode_input, encode_matrix
from randens.randnn import RandNNConfig, hidden_output, train


def random_phi(N=40, n=24, seed=0):
    rng = np.random.default_rng(seed)
    X, _, _ = encode_matrix(rng.normal(size=(N, n)))
    return TrainingSet(X, X + 0.1 * rng.normal(size=(N, n)))


QUERY = 1000 + 100 * np.sin(np.linspace(0, 2 * np.pi, 24, endpoint=False))


def members_of(phi, strategy, M=5, seed=0, m=40, alpha=70.0):
    ens = train_ensemble(phi, strategy, M, RandNNConfig(m, alpha, seed))
    return ens, member_forecasts(ens, QUERY)


class TestStrategyDomain:
    @pytest.mark.parametrize(
        "kind,value",
        [("E1", 0.0), ("E1", 90.0), ("E2", 0.0), ("E2", 1.5), ("E3", 0.0), ("E4", 1.2), ("E5", 1.0), ("E5", -0.1), ("E6", -1.0)],
    )
    def test_out_of_domain(self, kind, value):
        with pytest.raises(InvalidParameter):
            DiversityStrategy(kind, value)

    def test_unknown_kind(self):
        with pytest.raises(InvalidParameter):
            DiversityStrategy("E7", 0.5)

    def test_fraction_count(self):
        assert fraction_count(8 / 24, 24) == 8
        assert fraction_count(0.01, 10) == 1
        assert fraction_count(0.25, 10) == 3
        assert fraction_count(0.0, 10, minimum=0) == 0


class TestDegenerateStrategies:
    @pytest.mark.parametrize("strategy", [DiversityStrategy("E2", 1.0), DiversityStrategy("E5", 0.0), DiversityStrategy("E6", 0.0)])
    def test_zero_diversity(self, strategy):
        ens, F = members_of(random_phi(), strategy, M=6)
        assert diversity(F).value == 0.0
        assert all(np.array_equal(m.output_weights, ens.members[0].output_weights) for m in ens.members)

    def test_single_member_equals_member(self):
        phi = random_phi()
        ens = train_ensemble(phi, DiversityStrategy("E1", 70.0), 1, RandNNConfig(40, 70.0, 3))
        x, coding = encode_input(QUERY)
        single = decode(ens.members[0].predict_matrix(x.x[None])[0], coding)
        np.testing.assert_array_equal(predict_ensemble(ens, QUERY), single)
        assert ens.members[0].equals(train(phi, RandNNConfig(40, 70.0, 3)))


class TestStrategies:
    def test_e1_members_are_independent_networks(self):
        ens, F = members_of(random_phi(), DiversityStrategy("E1", 60.0), M=4, seed=10)
        assert [m.config.seed for m in ens.members] == [10, 11, 12, 13]
        assert all(m.config.alpha_max == 60.0 for m in ens.members)
        assert diversity(F).value > 0

    def test_e2_shares_hidden_parameters(self):
        phi = random_phi(N=30)
        ens, F = members_of(phi, DiversityStrategy("E2", 0.5))
        for member in ens.members:
            assert member.hidden_weights is ens.template.weights
            assert member.hidden_biases is ens.template.biases
        assert diversity(F).value > 0

    def test_e2_fit_uses_subsample_of_expected_size(self):
        phi = random_phi(N=30)
        ens, _ = members_of(phi, DiversityStrategy("E2", 0.5), M=3)
        H = hidden_output(ens.template.weights, ens.template.biases, phi.X)
        for member in ens.members:
            residual = np.abs(H @ member.output_weights - phi.Y).max(axis=1)
            # 15 of 30 rows are fitted; m = 40 > 15 so those rows are interpolated
            assert np.sum(residual < 1e-6) == 15

    def test_e3_feature_subsets_and_bias_placement(self):
        phi = random_phi()
        ens, F = members_of(phi, DiversityStrategy("E3", 8 / 24))
        anchors = phi.X[ens.template.anchors]
        for member in ens.members:
            mask = member.feature_mask
            assert mask.sum() == 8 and member.n_outputs == 24
            np.testing.assert_array_equal(member.hidden_weights, ens.template.weights[:, mask])
            H = hidden_output(member.hidden_weights, member.hidden_biases, anchors[:, mask])
            np.testing.assert_allclose(np.diag(H), 0.5, atol=1e-12)
        assert F.shape == (5, 24)

    def test_e3_template_bias_switch(self):
        phi = random_phi()
        ens = train_ensemble(phi, DiversityStrategy("E3", 0.5, reuse_template_biases=True), 3, RandNNConfig(40, 70.0))
        for member in ens.members:
            assert member.hidden_biases is ens.template.biases

    def test_e4_node_counts(self):
        phi = random_phi()
        ens, _ = members_of(phi, DiversityStrategy("E4", 40 / 80, base_m=80))
        assert ens.template.weights.shape[0] == 80
        for member in ens.members:
            assert member.m == 40
            rows = [np.flatnonzero((ens.template.weights == w).all(axis=1))[0] for w in member.hidden_weights]
            np.testing.assert_array_equal(member.hidden_biases, ens.template.biases[rows])

    def test_e5_zeroed_weight_counts(self):
        phi = random_phi()
        ens, F = members_of(phi, DiversityStrategy("E5", 0.1))
        expected = round(0.1 * 40 * 24)
        for member in ens.members:
            changed = (member.hidden_weights != ens.template.weights)
            assert changed.sum() == expected
            assert np.all(member.hidden_weights[changed] == 0.0)
            np.testing.assert_array_equal(member.hidden_biases, ens.template.biases)
        assert diversity(F).value > 0

    def test_e6_noise_creates_diversity(self):
        ens, F = members_of(random_phi(), DiversityStrategy("E6", 0.1))
        assert diversity(F).value > 0
        assert all(m.hidden_weights is ens.template.weights for m in ens.members)

    @pytest.mark.parametrize("kind,p", [("E1", 70.0), ("E2", 0.6), ("E3", 0.5), ("E4", 0.5), ("E5", 0.2), ("E6", 0.05)])
    def test_determinism_and_parallel_equivalence(self, kind, p):
        phi = random_phi()
        cfg = RandNNConfig(40, 70.0, 21)
        a = train_ensemble(phi, DiversityStrategy(kind, p), 6, cfg)
        b = train_ensemble(phi, DiversityStrategy(kind, p), 6, cfg, jobs=3)
        assert all(x.equals(y) for x, y in zip(a.members, b.members))

    def test_serialization_round_trip(self):
        phi = random_phi()
        ens = train_ensemble(phi, DiversityStrategy("E3", 0.5), 3, RandNNConfig(20, 70.0, 2))
        back = Ensemble.loads(ens.dumps())
        assert back.strategy == ens.strategy and back.base_config == ens.base_config
        assert all(x.equals(y) for x, y in zip(back.members, ens.members))
        np.testing.assert_array_equal(back.template.anchors, ens.template.anchors)
        np.testing.assert_array_equal(predict_ensemble(back, QUERY), predict_ensemble(ens, QUERY))


class TestAggregation:
    def test_mean_then_decode_commutes(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            phi = random_phi(seed=int(rng.integers(1000)))
            ens = train_ensemble(phi, DiversityStrategy("E1", 70.0), 7, RandNNConfig(30, 70.0, int(rng.integers(1000))))
            x, coding = encode_input(QUERY)
            mean_pattern = np.mean([m.predict_matrix(x.x[None])[0] for m in ens.members], axis=0)
            np.testing.assert_allclose(predict_ensemble(ens, QUERY, coding), decode(mean_pattern, coding), rtol=0, atol=1e-10 * np.max(np.abs(QUERY)))

    def test_identical_members(self):
        phi = random_phi()
        model = train(phi, RandNNConfig(10))
        ens = Ensemble([model] * 9, DiversityStrategy("E1", 70.0))
        x, coding = encode_input(QUERY)
        np.testing.assert_array_equal(predict_ensemble(ens, QUERY), decode(model.predict_matrix(x.x[None])[0], coding))

    def test_explicit_coding(self):
        phi = random_phi()
        ens = train_ensemble(phi, DiversityStrategy("E1", 70.0), 3, RandNNConfig(10))
        _, coding = encode_input(QUERY)
        np.testing.assert_allclose(predict_ensemble(ens, QUERY, coding), predict_ensemble(ens, QUERY), rtol=1e-12)


class TestDiversity:
    def test_identical(self):
        F = np.tile(np.random.default_rng(0).random((1, 5, 24)), (4, 1, 1))
        assert diversity(F).value == 0.0

    def test_two_members_one_position(self):
        report = diversity(np.array([[[3.0]], [[5.0]]]))
        assert report.value == 1.0 and report.test_set_size == 1

    def test_constant_offset(self):
        A = np.random.default_rng(1).random((6, 24)) * 1000
        assert diversity(np.stack([A, A + 2.0])).value == pytest.approx(1.0, abs=1e-12)

    def test_matches_population_std(self):
        F = np.random.default_rng(2).normal(size=(7, 5, 24))
        assert diversity(F).value == pytest.approx(F.std(axis=0).mean(), rel=1e-12)
