import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irfcp.approx import (
    MarginalState,
    algorithm1_step,
    approx_step_full,
    build_pairwise_model,
    jacobian_h,
    jacobian_k,
    k_map,
    lipschitz_bound_tap,
    predict_marginals,
    r_rho,
    sum_product,
    t_ap,
    tap_jacobian_bound_check,
    tap_operator,
)
from irfcp.classic import ClassicModel, posterior_path, prior_predict
from irfcp.errors import ArgumentError, UnsupportedTopologyError
from irfcp.irf import empirical_lipschitz
from irfcp.network import ObservationFrame, gaussian_network, theta_from_frame
from irfcp.simplex import (
    BernoulliPair,
    ProbVec,
    WeightVec,
    bit_table,
    marginals_array,
    tensor_product,
)

from _util import POST, PRE, random_frames, random_network, random_probvec_array


def brute_marginals(model):
    """Node and pair marginals of a pairwise model by full enumeration."""
    net = model.net
    logp = model.log_joint()
    p = np.exp(logp - logp.max())
    p /= p.sum()
    bits = bit_table(net.d)
    nodes = np.array([p[bits[:, j] == 1].sum() for j in range(net.d)])
    pairs = np.zeros((len(net.edges), 2, 2))
    for k, e in enumerate(net.edges):
        for a in (0, 1):
            for b in (0, 1):
                pairs[k, a, b] = p[(bits[:, e.i] == a) & (bits[:, e.j] == b)].sum()
    return nodes, pairs


def random_state(rng, d):
    g = rng.uniform(0.0, 0.95, size=d)
    return MarginalState(g, 1.0 - g)


class TestRRho:
    def test_examples(self):
        out = r_rho(BernoulliPair(1.0, 0.0), 0.3)
        assert (out.p1, out.p0) == (1.0, 0.0)
        out = r_rho(BernoulliPair(0.0, 1.0), 0.1)
        assert out.p1 == pytest.approx(0.1) and out.p0 == pytest.approx(0.9)

    def test_matches_prior_predict(self):
        for p, rho in [(0.2, 0.3), (0.0, 0.7), (0.9, 0.05)]:
            assert r_rho(BernoulliPair.of(p), rho).p1 == pytest.approx(prior_predict(p, rho))

    def test_rho_range(self):
        with pytest.raises(ArgumentError):
            r_rho(BernoulliPair.of(0.5), 0.0)


class TestTap:
    def test_target_fixed(self):
        assert t_ap(ProbVec.target(3), [0.2, 0.3, 0.4]) == ProbVec.target(3)

    def test_product_measure(self):
        pairs = [BernoulliPair.of(0.2), BernoulliPair.of(0.6), BernoulliPair.of(0.9)]
        rhos = [0.1, 0.5, 0.3]
        out = t_ap(tensor_product(pairs), rhos)
        expect = tensor_product([r_rho(p, r) for p, r in zip(pairs, rhos)])
        np.testing.assert_allclose(out.entries, expect.entries, atol=1e-15)

    def test_hand_d2(self):
        y = ProbVec.from_superscript([0.4, 0.3, 0.2, 0.1])
        # marginals: node 1 set in superscripts 0, 1; node 2 set in superscripts 0, 2
        p1 = 0.4 + 0.3
        p2 = 0.4 + 0.2
        q1, q2 = 0.5 + 0.5 * p1, 0.5 + 0.5 * p2
        expect = [q1 * q2, q1 * (1 - q2), (1 - q1) * q2, (1 - q1) * (1 - q2)]
        np.testing.assert_allclose(t_ap(y, [0.5, 0.5]).superscript(), expect, atol=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000), d=st.integers(1, 6))
    def test_preserves_simplex(self, seed, d):
        rng = np.random.default_rng(seed)
        out = t_ap(ProbVec(random_probvec_array(rng, d)), rng.uniform(0.01, 1.0, size=d))
        assert np.all(out.entries >= 0)
        assert abs(out.entries.sum() - 1) < 1e-12

    def test_dimension_check(self):
        with pytest.raises(ArgumentError):
            t_ap(ProbVec.uniform(2), [0.1])

    def test_step_full_examples(self):
        rhos = [0.2, 0.4]
        theta = WeightVec(np.array([0.3, -1.0, 2.0, 0.0]))
        assert approx_step_full(ProbVec.target(2), theta, rhos) == ProbVec.target(2)
        y = ProbVec([0.1, 0.2, 0.3, 0.4])
        np.testing.assert_allclose(approx_step_full(y, WeightVec.ones(2), rhos).entries,
                                   t_ap(y, rhos).entries, atol=1e-16)


class TestLipschitzBound:
    def test_examples(self):
        assert lipschitz_bound_tap([1.0, 1.0, 1.0]) == 0.0
        assert lipschitz_bound_tap([0.1] * 4) == pytest.approx(3.6)
        assert lipschitz_bound_tap([0.6, 0.6]) == pytest.approx(0.8)

    @pytest.mark.parametrize("seed", range(4))
    def test_empirical_below_bound(self, seed):
        rng = np.random.default_rng(seed)
        rhos = rng.uniform(0.05, 0.95, size=int(rng.integers(1, 6)))
        assert empirical_lipschitz(tap_operator(rhos), 10_000, seed) <= \
            lipschitz_bound_tap(rhos) + 1e-9


class TestSumProduct:
    @pytest.mark.parametrize("seed", range(15))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(1, 9))
        net = random_network(rng, d, forest=seed % 3 == 0)
        state = random_state(rng, d)
        frame = ObservationFrame(1, rng.normal(size=net.num_extended))
        model = build_pairwise_model(predict_marginals(state, net.rhos),
                                     net.log_ratios(frame.values), net)
        beliefs, pair_beliefs = sum_product(model)
        nodes, pairs = brute_marginals(model)
        np.testing.assert_allclose(np.exp(beliefs[:, 1]), nodes, atol=1e-10)
        np.testing.assert_allclose(np.exp(pair_beliefs), pairs, atol=1e-10)

    def test_rejects_cycles(self):
        net = gaussian_network([0.1] * 3, [(0, 1), (1, 2), (0, 2)], POST, PRE)
        with pytest.raises(UnsupportedTopologyError):
            algorithm1_step(MarginalState.initial(3), ObservationFrame(1, np.zeros(6)), net)

    def test_state_dimension(self):
        net = gaussian_network([0.1] * 2, [(0, 1)], POST, PRE)
        with pytest.raises(ArgumentError):
            algorithm1_step(MarginalState.initial(3), ObservationFrame(1, np.zeros(3)), net)


class TestAlgorithm1:
    def test_edgeless_is_classic(self):
        net = gaussian_network([0.1, 0.3], [], POST, PRE)
        frames = random_frames(np.random.default_rng(1), net, 25)
        state = MarginalState.initial(2)
        paths = [posterior_path(ClassicModel(POST, PRE, r), [fr.values[j] for fr in frames])[0]
                 for j, r in enumerate((0.1, 0.3))]
        for k, fr in enumerate(frames, start=1):
            state, pairs = algorithm1_step(state, fr, net)
            assert pairs == {}
            np.testing.assert_allclose(state.gammas, [paths[0][k], paths[1][k]], atol=1e-12)

    def test_uninformative_frame_is_prediction(self):
        net = gaussian_network([0.2, 0.5, 0.1], [(0, 1), (1, 2)], POST, POST)
        state = MarginalState(np.array([0.1, 0.4, 0.0]), np.array([0.9, 0.6, 1.0]))
        out, _ = algorithm1_step(state, ObservationFrame(1, np.zeros(5)), net)
        np.testing.assert_allclose(out.gammas, predict_marginals(state, net.rhos).gammas,
                                   atol=1e-14)

    @pytest.mark.parametrize("seed", range(6))
    def test_full_and_marginal_agree(self, seed):
        rng = np.random.default_rng(200 + seed)
        d = int(rng.integers(1, 9))
        net = random_network(rng, d)
        frames = random_frames(rng, net, 30)
        state = MarginalState.initial(d)
        y = ProbVec.all_zeros(d)
        for fr in frames:
            state, pairs = algorithm1_step(state, fr, net)
            y = approx_step_full(y, theta_from_frame(net, fr), net.rhos)
            p1, _ = marginals_array(y.entries)
            np.testing.assert_allclose(state.gammas, p1, atol=1e-9)
            assert np.all(state.gammas >= -1e-12) and np.all(state.gammas <= 1 + 1e-12)
            for (i, j), g in pairs.items():
                assert g >= max(state.gammas[i], state.gammas[j]) - 1e-12
                assert g <= state.gammas[i] + state.gammas[j] + 1e-12

    def test_marginal_only_scales_past_full_cap(self):
        net = gaussian_network([0.1] * 40, [(k, k + 1) for k in range(39)], POST, PRE)
        frames = random_frames(np.random.default_rng(3), net, 5)
        state = MarginalState.initial(40)
        for fr in frames:
            state, _ = algorithm1_step(state, fr, net)
        assert state.gammas.shape == (40,)

    def test_complements_keep_precision(self):
        net = gaussian_network([0.1, 0.1], [(0, 1)], POST, PRE)
        state = MarginalState.initial(2)
        for t in range(1, 120):
            state, _ = algorithm1_step(state, ObservationFrame(t, np.full(3, -1.0)), net)
        assert np.all(state.complements > 0)
        assert np.all(state.complements < 1e-40)


class TestJacobians:
    def test_jk_pattern_d3(self):
        rhos = np.array([0.1, 0.4, 0.7])
        jk = jacobian_k(rhos)
        bits = bit_table(3)
        for j in range(3):
            for ell in range(8):
                assert jk[j, ell] == pytest.approx(-(1 - rhos[j]) * (1 - bits[ell, j]))

    def test_jk_matches_affine_map(self):
        rhos = np.array([0.2, 0.5])
        rng = np.random.default_rng(0)
        y, dy = rng.normal(size=4), rng.normal(size=4)
        np.testing.assert_allclose(k_map(y + dy, rhos) - k_map(y, rhos), jacobian_k(rhos) @ dy,
                                   atol=1e-14)

    def test_jh_finite_difference(self):
        rng = np.random.default_rng(1)
        u = rng.uniform(0.1, 0.9, size=3)
        h = 1e-6

        def tensor(v):
            return tensor_product([BernoulliPair.of(x) for x in v]).entries

        jh = jacobian_h(u)
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            np.testing.assert_allclose((tensor(u + e) - tensor(u - e)) / (2 * h), jh[:, j],
                                       atol=1e-8)

    def test_jh_column_sums(self):
        u = np.random.default_rng(2).uniform(0.05, 0.95, size=5)
        np.testing.assert_allclose(np.abs(jacobian_h(u)).sum(axis=0), 2.0, atol=1e-12)

    @pytest.mark.parametrize("d", [1, 3, 6])
    def test_report(self, d):
        rhos = np.random.default_rng(d).uniform(0.05, 0.95, size=d)
        report = tap_jacobian_bound_check(rhos, 50)
        assert report.jh_ok and report.jk_ok and report.product_ok and report.passed

    def test_report_dimension_cap(self):
        with pytest.raises(ArgumentError):
            tap_jacobian_bound_check([0.5] * 11, 1)
