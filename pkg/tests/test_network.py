import math

import numpy as np
import pytest

from irfcp.classic import GaussianSpec
from irfcp.config import preset_network
from irfcp.errors import ArgumentError, DegenerateObservationError
from irfcp.network import (
    ALIGNED,
    LITERAL,
    ChangeVector,
    EdgeSpec,
    Network,
    NodeSpec,
    ObservationFrame,
    gaussian_network,
    info_stats,
    post_change_mask,
    sample_changes,
    sample_frame,
    theta_from_frame,
)
from irfcp.simplex import bit_table, sup_to_sub, theta_star

from _util import POST, PRE, random_network


class TestNetwork:
    def test_validation(self):
        node = NodeSpec(0.1, POST, PRE)
        with pytest.raises(ArgumentError):
            Network((node, node), (EdgeSpec(0, 0, POST, PRE),))
        with pytest.raises(ArgumentError):
            Network((node, node), (EdgeSpec(0, 1, POST, PRE), EdgeSpec(1, 0, POST, PRE)))
        with pytest.raises(ArgumentError):
            Network((node,), (EdgeSpec(0, 3, POST, PRE),))
        with pytest.raises(ArgumentError):
            NodeSpec(0.0, POST, PRE)
        with pytest.raises(ArgumentError):
            Network(())

    def test_is_tree(self):
        assert gaussian_network([0.1] * 3, [(0, 1), (1, 2)], POST, PRE).is_tree
        assert gaussian_network([0.1] * 3, [], POST, PRE).is_tree
        assert not gaussian_network([0.1] * 3, [(0, 1), (1, 2), (0, 2)], POST, PRE).is_tree

    def test_extended_order(self):
        net = preset_network("star4")
        assert net.num_extended == 7
        assert len(net.extended_specs) == 7


class TestChanges:
    def test_rho_one(self):
        net = gaussian_network([1.0, 1.0], [(0, 1)], POST, PRE)
        ch = sample_changes(net, np.random.default_rng(0))
        assert list(ch.lambdas) == [1, 1] and list(ch.edge_lambdas) == [1]

    def test_edge_is_min(self):
        rng = np.random.default_rng(1)
        net = preset_network("star4")
        for _ in range(200):
            ch = sample_changes(net, rng)
            for k, e in enumerate(net.edges):
                assert ch.edge_lambdas[k] == min(ch.lambdas[e.i], ch.lambdas[e.j])

    def test_edge_first_change_probability(self):
        net = gaussian_network([0.5, 0.5], [(0, 1)], POST, PRE)
        rng = np.random.default_rng(2)
        draws = rng.geometric(net.rhos, size=(100_000, 2))
        assert np.mean(draws.min(axis=1) == 1) == pytest.approx(0.75, abs=0.01)
        hits = sum(sample_changes(net, rng).edge_lambdas[0] == 1 for _ in range(20_000))
        assert hits / 20_000 == pytest.approx(0.75, abs=0.015)

    def test_from_lambdas_validation(self):
        net = preset_network("pair")
        with pytest.raises(ArgumentError):
            ChangeVector.from_lambdas(net, [0, 3])


class TestFrames:
    def test_conventions(self):
        net = preset_network("pair")
        ch = ChangeVector.from_lambdas(net, [3, 5])
        lit = [post_change_mask(net, ch, t, LITERAL) for t in (2, 3, 4)]
        ali = [post_change_mask(net, ch, t, ALIGNED) for t in (2, 3, 4)]
        assert [list(m) for m in lit] == [[False, False, False], [True, False, False],
                                          [True, False, True]]
        assert [list(m) for m in ali] == [[False, False, False], [True, False, True],
                                          [True, False, True]]
        with pytest.raises(ArgumentError):
            post_change_mask(net, ch, 1, "other")

    def test_pre_change_at_start(self):
        net = gaussian_network([0.1] * 3, [(0, 1)], GaussianSpec(0.0, 1e-6), GaussianSpec(5.0, 1e-6))
        ch = ChangeVector.from_lambdas(net, [50, 50, 50])
        frame = sample_frame(net, ch, 1, np.random.default_rng(0))
        np.testing.assert_allclose(frame.values, 5.0, atol=0.01)

    def test_post_change_means(self):
        net = preset_network("star4")
        ch = ChangeVector.from_lambdas(net, [1, 2, 3, 4])
        rng = np.random.default_rng(3)
        vals = np.stack([sample_frame(net, ch, 100, rng).values for _ in range(4000)])
        stderr = 1 / math.sqrt(4000)
        assert np.all(np.abs(vals.mean(axis=0)) < 3 * stderr + 1e-3)

    def test_deterministic(self):
        net = preset_network("star4")
        ch = ChangeVector.from_lambdas(net, [2, 2, 2, 2])
        a = sample_frame(net, ch, 3, np.random.default_rng(4)).values
        b = sample_frame(net, ch, 3, np.random.default_rng(4)).values
        np.testing.assert_array_equal(a, b)

    def test_time_starts_at_one(self):
        net = preset_network("pair")
        ch = ChangeVector.from_lambdas(net, [1, 1])
        with pytest.raises(ArgumentError):
            sample_frame(net, ch, 0, np.random.default_rng(0))


class TestTheta:
    def test_anchor_and_all_zero_entries(self):
        net = preset_network("star4")
        frame = ObservationFrame(1, np.random.default_rng(5).normal(size=7))
        theta = theta_from_frame(net, frame)
        assert theta.entries[-1] == 1.0
        assert theta.superscript()[0] == 1.0
        lr = net.log_ratios(frame.values)
        assert theta.log_entries[0] == pytest.approx(lr.sum(), abs=1e-12)

    def test_brute_force_pair(self):
        net = gaussian_network([0.2, 0.3], [(0, 1)], POST, PRE)
        x = np.array([0.3, -1.2, 0.8])
        theta = theta_from_frame(net, ObservationFrame(1, x))

        def ratio(v):
            return math.exp(PRE.logpdf(v) - POST.logpdf(v))

        for mask in range(4):
            b1, b2 = (mask >> 1) & 1, mask & 1
            expect = ratio(x[0]) ** (1 - b1) * ratio(x[1]) ** (1 - b2) * ratio(x[2]) ** (1 - (b1 | b2))
            assert theta.entries[mask] == pytest.approx(expect, rel=1e-12)

    def test_non_finite(self):
        net = preset_network("pair")
        with pytest.raises(DegenerateObservationError):
            theta_from_frame(net, ObservationFrame(1, np.array([0.0, np.nan, 0.0])))

    def test_log_theta_star_post_change(self):
        net = preset_network("star4")
        stats = info_stats(net)
        ch = ChangeVector.from_lambdas(net, [1, 1, 1, 1])
        rng = np.random.default_rng(6)
        logs = np.log([theta_star(theta_from_frame(net, sample_frame(net, ch, 5, rng)))
                       for _ in range(5000)])
        stderr = logs.std(ddof=1) / math.sqrt(logs.size)
        bound = stats.kappa_bar * stats.sigma_max * math.sqrt(math.log(stats.m)) - stats.i_min
        assert logs.mean() <= bound + 3 * stderr
        # each fixed non-anchor coordinate has mean at most -I_min
        lr_all = np.stack([net.log_ratios(sample_frame(net, ch, 5, rng).values)
                           for _ in range(5000)])
        per_mask = lr_all @ net.exponent_matrix.T
        assert np.all(per_mask[:, :-1].mean(axis=0) <= -stats.i_min + 3 * 2.7 / math.sqrt(5000))

    def test_exponents_match_superscript_convention(self):
        net = random_network(np.random.default_rng(7), 3)
        bits = bit_table(3)
        for sup in range(8):
            row = net.exponent_matrix[sup_to_sub(sup, 3)]
            b = bits[sup_to_sub(sup, 3)]
            assert row[:3].tolist() == (1 - b).tolist()
        assert net.exponent_matrix[sup_to_sub(0, 3)].sum() == 0


class TestInfoStats:
    def test_reference_setup(self):
        stats = info_stats(preset_network("star4"))
        assert stats.i_min == pytest.approx(0.5)
        assert stats.m == 7
        assert stats.sigma_max == pytest.approx(1.0)
        assert stats.i_star == pytest.approx(0.5 - math.sqrt(math.log(7)))
        assert not stats.hypothesis_met

    def test_uninformative_edge(self):
        nodes = (NodeSpec(0.1, POST, PRE), NodeSpec(0.1, POST, PRE))
        net = Network(nodes, (EdgeSpec(0, 1, POST, POST),))
        stats = info_stats(net)
        assert stats.i_min == 0.0
        assert stats.i_star <= 0 and not stats.hypothesis_met

    def test_strong_signal_meets_hypothesis(self):
        net = gaussian_network([0.1], [], GaussianSpec(0.0, 1.0), GaussianSpec(4.0, 1.0))
        assert info_stats(net, kappa_bar=1.0).hypothesis_met
