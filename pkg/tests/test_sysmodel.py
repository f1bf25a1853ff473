import math

import numpy as np
import pytest

from supmimo.rng import substream
from supmimo.sysmodel import (
    PathLossMap,
    PowerAllocation,
    Scenario1,
    Scenario2,
    SystemConfig,
    draw_channels,
    hex_centers,
    in_hexagon,
    path_loss,
    place_users,
    received_sir,
    statistics_aware_power,
    uniform_power,
)


def make_config(**kw):
    defaults = dict(L=7, K=5, M=32, C_u=100, C=200, tau=5, r=1, P=4, seed=0)
    defaults.update(kw)
    return SystemConfig(**defaults)


class TestSystemConfig:
    def test_defaults_are_consistent(self):
        cfg = SystemConfig()
        assert cfg.tau == cfg.r * cfg.K
        assert cfg.n_users == 35

    def test_sigma2_from_snr(self):
        cfg = make_config(snr_db=10.0, omega=1.0)
        assert cfg.sigma2 == pytest.approx(0.1)
        cfg = make_config(snr_db=0.0, omega=2.0)
        assert cfg.sigma2 == pytest.approx(2.0)

    def test_tau_must_match_reuse(self):
        with pytest.raises(ValueError, match="tau"):
            make_config(tau=6)

    def test_coherence_block_bound(self):
        with pytest.raises(ValueError, match="C "):
            make_config(C=50)

    def test_non_square_qam_rejected(self):
        with pytest.raises(ValueError, match="square"):
            make_config(P=8)


class TestGeometry:
    def test_seven_cell_grid(self):
        centers = hex_centers(7, 1000.0)
        assert centers.shape == (7, 2)
        assert np.allclose(centers[0], 0.0)
        dists = np.hypot(centers[1:, 0], centers[1:, 1])
        assert np.allclose(dists, math.sqrt(3.0) * 1000.0)

    def test_nineteen_cell_grid(self):
        centers = hex_centers(19, 500.0)
        assert centers.shape == (19, 2)
        dists = np.sort(np.hypot(centers[:, 0], centers[:, 1]))
        step = math.sqrt(3.0) * 500.0
        assert np.allclose(dists[1:7], step)
        # second tier: six cells at 2*step and six at sqrt(3)*step
        assert np.allclose(np.sort(dists[7:]), np.sort([2 * step] * 6 + [3 * 500.0] * 6))

    def test_unsupported_cell_count(self):
        with pytest.raises(ValueError, match="unsupported"):
            hex_centers(3, 1000.0)

    def test_hexagon_membership(self):
        R = 1000.0
        assert in_hexagon(np.array([0.0, 0.0]), R)
        assert in_hexagon(np.array([0.0, R - 1e-6]), R)  # vertex direction
        assert not in_hexagon(np.array([math.sqrt(3) / 2 * R + 1.0, 0.0]), R)


class TestPlacement:
    def test_scenario2_ring(self):
        cfg = make_config(scenario=Scenario2(cell_radius_m=1000.0, user_circle_radius_m=800.0))
        layout = place_users(cfg, substream(0, "layout"))
        rel = layout.positions - layout.bs_positions[:, np.newaxis, :]
        dists = np.hypot(rel[..., 0], rel[..., 1])
        assert np.allclose(dists, 800.0, rtol=0.0, atol=1e-9)
        angles = np.arctan2(rel[0, :, 1], rel[0, :, 0])
        expected = np.array([0, 2, 4, -4, -2]) * np.pi / 5.0
        assert np.allclose(np.sort(angles), np.sort(expected))

    def test_scenario2_single_user(self):
        cfg = make_config(K=1, tau=1, scenario=Scenario2(1000.0, 640.0))
        layout = place_users(cfg, substream(0, "layout"))
        d = np.hypot(*(layout.positions[0, 0] - layout.bs_positions[0]))
        assert d == pytest.approx(640.0, abs=1e-9)

    def test_scenario1_respects_bounds(self):
        cfg = make_config(L=1, K=100, scenario=Scenario1(1000.0, 100.0), r=1, tau=100, C_u=150)
        rng = substream(3, "layout")
        dists = []
        for _ in range(100):  # 10^4 draws total
            layout = place_users(cfg, rng)
            rel = layout.positions[0] - layout.bs_positions[0]
            d = np.hypot(rel[:, 0], rel[:, 1])
            dists.append(d)
            for p in rel:
                assert in_hexagon(p, 1000.0)
        dists = np.concatenate(dists)
        assert dists.min() >= 100.0
        assert dists.max() <= 1000.0

    def test_determinism(self):
        cfg = make_config(scenario=Scenario1(1000.0, 100.0))
        a = place_users(cfg, substream(7, "layout"))
        b = place_users(cfg, substream(7, "layout"))
        assert np.array_equal(a.positions, b.positions)


class TestPathLoss:
    def test_edge_user_normalization(self):
        cfg = make_config(K=1, tau=1, scenario=Scenario2(1000.0, 1000.0))
        layout = place_users(cfg, substream(0, "x"))
        beta = path_loss(layout, 3.0)
        assert beta.beta[0, 0, 0] == pytest.approx(1.0, rel=1e-12)

    def test_half_radius_gain(self):
        cfg = make_config(K=1, tau=1, scenario=Scenario2(1000.0, 500.0))
        layout = place_users(cfg, substream(0, "x"))
        beta = path_loss(layout, 3.0)
        assert beta.beta[0, 0, 0] == pytest.approx(8.0, rel=1e-12)

    def test_ring_at_800m(self):
        cfg = make_config(scenario=Scenario2(1000.0, 800.0))
        layout = place_users(cfg, substream(0, "x"))
        beta = path_loss(layout, 3.0)
        assert np.allclose(beta.home(), 0.8**-3, rtol=1e-12)
        assert beta.home()[0, 0] == pytest.approx(1.9531, abs=5e-5)

    def test_zero_distance_rejected(self):
        from supmimo.sysmodel import UserLayout

        layout = UserLayout(
            positions=np.zeros((1, 1, 2)),
            bs_positions=np.zeros((1, 2)),
            cell_radius_m=1000.0,
        )
        with pytest.raises(ValueError, match="zero"):
            path_loss(layout, 3.0)


class TestPowerControl:
    def test_inversion(self):
        beta = PathLossMap(np.full((1, 1, 1), 0.25))
        powers = statistics_aware_power(beta, 1.0)
        assert powers.q[0, 0] == pytest.approx(4.0)

    def test_inversion_with_target(self):
        beta = PathLossMap(np.ones((1, 1, 1)))
        powers = statistics_aware_power(beta, 10.0)
        assert powers.q[0, 0] == pytest.approx(10.0)

    def test_received_home_power_is_omega(self):
        cfg = make_config(scenario=Scenario1(1000.0, 100.0))
        layout = place_users(cfg, substream(11, "x"))
        beta = path_loss(layout, 3.0)
        powers = statistics_aware_power(beta, omega=2.5)
        assert np.allclose(powers.q * beta.home(), 2.5, rtol=1e-12)

    def test_cross_power_bounded_when_home_dominates(self):
        # hexagonal cells are the Voronoi regions of their BSs, so the home
        # gain dominates and power control caps every cross gain at omega
        cfg = make_config(scenario=Scenario1(1000.0, 100.0))
        for trial in range(5):
            layout = place_users(cfg, substream(trial, "cross"))
            beta = path_loss(layout, 3.0)
            eff = beta.normalized(omega=1.0)
            assert np.all(eff.beta <= 1.0 + 1e-9)
            assert np.allclose(eff.home(), 1.0)

    def test_power_split_invariant(self):
        with pytest.raises(ValueError, match="split"):
            PowerAllocation(q=np.ones((1, 1)), rho_d=np.ones((1, 1)), rho_p=np.ones((1, 1)))
        powers = uniform_power(2, 3, q=2.0, data_power_fraction=0.25)
        assert np.allclose(powers.rho_d**2 + powers.rho_p**2, 2.0)


class TestChannels:
    def test_zero_gain_column(self):
        beta = PathLossMap(np.array([[[0.0, 1.0]]]))
        H = draw_channels(beta, 0, 16, substream(0, "h")).H
        assert np.all(H[:, 0] == 0.0)
        assert np.all(H[:, 1] != 0.0)

    def test_norm_concentration(self):
        beta = PathLossMap(np.ones((1, 1, 1)))
        M = 10_000
        H = draw_channels(beta, 0, M, substream(1, "h")).H
        assert 0.97 <= np.vdot(H[:, 0], H[:, 0]).real / M <= 1.03

    def test_asymptotic_orthogonality(self):
        beta = PathLossMap(np.ones((1, 1, 2)))
        M = 10_000
        H = draw_channels(beta, 0, M, substream(2, "h")).H
        assert abs(np.vdot(H[:, 0], H[:, 1])) / M < 0.05

    def test_second_moment_matches_gain(self):
        beta = PathLossMap(np.array([[[0.3, 1.7]]]))
        M, T = 64, 400
        acc = np.zeros(2)
        for t in range(T):
            H = draw_channels(beta, 0, M, substream(5, "h", t)).H
            acc += np.sum(np.abs(H) ** 2, axis=0)
        assert np.allclose(acc / (M * T), [0.3, 1.7], rtol=0.05)

    def test_determinism(self):
        beta = PathLossMap(np.ones((1, 1, 3)))
        a = draw_channels(beta, 0, 8, substream(9, "h")).H
        b = draw_channels(beta, 0, 8, substream(9, "h")).H
        assert np.array_equal(a, b)


class TestReceivedSir:
    def test_single_cell_sentinel(self):
        beta = PathLossMap(np.ones((1, 1, 4)))
        assert received_sir(beta, 1.0, 0) == math.inf

    def test_one_interferer(self):
        b = np.zeros((2, 2, 1))
        b[0, 0, 0] = 1.0
        b[1, 1, 0] = 1.0
        b[0, 1, 0] = 0.5
        b[1, 0, 0] = 0.5
        assert received_sir(PathLossMap(b), 1.0, 0) == pytest.approx(4.0)

    def test_two_interferers(self):
        b = np.zeros((2, 2, 2))
        b[0, 0, :] = 1.0
        b[1, 1, :] = 1.0
        b[0, 1, :] = 1.0
        assert received_sir(PathLossMap(b), 10.0, 0) == pytest.approx(5.0)
