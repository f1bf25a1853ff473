import math

import numpy as np
import pytest

from supmimo.hybrid import Partition, all_sp
from supmimo.rng import substream
from supmimo.sysmodel import PowerAllocation, SystemConfig, uniform_power
from supmimo.waveform import (
    CapacityError,
    FrameSet,
    bits_per_symbol,
    constellation,
    decide,
    demap,
    dft_matrix,
    make_pilot_books,
    min_distance,
    modulate,
    random_symbols,
    synthesize_received,
    assemble_frames,
)


def make_config(**kw):
    defaults = dict(L=7, K=5, M=16, C_u=100, C=200, tau=5, r=1, P=4, seed=0)
    defaults.update(kw)
    return SystemConfig(**defaults)


class TestPilotBooks:
    def test_trivial_single_pilot(self):
        cfg = make_config(L=1, K=1, tau=1, C_u=4)
        book = make_pilot_books(cfg)
        assert book.tp_matrix.shape == (1, 1)
        assert book.tp_matrix[0, 0] == pytest.approx(1.0)

    def test_sp_orthogonality_exact(self):
        cfg = make_config(L=1, K=1, tau=1, C_u=4)
        book = make_pilot_books(cfg)
        gram = book.sp_matrix.conj().T @ book.sp_matrix
        assert np.allclose(gram, 4.0 * np.eye(4), atol=1e-12)

    def test_orthogonality_tolerance_at_scale(self):
        cfg = make_config()
        book = make_pilot_books(cfg)
        gram = book.sp_matrix.conj().T @ book.sp_matrix
        err = np.linalg.norm(gram - cfg.C_u * np.eye(cfg.C_u))
        assert err < 1e-9 * cfg.C_u
        tp_gram = book.tp_matrix.conj().T @ book.tp_matrix
        assert np.allclose(tp_gram, cfg.tau * np.eye(cfg.tau), atol=1e-10)

    def test_full_assignment_is_injective(self):
        book = make_pilot_books(make_config())
        cols = book.sp_assignment.reshape(-1)
        assert len(set(cols.tolist())) == 35
        assert cols.min() >= 0

    def test_tp_reuse_pattern(self):
        cfg = make_config(L=7, K=2, r=2, tau=4)
        book = make_pilot_books(cfg)
        assert book.tp_matrix.shape == (4, 4)
        # cells alternate between the two pilot blocks with period r
        assert np.array_equal(book.tp_assignment[0], [0, 1])
        assert np.array_equal(book.tp_assignment[1], [2, 3])
        assert np.array_equal(book.tp_assignment[2], [0, 1])

    def test_capacity_error_without_reuse(self):
        cfg = make_config(L=7, K=5, C_u=20, C=40)
        with pytest.raises(CapacityError):
            make_pilot_books(cfg)

    def test_reuse_groups_when_allowed(self):
        cfg = make_config(L=7, K=5, C_u=20, C=40)
        book = make_pilot_books(cfg, allow_sp_reuse=True)
        # 4 cell groups of 5 columns; cells 4..6 repeat groups 0..2
        assert np.array_equal(book.sp_assignment[4], book.sp_assignment[0])
        assert book.sp_assignment.max() == 19

    def test_block_diagonal_book(self):
        cfg = make_config(L=5, K=4, C_u=20, C=40, tau=4)
        book = make_pilot_books(cfg, block_diagonal=True)
        gram = book.sp_matrix.conj().T @ book.sp_matrix
        assert np.allclose(gram, 20.0 * np.eye(20), atol=1e-10)
        # each cell's pilots live on its own K-symbol support
        col = book.sp_matrix[:, book.sp_assignment[2, 0]]
        assert np.all(col[:8] == 0) and np.all(col[12:] == 0)

    def test_block_diagonal_needs_exact_fit(self):
        with pytest.raises(ValueError, match="C_u == L\\*K"):
            make_pilot_books(make_config(), block_diagonal=True)

    def test_hybrid_book_uses_short_columns(self):
        cfg = make_config()
        part = Partition(
            u_tp=frozenset((l, k) for l in range(7) for k in range(5) if not (l == 0 and k < 2)),
            u_sp=frozenset({(0, 0), (0, 1)}),
        )
        book = make_pilot_books(cfg, partition=part)
        assert book.sp_matrix.shape == (95, 95)
        assert book.sp_assignment[0, 0] >= 0
        assert book.sp_assignment[0, 2] == -1
        with pytest.raises(KeyError):
            book.sp_column(0, 2)

    def test_hybrid_capacity(self):
        cfg = make_config(L=7, K=5, C_u=20, C=40)
        with pytest.raises(CapacityError):
            make_pilot_books(cfg, partition=all_sp(7, 5))


class TestQam:
    def test_nearest_qpsk_point(self):
        out = decide(np.array([0.8 + 0.1j]), 4)
        assert out[0] == pytest.approx((1 + 1j) / math.sqrt(2))

    def test_decide_idempotent(self):
        rng = substream(0, "qam")
        v = rng.standard_normal(200) + 1j * rng.standard_normal(200)
        for P in (4, 16, 64):
            once = decide(v, P)
            assert np.array_equal(decide(once, P), once)

    def test_unit_average_power(self):
        for P in (4, 16, 64, 256):
            pts = constellation(P)
            assert len(pts) == P
            assert np.mean(np.abs(pts) ** 2) == pytest.approx(1.0, abs=1e-12)

    def test_min_distance_formula(self):
        for P in (4, 16, 64):
            pts = constellation(P)
            d = min(abs(a - b) for i, a in enumerate(pts) for b in pts[i + 1:])
            assert d == pytest.approx(min_distance(P), rel=1e-12)
            assert min_distance(P) == pytest.approx(math.sqrt(6.0 / (P - 1)))

    def test_modulate_demap_roundtrip(self):
        rng = substream(1, "bits")
        for P in (4, 16, 64):
            bits = rng.integers(0, 2, size=50 * bits_per_symbol(P), dtype=np.uint8)
            assert np.array_equal(demap(modulate(bits, P), P), bits)

    def test_gray_neighbors_differ_in_one_bit(self):
        for P in (16, 64):
            side = math.isqrt(P)
            pts = constellation(P).reshape(side, side)
            for i in range(side):
                for j in range(side - 1):
                    a = demap(np.array([pts[i, j]]), P)
                    b = demap(np.array([pts[i, j + 1]]), P)
                    assert np.sum(a != b) == 1

    def test_non_square_order_rejected(self):
        with pytest.raises(ValueError, match="square"):
            modulate(np.zeros(3, dtype=np.uint8), 8)
        with pytest.raises(ValueError, match="square"):
            decide(np.zeros(2, dtype=complex), 32)

    def test_random_symbols_on_alphabet(self):
        rng = substream(2, "sym")
        sym = random_symbols(500, 16, rng)
        pts = constellation(16)
        dist = np.min(np.abs(sym[:, None] - pts[None, :]), axis=1)
        assert np.max(dist) < 1e-12


class TestFrames:
    def test_pure_pilot_when_data_amplitude_zero(self):
        cfg = make_config(L=1, K=1, tau=1, C_u=8)
        book = make_pilot_books(cfg)
        powers = PowerAllocation(q=np.ones((1, 1)), rho_d=np.zeros((1, 1)), rho_p=np.ones((1, 1)))
        frames = assemble_frames(cfg, book, powers, substream(0, "f"), scheme="sp")
        assert np.allclose(frames.S[0], book.sp_column(0, 0))

    def test_sp_frame_average_power(self):
        cfg = make_config(L=1, K=2, tau=2, r=1, C_u=64, C=128)
        book = make_pilot_books(cfg)
        powers = uniform_power(1, 2, q=1.7, data_power_fraction=0.4)
        acc = 0.0
        n_frames = 200
        for t in range(n_frames):
            frames = assemble_frames(cfg, book, powers, substream(3, "f", t), scheme="sp")
            acc += np.mean(np.abs(frames.S[0]) ** 2)
        assert acc / n_frames == pytest.approx(1.7, rel=0.02)

    def test_tp_pilot_phase_power_exact(self):
        cfg = make_config()
        book = make_pilot_books(cfg)
        powers = uniform_power(7, 5, q=2.0)
        frames = assemble_frames(cfg, book, powers, substream(4, "f"), scheme="tp")
        assert np.allclose(np.abs(frames.S[:, : cfg.tau]) ** 2, 2.0, atol=1e-12)
        assert frames.data[0].shape == (cfg.C_u - cfg.tau,)

    def test_hybrid_sp_user_is_silent_during_training(self):
        cfg = make_config()
        part = Partition(
            u_tp=frozenset((l, k) for l in range(7) for k in range(5) if l > 0),
            u_sp=frozenset((0, k) for k in range(5)),
        )
        book = make_pilot_books(cfg, partition=part)
        powers = uniform_power(7, 5)
        frames = assemble_frames(cfg, book, powers, substream(5, "f"), scheme="hybrid",
                                 partition=part)
        assert np.all(frames.S[:5, : cfg.tau] == 0.0)
        assert np.all(frames.S[5:, : cfg.tau] != 0.0)
        assert frames.scheme[0] == "sp-silent"
        assert frames.scheme[5] == "tp"
        # hybrid TP pilots ride at unit amplitude regardless of data power
        assert np.allclose(np.abs(frames.S[5:, : cfg.tau]), 1.0, atol=1e-12)

    def test_gaussian_payload(self):
        cfg = make_config(L=1, K=1, tau=1, C_u=2000, C=4000)
        book = make_pilot_books(cfg)
        frames = assemble_frames(cfg, book, uniform_power(1, 1), substream(6, "f"),
                                 scheme="sp", data_dist="gaussian")
        assert np.mean(np.abs(frames.data[0]) ** 2) == pytest.approx(1.0, rel=0.1)


class TestSynthesis:
    def test_zero_channels_zero_noise(self):
        cfg = make_config(L=1, K=1, tau=1, C_u=8)
        book = make_pilot_books(cfg)
        frames = assemble_frames(cfg, book, uniform_power(1, 1), substream(0, "f"), scheme="sp")
        blk = synthesize_received(np.zeros((4, 1), dtype=complex), frames, 0.0, substream(0, "n"))
        assert np.all(blk.Y == 0.0)

    def test_single_symbol_identity(self):
        frames = FrameSet(S=np.array([[2.0 + 0j]]), data=[np.array([2.0 + 0j])],
                          scheme=["sp"], tau=0)
        blk = synthesize_received(np.array([[1.0 + 0j]]), frames, 0.0, substream(0, "n"))
        assert blk.Y[0, 0] == 2.0 + 0j

    def test_received_energy_budget(self):
        # symmetric case: E||Y||_F^2 = sum_n M beta q C_u + M C_u sigma2
        cfg = make_config(L=1, K=4, tau=4, C_u=32, C=64, M=8)
        book = make_pilot_books(cfg)
        powers = uniform_power(1, 4, q=1.3)
        beta = 0.6
        sigma2 = 0.2
        total = 0.0
        trials = 1000
        for t in range(trials):
            rng = substream(8, "h", t)
            H = math.sqrt(beta / 2) * (rng.standard_normal((8, 4)) + 1j * rng.standard_normal((8, 4)))
            frames = assemble_frames(cfg, book, powers, substream(8, "f", t), scheme="sp")
            blk = synthesize_received(H, frames, sigma2, substream(8, "n", t))
            total += np.linalg.norm(blk.Y) ** 2
        expected = 4 * 8 * beta * 1.3 * 32 + 8 * 32 * sigma2
        assert total / trials == pytest.approx(expected, rel=0.02)

    def test_dimension_mismatch(self):
        frames = FrameSet(S=np.zeros((2, 4), dtype=complex), data=[], scheme=[], tau=0)
        with pytest.raises(ValueError, match="users"):
            synthesize_received(np.zeros((4, 3), dtype=complex), frames, 0.0, substream(0, "n"))


def test_dft_matrix_unit_modulus():
    F = dft_matrix(9)
    assert np.allclose(np.abs(F), 1.0, atol=1e-12)
