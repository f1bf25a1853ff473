"""Pilot books, QAM mapping, frame assembly, and received-signal synthesis.

Three uplink frame formats are supported:

* time-multiplexed ("tp"): sqrt(q) * pilot over the first tau symbols, then
  sqrt(q) * data for the remaining C_u - tau;
* superimposed ("sp"): rho_d * data + rho_p * pilot over all C_u symbols,
  every user owning a dedicated pilot column;
* hybrid: TP users send unit-amplitude pilots then sqrt(q) * data, while the
  superimposed users stay silent for the first tau symbols and transmit
  rho_d * data + rho_p * pilot over the trailing C_u - tau symbols with a
  shorter pilot book.

Pilot matrices are DFT-based, so entries have unit modulus and orthogonality
is exact up to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hybrid import Partition
from .sysmodel import PowerAllocation, SystemConfig

TP_SCHEME = "tp"
SP_SCHEME = "sp"
SP_SILENT_SCHEME = "sp-silent"


class CapacityError(ValueError):
    """More pilot-needing users than available orthogonal columns."""


@dataclass(frozen=True)
class PilotBook:
    """Pilot matrices plus the user-to-column assignments.

    tp_matrix is tau x tau; tp_assignment[l, k] indexes its columns and
    repeats with period r cells.  sp_matrix is square with sp_length columns;
    sp_assignment[l, k] is the dedicated column of user (l, k), or -1 when
    that user has no superimposed pilot.
    """

    tp_matrix: np.ndarray
    tp_assignment: np.ndarray
    sp_matrix: np.ndarray
    sp_assignment: np.ndarray

    @property
    def tau(self) -> int:
        return self.tp_matrix.shape[0]

    @property
    def sp_length(self) -> int:
        return self.sp_matrix.shape[0]

    def tp_column(self, cell: int, k: int) -> np.ndarray:
        return self.tp_matrix[:, self.tp_assignment[cell, k]]

    def sp_column(self, cell: int, k: int) -> np.ndarray:
        col = self.sp_assignment[cell, k]
        if col < 0:
            raise KeyError(f"user ({cell}, {k}) has no superimposed pilot")
        return self.sp_matrix[:, col]


@dataclass(frozen=True)
class FrameSet:
    """Transmitted symbols for all users of one coherence block.

    S has shape (L*K, C_u); row l*K + k is the frame of user (l, k).  data
    holds each user's unit-variance payload symbols (length C_u for pure SP,
    C_u - tau otherwise) and scheme tags which format the row uses.
    """

    S: np.ndarray
    data: list
    scheme: list
    tau: int

    @property
    def n_users(self) -> int:
        return self.S.shape[0]

    @property
    def C_u(self) -> int:
        return self.S.shape[1]

    def data_slice(self, n: int) -> slice:
        """Columns of the block that carry user n's data symbols."""
        return slice(0, self.C_u) if self.scheme[n] == SP_SCHEME else slice(self.tau, self.C_u)


@dataclass(frozen=True)
class ReceivedBlock:
    """One BS observation: Y = sum_n h_n s_n^T + W with W ~ CN(0, sigma2)."""

    Y: np.ndarray
    sigma2: float

    @property
    def M(self) -> int:
        return self.Y.shape[0]

    @property
    def C_u(self) -> int:
        return self.Y.shape[1]


def dft_matrix(n: int) -> np.ndarray:
    """Unnormalized DFT matrix: unit-modulus entries, F^H F = n I."""
    if n < 1:
        raise ValueError("matrix size must be >= 1")
    idx = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / n)


def make_pilot_books(
    config: SystemConfig,
    partition: Partition | None = None,
    block_diagonal: bool = False,
    allow_sp_reuse: bool = False,
) -> PilotBook:
    """Build TP and SP pilot matrices with their user assignments.

    Without a partition every user gets a dedicated superimposed column of
    length C_u, which requires L*K <= C_u unless allow_sp_reuse is set (then
    column blocks repeat across cell groups, mimicking pilot reuse).  With a
    partition, only the superimposed users are assigned columns, drawn from a
    (C_u - tau)-length book.

    block_diagonal groups each cell's K superimposed pilots on its own
    K-symbol support (requires C_u == L*K); columns are scaled so the
    norm-squared stays C_u.
    """
    L, K, C_u, tau, r = config.L, config.K, config.C_u, config.tau, config.r
    tp_matrix = dft_matrix(tau)
    cells = np.arange(L)
    tp_assignment = (cells[:, np.newaxis] % r) * K + np.arange(K)[np.newaxis, :]

    sp_assignment = np.full((L, K), -1, dtype=int)
    if partition is not None:
        sp_len = C_u - tau
        if block_diagonal:
            raise ValueError("block-diagonal layout applies to the full-length book only")
        sp_users = sorted(partition.u_sp)
        if len(sp_users) > sp_len:
            raise CapacityError(
                f"{len(sp_users)} superimposed users exceed {sp_len} available columns"
            )
        sp_matrix = dft_matrix(sp_len)
        for col, (cell, k) in enumerate(sp_users):
            sp_assignment[cell, k] = col
    elif block_diagonal:
        if C_u != L * K:
            raise ValueError("block-diagonal book needs C_u == L*K")
        sp_matrix = np.zeros((C_u, C_u), dtype=complex)
        block = dft_matrix(K) * math.sqrt(C_u / K)
        for cell in range(L):
            lo = cell * K
            sp_matrix[lo : lo + K, lo : lo + K] = block
        sp_assignment = np.arange(L * K).reshape(L, K)
    else:
        sp_matrix = dft_matrix(C_u)
        if L * K <= C_u:
            sp_assignment = np.arange(L * K).reshape(L, K)
        elif allow_sp_reuse:
            groups = C_u // K
            if groups < 1:
                raise CapacityError(f"C_u ({C_u}) cannot fit even one cell of {K} pilots")
            sp_assignment = (cells[:, np.newaxis] % groups) * K + np.arange(K)[np.newaxis, :]
        else:
            raise CapacityError(
                f"{L * K} users exceed {C_u} superimposed pilot columns; "
                "use allow_sp_reuse or a hybrid partition"
            )
    return PilotBook(
        tp_matrix=tp_matrix,
        tp_assignment=tp_assignment,
        sp_matrix=sp_matrix,
        sp_assignment=sp_assignment,
    )


# ---------------------------------------------------------------------------
# Square-QAM mapping
# ---------------------------------------------------------------------------


def _side(P: int) -> int:
    side = math.isqrt(P)
    if P < 4 or side * side != P:
        raise ValueError(f"P must be a square QAM order >= 4, got {P}")
    return side


def _axis_scale(P: int) -> float:
    # unit average power: adjacent amplitude levels sit 2*c apart
    return math.sqrt(3.0 / (2.0 * (P - 1)))


def min_distance(P: int) -> float:
    """Nearest-neighbor distance of the unit-power constellation."""
    return math.sqrt(6.0 / (P - 1))


def constellation(P: int) -> np.ndarray:
    """All P points of the Gray-labelled unit-average-power square QAM."""
    side = _side(P)
    c = _axis_scale(P)
    levels = (2 * np.arange(side) - (side - 1)) * c
    re, im = np.meshgrid(levels, levels, indexing="ij")
    return (re + 1j * im).reshape(-1)


def bits_per_symbol(P: int) -> int:
    return int(round(math.log2(P)))


def _gray_decode(v: np.ndarray) -> np.ndarray:
    out = np.asarray(v, dtype=np.int64).copy()
    shift = 1
    while shift < 32:
        out ^= out >> shift
        shift *= 2
    return out


def _bits_to_levels(bits: np.ndarray, side: int) -> np.ndarray:
    width = bits.shape[1]
    weights = 1 << np.arange(width - 1, -1, -1)
    gray = bits.astype(np.int64) @ weights
    idx = _gray_decode(gray)
    return 2 * idx - (side - 1)


def _levels_to_bits(idx: np.ndarray, side: int) -> np.ndarray:
    width = int(round(math.log2(side)))
    gray = idx ^ (idx >> 1)
    shifts = np.arange(width - 1, -1, -1)
    return ((gray[:, np.newaxis] >> shifts) & 1).astype(np.uint8)


def modulate(bits: np.ndarray, P: int) -> np.ndarray:
    """Map a flat 0/1 array onto Gray-labelled square-QAM symbols.

    The first half of each symbol's bit group selects the in-phase level,
    the second half the quadrature level.
    """
    side = _side(P)
    bits = np.asarray(bits).astype(np.uint8).reshape(-1)
    b = bits_per_symbol(P)
    if bits.size % b != 0:
        raise ValueError(f"bit count {bits.size} is not a multiple of {b}")
    groups = bits.reshape(-1, b)
    half = b // 2
    c = _axis_scale(P)
    re = _bits_to_levels(groups[:, :half], side) * c
    im = _bits_to_levels(groups[:, half:], side) * c
    return re + 1j * im


def demap(symbols: np.ndarray, P: int) -> np.ndarray:
    """Recover the Gray-coded bits of (decided) constellation points."""
    side = _side(P)
    c = _axis_scale(P)
    symbols = np.asarray(symbols).reshape(-1)
    re_idx = _nearest_level_index(symbols.real, side, c)
    im_idx = _nearest_level_index(symbols.imag, side, c)
    re_bits = _levels_to_bits(re_idx, side)
    im_bits = _levels_to_bits(im_idx, side)
    return np.concatenate([re_bits, im_bits], axis=1).reshape(-1)


def _nearest_level_index(vals: np.ndarray, side: int, c: float) -> np.ndarray:
    idx = np.rint((vals / c + (side - 1)) / 2.0).astype(np.int64)
    return np.clip(idx, 0, side - 1)


def decide(symbols: np.ndarray, P: int) -> np.ndarray:
    """Elementwise projection onto the nearest constellation point."""
    side = _side(P)
    c = _axis_scale(P)
    symbols = np.asarray(symbols)
    re = (2 * _nearest_level_index(symbols.real, side, c) - (side - 1)) * c
    im = (2 * _nearest_level_index(symbols.imag, side, c) - (side - 1)) * c
    return re + 1j * im


def random_symbols(n: int, P: int, rng: np.random.Generator) -> np.ndarray:
    """n unit-variance symbols drawn uniformly from the P-QAM alphabet."""
    bits = rng.integers(0, 2, size=n * bits_per_symbol(P), dtype=np.uint8)
    return modulate(bits, P)


# ---------------------------------------------------------------------------
# Frames and received blocks
# ---------------------------------------------------------------------------


def assemble_frames(
    config: SystemConfig,
    pilot_book: PilotBook,
    power: PowerAllocation,
    rng: np.random.Generator,
    partition: Partition | None = None,
    scheme: str = SP_SCHEME,
    data_dist: str = "qam",
) -> FrameSet:
    """Build every user's transmitted frame for one coherence block.

    scheme selects the system-wide format ("tp", "sp", or "hybrid"); hybrid
    requires a partition, and any partitioned user missing from u_sp is
    treated as time-multiplexed.  data_dist is "qam" (unit-power P-QAM) or
    "gaussian" (unit-variance complex normal).
    """
    L, K, C_u, tau = config.L, config.K, config.C_u, config.tau
    if scheme == "hybrid" and partition is None:
        raise ValueError("hybrid frames need a partition")
    S = np.zeros((L * K, C_u), dtype=complex)
    data: list = []
    tags: list = []
    for cell in range(L):
        for k in range(K):
            n = cell * K + k
            if scheme == TP_SCHEME:
                tag = TP_SCHEME
            elif scheme == SP_SCHEME:
                tag = SP_SCHEME
            elif scheme == "hybrid":
                tag = SP_SILENT_SCHEME if (cell, k) in partition.u_sp else TP_SCHEME
            else:
                raise ValueError(f"unknown frame scheme {scheme!r}")
            payload_len = C_u if tag == SP_SCHEME else C_u - tau
            x = _draw_payload(payload_len, config.P, data_dist, rng)
            if tag == TP_SCHEME:
                pilot_amp = math.sqrt(power.q[cell, k]) if scheme == TP_SCHEME else 1.0
                S[n, :tau] = pilot_amp * pilot_book.tp_column(cell, k)
                S[n, tau:] = math.sqrt(power.q[cell, k]) * x
            elif tag == SP_SCHEME:
                p = pilot_book.sp_column(cell, k)
                S[n, :] = power.rho_d[cell, k] * x + power.rho_p[cell, k] * p
            else:
                p = pilot_book.sp_column(cell, k)
                S[n, tau:] = power.rho_d[cell, k] * x + power.rho_p[cell, k] * p
            data.append(x)
            tags.append(tag)
    return FrameSet(S=S, data=data, scheme=tags, tau=tau)


def _draw_payload(n: int, P: int, data_dist: str, rng: np.random.Generator) -> np.ndarray:
    if data_dist == "qam":
        return random_symbols(n, P, rng)
    if data_dist == "gaussian":
        return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2.0)
    raise ValueError(f"unknown data distribution {data_dist!r}")


def synthesize_received(
    H: np.ndarray,
    frames: FrameSet,
    sigma2: float,
    rng: np.random.Generator,
) -> ReceivedBlock:
    """Superimpose every user's frame through its channel and add noise."""
    if H.shape[1] != frames.n_users:
        raise ValueError(f"channel columns ({H.shape[1]}) != users ({frames.n_users})")
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    Y = H @ frames.S
    if sigma2 > 0:
        scale = math.sqrt(sigma2 / 2.0)
        W = scale * (rng.standard_normal(Y.shape) + 1j * rng.standard_normal(Y.shape))
        Y = Y + W
    return ReceivedBlock(Y=Y, sigma2=float(sigma2))
