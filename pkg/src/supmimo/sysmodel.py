"""Cell geometry, user placement, path loss, power control, and channels.

The network is a hexagonal grid of L cells (L in {1, 7, 19}) with one
M-antenna base station at each cell center and K single-antenna users per
cell.  Large-scale gains are distance-based path loss, normalized so that a
user at the cell edge has unit gain.  Small-scale channels are i.i.d.
circularly-symmetric complex Gaussian with per-user variance given by the
gain map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

HEX_CELL_COUNTS = (1, 7, 19)


@dataclass(frozen=True)
class Scenario1:
    """Users drawn uniformly over each hexagonal cell, kept off the BS."""

    cell_radius_m: float = 1000.0
    min_dist_m: float = 100.0


@dataclass(frozen=True)
class Scenario2:
    """K users per cell at fixed, equally spaced positions on a ring."""

    cell_radius_m: float = 1000.0
    user_circle_radius_m: float = 800.0


Scenario = Scenario1 | Scenario2


@dataclass(frozen=True)
class SystemConfig:
    """Full experiment parameterization.

    tau is the time-multiplexed training length and must equal r * K: each
    pilot is reused once every r cells.  snr_db is omega / sigma^2 in dB.
    iterations is the sweep count of the data-aided estimator.
    """

    L: int = 7
    K: int = 5
    M: int = 100
    C_u: int = 100
    C: int = 200
    tau: int = 5
    r: int = 1
    P: int = 4
    snr_db: float = 10.0
    omega: float = 1.0
    scenario: Scenario = field(default_factory=Scenario2)
    path_loss_exponent: float = 3.0
    iterations: int = 4
    seed: int = 0

    def __post_init__(self):
        for name in ("L", "K", "M", "C_u"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.C < self.C_u:
            raise ValueError(f"C ({self.C}) must be >= C_u ({self.C_u})")
        if self.r < 1:
            raise ValueError(f"r must be >= 1, got {self.r}")
        if self.tau != self.r * self.K:
            raise ValueError(
                f"tau ({self.tau}) must equal r*K ({self.r * self.K}): one pilot "
                "block per reuse group"
            )
        if self.tau >= self.C_u:
            raise ValueError(f"tau ({self.tau}) must be < C_u ({self.C_u})")
        root = math.isqrt(self.P)
        if self.P < 4 or root * root != self.P:
            raise ValueError(f"P must be a square QAM order >= 4, got {self.P}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.omega <= 0:
            raise ValueError("omega must be positive")

    @property
    def sigma2(self) -> float:
        """Noise variance implied by the SNR target omega / sigma^2."""
        return self.omega / 10.0 ** (self.snr_db / 10.0)

    @property
    def n_users(self) -> int:
        return self.L * self.K


@dataclass(frozen=True)
class UserLayout:
    """Positions of all base stations and users, in meters.

    positions has shape (L, K, 2); bs_positions has shape (L, 2).
    Flattened user n = l*K + k lives in cell l.
    """

    positions: np.ndarray
    bs_positions: np.ndarray
    cell_radius_m: float

    @property
    def L(self) -> int:
        return self.bs_positions.shape[0]

    @property
    def K(self) -> int:
        return self.positions.shape[1]

    def cell_of(self, n: int) -> int:
        return n // self.K


@dataclass(frozen=True)
class PathLossMap:
    """Large-scale gain tensor: beta[j, l, k] couples BS j and user (l, k)."""

    beta: np.ndarray

    @property
    def L(self) -> int:
        return self.beta.shape[0]

    @property
    def K(self) -> int:
        return self.beta.shape[2]

    def home(self) -> np.ndarray:
        """Per-user gain at the home BS, shape (L, K)."""
        idx = np.arange(self.L)
        return self.beta[idx, idx, :]

    def normalized(self, omega: float) -> "PathLossMap":
        """Equivalent gains under statistics-aware power control.

        Scales user (l, k) by q = omega / beta[l, l, k], so every home-cell
        gain becomes exactly omega and cross gains become at most omega
        whenever the home gain dominates.
        """
        q = omega / self.home()
        return PathLossMap(self.beta * q[np.newaxis, :, :])


@dataclass(frozen=True)
class PowerAllocation:
    """Per-user transmit power q and its pilot/data amplitude split.

    q, rho_d, rho_p all have shape (L, K) and satisfy q = rho_d^2 + rho_p^2.
    rho_d and rho_p are amplitudes (not fractions); for a superimposed-pilot
    user both are positive.
    """

    q: np.ndarray
    rho_d: np.ndarray
    rho_p: np.ndarray

    def __post_init__(self):
        if not np.allclose(self.q, self.rho_d**2 + self.rho_p**2, rtol=1e-10):
            raise ValueError("power split must satisfy q = rho_d^2 + rho_p^2")


@dataclass(frozen=True)
class ChannelRealization:
    """Channels from every user to one BS for a single coherence block.

    H has shape (M, L*K); column l*K + k is the channel of user (l, k).
    """

    H: np.ndarray
    bs: int
    K: int

    @property
    def M(self) -> int:
        return self.H.shape[0]

    def column(self, cell: int, k: int) -> np.ndarray:
        return self.H[:, cell * self.K + k]


def hex_centers(L: int, cell_radius_m: float) -> np.ndarray:
    """Cell-center coordinates for the supported hexagonal layouts.

    Adjacent centers are sqrt(3) * cell_radius_m apart (cell_radius_m is the
    hexagon circumradius).  L = 1 is the single reference cell, L = 7 adds
    the first tier, L = 19 the second.
    """
    if L not in HEX_CELL_COUNTS:
        raise ValueError(f"unsupported cell count {L}; expected one of {HEX_CELL_COUNTS}")
    tiers = {1: 0, 7: 1, 19: 2}[L]
    step = math.sqrt(3.0) * cell_radius_m
    centers = [(0.0, 0.0)]
    for ring in range(1, tiers + 1):
        for a in range(-ring, ring + 1):
            for b in range(-ring, ring + 1):
                if max(abs(a), abs(b), abs(a + b)) != ring:
                    continue
                x = step * (a + 0.5 * b)
                y = step * (0.5 * math.sqrt(3.0)) * b
                centers.append((x, y))
    out = np.array(centers, dtype=float)
    # reference cell first, then stable near-to-far ordering
    order = np.lexsort((np.arctan2(out[:, 1], out[:, 0]), np.hypot(out[:, 0], out[:, 1]).round(6)))
    return out[order]


def in_hexagon(point: np.ndarray, cell_radius_m: float) -> bool:
    """Membership test for the hexagon centered at the origin.

    Orientation matches hex_centers: edge normals point along 0, 60 and 120
    degrees, so the apothem constraint is |p . n| <= sqrt(3)/2 * R per axis.
    """
    half_width = 0.5 * math.sqrt(3.0) * cell_radius_m
    x, y = float(point[0]), float(point[1])
    for theta in (0.0, math.pi / 3.0, 2.0 * math.pi / 3.0):
        if abs(x * math.cos(theta) + y * math.sin(theta)) > half_width + 1e-9:
            return False
    return True


def place_users(config: SystemConfig, rng: np.random.Generator) -> UserLayout:
    """Draw (or construct) user positions for the configured scenario.

    Scenario 1 rejection-samples uniform positions inside each hexagon at
    distance >= min_dist_m from the BS.  Scenario 2 is deterministic: K users
    per cell at angles 2*pi*k/K on the configured ring.
    """
    scen = config.scenario
    centers = hex_centers(config.L, scen.cell_radius_m)
    K = config.K
    positions = np.zeros((config.L, K, 2))
    if isinstance(scen, Scenario2):
        if scen.user_circle_radius_m <= 0:
            raise ValueError("user_circle_radius_m must be positive")
        angles = 2.0 * np.pi * np.arange(K) / K
        ring = scen.user_circle_radius_m * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        positions = centers[:, np.newaxis, :] + ring[np.newaxis, :, :]
    elif isinstance(scen, Scenario1):
        if not 0 < scen.min_dist_m < scen.cell_radius_m:
            raise ValueError("need 0 < min_dist_m < cell_radius_m")
        R = scen.cell_radius_m
        for cell in range(config.L):
            for k in range(K):
                positions[cell, k] = centers[cell] + _sample_hex_point(R, scen.min_dist_m, rng)
    else:
        raise TypeError(f"unknown scenario {scen!r}")
    return UserLayout(positions=positions, bs_positions=centers, cell_radius_m=scen.cell_radius_m)


def _sample_hex_point(cell_radius_m: float, min_dist_m: float, rng: np.random.Generator) -> np.ndarray:
    while True:
        p = rng.uniform(-cell_radius_m, cell_radius_m, size=2)
        d = math.hypot(p[0], p[1])
        if d >= min_dist_m and in_hexagon(p, cell_radius_m):
            return p


def path_loss(
    layout: UserLayout,
    exponent: float,
    reference_distance_m: float | None = None,
) -> PathLossMap:
    """Distance-based gains beta = (d / d0) ** (-exponent).

    d0 defaults to the cell radius, so a user at the cell edge has beta = 1.
    All downstream ratios are invariant to this normalization.
    """
    if reference_distance_m is None:
        reference_distance_m = layout.cell_radius_m
    if reference_distance_m <= 0:
        raise ValueError("reference distance must be positive")
    diff = layout.bs_positions[:, np.newaxis, np.newaxis, :] - layout.positions[np.newaxis, :, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    if np.any(dist <= 0.0):
        raise ValueError("zero BS-user distance; path loss undefined")
    beta = (dist / reference_distance_m) ** (-float(exponent))
    return PathLossMap(beta=beta)


def statistics_aware_power(
    beta: PathLossMap,
    omega: float,
    data_power_fraction: float | np.ndarray = 0.5,
) -> PowerAllocation:
    """Inversion power control: q = omega / beta_home per user.

    Every user is then received at its home BS with power exactly omega.
    data_power_fraction is the share of q spent on data symbols (scalar or
    per-user array); the remainder goes to the embedded pilot.
    """
    home = beta.home()
    if np.any(home <= 0):
        raise ValueError("home-cell gains must be positive")
    q = omega / home
    frac = np.broadcast_to(np.asarray(data_power_fraction, dtype=float), q.shape)
    if np.any((frac < 0) | (frac > 1)):
        raise ValueError("data_power_fraction must lie in [0, 1]")
    return PowerAllocation(q=q, rho_d=np.sqrt(q * frac), rho_p=np.sqrt(q * (1.0 - frac)))


def uniform_power(
    L: int,
    K: int,
    q: float = 1.0,
    data_power_fraction: float | np.ndarray = 0.5,
) -> PowerAllocation:
    """Identical transmit power q for every user (no inversion)."""
    if q <= 0:
        raise ValueError("q must be positive")
    qs = np.full((L, K), float(q))
    frac = np.broadcast_to(np.asarray(data_power_fraction, dtype=float), qs.shape)
    if np.any((frac < 0) | (frac > 1)):
        raise ValueError("data_power_fraction must lie in [0, 1]")
    return PowerAllocation(q=qs, rho_d=np.sqrt(qs * frac), rho_p=np.sqrt(qs * (1.0 - frac)))


def draw_channels(
    beta: PathLossMap,
    bs: int,
    M: int,
    rng: np.random.Generator,
) -> ChannelRealization:
    """One circularly-symmetric Gaussian channel block at BS `bs`.

    Column l*K + k has i.i.d. entries with variance beta[bs, l, k], split
    evenly between real and imaginary parts.
    """
    L, K = beta.L, beta.K
    var = beta.beta[bs].reshape(L * K)
    scale = np.sqrt(var / 2.0)
    shape = (M, L * K)
    H = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * scale[np.newaxis, :]
    return ChannelRealization(H=H, bs=bs, K=K)


def received_sir(beta: PathLossMap, omega: float, j: int) -> float:
    """omega over the summed squared cross gains seen at BS j.

    Pass the power-controlled gain map; with no interfering cells the result
    is +inf.
    """
    mask = np.ones(beta.L, dtype=bool)
    mask[j] = False
    interference = float(np.sum(beta.beta[j, mask, :] ** 2))
    if interference == 0.0:
        return math.inf
    return omega / interference
