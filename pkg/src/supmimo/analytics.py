"""Closed-form SINR, rate, power-split, and crossover expressions.

Conventions: beta[j, l, k] is the large-scale gain between BS j and user
(l, k); q[l, k] is the user's total transmit power; rho_d and rho_p are the
raw data/pilot amplitudes (rho_d^2 + rho_p^2 = q).  Feeding the
power-controlled equivalent gains with q = 1 and the normalized amplitude
split gives identical results; the finite-antenna expression is exactly
invariant under that reduction.

Empty interference sums return +inf; the rate helpers optionally cap the
spectral efficiency at log2(P) to model a fixed constellation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hybrid import Partition, copilot_cells
from .sysmodel import PathLossMap, PowerAllocation, SystemConfig


@dataclass(frozen=True)
class AnalyticInputs:
    """Parameter bundle consumed by the closed-form expressions."""

    beta: np.ndarray
    q: np.ndarray
    rho_d: np.ndarray
    rho_p: np.ndarray
    M: int
    C_u: int
    C: int
    tau: int
    r: int

    @classmethod
    def build(
        cls,
        beta: PathLossMap,
        powers: PowerAllocation,
        config: SystemConfig,
        M: int | None = None,
    ) -> "AnalyticInputs":
        return cls(
            beta=beta.beta,
            q=powers.q,
            rho_d=powers.rho_d,
            rho_p=powers.rho_p,
            M=config.M if M is None else M,
            C_u=config.C_u,
            C=config.C,
            tau=config.tau,
            r=config.r,
        )

    @property
    def L(self) -> int:
        return self.beta.shape[0]

    @property
    def K(self) -> int:
        return self.beta.shape[2]


def sinr_tp_asymptotic(inputs: AnalyticInputs, j: int, m: int) -> float:
    """Large-M SINR of a time-multiplexed user: pilot contamination only.

    Equals (q beta_home)^2 over the summed squared effective gains of the
    same-pilot users in the other reuse-group cells.
    """
    num = (inputs.q[j, m] * inputs.beta[j, j, m]) ** 2
    den = 0.0
    for l in copilot_cells(inputs.L, inputs.r, j):
        if l != j:
            den += (inputs.q[l, m] * inputs.beta[j, l, m]) ** 2
    if den == 0.0:
        return math.inf
    return num / den


def rate_tp(inputs: AnalyticInputs, sinr: float, cap_order: int | None = None) -> float:
    """Per-user TP rate: ((C_u - tau) / C) * log2(1 + SINR), optionally capped."""
    return ((inputs.C_u - inputs.tau) / inputs.C) * _spectral_efficiency(sinr, cap_order)


def rate_sp(inputs: AnalyticInputs, sinr: float, cap_order: int | None = None) -> float:
    """Per-user SP rate: (C_u / C) * log2(1 + SINR), optionally capped."""
    return (inputs.C_u / inputs.C) * _spectral_efficiency(sinr, cap_order)


def _spectral_efficiency(sinr: float, cap_order: int | None) -> float:
    se = math.log2(1.0 + sinr) if math.isfinite(sinr) else math.inf
    if cap_order is not None:
        se = min(se, math.log2(cap_order))
    return se


def sinr_sp_finite_m(inputs: AnalyticInputs, j: int, m: int) -> float:
    """Finite-antenna SINR at the matched-filter output for an SP user.

    Inverse of a three-part interference budget: the O(1) term from data
    leaking into everyone's channel estimate, plus two O(1/M) terms (direct
    cross-channel leakage and the estimate-error cross products).  Both
    exclusion patterns drop single flattened users, not whole cells.
    """
    beta_row = inputs.beta[j].reshape(-1)
    q = inputs.q.reshape(-1)
    rho_d2 = (inputs.rho_d.reshape(-1)) ** 2
    C_u, M = inputs.C_u, inputs.M
    t = j * inputs.K + m
    bm = beta_row[t]
    adm2 = rho_d2[t]
    apm2 = (inputs.rho_p.reshape(-1)[t]) ** 2
    if bm <= 0 or adm2 <= 0 or apm2 <= 0:
        raise ValueError("target user needs positive gain and both amplitudes")

    w = rho_d2 * q * beta_row**2
    term_self = float(np.sum(w)) / (C_u * apm2 * adm2 * bm**2)

    others = np.ones(beta_row.shape[0], dtype=bool)
    others[t] = False
    term_cross = float(np.sum(q[others] * beta_row[others])) / (M * adm2 * bm)

    # sum over n != t of q_n beta_n * (sum over k != n of rho_dk^2 beta_k)
    inner_total = float(np.sum(rho_d2 * beta_row))
    inner = inner_total - rho_d2 * beta_row  # drop k == n
    term_pair = float(np.sum((q[others] * beta_row[others]) * inner[others])) / (
        M * C_u * apm2 * adm2 * bm**2
    )
    return 1.0 / (term_self + term_cross + term_pair)


def sinr_sp_asymptotic(inputs: AnalyticInputs, j: int, m: int) -> float:
    """Large-M limit of the SP SINR: the self-interference term alone."""
    beta_row = inputs.beta[j].reshape(-1)
    q = inputs.q.reshape(-1)
    rho_d2 = (inputs.rho_d.reshape(-1)) ** 2
    t = j * inputs.K + m
    adm2 = rho_d2[t]
    apm2 = (inputs.rho_p.reshape(-1)[t]) ** 2
    num = apm2 * adm2 * beta_row[t] ** 2
    den = float(np.sum(rho_d2 * q * beta_row**2)) / inputs.C_u
    if den == 0.0:
        return math.inf
    return num / den


def sinr_sp_lower_bound(L: int, K: int, C_u: int, M: int, lambda2: float) -> float:
    """Worst-case SP SINR under power control with a common data share.

    lambda2 is the data power fraction; the bound degenerates to zero at
    either endpoint of (0, 1).
    """
    if not 0.0 < lambda2 < 1.0:
        return 0.0
    n = L * K
    mu2 = 1.0 - lambda2
    den = n / (C_u * mu2) + ((n - 1) / lambda2 + (n - 1) ** 2 / (C_u * mu2)) / M
    return 1.0 / den


def optimal_rho(
    M: int,
    L: int,
    K: int,
    C_u: int,
    approximate: bool = False,
) -> tuple[float, float]:
    """Data/pilot power split maximizing the SP SINR lower bound.

    Returns (lambda2, mu2) with lambda2 + mu2 = 1.  The approximate form
    assumes L*K >> 1; the exact form is the stationary point of the bound.
    """
    n = L * K
    if approximate:
        lam2 = 1.0 / (1.0 + math.sqrt((M + n) / C_u))
    else:
        if n < 2:
            raise ValueError("need at least two users for the exact split")
        ratio = (n / C_u + (n - 1) ** 2 / (M * C_u)) / ((n - 1) / M)
        lam2 = 1.0 / (1.0 + math.sqrt(ratio))
    return lam2, 1.0 - lam2


def kappa(inputs: AnalyticInputs, j: int, m: int) -> float:
    """Uplink-length crossover: SP beats TP (asymptotically) iff C_u > kappa."""
    beta_row = inputs.beta[j].reshape(-1)
    q = inputs.q.reshape(-1)
    rho_d2 = (inputs.rho_d.reshape(-1)) ** 2
    t = j * inputs.K + m
    adm2 = rho_d2[t]
    apm2 = (inputs.rho_p.reshape(-1)[t]) ** 2
    num = q[t] ** 2 * float(np.sum(rho_d2 * q * beta_row**2))
    den = 0.0
    for l in copilot_cells(inputs.L, inputs.r, j):
        if l != j:
            den += (inputs.q[l, m] * inputs.beta[j, l, m]) ** 2
    if den == 0.0:
        return math.inf
    return num / (apm2 * adm2 * den)


def kappa_symmetric(K: int, L: int, beta: float) -> float:
    """Crossover for the symmetric cell: unit home gains, equal power split,
    every cross gain equal to beta, all cells sharing pilots."""
    if beta <= 0:
        return math.inf
    return 2.0 * K * (1.0 + 1.0 / ((L - 1) * beta**2))


def hybrid_tp_sinr(inputs: AnalyticInputs, partition: Partition, j: int, m: int) -> float:
    """Large-M SINR of a TP member of a hybrid system.

    Only same-pilot users that stayed in the TP set contaminate; silent SP
    users are invisible to the training phase.
    """
    num = inputs.beta[j, j, m] ** 2
    den = 0.0
    for l in copilot_cells(inputs.L, inputs.r, j):
        if l != j and (l, m) in partition.u_tp:
            den += inputs.beta[j, l, m] ** 2
    if den == 0.0:
        return math.inf
    return num / den


def hybrid_sp_sinr(inputs: AnalyticInputs, partition: Partition, j: int, m: int) -> float:
    """Large-M SINR of an SP member of a hybrid system.

    The superimposed segment spans C_u - tau symbols, so the residual
    data-interference floor sums the effective squared gains of the SP set
    scaled by 1 / ((C_u - tau) * pilot share).
    """
    t_rho_d2 = inputs.rho_d[j, m] ** 2
    t_rho_p2 = inputs.rho_p[j, m] ** 2
    num = inputs.beta[j, j, m] ** 2
    den = 0.0
    for (l, k) in partition.u_sp:
        den += (inputs.rho_d[l, k] ** 2) * inputs.q[l, k] * inputs.beta[j, l, k] ** 2
    den /= (inputs.C_u - inputs.tau) * t_rho_p2 * t_rho_d2
    if den == 0.0:
        return math.inf
    return num / den


def hybrid_rates(
    inputs: AnalyticInputs,
    partition: Partition,
    j: int,
    cap_order: int | None = None,
) -> dict:
    """Per-user (sinr, rate) for every cell-j member of the partition.

    Both branches carry the (C_u - tau) / C efficiency: TP users spend the
    training phase on pilots, SP users on radio silence.
    """
    weight = (inputs.C_u - inputs.tau) / inputs.C
    out = {}
    for k in range(inputs.K):
        user = (j, k)
        if user in partition.u_tp:
            sinr = hybrid_tp_sinr(inputs, partition, j, k)
        elif user in partition.u_sp:
            sinr = hybrid_sp_sinr(inputs, partition, j, k)
        else:
            continue
        out[user] = (sinr, weight * _spectral_efficiency(sinr, cap_order))
    return out


def cell_sum_rate(rates: dict) -> float:
    return float(sum(rate for _sinr, rate in rates.values()))
