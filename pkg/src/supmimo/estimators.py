"""Non-iterative channel estimation and matched-filter detection.

All estimators run at a single BS on its received block.  The TP estimator
correlates the pilot-phase slice with the user's pilot; under pilot reuse
the result is the exact sum of the co-pilot channels plus scaled noise.
The SP estimator correlates the whole block with the user's dedicated
column, treating everyone's data as noise.  Detection is a conjugate
matched filter followed by the nearest-point decision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hybrid import Partition
from .sysmodel import PowerAllocation
from .waveform import PilotBook, decide


@dataclass(frozen=True)
class ChannelEstimate:
    h_hat: np.ndarray
    scheme: str
    user: tuple

    @property
    def M(self) -> int:
        return self.h_hat.shape[0]


@dataclass(frozen=True)
class DetectionResult:
    x_tilde: np.ndarray
    x_hat: np.ndarray


def tp_ls_estimate(
    Y_pilot: np.ndarray,
    pilot_book: PilotBook,
    user: tuple,
    q: float,
) -> ChannelEstimate:
    """Least-squares estimate from the M x tau pilot-phase slice.

    h_hat = Y_p conj(phi_b) / (tau sqrt(q)) with phi_b the user's pilot.
    """
    cell, k = user
    tau = pilot_book.tau
    if Y_pilot.shape[1] != tau:
        raise ValueError(f"pilot slice has {Y_pilot.shape[1]} columns, expected {tau}")
    b = int(pilot_book.tp_assignment[cell, k])
    if not 0 <= b < tau:
        raise KeyError(f"pilot index {b} outside the {tau}-column book")
    phi = pilot_book.tp_matrix[:, b]
    h_hat = (Y_pilot @ np.conj(phi)) / (tau * np.sqrt(q))
    return ChannelEstimate(h_hat=h_hat, scheme="tp", user=(cell, k))


def sp_ls_estimate(
    Y: np.ndarray,
    pilot: np.ndarray,
    rho_p: float,
) -> ChannelEstimate:
    """Least-squares estimate against one superimposed pilot column.

    h_hat = Y conj(p) / (len(p) * rho_p); the slice Y must span exactly the
    symbols carrying this pilot (the whole block for pure SP, the trailing
    C_u - tau columns for hybrid SP users).
    """
    if rho_p == 0:
        raise ZeroDivisionError("rho_p must be nonzero for an SP estimate")
    n = pilot.shape[0]
    if Y.shape[1] != n:
        raise ValueError(f"observation has {Y.shape[1]} columns, pilot has {n}")
    h_hat = (Y @ np.conj(pilot)) / (n * rho_p)
    return ChannelEstimate(h_hat=h_hat, scheme="sp", user=(-1, -1))


def mf_detect_sp(
    Y: np.ndarray,
    estimate: ChannelEstimate,
    rho_d: float,
    rho_p: float,
    beta_home: float,
    pilot: np.ndarray,
    P: int,
) -> DetectionResult:
    """Matched filter for a superimposed-pilot user.

    Removes the user's own pilot via the estimate, correlates with it, and
    normalizes so the desired symbol appears at unit gain:
    x_tilde^T = h_hat^H (Y - rho_p h_hat p^T) / (M rho_d beta_home).
    """
    if beta_home <= 0:
        raise ValueError("beta_home must be positive")
    if rho_d <= 0:
        raise ValueError("rho_d must be positive")
    x_tilde = _mf_sp_output(Y, estimate.h_hat, pilot, rho_d, rho_p, beta_home)
    return DetectionResult(x_tilde=x_tilde, x_hat=decide(x_tilde, P))


def _mf_sp_output(
    Y: np.ndarray,
    h_hat: np.ndarray,
    pilot: np.ndarray,
    rho_d: float,
    rho_p: float,
    beta_home: float,
) -> np.ndarray:
    M = h_hat.shape[0]
    corr = np.conj(h_hat) @ Y
    pilot_part = rho_p * float(np.real(np.vdot(h_hat, h_hat))) * pilot
    return (corr - pilot_part) / (M * rho_d * beta_home)


def mf_detect_tp(
    Y_data: np.ndarray,
    estimate: ChannelEstimate,
    beta_home: float,
    q: float,
    P: int,
) -> DetectionResult:
    """Matched filter over the data phase of a time-multiplexed user.

    x_tilde^T = h_hat^H Y_d / (M sqrt(q) beta_home).
    """
    if beta_home <= 0:
        raise ValueError("beta_home must be positive")
    M = estimate.M
    x_tilde = (np.conj(estimate.h_hat) @ Y_data) / (M * np.sqrt(q) * beta_home)
    return DetectionResult(x_tilde=x_tilde, x_hat=decide(x_tilde, P))


def hybrid_estimates(
    Y: np.ndarray,
    pilot_book: PilotBook,
    partition: Partition,
    powers: PowerAllocation,
    cell: int,
) -> dict:
    """Channel estimates for every user of `cell` under the hybrid frame.

    TP members use the tau-length pilot slice at unit pilot power; SP
    members use the trailing C_u - tau columns with their own pilot
    amplitude.  Raises KeyError for a user in neither set.
    """
    tau = pilot_book.tau
    K = powers.q.shape[1]
    out = {}
    for k in range(K):
        user = (cell, k)
        if user in partition.u_tp:
            est = tp_ls_estimate(Y[:, :tau], pilot_book, user, 1.0)
            out[user] = ChannelEstimate(h_hat=est.h_hat, scheme="hybrid-tp", user=user)
        elif user in partition.u_sp:
            pilot = pilot_book.sp_column(cell, k)
            est = sp_ls_estimate(Y[:, tau:], pilot, float(powers.rho_p[cell, k]))
            out[user] = ChannelEstimate(h_hat=est.h_hat, scheme="hybrid-sp", user=user)
        else:
            raise KeyError(f"user {user} is in neither partition set")
    return out
