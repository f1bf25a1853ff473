"""User partitioning between time-multiplexed and superimposed pilots.

Each user is charged the interference it injects into the rest of the
system given its pilot type: a TP user contaminates the channel estimates
of same-pilot TP users in other cells, while an SP user raises the residual
data interference floor of every SP user (itself included).  The greedy
optimizer starts all-TP and keeps moving the worst TP offender to the SP
set while the total cost does not increase; a brute-force oracle covers
small instances.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

User = tuple[int, int]


@dataclass(frozen=True)
class Partition:
    """Disjoint TP / SP user sets, keyed by (cell, user-index) tuples."""

    u_tp: frozenset
    u_sp: frozenset

    def __post_init__(self):
        object.__setattr__(self, "u_tp", frozenset(self.u_tp))
        object.__setattr__(self, "u_sp", frozenset(self.u_sp))
        overlap = self.u_tp & self.u_sp
        if overlap:
            raise ValueError(f"users in both sets: {sorted(overlap)}")

    @property
    def users(self) -> frozenset:
        return self.u_tp | self.u_sp


def all_tp(L: int, K: int) -> Partition:
    return Partition(u_tp=frozenset((l, k) for l in range(L) for k in range(K)), u_sp=frozenset())


def all_sp(L: int, K: int) -> Partition:
    return Partition(u_tp=frozenset(), u_sp=frozenset((l, k) for l in range(L) for k in range(K)))


def copilot_cells(L: int, r: int, j: int) -> list:
    """Cells whose TP pilot block coincides with cell j's (including j)."""
    return [l for l in range(L) if l % r == j % r]


def interference_tp(
    user: User,
    partition: Partition,
    beta: np.ndarray,
    r: int,
) -> float:
    """Pilot-contamination power user (j, m) injects as a TP member.

    Sums beta[l, j, m]^2 over the other cells l that reuse its pilot and
    currently field a TP user with the same pilot index.
    """
    j, m = user
    L = beta.shape[0]
    total = 0.0
    for l in copilot_cells(L, r, j):
        if l != j and (l, m) in partition.u_tp:
            total += float(beta[l, j, m]) ** 2
    return total


def interference_sp(
    user: User,
    partition: Partition,
    beta: np.ndarray,
    C_u: int,
    tau: int,
    rho_p2: float,
) -> float:
    """Residual-interference power user (j, m) injects as an SP member.

    Every SP user (l, k), itself included, absorbs beta[l, j, m]^2 through
    its channel-estimate error, scaled by the pilot share over the
    (C_u - tau)-symbol superimposed segment.
    """
    j, m = user
    if rho_p2 <= 0:
        raise ValueError("rho_p2 must be positive")
    if C_u - tau <= 0:
        raise ValueError("need C_u > tau")
    total = 0.0
    for (l, _k) in partition.u_sp:
        total += float(beta[l, j, m]) ** 2
    return total / ((C_u - tau) * rho_p2)


def total_cost(
    partition: Partition,
    beta: np.ndarray,
    r: int,
    C_u: int,
    tau: int,
    rho_p2: float,
) -> float:
    """Summed per-user interference contributions under the partition."""
    cost = 0.0
    for user in partition.u_tp:
        cost += interference_tp(user, partition, beta, r)
    for user in partition.u_sp:
        cost += interference_sp(user, partition, beta, C_u, tau, rho_p2)
    return cost


@dataclass(frozen=True)
class GreedyResult:
    partition: Partition
    cost_trace: tuple  # cost after init and after each accepted move

    @property
    def cost(self) -> float:
        return self.cost_trace[-1]


def greedy_partition(
    beta: np.ndarray,
    r: int,
    C_u: int,
    tau: int,
    rho_p2: float,
    max_sp: int | None = None,
    strict: bool = False,
) -> GreedyResult:
    """Greedy cost minimizer over TP/SP assignments.

    Starts with every user TP.  Each step moves the TP user with the largest
    TP-side contribution into the SP set and keeps the move when the total
    cost does not increase (ties accepted; set strict=True to require a
    strict decrease).  Stops on the first rejected move, when the TP set is
    empty, or when the SP set hits max_sp (defaults to C_u - tau available
    pilot columns).  Argmax ties go to the lowest (cell, user) tuple.
    """
    L, _, K = beta.shape
    if max_sp is None:
        max_sp = C_u - tau
    current = all_tp(L, K)
    cost = total_cost(current, beta, r, C_u, tau, rho_p2)
    trace = [cost]
    while current.u_tp and len(current.u_sp) < max_sp:
        candidate = max(
            sorted(current.u_tp),
            key=lambda u: interference_tp(u, current, beta, r),
        )
        moved = Partition(
            u_tp=current.u_tp - {candidate},
            u_sp=current.u_sp | {candidate},
        )
        moved_cost = total_cost(moved, beta, r, C_u, tau, rho_p2)
        accept = moved_cost < cost if strict else moved_cost <= cost
        if not accept:
            break
        current, cost = moved, moved_cost
        trace.append(cost)
    return GreedyResult(partition=current, cost_trace=tuple(trace))


def brute_force_partition(
    beta: np.ndarray,
    r: int,
    C_u: int,
    tau: int,
    rho_p2: float,
    max_sp: int | None = None,
) -> GreedyResult:
    """Exhaustive cost minimizer; only viable for at most 16 users.

    Ties are broken toward fewer SP users, then lexicographically, so the
    result is deterministic.
    """
    L, _, K = beta.shape
    users = sorted((l, k) for l in range(L) for k in range(K))
    if len(users) > 16:
        raise ValueError(f"brute force capped at 16 users, got {len(users)}")
    if max_sp is None:
        max_sp = C_u - tau
    best = None
    best_key = None
    for size in range(0, min(max_sp, len(users)) + 1):
        for sp in itertools.combinations(users, size):
            part = Partition(u_tp=frozenset(users) - set(sp), u_sp=frozenset(sp))
            cost = total_cost(part, beta, r, C_u, tau, rho_p2)
            key = (cost, size, tuple(sorted(sp)))
            if best_key is None or key < best_key:
                best, best_key = part, key
    return GreedyResult(partition=best, cost_trace=(best_key[0],))
