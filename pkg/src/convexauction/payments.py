"""Myerson payment formulas adapted to quadratic perceived payments.

Given a monotone ex-post allocation x, the perceived payment that makes the
mechanism IC and IR is

    q_i(z_l, v_-i) = z_l x_i(z_l, v_-i) - sum_{j<l} (z_{j+1} - z_j) x_i(z_j, v_-i),

with the empty-sum convention at the lowest type.  With the fixed convention
q(p) = p^2, the actual robust payment is p_i = sqrt(q_i), and the Bayesian
per-type payment h_i is the square root of the same expression evaluated on
the interim allocation.  The general invertible-convex-cost variant (replace
the square/square-root pair by C_i and its inverse) is out of scope here.

Radicands in [-1e-9, 0) are clamped to zero; anything more negative means
the input allocation was not monotone and is a hard error.
"""

from __future__ import annotations

import numpy as np

from .core import (
    AuctionInstance,
    ExPostAllocation,
    InterimAllocation,
    InterimPaymentRule,
    RobustPaymentRule,
)

_CLAMP = 1e-9


def perceived_payment(
    alloc: ExPostAllocation, instance: AuctionInstance
) -> np.ndarray:
    """Perceived payments q_i(v) for a monotone allocation, shape (n, *shape).

    Raises ValueError when the allocation is not monotone; the payment
    characterization does not define payments for non-monotone rules.
    """
    if alloc.table.shape != (instance.n, *instance.shape):
        raise ValueError("allocation table does not match instance dimensions")
    if not alloc.is_monotone():
        raise ValueError("perceived payments require a monotone allocation")
    q = np.empty_like(alloc.table)
    for i in range(instance.n):
        q[i] = _perceived_one_bidder(alloc.table[i], instance, i)
    return q


def _perceived_one_bidder(x_i: np.ndarray, instance: AuctionInstance, i: int) -> np.ndarray:
    z = instance.values(i)
    gaps = instance.space(i).gaps
    view = [1] * instance.n
    view[i] = instance.shape[i]
    weighted = gaps.reshape(view) * x_i
    # exclusive prefix sum of (z_{j+1} - z_j) x(z_j) along the own-type axis
    prefix = np.cumsum(weighted, axis=i) - weighted
    return z.reshape(view) * x_i - prefix


def _sqrt_payments(q: np.ndarray) -> np.ndarray:
    if np.any(q < -_CLAMP):
        raise ValueError(
            "negative perceived payment: allocation is non-monotone or malformed"
        )
    return np.sqrt(np.maximum(q, 0.0))


def robust_payment(
    alloc: ExPostAllocation, instance: AuctionInstance
) -> RobustPaymentRule:
    """Actual payments p_i(v) = sqrt(q_i(v)) under quadratic perceived payments."""
    return RobustPaymentRule(_sqrt_payments(perceived_payment(alloc, instance)))


def interim_collapse(
    alloc: ExPostAllocation, instance: AuctionInstance
) -> InterimAllocation:
    """Expected allocation over the other bidders' types, per bidder and type."""
    if alloc.table.shape != (instance.n, *instance.shape):
        raise ValueError("allocation table does not match instance dimensions")
    out = []
    for i in range(instance.n):
        own_first = np.moveaxis(alloc.table[i], i, 0)
        weights = instance.context_pmf(i).ravel()
        out.append(own_first.reshape(instance.shape[i], -1) @ weights)
    return InterimAllocation(tuple(out))


def interim_perceived(
    interim: InterimAllocation, instance: AuctionInstance
) -> tuple[np.ndarray, ...]:
    """Interim perceived payments q_hat_i(v_i) from an interim allocation."""
    out = []
    for i in range(instance.n):
        z = instance.values(i)
        gaps = instance.space(i).gaps
        weighted = gaps * interim.tables[i]
        prefix = np.cumsum(weighted) - weighted
        out.append(z * interim.tables[i] - prefix)
    return tuple(out)


def bayesian_payment(
    interim: InterimAllocation, instance: AuctionInstance
) -> InterimPaymentRule:
    """Per-type payments h_i(v_i) with h_i^2 equal to the interim perceived payment."""
    if interim.n != instance.n:
        raise ValueError("interim allocation does not match instance dimensions")
    qhat = interim_perceived(interim, instance)
    return InterimPaymentRule(tuple(_sqrt_payments(q) for q in qhat))


def expected_revenue(
    rule: RobustPaymentRule | InterimPaymentRule, instance: AuctionInstance
) -> float:
    """Total expected payments to the auctioneer."""
    if isinstance(rule, RobustPaymentRule):
        if rule.table.shape != (instance.n, *instance.shape):
            raise ValueError("payment table does not match instance dimensions")
        return float((rule.table * instance.joint_pmf).sum())
    total = 0.0
    for i in range(instance.n):
        if rule.tables[i].shape != (instance.shape[i],):
            raise ValueError("payment table does not match instance dimensions")
        total += float(instance.pmf(i) @ rule.tables[i])
    return total
