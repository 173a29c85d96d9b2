"""Allocation engines: pointwise winner selection, equi-marginal greedy,
closed-form proportional shares, and the ex-ante closed form.

All engines treat a score of zero as "not competing": only strictly positive
scores can receive supply, and when no score is positive the allocation is
identically zero.  The greedy and closed-form engines solve the same concave
program (maximize sum of c_i^alpha x_i^alpha on the simplex); the greedy one
does it by repeatedly feeding an increment epsilon to whichever bidders have
the largest marginal gain, splitting ties evenly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AuctionInstance, InterimAllocation
from .virtual import VirtualValueTable

TIE_TOL = 1e-12


@dataclass(frozen=True)
class GreedyConfig:
    """Increment epsilon for the greedy solver; alpha for the power objective.

    1/epsilon must be an integer so the increment grid exactly exhausts the
    unit supply and the greedy loop terminates with sum(x) == 1.
    """

    epsilon: float = 1e-3
    alpha: float = 0.5

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")
        steps = 1.0 / self.epsilon
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("1/epsilon must be an integer")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie strictly in (0, 1)")

    @property
    def steps(self) -> int:
        return round(1.0 / self.epsilon)


@dataclass(frozen=True, eq=False)
class ExAnteSolution:
    """Interim allocation proportional to phi^+, plus its normalizer."""

    interim: InterimAllocation
    normalizer: float
    truncated: bool


def pointwise_max(c) -> np.ndarray:
    """All-or-split allocation: 1/|M| to each maximizer if any score > 0."""
    return pointwise_max_batch(np.asarray(c, dtype=np.float64)[None, :])[0]


def pointwise_max_batch(scores: np.ndarray) -> np.ndarray:
    """Row-wise pointwise maximization over a (profiles x bidders) matrix."""
    scores = np.asarray(scores, dtype=np.float64)
    out = np.zeros_like(scores)
    top = scores.max(axis=1, keepdims=True)
    winners = (scores >= top - TIE_TOL) & (scores > 0)
    counts = winners.sum(axis=1, keepdims=True)
    np.divide(winners, counts, out=out, where=counts > 0)
    return out


def eqp_solver(c, config: GreedyConfig = GreedyConfig()) -> np.ndarray:
    """Greedy equi-marginal allocation for the square-root objective.

    Repeatedly adds epsilon/|M| to the bidders tied (within 1e-12) for the
    largest marginal gain sqrt(c_i^+) * (sqrt(x_i + eps) - sqrt(x_i)) until
    supply is exhausted; all zeros when no score is positive.
    """
    return eqp_solver_batch(np.asarray(c, dtype=np.float64)[None, :], config)[0]


def eqp_solver_batch(scores: np.ndarray, config: GreedyConfig = GreedyConfig()) -> np.ndarray:
    """Row-wise greedy equi-marginal allocation, vectorized over profiles."""
    scores = np.asarray(scores, dtype=np.float64)
    eps = config.epsilon
    sqrt_plus = np.sqrt(np.maximum(scores, 0.0))
    active = scores > 0
    x = np.zeros_like(scores)
    live = active.any(axis=1)
    if not live.any():
        return x
    for _ in range(config.steps):
        gain = sqrt_plus * (np.sqrt(x + eps) - np.sqrt(x))
        gain[~active] = -np.inf
        top = gain.max(axis=1, keepdims=True)
        members = active & (gain >= top - TIE_TOL)
        counts = members.sum(axis=1, keepdims=True)
        step = np.where(members & live[:, None], eps / np.maximum(counts, 1), 0.0)
        x += step
    return x


def closed_form_alloc(c, alpha: float = 0.5) -> np.ndarray:
    """Optimal shares (c_j^+)^(a/(1-a)) / sum_i (c_i^+)^(a/(1-a)); zeros if no c_i > 0."""
    return closed_form_alloc_batch(np.asarray(c, dtype=np.float64)[None, :], alpha)[0]


def closed_form_alloc_batch(scores: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """Row-wise proportional closed form over a (profiles x bidders) matrix."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie strictly in (0, 1)")
    scores = np.asarray(scores, dtype=np.float64)
    powered = np.maximum(scores, 0.0) ** (alpha / (1.0 - alpha))
    totals = powered.sum(axis=1, keepdims=True)
    out = np.zeros_like(scores)
    np.divide(powered, totals, out=out, where=totals > 0)
    return out


def ex_ante_closed_form(
    instance: AuctionInstance, table: VirtualValueTable, truncate: bool
) -> ExAnteSolution:
    """Interim allocation proportional to phi^+, normalized by sum_i E[phi_i^+].

    The untruncated solution saturates the ex-ante supply constraint exactly;
    entries may exceed 1.  With ``truncate`` they are capped at 1 afterwards,
    with no re-normalization (re-normalizing would change the bound).
    """
    expectations = [
        float(instance.pmf(i) @ table.phi_plus[i]) for i in range(instance.n)
    ]
    normalizer = float(sum(expectations))
    if normalizer <= 0:
        interim = tuple(np.zeros(instance.shape[i]) for i in range(instance.n))
        return ExAnteSolution(InterimAllocation(interim), 0.0, truncate)
    interim = [table.phi_plus[i] / normalizer for i in range(instance.n)]
    if truncate:
        interim = [np.minimum(t, 1.0) for t in interim]
    return ExAnteSolution(InterimAllocation(tuple(interim)), normalizer, truncate)
