"""End-to-end auction pipelines and revenue bound evaluators.

Every pipeline follows the same two-step recipe: solve for a per-profile
allocation that optimizes some objective (surplus, pseudo-surplus, virtual
surplus, or the virtual-value heuristic lower bound), then support that
allocation with the matching payment formula.  Greedy and closed-form
variants of the concave objectives are interchangeable up to the greedy
increment.

Reports carry both the optimized objective and the realized revenue; the two
are close in practice but not the same quantity, so they are never conflated.
Irregular instances are not aborted: the pipeline emits a warning, payments
are clamped where the formula would go negative, and the verifier is the
place where any resulting IC/IR failures show up.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import payments as pay
from .alloc import (
    GreedyConfig,
    closed_form_alloc_batch,
    eqp_solver_batch,
    ex_ante_closed_form,
    pointwise_max_batch,
)
from .core import (
    DEFAULT_TOL,
    AuctionInstance,
    ExPostAllocation,
    InterimAllocation,
    InterimPaymentRule,
    MechanismReport,
    ObjectiveKind,
    RobustPaymentRule,
    values_matrix,
)
from .virtual import is_regular, virtual_values, virtual_values_matrix


@dataclass(frozen=True, eq=False)
class Mechanism:
    """Bundle of allocation and payment rules plus their provenance.

    ``perceived`` records the utility convention the payments were built
    for: "quadratic" (q = p^2) for the convex-payment pipelines, "linear"
    (q = p) for the classic surplus and virtual-surplus auctions.
    """

    allocation: ExPostAllocation | None
    robust_payments: RobustPaymentRule | None = None
    interim_allocation: InterimAllocation | None = None
    interim_payments: InterimPaymentRule | None = None
    provenance: str = ""
    perceived: str = "quadratic"

    def __post_init__(self):
        if self.perceived not in ("quadratic", "linear"):
            raise ValueError("perceived must be 'quadratic' or 'linear'")


def _allocate(
    instance: AuctionInstance, scores: np.ndarray, engine: str, config: GreedyConfig
) -> ExPostAllocation:
    """Run one allocation engine per profile over a (n, *shape) score tensor."""
    n = instance.n
    flat = scores.reshape(n, -1).T
    if engine == "pointwise":
        rows = pointwise_max_batch(flat)
    elif engine == "greedy":
        rows = eqp_solver_batch(flat, config)
    elif engine == "closed_form":
        rows = closed_form_alloc_batch(flat, 0.5)
    else:
        raise ValueError(f"unknown allocation engine {engine!r}")
    return ExPostAllocation(rows.T.reshape(n, *instance.shape))


def _quadratic_payments(alloc, instance, warnings):
    """Robust sqrt payments, clamped (with a warning) if non-monotone."""
    if alloc.is_monotone():
        return pay.robust_payment(alloc, instance), warnings
    q = np.empty_like(alloc.table)
    for i in range(instance.n):
        q[i] = pay._perceived_one_bidder(alloc.table[i], instance, i)
    warnings = warnings + (
        "allocation is not monotone; payments clamped, IC/IR not guaranteed",
    )
    return RobustPaymentRule(np.sqrt(np.maximum(q, 0.0))), warnings


def _linear_payments(alloc, instance, warnings):
    """Linear-q Myerson payments p = q, clamped (with a warning) if non-monotone."""
    if alloc.is_monotone():
        return RobustPaymentRule(pay.perceived_payment(alloc, instance)), warnings
    q = np.empty_like(alloc.table)
    for i in range(instance.n):
        q[i] = pay._perceived_one_bidder(alloc.table[i], instance, i)
    warnings = warnings + (
        "allocation is not monotone; payments clamped, IC/IR not guaranteed",
    )
    return RobustPaymentRule(np.maximum(q, 0.0)), warnings


def _regularity_warnings(instance) -> tuple[str, ...]:
    flags = is_regular(virtual_values(instance))
    bad = [str(i) for i, ok in enumerate(flags) if not ok]
    if bad:
        return ("irregular distribution for bidder(s) " + ", ".join(bad),)
    return ()


def surplus_maximizer(instance: AuctionInstance) -> tuple[Mechanism, MechanismReport]:
    """Classic surplus-maximizing auction: pointwise winner, linear payments."""
    start = time.perf_counter()
    vals = values_matrix(instance)
    alloc = _allocate(instance, vals, "pointwise", GreedyConfig())
    rule, warnings = _linear_payments(alloc, instance, ())
    surplus = float((vals * alloc.table * instance.joint_pmf).sum())
    revenue = pay.expected_revenue(rule, instance)
    mech = Mechanism(alloc, robust_payments=rule, provenance="surplus_maximizer",
                     perceived="linear")
    report = MechanismReport(surplus, ObjectiveKind.SURPLUS, revenue=revenue,
                             runtime_s=time.perf_counter() - start, warnings=warnings)
    return mech, report


def pseudo_surplus_maximizer(
    instance: AuctionInstance,
    method: str = "closed_form",
    config: GreedyConfig = GreedyConfig(),
) -> tuple[Mechanism, MechanismReport]:
    """Maximize E[sum sqrt(v_i x_i)] per profile, then attach sqrt payments."""
    if method not in ("greedy", "closed_form"):
        raise ValueError("method must be 'greedy' or 'closed_form'")
    start = time.perf_counter()
    vals = values_matrix(instance)
    alloc = _allocate(instance, vals, method, config)
    rule, warnings = _quadratic_payments(alloc, instance, ())
    pseudo = float((np.sqrt(vals * alloc.table) * instance.joint_pmf).sum())
    revenue = pay.expected_revenue(rule, instance)
    mech = Mechanism(alloc, robust_payments=rule,
                     provenance=f"pseudo_surplus_maximizer[{method}]")
    report = MechanismReport(pseudo, ObjectiveKind.PSEUDO_SURPLUS, revenue=revenue,
                             runtime_s=time.perf_counter() - start, warnings=warnings)
    return mech, report


def virtual_surplus_maximizer(
    instance: AuctionInstance,
) -> tuple[Mechanism, MechanismReport]:
    """Pointwise virtual-value winner with linear payments (reserve-price auction).

    For linear perceived payments, expected revenue equals expected virtual
    surplus, so the report's objective is the realized revenue itself.
    """
    start = time.perf_counter()
    warnings = _regularity_warnings(instance)
    phi = virtual_values_matrix(instance)
    alloc = _allocate(instance, phi, "pointwise", GreedyConfig())
    rule, warnings = _linear_payments(alloc, instance, warnings)
    revenue = pay.expected_revenue(rule, instance)
    mech = Mechanism(alloc, robust_payments=rule,
                     provenance="virtual_surplus_maximizer", perceived="linear")
    report = MechanismReport(revenue, ObjectiveKind.REVENUE_ROBUST, revenue=revenue,
                             runtime_s=time.perf_counter() - start, warnings=warnings)
    return mech, report


def heuristic_lb_rrm(
    instance: AuctionInstance,
    method: str = "closed_form",
    config: GreedyConfig = GreedyConfig(),
) -> tuple[Mechanism, MechanismReport]:
    """Robust heuristic: allocate on phi^+ per profile, attach sqrt payments.

    The report's objective is the heuristic lower bound E[sum sqrt(phi^+ x)];
    the realized revenue of the supported auction rides alongside.
    """
    if method not in ("greedy", "closed_form"):
        raise ValueError("method must be 'greedy' or 'closed_form'")
    start = time.perf_counter()
    warnings = _regularity_warnings(instance)
    phi = virtual_values_matrix(instance)
    alloc = _allocate(instance, np.maximum(phi, 0.0), method, config)
    rule, warnings = _quadratic_payments(alloc, instance, warnings)
    lb_value = float(
        (np.sqrt(np.maximum(phi, 0.0) * alloc.table) * instance.joint_pmf).sum()
    )
    revenue = pay.expected_revenue(rule, instance)
    mech = Mechanism(alloc, robust_payments=rule,
                     provenance=f"heuristic_lb_rrm[{method}]")
    report = MechanismReport(lb_value, ObjectiveKind.HEURISTIC_LOWER_BOUND,
                             revenue=revenue,
                             runtime_s=time.perf_counter() - start, warnings=warnings)
    return mech, report


def heuristic_brm(
    instance: AuctionInstance,
    method: str = "closed_form",
    config: GreedyConfig = GreedyConfig(),
) -> tuple[Mechanism, MechanismReport]:
    """Bayesian heuristic: same phi^+ allocation, collapsed to interim payments."""
    if method not in ("greedy", "closed_form"):
        raise ValueError("method must be 'greedy' or 'closed_form'")
    start = time.perf_counter()
    warnings = _regularity_warnings(instance)
    phi = virtual_values_matrix(instance)
    alloc = _allocate(instance, np.maximum(phi, 0.0), method, config)
    interim = pay.interim_collapse(alloc, instance)
    if interim.is_monotone():
        h = pay.bayesian_payment(interim, instance)
    else:
        qhat = pay.interim_perceived(interim, instance)
        h = InterimPaymentRule(tuple(np.sqrt(np.maximum(q, 0.0)) for q in qhat))
        warnings = warnings + (
            "interim allocation is not monotone; payments clamped, BIC/BIR not guaranteed",
        )
    revenue = pay.expected_revenue(h, instance)
    mech = Mechanism(alloc, interim_allocation=interim, interim_payments=h,
                     provenance=f"heuristic_brm[{method}]")
    report = MechanismReport(revenue, ObjectiveKind.REVENUE_BAYESIAN, revenue=revenue,
                             runtime_s=time.perf_counter() - start, warnings=warnings)
    return mech, report


def ex_ante_relaxation(
    instance: AuctionInstance, truncate: bool = False
) -> tuple[Mechanism, MechanismReport]:
    """Closed-form proportional-to-phi^+ interim rule with Bayesian payments.

    The untruncated rule saturates the ex-ante constraint and may assign
    interim shares above 1; the truncated variant caps them at 1 before
    computing payments, without re-normalizing.
    """
    start = time.perf_counter()
    warnings = _regularity_warnings(instance)
    solution = ex_ante_closed_form(instance, virtual_values(instance), truncate)
    h = pay.bayesian_payment(solution.interim, instance)
    revenue = pay.expected_revenue(h, instance)
    name = "ex_ante_relaxation" + ("_truncated" if truncate else "")
    mech = Mechanism(None, interim_allocation=solution.interim, interim_payments=h,
                     provenance=name)
    report = MechanismReport(revenue, ObjectiveKind.EX_ANTE_BOUND, revenue=revenue,
                             runtime_s=time.perf_counter() - start, warnings=warnings)
    return mech, report


@dataclass(frozen=True)
class BoundReport:
    """Objective values and bound-ordering checks for one mechanism."""

    revenue: float
    robust_pseudo_surplus: float
    bayesian_pseudo_surplus: float
    virtual_sqrt_upper: float
    heuristic_lb_value: float
    per_bidder_revenue: tuple[float, ...]
    per_bidder_virtual_sqrt: tuple[float, ...]
    failures: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.failures


def bound_report(
    instance: AuctionInstance, mech: Mechanism, tol: float = DEFAULT_TOL
) -> BoundReport:
    """Evaluate the pseudo-surplus, sqrt-of-virtual-surplus, and heuristic bounds.

    Ordering violations are reported as failures rather than raised: a broken
    ordering signals a broken mechanism, which is a result, not a crash.
    """
    if mech.allocation is None:
        raise ValueError("bound report needs an ex-post allocation")
    if mech.robust_payments is None and mech.interim_payments is None:
        raise ValueError("bound report needs a mechanism with payments")
    if mech.perceived != "quadratic":
        raise ValueError("bounds are defined for quadratic perceived payments")

    joint = instance.joint_pmf
    table = mech.allocation.table
    vals = values_matrix(instance)
    phi = virtual_values_matrix(instance)

    robust_ps = float((np.sqrt(vals * table) * joint).sum())
    if mech.interim_allocation is not None:
        interim = mech.interim_allocation
    else:
        interim = pay.interim_collapse(mech.allocation, instance)
    bayes_ps = sum(
        float(instance.pmf(i) @ np.sqrt(instance.values(i) * interim.tables[i]))
        for i in range(instance.n)
    )
    lb_value = float((np.sqrt(np.maximum(phi, 0.0) * table) * joint).sum())

    if mech.robust_payments is not None:
        per_bidder_rev = tuple(
            float((mech.robust_payments.table[i] * joint).sum())
            for i in range(instance.n)
        )
    else:
        per_bidder_rev = tuple(
            float(instance.pmf(i) @ mech.interim_payments.tables[i])
            for i in range(instance.n)
        )
    revenue = float(sum(per_bidder_rev))
    per_bidder_sqrt = tuple(
        float(np.sqrt(max(0.0, (phi[i] * table[i] * joint).sum())))
        for i in range(instance.n)
    )

    failures = []
    if revenue > robust_ps + tol:
        failures.append("revenue exceeds robust pseudo-surplus")
    if robust_ps > bayes_ps + tol:
        failures.append("robust pseudo-surplus exceeds Bayesian pseudo-surplus")
    for i in range(instance.n):
        if per_bidder_rev[i] > per_bidder_sqrt[i] + tol:
            failures.append(
                f"bidder {i} expected payment exceeds sqrt of expected virtual surplus"
            )
    return BoundReport(
        revenue=revenue,
        robust_pseudo_surplus=robust_ps,
        bayesian_pseudo_surplus=bayes_ps,
        virtual_sqrt_upper=float(sum(per_bidder_sqrt)),
        heuristic_lb_value=lb_value,
        per_bidder_revenue=per_bidder_rev,
        per_bidder_virtual_sqrt=per_bidder_sqrt,
        failures=tuple(failures),
    )
