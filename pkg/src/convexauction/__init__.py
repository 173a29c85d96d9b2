"""Optimal auction design with convex (quadratic) perceived payments."""

from .alloc import (
    ExAnteSolution,
    GreedyConfig,
    closed_form_alloc,
    eqp_solver,
    ex_ante_closed_form,
    pointwise_max,
)
from .core import (
    AuctionInstance,
    DiscreteDistribution,
    ExPostAllocation,
    InterimAllocation,
    InterimPaymentRule,
    MechanismReport,
    ObjectiveKind,
    RobustPaymentRule,
    TypeProfile,
    TypeSpace,
    make_binomial,
    make_categorical,
    make_uniform,
    profiles,
    symmetric_instance,
)
from .discretization import DiscretizationReport, discretization_gap, round_allocation
from .mechanisms import (
    BoundReport,
    Mechanism,
    bound_report,
    ex_ante_relaxation,
    heuristic_brm,
    heuristic_lb_rrm,
    pseudo_surplus_maximizer,
    surplus_maximizer,
    virtual_surplus_maximizer,
)
from .oracle import (
    ConstraintCheck,
    OracleConfig,
    OracleRefusal,
    exact_brm,
    exact_rrm,
    export_program,
    verify,
)
from .payments import (
    bayesian_payment,
    expected_revenue,
    interim_collapse,
    perceived_payment,
    robust_payment,
)
from .virtual import VirtualValueTable, is_regular, virtual_values

__all__ = [
    "AuctionInstance",
    "BoundReport",
    "ConstraintCheck",
    "DiscreteDistribution",
    "DiscretizationReport",
    "ExAnteSolution",
    "ExPostAllocation",
    "GreedyConfig",
    "InterimAllocation",
    "InterimPaymentRule",
    "Mechanism",
    "MechanismReport",
    "ObjectiveKind",
    "OracleConfig",
    "OracleRefusal",
    "RobustPaymentRule",
    "TypeProfile",
    "TypeSpace",
    "VirtualValueTable",
    "bayesian_payment",
    "bound_report",
    "closed_form_alloc",
    "eqp_solver",
    "ex_ante_closed_form",
    "ex_ante_relaxation",
    "exact_brm",
    "exact_rrm",
    "expected_revenue",
    "export_program",
    "heuristic_brm",
    "heuristic_lb_rrm",
    "interim_collapse",
    "is_regular",
    "make_binomial",
    "make_categorical",
    "make_uniform",
    "perceived_payment",
    "pointwise_max",
    "profiles",
    "pseudo_surplus_maximizer",
    "robust_payment",
    "round_allocation",
    "surplus_maximizer",
    "symmetric_instance",
    "verify",
    "virtual_surplus_maximizer",
    "virtual_values",
]
