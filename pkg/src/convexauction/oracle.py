"""Exact desk-scale solvers, the constraint verifier, and a program exporter.

The exact solvers replace an external QCP solver with exhaustive grid search
over allocation tables whose entries are integer multiples of a grid step.
Payments never need to be searched: for the robust problem they are pinned
to the allocation by the payment characterization, and for the Bayesian
problem by its interim analogue.  The search space is cut down in three
exact (or explicitly documented) ways:

* Symmetry quotient.  When all bidders share one type distribution, a
  symmetric optimum exists in the continuous problem (the objective is
  concave and the constraint set is convex and permutation-invariant), so
  the search runs over allocation rules that depend only on a bidder's own
  type and the multiset of the others' types.  On the grid this can cost at
  most one grid step of objective value, which the reported slack covers.
* Top-of-chain closure.  A bidder's allocation at their own highest type
  enters the objective only through that type's payment term, with a
  non-negative coefficient, so given everything else it is optimal to raise
  it as far as feasibility allows.  These variables are closed per supply
  constraint instead of enumerated; when several distinct top variables
  share one supply constraint, all but one are scanned exhaustively.
* Monotonicity pruning.  Robust-problem tables must be monotone in the own
  type, so enumeration skips non-monotone prefixes.  The Bayesian problem
  constrains only the interim rule, so there this pruning is applied only
  in the single-bidder case and interim monotonicity is checked instead.

Searches whose estimated enumeration size exceeds the configured budget are
refused with an explanation rather than attempted.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from . import payments as pay
from .core import (
    DEFAULT_TOL,
    AuctionInstance,
    ExPostAllocation,
    MechanismReport,
    ObjectiveKind,
    RobustPaymentRule,
)
from .mechanisms import Mechanism
from .virtual import virtual_values

_FAST_PATH_CELLS = 4_000_000


class OracleRefusal(ValueError):
    """Raised when an instance is too large for exhaustive search."""


@dataclass(frozen=True)
class OracleConfig:
    """Grid step and size caps for the exhaustive solvers."""

    grid: float = 1e-3
    max_profile_vars: int = 64
    max_nodes: int = 1_000_000

    def __post_init__(self):
        if not 0 < self.grid <= 0.1:
            raise ValueError("grid must lie in (0, 0.1]")
        steps = 1.0 / self.grid
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("1/grid must be an integer")
        if self.max_profile_vars < 1 or self.max_nodes < 1:
            raise ValueError("caps must be positive")

    @property
    def steps(self) -> int:
        return round(1.0 / self.grid)


# ---------------------------------------------------------------------------
# Constraint verifier
# ---------------------------------------------------------------------------

CONSTRAINTS = ("ic", "ir", "bic", "bir", "xp", "xa")


@dataclass(frozen=True)
class ConstraintCheck:
    passed: bool
    worst_violation: float


def _expost_q(mech: Mechanism, instance: AuctionInstance) -> np.ndarray | None:
    """Per-profile perceived payments implied by the mechanism's payments."""
    if mech.robust_payments is not None:
        p = mech.robust_payments.table
        return p**2 if mech.perceived == "quadratic" else p
    if mech.interim_payments is not None and mech.allocation is not None:
        n, shape = instance.n, instance.shape
        q = np.empty((n, *shape))
        for i in range(n):
            view = [1] * n
            view[i] = shape[i]
            h = mech.interim_payments.tables[i]
            q[i] = np.broadcast_to(
                (h**2 if mech.perceived == "quadratic" else h).reshape(view), shape
            )
        return q
    return None


def _interim_qhat(mech: Mechanism, instance: AuctionInstance):
    if mech.interim_payments is not None:
        h = mech.interim_payments.tables
        if mech.perceived == "quadratic":
            return tuple(hi**2 for hi in h)
        return h
    q = _expost_q(mech, instance)
    out = []
    for i in range(instance.n):
        own_first = np.moveaxis(q[i], i, 0)
        out.append(own_first.reshape(instance.shape[i], -1) @ instance.context_pmf(i).ravel())
    return tuple(out)


def _interim_alloc(mech: Mechanism, instance: AuctionInstance):
    if mech.interim_allocation is not None:
        return mech.interim_allocation.tables
    return pay.interim_collapse(mech.allocation, instance).tables


def verify(
    instance: AuctionInstance,
    mech: Mechanism,
    which=None,
    tol: float = DEFAULT_TOL,
) -> dict[str, ConstraintCheck]:
    """Exhaustively evaluate the requested constraint sets.

    ``which`` is an iterable over {"ic", "ir", "bic", "bir", "xp", "xa"}.
    When omitted it defaults to the set matching the mechanism's payment
    style: IC/IR/XP for robust payments, BIC/BIR plus XP or XA for interim
    ones.  Violations are results, not errors.
    """
    if which is None:
        if mech.robust_payments is not None:
            which = ("ic", "ir", "xp")
        elif mech.allocation is not None:
            which = ("bic", "bir", "xp")
        else:
            which = ("bic", "bir", "xa")
    which = tuple(w.lower() for w in which)
    for w in which:
        if w not in CONSTRAINTS:
            raise ValueError(f"unknown constraint {w!r}")

    results: dict[str, ConstraintCheck] = {}
    for name in which:
        if name in ("ic", "ir"):
            q = _expost_q(mech, instance)
            if q is None or mech.allocation is None:
                raise ValueError(f"{name} check needs an ex-post allocation and payments")
            worst = 0.0
            for i in range(instance.n):
                z = instance.values(i)
                x = np.moveaxis(mech.allocation.table[i], i, 0).reshape(instance.shape[i], -1)
                qi = np.moveaxis(q[i], i, 0).reshape(instance.shape[i], -1)
                util = z[:, None] * x - qi
                if name == "ir":
                    worst = max(worst, float(-util.min()))
                else:
                    # deviation utility of reporting w while holding type v
                    dev = z[:, None, None] * x[None, :, :] - qi[None, :, :]
                    worst = max(worst, float((dev - util[:, None, :]).max()))
            results[name] = ConstraintCheck(worst <= tol, max(0.0, worst))
        elif name in ("bic", "bir"):
            xhat = _interim_alloc(mech, instance)
            qhat = _interim_qhat(mech, instance)
            worst = 0.0
            for i in range(instance.n):
                z = instance.values(i)
                util = z * xhat[i] - qhat[i]
                if name == "bir":
                    worst = max(worst, float(-util.min()))
                else:
                    dev = z[:, None] * xhat[i][None, :] - qhat[i][None, :]
                    worst = max(worst, float((dev - util[:, None]).max()))
            results[name] = ConstraintCheck(worst <= tol, max(0.0, worst))
        elif name == "xp":
            if mech.allocation is None:
                raise ValueError("xp check needs an ex-post allocation")
            worst = float(mech.allocation.table.sum(axis=0).max() - 1.0)
            results[name] = ConstraintCheck(worst <= tol, max(0.0, worst))
        else:  # xa
            if mech.allocation is not None:
                expected = float((mech.allocation.table * instance.joint_pmf).sum())
            else:
                xhat = _interim_alloc(mech, instance)
                expected = sum(
                    float(instance.pmf(i) @ xhat[i]) for i in range(instance.n)
                )
            worst = expected - 1.0
            results[name] = ConstraintCheck(worst <= tol, max(0.0, worst))
    return results


# ---------------------------------------------------------------------------
# Exhaustive grid search
# ---------------------------------------------------------------------------


@dataclass
class _Compiled:
    """Quotiented variable structure for one instance.

    classes: one variable per orbit of table slots; ``slots[c]`` lists the
    concrete (bidder, profile) entries sharing value c.  ``groups`` holds the
    distinct supply constraints as {class: multiplicity} maps.  ``orbits``
    carry the chain structure used by the objective: one entry per
    representative bidder with its per-context chains of class ids.
    """

    n: int
    shape: tuple[int, ...]
    symmetric: bool
    slots: list[list[tuple[int, tuple[int, ...]]]]
    own_idx: list[int]
    prev: list[int | None]
    top: list[bool]
    groups: list[dict[int, int]]
    orbits: list[tuple[int, int, list[tuple[float, tuple[int, ...]]]]]
    interiors: list[int]


def _compile(instance: AuctionInstance) -> _Compiled:
    n, shape = instance.n, instance.shape
    symmetric = instance.is_symmetric() and n > 1
    key_to_id: dict = {}
    keys: list = []
    slots: list[list] = []

    def cid(i: int, profile: tuple[int, ...]) -> int:
        own = profile[i]
        others = profile[:i] + profile[i + 1 :]
        key = (own, tuple(sorted(others))) if symmetric else (i, own, others)
        j = key_to_id.get(key)
        if j is None:
            j = len(keys)
            key_to_id[key] = j
            keys.append(key)
            slots.append([])
        return j

    group_sigs: dict = {}
    for prof in itertools.product(*(range(k) for k in shape)):
        counter: dict[int, int] = {}
        for i in range(n):
            c = cid(i, prof)
            slots[c].append((i, prof))
            counter[c] = counter.get(c, 0) + 1
        sig = tuple(sorted(counter.items()))
        group_sigs.setdefault(sig, None)
    groups = [dict(sig) for sig in group_sigs]

    own_idx, prev, top = [], [], []
    for key in keys:
        if symmetric:
            own, ctx = key
            rep = 0
            prev_key = (own - 1, ctx)
        else:
            rep, own, ctx = key
            prev_key = (rep, own - 1, ctx)
        own_idx.append(own)
        top.append(own == shape[rep] - 1)
        prev.append(key_to_id[prev_key] if own > 0 else None)

    reps = [0] if symmetric else list(range(n))
    orbit_mult = n if symmetric else 1
    orbits = []
    for i in reps:
        agg: dict = {}
        order: list = []
        other_ranges = [range(shape[j]) for j in range(n) if j != i]
        pmfs = [instance.pmf(j) for j in range(n) if j != i]
        for ctx in itertools.product(*other_ranges):
            prob = math.prod(pmfs[a][k] for a, k in enumerate(ctx))
            ids = tuple(
                cid(i, ctx[:i] + (own,) + ctx[i:]) for own in range(shape[i])
            )
            ck = tuple(sorted(ctx)) if symmetric else ctx
            if ck in agg:
                agg[ck][0] += prob
            else:
                agg[ck] = [prob, ids]
                order.append(ck)
        orbits.append((orbit_mult, i, [(agg[ck][0], agg[ck][1]) for ck in order]))

    interiors, seen = [], set()
    for _, _, chains in orbits:
        for _, ids in chains:
            for c in ids[:-1]:
                if c not in seen:
                    seen.add(c)
                    interiors.append(c)
    return _Compiled(
        n=n, shape=shape, symmetric=symmetric, slots=slots, own_idx=own_idx,
        prev=prev, top=top, groups=groups, orbits=orbits, interiors=interiors,
    )


def _objective(comp: _Compiled, instance: AuctionInstance, vals, g: float, mode: str):
    """Search objective for class values (ints or int ndarrays) on grid g.

    Returns (value, feasible) where ``feasible`` carries the interim
    monotonicity mask for the Bayesian mode (True otherwise).
    """
    total = 0.0
    feasible = True
    for mult, i, chains in comp.orbits:
        z = instance.values(i)
        f = instance.pmf(i)
        gaps = instance.space(i).gaps
        if mode == "brm":
            k_count = instance.shape[i]
            xhat = []
            for ell in range(k_count):
                acc = 0.0
                for prob, ids in chains:
                    acc = acc + prob * vals[ids[ell]]
                xhat.append(acc * g)
            for ell in range(1, k_count):
                feasible = feasible & (xhat[ell] >= xhat[ell - 1] - 1e-12)
            prefix, rev = 0.0, 0.0
            for ell in range(k_count):
                q = z[ell] * xhat[ell] - prefix
                rev = rev + f[ell] * np.sqrt(np.maximum(q, 0.0))
                prefix = prefix + gaps[ell] * xhat[ell]
            total = total + mult * rev
        else:
            for prob, ids in chains:
                prefix, rev = 0.0, 0.0
                for ell, c in enumerate(ids):
                    x = vals[c] * g
                    q = z[ell] * x - prefix
                    if mode == "rrm":
                        rev = rev + f[ell] * np.sqrt(np.maximum(q, 0.0))
                    else:  # linear perceived payments
                        rev = rev + f[ell] * q
                    prefix = prefix + gaps[ell] * x
                total = total + mult * prob * rev
    return total, feasible


def _estimate_nodes(comp: _Compiled, G: int, prune_monotone: bool) -> float:
    est = 1.0
    for _, _, chains in comp.orbits:
        for _, ids in chains:
            L = len(ids) - 1
            if L <= 0:
                continue
            est *= math.comb(G + L, L) if prune_monotone else float(G + 1) ** L
            if est > 1e18:
                return est
    for grp in comp.groups:
        distinct_tops = sum(1 for c in grp if comp.top[c])
        if distinct_tops >= 2:
            est *= float(G + 1) ** (distinct_tops - 1)
    return est


def _close_single_tops(comp, vals, G, prune_monotone):
    """Fill every top class that alone completes its supply constraint.

    Returns (scan_groups, ok): groups holding >= 2 distinct unfilled top
    classes are left for exhaustive scanning.
    """
    scan_groups = []
    for grp in comp.groups:
        tops = [c for c in grp if comp.top[c]]
        if not tops:
            continue
        if len(tops) == 1:
            c = tops[0]
            cap = G - sum(m * vals[cc] for cc, m in grp.items() if not comp.top[cc])
            v = min(G, cap // grp[c])
            lo = vals[comp.prev[c]] if prune_monotone and comp.prev[c] is not None else 0
            if v < lo:
                return None, False
            vals[c] = v
        else:
            scan_groups.append(grp)
    return scan_groups, True


def _dfs_search(comp, instance, config, mode):
    G = config.steps
    g = config.grid
    prune = mode != "brm" or instance.n == 1
    interiors = comp.interiors

    group_list = comp.groups
    member_groups: dict[int, list[int]] = {}
    for gi, grp in enumerate(group_list):
        for c in grp:
            member_groups.setdefault(c, []).append(gi)
    assigned_sum = [0] * len(group_list)

    vals = [0] * len(comp.slots)
    best = {"obj": -math.inf, "vals": None}
    budget = {"nodes": 0}

    def leaf():
        work = list(vals)
        scan_groups, ok = _close_single_tops(comp, work, G, prune)
        if not ok:
            return
        # exhaustively split the supply constraints shared by several
        # distinct top variables; the last one takes the grid remainder
        def scan(idx):
            if idx == len(scan_groups):
                obj, feas = _objective(comp, instance, work, g, mode)
                if feas and obj > best["obj"]:
                    best["obj"] = obj
                    best["vals"] = list(work)
                return
            grp = scan_groups[idx]
            tops = sorted(c for c in grp if comp.top[c])
            fixed = sum(m * work[c] for c, m in grp.items() if not comp.top[c])

            def inner(t, used):
                budget["nodes"] += 1
                if budget["nodes"] > config.max_nodes:
                    raise OracleRefusal(
                        "search exceeded the node budget; coarsen the grid "
                        "or raise max_nodes"
                    )
                c = tops[t]
                lo = (
                    work[comp.prev[c]]
                    if prune and comp.prev[c] is not None
                    else 0
                )
                if t == len(tops) - 1:
                    v = min(G, (G - fixed - used) // grp[c])
                    if v < lo:
                        return
                    work[c] = v
                    scan(idx + 1)
                    return
                hi = min(G, (G - fixed - used) // grp[c])
                for v in range(lo, hi + 1):
                    work[c] = v
                    inner(t + 1, used + grp[c] * v)

            inner(0, 0)

        scan(0)

    def assign(k):
        budget["nodes"] += 1
        if budget["nodes"] > config.max_nodes:
            raise OracleRefusal(
                "search exceeded the node budget; coarsen the grid or raise max_nodes"
            )
        if k == len(interiors):
            leaf()
            return
        c = interiors[k]
        lo = 0
        if prune and comp.prev[c] is not None and not comp.top[comp.prev[c]]:
            lo = vals[comp.prev[c]]
        hi = G
        for gi in member_groups[c]:
            grp = group_list[gi]
            hi = min(hi, (G - assigned_sum[gi]) // grp[c])
        for v in range(lo, hi + 1):
            vals[c] = v
            for gi in member_groups[c]:
                assigned_sum[gi] += group_list[gi][c] * v
            assign(k + 1)
            for gi in member_groups[c]:
                assigned_sum[gi] -= group_list[gi][c] * v
        vals[c] = 0

    assign(0)
    return best["obj"], best["vals"]


def _vector_search(comp, instance, config, mode):
    """Vectorized search over meshgrids of the interior variables."""
    G = config.steps
    g = config.grid
    prune = mode != "brm" or instance.n == 1
    interiors = comp.interiors
    if interiors:
        axes = np.meshgrid(*([np.arange(G + 1)] * len(interiors)), indexing="ij")
    else:
        axes = []
    vals: list = [None] * len(comp.slots)
    for pos, c in enumerate(interiors):
        vals[c] = axes[pos]
    mask = np.ones(axes[0].shape if axes else (), dtype=bool)

    if prune:
        for c in interiors:
            p = comp.prev[c]
            if p is not None and not comp.top[p]:
                mask &= vals[c] >= vals[p]

    for grp in comp.groups:
        tops = [c for c in grp if comp.top[c]]
        interior_part = sum(m * vals[c] for c, m in grp.items() if not comp.top[c])
        if not tops:
            mask &= interior_part <= G
            continue
        (c,) = tops
        cap = G - interior_part
        mask &= cap >= 0
        v = np.minimum(G, np.maximum(cap, 0) // grp[c])
        if prune and comp.prev[c] is not None:
            mask &= v >= vals[comp.prev[c]]
        vals[c] = v

    obj, feas = _objective(comp, instance, vals, g, mode)
    obj = np.where(mask & feas, obj, -np.inf)
    flat = int(np.argmax(obj))
    best_obj = float(obj.ravel()[flat])
    if not math.isfinite(best_obj):
        return -math.inf, None
    idx = np.unravel_index(flat, obj.shape) if interiors else ()
    out = [0] * len(comp.slots)
    for pos, c in enumerate(interiors):
        out[c] = int(axes[pos][idx])
    work = list(out)
    scan_groups, ok = _close_single_tops(comp, work, G, prune)
    assert ok and not scan_groups
    return best_obj, work


def _search(instance: AuctionInstance, config: OracleConfig, mode: str):
    if instance.n * math.prod(instance.shape) > config.max_profile_vars:
        raise OracleRefusal(
            f"instance has {instance.n * math.prod(instance.shape)} allocation "
            f"variables, above the max_profile_vars cap of {config.max_profile_vars}"
        )
    comp = _compile(instance)
    G = config.steps
    multi_top = any(
        sum(1 for c in grp if comp.top[c]) >= 2 for grp in comp.groups
    )
    cells = float(G + 1) ** len(comp.interiors)
    if not multi_top and cells <= _FAST_PATH_CELLS:
        obj, vals = _vector_search(comp, instance, config, mode)
    else:
        prune = mode != "brm" or instance.n == 1
        est = _estimate_nodes(comp, G, prune)
        if est > config.max_nodes:
            raise OracleRefusal(
                f"estimated {est:.2e} search nodes exceeds the budget of "
                f"{config.max_nodes}; coarsen the grid or shrink the instance"
            )
        obj, vals = _dfs_search(comp, instance, config, mode)
    if vals is None:
        raise RuntimeError("grid search found no feasible allocation")
    table = np.zeros((instance.n, *instance.shape))
    for c, slot_list in enumerate(comp.slots):
        x = vals[c] * config.grid
        for i, prof in slot_list:
            table[(i, *prof)] = x
    return obj, ExPostAllocation(table)


def _grid_slack(instance: AuctionInstance, config: OracleConfig) -> float:
    max_value = max(float(instance.values(i)[-1]) for i in range(instance.n))
    return instance.n * max_value * config.grid


def exact_rrm(
    instance: AuctionInstance,
    config: OracleConfig = OracleConfig(),
    perceived: str = "quadratic",
) -> tuple[Mechanism, MechanismReport]:
    """Grid-exhaustive robust revenue maximization.

    Searches monotone, ex-post feasible allocation tables on the grid and
    pins payments via the payment characterization.  ``perceived`` selects
    quadratic (p = sqrt(q)) or linear (p = q) payments; the linear mode is
    the classic Myerson problem and serves as a cross-check oracle.
    """
    if perceived not in ("quadratic", "linear"):
        raise ValueError("perceived must be 'quadratic' or 'linear'")
    start = time.perf_counter()
    mode = "rrm" if perceived == "quadratic" else "rrm_linear"
    obj, alloc = _search(instance, config, mode)
    q = pay.perceived_payment(alloc, instance)
    if perceived == "quadratic":
        rule = RobustPaymentRule(np.sqrt(np.maximum(q, 0.0)))
    else:
        rule = RobustPaymentRule(np.maximum(q, 0.0))
    revenue = pay.expected_revenue(rule, instance)
    if abs(revenue - obj) > 1e-6:
        raise RuntimeError("search objective and recomputed revenue disagree")
    mech = Mechanism(
        alloc, robust_payments=rule,
        provenance=f"exact_rrm[grid={config.grid}]", perceived=perceived,
    )
    report = MechanismReport(
        revenue, ObjectiveKind.EXACT_ORACLE, revenue=revenue,
        verification=verify(instance, mech, ("ic", "ir", "xp")),
        runtime_s=time.perf_counter() - start,
        grid_slack=_grid_slack(instance, config),
    )
    return mech, report


def exact_brm(
    instance: AuctionInstance, config: OracleConfig = OracleConfig()
) -> tuple[Mechanism, MechanismReport]:
    """Grid-exhaustive Bayesian revenue maximization.

    Searches ex-post feasible allocation tables (interim feasibility alone
    does not imply an ex-post implementation), requires the collapsed
    interim rule to be monotone, and pays the per-type interim payments.
    """
    start = time.perf_counter()
    obj, alloc = _search(instance, config, "brm")
    interim = pay.interim_collapse(alloc, instance)
    h = pay.bayesian_payment(interim, instance)
    revenue = pay.expected_revenue(h, instance)
    if abs(revenue - obj) > 1e-6:
        raise RuntimeError("search objective and recomputed revenue disagree")
    mech = Mechanism(
        alloc, interim_allocation=interim, interim_payments=h,
        provenance=f"exact_brm[grid={config.grid}]",
    )
    report = MechanismReport(
        revenue, ObjectiveKind.EXACT_ORACLE, revenue=revenue,
        verification=verify(instance, mech, ("bic", "bir", "xp")),
        runtime_s=time.perf_counter() - start,
        grid_slack=_grid_slack(instance, config),
    )
    return mech, report


# ---------------------------------------------------------------------------
# Textual program exporter
# ---------------------------------------------------------------------------

PROGRAMS = (
    "rrm_xp", "rrm_pseudo", "rrm_lb", "brm_xp_naive", "brm_xp",
    "brm_pseudo", "brm_xa", "brm_xa_rel", "brm_xa_rel_trunc",
)


def _plabel(prof: tuple[int, ...]) -> str:
    return "(" + ",".join(map(str, prof)) + ")"


def _profiles_of(instance):
    return list(itertools.product(*(range(k) for k in instance.shape)))


def _radicand_expr(instance, i, ell, var):
    """z_l*var_l - sum_{j<l} gap_j*var_j for either x or xhat variables."""
    z = instance.values(i)
    gaps = instance.space(i).gaps
    terms = [f"{float(z[ell])!r}*{var(ell)}"]
    for j in range(ell):
        terms.append(f"- {float(gaps[j])!r}*{var(j)}")
    return " ".join(terms)


def export_program(instance: AuctionInstance, which: str) -> str:
    """Emit one mathematical program as deterministic text.

    One variable or constraint per line; objective first.  Constraint lines
    read ``CONSTRAINT <name>: <expr> <= | == <rhs>``.
    """
    if which not in PROGRAMS:
        raise ValueError(f"unknown program {which!r}; choose from {PROGRAMS}")
    n = instance.n
    profs = _profiles_of(instance)
    joint = instance.joint_pmf
    phi_plus = virtual_values(instance).phi_plus
    lines: list[str] = []

    def xvar(i, prof):
        return f"x[{i}][{_plabel(prof)}]"

    def add_expost_block(with_ub=True, monotone_expost=True):
        for i in range(n):
            for prof in profs:
                lines.append(f"VAR {xvar(i, prof)} in [0,1]")
        for prof in profs:
            expr = " + ".join(xvar(i, prof) for i in range(n))
            lines.append(f"CONSTRAINT xp[{_plabel(prof)}]: {expr} <= 1")
        for i in range(n):
            for prof in profs:
                lines.append(f"CONSTRAINT lb_x[{i}][{_plabel(prof)}]: -{xvar(i, prof)} <= 0")
                if with_ub:
                    lines.append(f"CONSTRAINT ub_x[{i}][{_plabel(prof)}]: {xvar(i, prof)} <= 1")
        if monotone_expost:
            for i in range(n):
                for prof in profs:
                    if prof[i] == 0:
                        continue
                    lower = prof[:i] + (prof[i] - 1,) + prof[i + 1 :]
                    lines.append(
                        f"CONSTRAINT mono_x[{i}][{_plabel(prof)}]: "
                        f"{xvar(i, lower)} - {xvar(i, prof)} <= 0"
                    )

    def add_xhat_vars(with_ub):
        for i in range(n):
            for k in range(instance.shape[i]):
                lines.append(f"VAR xhat[{i}][{k}] in " + ("[0,1]" if with_ub else "[0,inf)"))

    def add_xhat_bounds(with_ub):
        for i in range(n):
            for k in range(instance.shape[i]):
                lines.append(f"CONSTRAINT lb_xhat[{i}][{k}]: -xhat[{i}][{k}] <= 0")
                if with_ub:
                    lines.append(f"CONSTRAINT ub_xhat[{i}][{k}]: xhat[{i}][{k}] <= 1")

    def add_collapse(var_name, transform=lambda s: s):
        for i in range(n):
            ctx_pmf = instance.context_pmf(i)
            for k in range(instance.shape[i]):
                terms = []
                for prof in profs:
                    if prof[i] != k:
                        continue
                    ctx = prof[:i] + prof[i + 1 :]
                    w = float(ctx_pmf[ctx]) if ctx else 1.0
                    terms.append(f"{w!r}*{transform(xvar(i, prof))}")
                expr = " + ".join(terms)
                lines.append(
                    f"CONSTRAINT collapse_{var_name}[{i}][{k}]: "
                    f"{var_name}[{i}][{k}] == {expr}"
                )

    def add_interim_monotone():
        for i in range(n):
            for k in range(1, instance.shape[i]):
                lines.append(
                    f"CONSTRAINT mono_xhat[{i}][{k}]: "
                    f"xhat[{i}][{k - 1}] - xhat[{i}][{k}] <= 0"
                )

    def add_xa():
        terms = []
        for i in range(n):
            f = instance.pmf(i)
            for k in range(instance.shape[i]):
                terms.append(f"{float(f[k])!r}*xhat[{i}][{k}]")
        lines.append("CONSTRAINT xa: " + " + ".join(terms) + " <= 1")

    if which == "rrm_xp":
        obj = " + ".join(
            f"{float(joint[prof])!r}*p[{i}][{_plabel(prof)}]"
            for prof in profs for i in range(n)
        )
        lines.append(f"OBJECTIVE maximize: {obj}")
        add_expost_block()
        for i in range(n):
            for prof in profs:
                lines.append(f"VAR p[{i}][{_plabel(prof)}] in [0,inf)")
        for i in range(n):
            for prof in profs:
                rad = _radicand_expr(
                    instance, i, prof[i],
                    lambda j, i=i, prof=prof: xvar(i, prof[:i] + (j,) + prof[i + 1 :]),
                )
                lines.append(
                    f"CONSTRAINT pay[{i}][{_plabel(prof)}]: "
                    f"p[{i}][{_plabel(prof)}]^2 == {rad}"
                )
    elif which in ("rrm_pseudo", "rrm_lb"):
        terms = []
        for prof in profs:
            for i in range(n):
                coef = (
                    float(instance.values(i)[prof[i]])
                    if which == "rrm_pseudo"
                    else float(phi_plus[i][prof[i]])
                )
                terms.append(f"{float(joint[prof])!r}*sqrt({coef!r}*{xvar(i, prof)})")
        lines.append("OBJECTIVE maximize: " + " + ".join(terms))
        add_expost_block()
    elif which == "brm_xp_naive":
        terms = []
        for i in range(n):
            f = instance.pmf(i)
            for k in range(instance.shape[i]):
                terms.append(f"{float(f[k])!r}*phat[{i}][{k}]")
        lines.append("OBJECTIVE maximize: " + " + ".join(terms))
        add_expost_block(monotone_expost=False)
        for i in range(n):
            for prof in profs:
                lines.append(f"VAR p[{i}][{_plabel(prof)}] in [0,inf)")
        add_xhat_vars(with_ub=True)
        for i in range(n):
            for k in range(instance.shape[i]):
                lines.append(f"VAR phat[{i}][{k}] in [0,inf)")
                lines.append(f"VAR qhat[{i}][{k}] in [0,inf)")
        add_collapse("xhat")
        add_collapse("phat", transform=lambda s: s.replace("x[", "p[", 1))
        add_collapse("qhat", transform=lambda s: s.replace("x[", "p[", 1) + "^2")
        add_interim_monotone()
        for i in range(n):
            for k in range(instance.shape[i]):
                rad = _radicand_expr(instance, i, k, lambda j, i=i: f"xhat[{i}][{j}]")
                lines.append(f"CONSTRAINT pay[{i}][{k}]: qhat[{i}][{k}] == {rad}")
    elif which in ("brm_xp", "brm_pseudo"):
        terms = []
        for i in range(n):
            f = instance.pmf(i)
            z = instance.values(i)
            for k in range(instance.shape[i]):
                if which == "brm_xp":
                    terms.append(f"{float(f[k])!r}*h[{i}][{k}]")
                else:
                    terms.append(f"{float(f[k])!r}*sqrt({float(z[k])!r}*xhat[{i}][{k}])")
        lines.append("OBJECTIVE maximize: " + " + ".join(terms))
        add_expost_block(monotone_expost=False)
        add_xhat_vars(with_ub=True)
        if which == "brm_xp":
            for i in range(n):
                for k in range(instance.shape[i]):
                    lines.append(f"VAR h[{i}][{k}] in [0,inf)")
        add_collapse("xhat")
        add_interim_monotone()
        if which == "brm_xp":
            for i in range(n):
                for k in range(instance.shape[i]):
                    rad = _radicand_expr(instance, i, k, lambda j, i=i: f"xhat[{i}][{j}]")
                    lines.append(f"CONSTRAINT pay[{i}][{k}]: h[{i}][{k}]^2 == {rad}")
    elif which == "brm_xa":
        terms = []
        for i in range(n):
            f = instance.pmf(i)
            for k in range(instance.shape[i]):
                terms.append(f"{float(f[k])!r}*h[{i}][{k}]")
        lines.append("OBJECTIVE maximize: " + " + ".join(terms))
        add_xhat_vars(with_ub=True)
        for i in range(n):
            for k in range(instance.shape[i]):
                lines.append(f"VAR h[{i}][{k}] in [0,inf)")
        add_xa()
        add_xhat_bounds(with_ub=True)
        add_interim_monotone()
        for i in range(n):
            for k in range(instance.shape[i]):
                rad = _radicand_expr(instance, i, k, lambda j, i=i: f"xhat[{i}][{j}]")
                lines.append(f"CONSTRAINT pay[{i}][{k}]: h[{i}][{k}]^2 == {rad}")
    else:  # brm_xa_rel and brm_xa_rel_trunc
        terms = []
        for i in range(n):
            f = instance.pmf(i)
            for k in range(instance.shape[i]):
                if which == "brm_xa_rel":
                    terms.append(f"{float(f[k])!r}*sqrt({float(phi_plus[i][k])!r}*xhat[{i}][{k}])")
                else:
                    terms.append(
                        f"{float(f[k])!r}*sqrt({float(phi_plus[i][k])!r})*sqrt(xhat[{i}][{k}])"
                    )
        lines.append("OBJECTIVE maximize: " + " + ".join(terms))
        add_xhat_vars(with_ub=False)
        add_xa()
        add_xhat_bounds(with_ub=False)
        add_interim_monotone()
    return "\n".join(lines) + "\n"
