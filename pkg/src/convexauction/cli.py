"""Command-line surface: run experiments, solve, check, discretize, export.

Experiments mirror the method-comparison structure of the library: symmetric
instances of one of the three stock distributions are solved for a range of
bidder counts, and one CSV row is emitted per (method, n) with the objective
kind, value, runtime and verification outcome.  Identical configurations
produce byte-identical CSV when timing is suppressed with --no-timing.

Mechanism files are JSON with explicit field order; allocation and payment
tables are nested arrays indexed [bidder][profile index], profiles flattened
in the lexicographic order documented in ``core``.

Exit codes: 0 success, 1 verification failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import mechanisms as mech_mod
from . import oracle as oracle_mod
from .core import (
    AuctionInstance,
    DiscreteDistribution,
    ExPostAllocation,
    InterimAllocation,
    InterimPaymentRule,
    RobustPaymentRule,
    TypeSpace,
    make_binomial,
    make_categorical,
    make_uniform,
    symmetric_instance,
)
from .discretization import discretization_gap
from .mechanisms import Mechanism
from .oracle import OracleConfig, OracleRefusal

METHODS = (
    "exact_rrm",
    "exact_brm",
    "pseudo_surplus_greedy",
    "pseudo_surplus_cf",
    "heur_lb_greedy",
    "heur_lb_cf",
    "heur_rrm_rev",
    "heur_brm_rev",
    "ex_ante",
    "ex_ante_trunc",
)

CSV_COLUMNS = (
    "method", "distribution", "n_bidders", "objective_kind",
    "value", "runtime_ms", "verified",
)


def parse_distribution(spec: str):
    """Parse 'categorical:L,H,p' | 'uniform:K' | 'binomial:t,p' into a bidder."""
    try:
        name, _, args = spec.partition(":")
        if name == "categorical":
            low, high, p_low = (float(a) for a in args.split(","))
            return make_categorical(low, high, p_low)
        if name == "uniform":
            return make_uniform(int(args))
        if name == "binomial":
            trials, p = args.split(",")
            return make_binomial(int(trials), float(p))
    except (ValueError, TypeError) as exc:
        raise ValueError(f"bad distribution spec {spec!r}: {exc}") from exc
    raise ValueError(f"unknown distribution {spec!r}")


@dataclass
class ExperimentConfig:
    distribution: str
    n_min: int
    n_max: int
    methods: tuple[str, ...]
    epsilon: float = 1e-3
    oracle_grid: float = 1e-3
    output_path: str = "experiment.csv"
    timing: bool = True

    def __post_init__(self):
        if self.n_min < 1 or self.n_max < self.n_min:
            raise ValueError("bidder range must be non-empty")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")


def _thread_count() -> int:
    raw = os.environ.get("CONVEX_AUCTION_THREADS", "0")
    try:
        value = int(raw)
    except ValueError:
        value = 0
    if value == 0:
        return min(4, os.cpu_count() or 1)
    return max(1, value)


def _run_method(method: str, instance: AuctionInstance, cfg: ExperimentConfig):
    """Run one method; returns (kind, value, runtime_s, verified) or None to skip."""
    from .alloc import GreedyConfig

    greedy = GreedyConfig(epsilon=cfg.epsilon)
    oracle_cfg = OracleConfig(grid=cfg.oracle_grid)
    start = time.perf_counter()
    try:
        if method == "exact_rrm":
            mech, report = oracle_mod.exact_rrm(instance, oracle_cfg)
            checks = oracle_mod.verify(instance, mech, ("ic", "ir", "xp"))
        elif method == "exact_brm":
            mech, report = oracle_mod.exact_brm(instance, oracle_cfg)
            checks = oracle_mod.verify(instance, mech, ("bic", "bir", "xp"))
        elif method in ("pseudo_surplus_greedy", "pseudo_surplus_cf"):
            how = "greedy" if method.endswith("greedy") else "closed_form"
            mech, report = mech_mod.pseudo_surplus_maximizer(instance, how, greedy)
            checks = oracle_mod.verify(instance, mech, ("ic", "ir", "xp"))
        elif method in ("heur_lb_greedy", "heur_lb_cf"):
            how = "greedy" if method.endswith("greedy") else "closed_form"
            mech, report = mech_mod.heuristic_lb_rrm(instance, how, greedy)
            checks = oracle_mod.verify(instance, mech, ("ic", "ir", "xp"))
        elif method == "heur_rrm_rev":
            mech, report = mech_mod.heuristic_lb_rrm(instance, "closed_form", greedy)
            checks = oracle_mod.verify(instance, mech, ("ic", "ir", "xp"))
            runtime = time.perf_counter() - start
            verified = all(c.passed for c in checks.values())
            return "revenue_robust", float(report.revenue), runtime, verified
        elif method == "heur_brm_rev":
            mech, report = mech_mod.heuristic_brm(instance, "closed_form", greedy)
            checks = oracle_mod.verify(instance, mech, ("bic", "bir", "xp"))
        else:
            truncate = method == "ex_ante_trunc"
            mech, report = mech_mod.ex_ante_relaxation(instance, truncate)
            checks = oracle_mod.verify(instance, mech, ("bic", "bir", "xa"))
    except OracleRefusal as exc:
        print(f"notice: skipping {method} for n={instance.n}: {exc}", file=sys.stderr)
        return None
    runtime = time.perf_counter() - start
    verified = all(c.passed for c in checks.values())
    return report.kind.value, float(report.objective_value), runtime, verified


def run_experiment(cfg: ExperimentConfig) -> str:
    """Produce the experiment CSV; returns the output path."""
    space, dist = parse_distribution(cfg.distribution)
    jobs = [
        (method, n)
        for method in cfg.methods
        for n in range(cfg.n_min, cfg.n_max + 1)
    ]
    instances = {
        n: symmetric_instance(space, dist, n)
        for n in range(cfg.n_min, cfg.n_max + 1)
    }

    def work(job):
        method, n = job
        return _run_method(method, instances[n], cfg)

    workers = _thread_count()
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(job) for job in jobs]

    with open(cfg.output_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for (method, n), outcome in zip(jobs, results):
            if outcome is None:
                continue
            kind, value, runtime, verified = outcome
            runtime_ms = f"{runtime * 1000:.3f}" if cfg.timing else ""
            writer.writerow(
                [method, cfg.distribution, n, kind, repr(value), runtime_ms,
                 str(verified).lower()]
            )
    return cfg.output_path


# ---------------------------------------------------------------------------
# Mechanism file round-trip
# ---------------------------------------------------------------------------

_FORMAT = "convexauction-mechanism/1"


def _tables_to_lists(table: np.ndarray) -> list:
    n = table.shape[0]
    return [table[i].ravel().tolist() for i in range(n)]


def save_mechanism(path: str, instance: AuctionInstance, mech: Mechanism) -> None:
    doc = {
        "format": _FORMAT,
        "instance": {
            "bidders": [
                {"values": instance.values(i).tolist(), "pmf": instance.pmf(i).tolist()}
                for i in range(instance.n)
            ]
        },
        "provenance": mech.provenance,
        "perceived": mech.perceived,
        "allocation": (
            _tables_to_lists(mech.allocation.table) if mech.allocation else None
        ),
        "robust_payments": (
            _tables_to_lists(mech.robust_payments.table)
            if mech.robust_payments
            else None
        ),
        "interim_allocation": (
            [t.tolist() for t in mech.interim_allocation.tables]
            if mech.interim_allocation
            else None
        ),
        "interim_payments": (
            [t.tolist() for t in mech.interim_payments.tables]
            if mech.interim_payments
            else None
        ),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_mechanism(path: str) -> tuple[AuctionInstance, Mechanism]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != _FORMAT:
        raise ValueError(f"not a mechanism file: {path}")
    instance = AuctionInstance(
        tuple(
            (TypeSpace(np.array(b["values"])), DiscreteDistribution(np.array(b["pmf"])))
            for b in doc["instance"]["bidders"]
        )
    )
    shape = instance.shape

    def as_expost(rows):
        return np.array(rows).reshape(instance.n, *shape)

    allocation = (
        ExPostAllocation(as_expost(doc["allocation"]))
        if doc["allocation"] is not None
        else None
    )
    robust = (
        RobustPaymentRule(as_expost(doc["robust_payments"]))
        if doc["robust_payments"] is not None
        else None
    )
    interim_alloc = (
        InterimAllocation(tuple(np.array(t) for t in doc["interim_allocation"]))
        if doc["interim_allocation"] is not None
        else None
    )
    interim_pay = (
        InterimPaymentRule(tuple(np.array(t) for t in doc["interim_payments"]))
        if doc["interim_payments"] is not None
        else None
    )
    mech = Mechanism(
        allocation,
        robust_payments=robust,
        interim_allocation=interim_alloc,
        interim_payments=interim_pay,
        provenance=doc["provenance"],
        perceived=doc["perceived"],
    )
    return instance, mech


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

_SOLVE_METHODS = {
    "surplus": lambda inst, eps: mech_mod.surplus_maximizer(inst),
    "pseudo_surplus_greedy": lambda inst, eps: mech_mod.pseudo_surplus_maximizer(
        inst, "greedy", eps
    ),
    "pseudo_surplus_cf": lambda inst, eps: mech_mod.pseudo_surplus_maximizer(
        inst, "closed_form", eps
    ),
    "virtual_surplus": lambda inst, eps: mech_mod.virtual_surplus_maximizer(inst),
    "heur_rrm_greedy": lambda inst, eps: mech_mod.heuristic_lb_rrm(inst, "greedy", eps),
    "heur_rrm_cf": lambda inst, eps: mech_mod.heuristic_lb_rrm(inst, "closed_form", eps),
    "heur_brm_greedy": lambda inst, eps: mech_mod.heuristic_brm(inst, "greedy", eps),
    "heur_brm_cf": lambda inst, eps: mech_mod.heuristic_brm(inst, "closed_form", eps),
    "ex_ante": lambda inst, eps: mech_mod.ex_ante_relaxation(inst, False),
    "ex_ante_trunc": lambda inst, eps: mech_mod.ex_ante_relaxation(inst, True),
}


def _cmd_solve(args) -> int:
    from .alloc import GreedyConfig

    space, dist = parse_distribution(args.dist)
    instance = symmetric_instance(space, dist, args.n)
    greedy = GreedyConfig(epsilon=args.epsilon)
    if args.method in _SOLVE_METHODS:
        mech, report = _SOLVE_METHODS[args.method](instance, greedy)
    elif args.method == "exact_rrm":
        mech, report = oracle_mod.exact_rrm(instance, OracleConfig(grid=args.oracle_grid))
    elif args.method == "exact_brm":
        mech, report = oracle_mod.exact_brm(instance, OracleConfig(grid=args.oracle_grid))
    else:
        print(f"error: unknown method {args.method!r}", file=sys.stderr)
        return 2
    print(f"method={args.method} kind={report.kind.value}")
    print(f"objective={report.objective_value!r}")
    if report.revenue is not None:
        print(f"revenue={report.revenue!r}")
    for w in report.warnings:
        print(f"warning: {w}")
    if args.output:
        save_mechanism(args.output, instance, mech)
        print(f"wrote {args.output}")
    return 0


def _cmd_check(args) -> int:
    instance, mech = load_mechanism(args.mechanism)
    which = tuple(c.strip() for c in args.constraints.split(",")) if args.constraints else None
    results = oracle_mod.verify(instance, mech, which)
    ok = True
    for name, check in results.items():
        status = "pass" if check.passed else "FAIL"
        print(f"{name}: {status} (worst violation {check.worst_violation!r})")
        ok = ok and check.passed
    return 0 if ok else 1


def _cmd_discretize(args) -> int:
    instance, mech = load_mechanism(args.mechanism)
    if mech.allocation is None:
        print("error: mechanism has no ex-post allocation", file=sys.stderr)
        return 2
    report = discretization_gap(instance, mech.allocation, args.delta)
    print(f"delta={report.delta!r}")
    print(f"max_abs_residual={report.max_abs_residual!r}")
    print(f"perceived_payment_gap={report.perceived_payment_gap!r}")
    print(f"revenue_gap={report.revenue_gap!r}")
    return 0


def _cmd_export(args) -> int:
    space, dist = parse_distribution(args.dist)
    instance = symmetric_instance(space, dist, args.n)
    text = oracle_mod.export_program(instance, args.program)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _read_config_file(path: str) -> dict[str, str]:
    """key=value lines; blank lines and #-comments ignored."""
    values: dict[str, str] = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"bad config line {line!r} (expected key=value)")
            values[key.strip()] = value.strip()
    return values


def _cmd_experiment(args) -> int:
    file_cfg = _read_config_file(args.config) if args.config else {}

    def pick(flag_value, key, fallback):
        if flag_value is not None:
            return flag_value
        return file_cfg.get(key, fallback)

    dist = pick(args.dist, "dist", None)
    bidders = pick(args.bidders, "bidders", None)
    methods_raw = pick(args.methods, "methods", None)
    if not dist or not bidders or methods_raw is None:
        print("error: dist, bidders and methods are required (flags or config file)",
              file=sys.stderr)
        return 2
    methods = tuple(m.strip() for m in methods_raw.split(",") if m.strip())
    n_min, _, n_max = bidders.partition("..")
    no_timing = args.no_timing if args.no_timing is not None else (
        file_cfg.get("no_timing", "false").lower() in ("1", "true", "yes")
    )
    cfg = ExperimentConfig(
        distribution=dist,
        n_min=int(n_min),
        n_max=int(n_max) if n_max else int(n_min),
        methods=methods,
        epsilon=float(pick(args.epsilon, "epsilon", 1e-3)),
        oracle_grid=float(pick(args.oracle_grid, "oracle_grid", 1e-3)),
        output_path=pick(args.output, "output", "experiment.csv"),
        timing=not no_timing,
    )
    path = run_experiment(cfg)
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convexauction",
        description="Auction design with quadratic perceived payments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run one pipeline on a symmetric instance")
    p.add_argument("--dist", required=True, help="categorical:L,H,p | uniform:K | binomial:t,p")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--method", required=True,
                   help="|".join(list(_SOLVE_METHODS) + ["exact_rrm", "exact_brm"]))
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--oracle-grid", type=float, default=1e-3)
    p.add_argument("--output", help="write the mechanism file here")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("check", help="verify a mechanism file")
    p.add_argument("mechanism")
    p.add_argument("--constraints", help="comma list from ic,ir,bic,bir,xp,xa")
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("discretize", help="round a mechanism's allocation and report gaps")
    p.add_argument("mechanism")
    p.add_argument("--delta", type=float, required=True)
    p.set_defaults(func=_cmd_discretize)

    p = sub.add_parser("export", help="emit a mathematical program as text")
    p.add_argument("--dist", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--program", required=True, choices=oracle_mod.PROGRAMS)
    p.add_argument("--output")
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("experiment", help="method comparison CSV across bidder counts")
    p.add_argument("--config", help="key=value file providing defaults; flags win")
    p.add_argument("--dist")
    p.add_argument("--bidders", help="range like 1..6")
    p.add_argument("--methods", help="comma list from " + ",".join(METHODS))
    p.add_argument("--epsilon", type=float)
    p.add_argument("--oracle-grid", type=float)
    p.add_argument("--output")
    p.add_argument("--no-timing", action="store_const", const=True, default=None,
                   help="leave the runtime column empty for byte-identical reruns")
    p.set_defaults(func=_cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
