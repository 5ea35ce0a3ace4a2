"""
子命令处理函数。每个函数接收解析后的参数与合并后的配置，
返回 CommandResult：报告名、可序列化的结果以及本次检查是否全部通过。
"""

import logging
import math
from typing import Any, Dict, List, NamedTuple, Optional

import numpy as np

from core.bernoulli_sum import iid_projection_direct, iid_projection_iterative, verify_single_crossing
from core.constants import DEFAULT_QUAD_TOL, FEASIBILITY_TOL, MAX_PHI_APPLICATIONS
from core.distributions import load_instance, save_instance
from core.errors import ConfigError
from core.gap_numerics import ar_ap_gap, ear_ap_upper_small_k, gap_table
from core.instances import (
    ar_of_worst_case,
    build_triangle_lower_bound,
    build_worst_case_iid,
    default_bracket,
    grow_triangle_lower_bound,
    matroid_demo,
    worst_case_sequence,
)
from core.revenue import (
    ap_optimal,
    ap_revenue,
    ar_optimal,
    ar_revenue,
    check_feasibility,
    ear_optimal,
    revenue_summary,
)
from services.simulator import simulate_ap, simulate_ar, simulate_spm
from services.verification import DEFAULT_VERIFY, check_bernoulli_sum, run_verification_suite

logger = logging.getLogger(__name__)


class CommandResult(NamedTuple):
    name: str
    payload: Any
    passed: bool = True


def _section(config: dict, key: str) -> Dict[str, Any]:
    value = config.get(key)
    return dict(value) if isinstance(value, dict) else {}


def _quad_tol(config: dict) -> float:
    return float(config.get("tol", DEFAULT_QUAD_TOL))


def _cutoff_kw(config: dict) -> Dict[str, Any]:
    quad = _section(config, "quadrature")
    return {k: quad[k] for k in ("cutoff_min", "sqrt_factor", "limit") if k in quad}


def _float_list(text: Optional[str]) -> Optional[List[float]]:
    if text is None:
        return None
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as e:
        raise ConfigError(f"无法解析数值列表：{text}", {"value": text}) from e


# ---------- gap_numerics ----------


def cmd_gap_table(args, config: dict) -> CommandResult:
    reports = gap_table(args.k_max, _quad_tol(config), int(config.get("threads", 1)), **_cutoff_kw(config))
    rows = [
        {
            "k": r.k,
            "gap": r.gap,
            "c_k": r.c_k,
            "lb": r.lb,
            "bounds_ok": r.bounds_ok,
            "quad_error": r.quad_error,
        }
        for r in reports
    ]
    return CommandResult("gap_table", rows, all(r.bounds_ok for r in reports))


def cmd_ear_bound(args, config: dict) -> CommandResult:
    ks = [args.k] if args.k is not None else [1, 2, 3]
    rows = [{"k": k, "ear_ap_upper": ear_ap_upper_small_k(k)} for k in ks]
    return CommandResult("ear_bound", rows)


# ---------- instances ----------


def cmd_worst_case(args, config: dict) -> CommandResult:
    wc_cfg = _section(config, "worst_case")
    quad_tol = _quad_tol(config)
    if args.ns:
        ns = [int(v) for v in _float_list(args.ns)]
        seq = worst_case_sequence(args.k, ns, quad_tol, **wc_cfg)
        rows = [{"k": args.k, "n": n, "ar": ar} for n, ar in seq]
        increasing = all(b["ar"] >= a["ar"] - 1e-9 for a, b in zip(rows, rows[1:]))
        return CommandResult("worst_case", rows, increasing)

    w = build_worst_case_iid(args.k, args.n, **wc_cfg)
    ap_err = float(np.max(np.abs(w.ap_on_grid() - 1.0)))
    payload = {
        "k": args.k,
        "n": args.n,
        "ar": ar_of_worst_case(w, quad_tol),
        "gap": ar_ap_gap(args.k, quad_tol, **_cutoff_kw(config)).gap,
        "grid_points": int(w.grid.size),
        "x_max": float(w.grid[-1]),
        "ap_max_error": ap_err,
    }
    if args.out:
        save_instance(w.to_instance(), args.out)
        payload["instance"] = args.out
    return CommandResult("worst_case", payload, ap_err <= FEASIBILITY_TOL)


def cmd_lower_bound(args, config: dict) -> CommandResult:
    lb_cfg = _section(config, "lower_bound")
    k = args.k
    a_default, b_default = default_bracket(k, float(lb_cfg.get("bracket_n", 50.0)))
    a = args.a if args.a is not None else a_default
    b = args.b if args.b is not None else b_default
    gap = ar_ap_gap(k, _quad_tol(config), **_cutoff_kw(config)).gap
    history: List[Dict[str, float]] = []
    if args.n is not None:
        lb = build_triangle_lower_bound(k, args.n, a, b)
    else:
        target = gap - float(lb_cfg.get("target_slack", 0.1))
        lb, history = grow_triangle_lower_bound(
            k, a, b, target,
            n_start=int(lb_cfg.get("n_start", 8)),
            n_cap=int(lb_cfg.get("n_cap", 4096)),
        )
    ap = lb.ap_on_grid(points=int(lb_cfg.get("grid_points", 2000)))
    payload = {
        "k": k,
        "n": lb.n,
        "a": a,
        "b": b,
        "ar_at_a": lb.ar_at_reserve(),
        "gap": gap,
        "max_ap": float(ap.max()),
        "max_dip": float(1.0 - ap.min()),
        "history": history,
    }
    if args.out:
        save_instance(lb.to_instance(), args.out)
        payload["instance"] = args.out
    return CommandResult("lower_bound", payload, payload["max_ap"] <= 1.0 + 1e-6)


def cmd_matroid_demo(args, config: dict) -> CommandResult:
    m = args.m if args.m is not None else args.k
    demo = matroid_demo(m, args.k)
    return CommandResult("matroid_demo", demo.to_dict(), demo.ap_best <= 1.0 and demo.ratio >= demo.harmonic * (1 - 1e-12))


# ---------- revenue ----------


def _price_grid(inst, cutoff: Optional[float], points: int) -> np.ndarray:
    top = inst.support_max
    if not math.isfinite(top):
        top = cutoff if cutoff is not None else 100.0
    return np.linspace(top / points, top, points)


def cmd_revenue(args, config: dict) -> CommandResult:
    rev_cfg = _section(config, "revenue")
    inst = load_instance(args.instance)
    quad_tol = _quad_tol(config)
    grid = _price_grid(inst, args.cutoff, int(rev_cfg.get("grid_points", 2000)))
    mech = args.mech
    if mech == "all":
        payload = revenue_summary(inst, grid, args.cutoff, quad_tol)
        payload["feasibility"] = check_feasibility(inst, grid, float(rev_cfg.get("feasibility_tol", FEASIBILITY_TOL)))._asdict()
        return CommandResult("revenue", payload)
    if mech == "ap":
        if args.price is not None:
            return CommandResult("revenue", {"mech": "ap", "price": args.price, "value": ap_revenue(inst, args.price)})
        p, value = ap_optimal(inst, grid)
        return CommandResult("revenue", {"mech": "ap", "price": p, "value": value})
    if mech == "ar":
        if args.price is not None:
            value = ar_revenue(inst, args.price, args.cutoff, quad_tol)
            return CommandResult("revenue", {"mech": "ar", "reserve": args.price, "value": value})
        r, value = ar_optimal(inst, grid, args.cutoff, quad_tol)
        return CommandResult("revenue", {"mech": "ar", "reserve": r, "value": value})
    alloc, value = ear_optimal(inst, int(rev_cfg.get("ear_quantile_points", 10_000)))
    return CommandResult("revenue", {"mech": "ear", "allocation": list(alloc.qprime), "value": value})


# ---------- harness ----------


def cmd_simulate(args, config: dict) -> CommandResult:
    sim_cfg = _section(config, "simulation")
    inst = load_instance(args.instance)
    trials = args.trials if args.trials is not None else int(sim_cfg.get("trials", 100_000))
    seed = int(config.get("seed", 0))
    threads = int(config.get("threads", 1))
    block_size = int(sim_cfg.get("block_size", 10_000))
    multiplier = float(sim_cfg.get("ci_multiplier", 4.0))
    payload: Dict[str, Any] = {"mech": args.mech}
    if args.mech == "spm":
        prices = _float_list(args.prices) or [args.price or 0.0] * inst.n
        order = [int(v) for v in _float_list(args.order)] if args.order else list(range(inst.n))
        result = simulate_spm(inst, prices, order, trials, seed, threads, block_size)
        payload.update(result.to_dict())
        return CommandResult("simulate", payload)

    if args.price is None:
        raise ConfigError("ap / ar 模拟需要 --price")
    if args.mech == "ap":
        result = simulate_ap(inst, args.price, trials, seed, threads, block_size)
        exact = ap_revenue(inst, args.price)
    else:
        result = simulate_ar(inst, args.price, trials, seed, threads, block_size)
        exact = ar_revenue(inst, args.price, args.cutoff, _quad_tol(config))
    payload.update(result.to_dict())
    payload["analytic"] = exact
    agrees = abs(result.mean - exact) <= max(multiplier * result.stderr, 1e-6)
    payload["within_ci"] = agrees
    return CommandResult("simulate", payload, agrees)


def cmd_verify(args, config: dict) -> CommandResult:
    if args.only:
        verify = _section(config, "verify")
        verify["only"] = list(args.only)
        config = dict(config, verify=verify)
    report = run_verification_suite(config)
    return CommandResult("verify", report, report["passed"])


def cmd_verify_bernoulli(args, config: dict) -> CommandResult:
    bern_cfg = _section(config, "bernoulli")
    if args.q is None:
        cfg = dict(DEFAULT_VERIFY)
        cfg.update(_section(config, "verify"))
        passed, details = check_bernoulli_sum(config, cfg)
        return CommandResult("verify_bernoulli", {"passed": passed, **details}, passed)

    q = _float_list(args.q)
    s = args.s
    q_iter = iid_projection_iterative(
        q, s,
        tol=float(bern_cfg.get("tol", 1e-10)),
        max_applications=int(bern_cfg.get("max_applications", MAX_PHI_APPLICATIONS)),
    )
    q_direct = iid_projection_direct(q, s)
    crossing = verify_single_crossing(q, q_direct, s)
    payload = {
        "q": q,
        "s": s,
        "iterative": q_iter,
        "direct": q_direct,
        "single_crossing": crossing.ok,
        "crossing": crossing.crossing,
        "violation": crossing.violation,
    }
    passed = crossing.ok and abs(q_iter - q_direct) <= 1e-8
    return CommandResult("verify_bernoulli", payload, passed)


COMMANDS = {
    "gap-table": cmd_gap_table,
    "ear-bound": cmd_ear_bound,
    "worst-case": cmd_worst_case,
    "lower-bound": cmd_lower_bound,
    "matroid-demo": cmd_matroid_demo,
    "revenue": cmd_revenue,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "verify-bernoulli": cmd_verify_bernoulli,
}
