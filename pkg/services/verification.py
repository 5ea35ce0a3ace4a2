"""
验收套件：逐项运行各模块的性质检查，汇总为机器可读的报告

    {"passed": bool, "checks": [CheckResult...], "config": {...}}

单项检查抛出的 AuctionGapError 记为失败（带上错误码），不会中断其余检查。
"""

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Tuple

import numpy as np

from core.bernoulli_sum import iid_projection_direct, iid_projection_iterative, verify_single_crossing
from core.constants import DEFAULT_QUAD_TOL, KNOWN_EAR_AP_BOUNDS, KNOWN_GAP_VALUES, SUSPECT_C_K
from core.distributions import Instance, PointMass, Triangle, triangles_of
from core.errors import AuctionGapError
from core.gap_numerics import ar_ap_gap_lower, ear_ap_upper_small_k, gap_table, lb_integral
from core.instances import (
    WorstCaseIID,
    ar_of_worst_case,
    build_worst_case_iid,
    default_bracket,
    grow_triangle_lower_bound,
    matroid_demo,
    random_feasible_triangles,
    solve_worst_case_q,
)
from core.order_stats import brute_force_pmf, check_log_concavity, pbd_pmf
from core.revenue import (
    ap_revenue,
    ar_revenue,
    check_feasibility,
    group_partition,
    relaxed_constraint_check,
)
from .simulator import simulate_ap, simulate_ar

logger = logging.getLogger(__name__)

DEFAULT_VERIFY = {
    "gap_k_max": 24,
    "gap_entry_tol": 1e-3,
    "suspect_entry_tol": 2e-3,
    "pi2_tol": 1e-6,
    "sqrt_k_max": 1000,
    "lb_k_max": 200,
    "lb_integral_k_max": 20,
    "lb_integral_tol": 1e-8,
    "ear_tol": 1e-3,
    "bernoulli_trials": 1000,
    "bernoulli_n_max": 12,
    "bernoulli_agree_tol": 1e-8,
    "brute_force_n_max": 10,
    "logconcave_trials": 1000,
    "logconcave_n_max": 20,
    "worst_case_ks": [1, 2, 3],
    "worst_case_multipliers": [1, 4, 16],
    "worst_case_ap_points": 200,
    "worst_case_ap_tol": 1e-6,
    "worst_case_closed_form_tol": 1e-8,
    "worst_case_gap_n_factor": 256,
    "worst_case_gap_tol": 0.03,
    "lower_bound_ks": [1, 2],
    "lower_bound_slack": 0.1,
    "lower_bound_ap_tol": 1e-6,
    "matroid_k_max": 64,
    "grouping_trials": 100,
    "grouping_k_range": [4, 16],
    "monte_carlo_instances": 50,
    "monte_carlo_trials": 20000,
    "monte_carlo_n_max": 10,
    "monte_carlo_k_max": 4,
    "only": [],
}


@dataclass
class CheckResult:
    name: str
    passed: bool
    code: str = "ok"
    details: Dict[str, Any] = field(default_factory=dict)
    runtime_ms: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _verify_cfg(config: dict) -> Dict[str, Any]:
    cfg = dict(DEFAULT_VERIFY)
    user = config.get("verify")
    if isinstance(user, dict):
        cfg.update(user)
    return cfg


def _rng(config: dict, stream: int) -> np.random.Generator:
    seed = int(config.get("seed", 0))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))


# ---------- 单项检查：返回 (passed, details) ----------


def check_gap_table(config: dict, cfg: Dict[str, Any]) -> Tuple[bool, Dict[str, Any]]:
    reports = gap_table(int(cfg["gap_k_max"]), float(config.get("tol", DEFAULT_QUAD_TOL)), int(config.get("threads", 1)))
    mismatches = []
    for rep in reports:
        known = KNOWN_GAP_VALUES.get(rep.k)
        if known is None:
            continue
        tol = float(cfg["suspect_entry_tol"] if rep.k in SUSPECT_C_K else cfg["gap_entry_tol"])
        if abs(rep.gap - known[0]) > tol or abs(rep.c_k - known[1]) > tol:
            mismatches.append({"k": rep.k, "gap": rep.gap, "c_k": rep.c_k, "expected": list(known)})
    pi_err = abs(reports[0].gap - math.pi ** 2 / 6.0)
    passed = not mismatches and pi_err <= float(cfg["pi2_tol"])
    return passed, {"mismatches": mismatches, "pi2_error": pi_err}


def check_sqrt_k_bounds(config: dict, cfg: Dict[str, Any]) -> Tuple[bool, Dict[str, Any]]:
    reports = gap_table(int(cfg["sqrt_k_max"]), float(config.get("tol", DEFAULT_QUAD_TOL)), int(config.get("threads", 1)))
    bad = []
    for rep in reports:
        root = math.sqrt(rep.k)
        if not (1.0 + 0.1 / root - rep.quad_error <= rep.gap <= 1.0 + 2.0 / root + rep.quad_error):
            bad.append(rep.k)
    return not bad, {"violations": bad}


def check_lb_sandwich(config: dict, cfg: Dict[str, Any]) -> Tuple[bool, Dict[str, Any]]:
    reports = gap_table(int(cfg["lb_k_max"]), float(config.get("tol", DEFAULT_QUAD_TOL)), int(config.get("threads", 1)))
    bad_order, bad_floor, bad_integral = [], [], []
    for rep in reports:
        if rep.lb > rep.gap + rep.quad_error:
            bad_order.append(rep.k)
        if rep.lb < 1.0 + 1.0 / (10.0 * math.sqrt(rep.k)):
            bad_floor.append(rep.k)
    for k in range(1, int(cfg["lb_integral_k_max"]) + 1):
        diff = abs(ar_ap_gap_lower(k) - lb_integral(k))
        if diff > float(cfg["lb_integral_tol"]):
            bad_integral.append({"k": k, "diff": diff})
    passed = not (bad_order or bad_floor or bad_integral)
    return passed, {"lb_above_gap": bad_order, "lb_below_floor": bad_floor, "closed_form_vs_integral": bad_integral}


def check_ear_bounds(config: dict, cfg: Dict[str, Any]) -> Tuple[bool, Dict[str, Any]]:
    values = {k: ear_ap_upper_small_k(k) for k in (1, 2, 3)}
    passed = all(abs(values[k] - KNOWN_EAR_AP_BOUNDS[k]) <= float(cfg["ear_tol"]) for k in values)
    return passed, {"values": values}


def check_bernoulli_sum(config: dict, cfg: Dict[str, Any]) -> Tuple[bool, Dict[str, Any]]:
    rng = _rng(config, 5)
    disagreements, crossing_failures, pmf_failures = [], [], []
    for trial in range(int(cfg["bernoulli_trials"])):
        n = int(rng.integers(2, int(cfg["bernoulli_n_max"]) + 1))
        s = int(rng.integers(0, n))
        q = rng.uniform(0.02, 0.98, size=n)
        q_iter = iid_projection_iterative(q, s)
        q_direct = iid_projection_direct(q, s)
        if abs(q_iter - q_direct) > float(cfg["bernoulli_agree_tol"]):
            disagreements.append({"trial": trial, "iterative": q_iter, "direct": q_direct})
        result = verify_single_crossing(q, q_direct, s)
        if not result.ok:
            crossing_failures.append({"trial": trial, "violation": result.violation})
        if n <= int(cfg["brute_force_n_max"]):
            succ = 1.0 - q
            if np.max(np.abs(np.cumsum(pbd_pmf(succ)) - np.cumsum(brute_force_pmf(succ)))) > 1e-12:
                pmf_failures.append(trial)
    passed = not (disagreements or crossing_failures or pmf_failures)
    return passed, {
        "disagreements": disagreements[:10],
        "crossing_failures": crossing_failures[:10],
        "pmf_failures": pmf_failures[:10],
    }


def check_log_concave(config: dict, cfg: Dict[str, Any]) -> Tuple[bool, Dict[str, Any]]:
    rng = _rng(config, 6)
    failures = []
    for trial in range(int(cfg["logconcave_trials"])):
        n = int(rng.integers(1, int(cfg["logconcave_n_max"]) + 1))
        if not check_log_concavity(pbd_pmf(rng.uniform(0.0, 1.0, size=n))):
            failures.append(trial)
    counterexample_rejected = not check_log_concavity([0.4, 0.1, 0.5])
    return not failures and counterexample_rejected, {
        "failures": failures[:10],
        "counterexample_rejected": counterexample_rejected,
    }


def check_worst_case(config: dict, cfg: Dict[str, Any]) -> Tuple[bool, Dict[str, Any]]:
    quad_tol = float(config.get("tol", DEFAULT_QUAD_TOL))
    wc_cfg = config.get("worst_case", {}) if isinstance(config.get("worst_case"), dict) else {}
    details: Dict[str, Any] = {"ap_errors": {}, "closed_form_error": None, "sequences": {}, "gap_distance": {}}
    passed = True
    for k in cfg["worst_case_ks"]:
        k = int(k)
        xs = 1.0 / k + np.geomspace(1e-4, 100.0, int(cfg["worst_case_ap_points"]))
        ars = []
        for mult in cfg["worst_case_multipliers"]:
            n = k * int(mult)
            fvals = solve_worst_case_q(k, n, xs)
            ap_err = float(np.max(np.abs(WorstCaseIID(k, n, xs, fvals).ap_on_grid() - 1.0)))
            details["ap_errors"][f"k={k},n={n}"] = ap_err
            passed &= ap_err <= float(cfg["worst_case_ap_tol"])
            if k == 1:
                closed = np.maximum(1.0 - 1.0 / xs, 0.0) ** (1.0 / n)
                err = float(np.max(np.abs(fvals - closed)))
                details["closed_form_error"] = max(err, details["closed_form_error"] or 0.0)
                passed &= err <= float(cfg["worst_case_closed_form_tol"])
            ars.append(ar_of_worst_case(build_worst_case_iid(k, n, **wc_cfg), quad_tol))
        increasing = all(b >= a - 1e-9 for a, b in zip(ars, ars[1:]))
        details["sequences"][str(k)] = ars
        passed &= increasing
        big_n = int(cfg["worst_case_gap_n_factor"]) * k
        ar_big = ar_of_worst_case(build_worst_case_iid(k, big_n, **wc_cfg), quad_tol)
        gap = gap_table(k, quad_tol)[-1].gap
        details["gap_distance"][str(k)] = gap - ar_big
        passed &= abs(gap - ar_big) <= float(cfg["worst_case_gap_tol"])
    return bool(passed), details


def check_lower_bound(config: dict, cfg: Dict[str, Any]) -> Tuple[bool, Dict[str, Any]]:
    lb_cfg = config.get("lower_bound", {}) if isinstance(config.get("lower_bound"), dict) else {}
    quad_tol = float(config.get("tol", DEFAULT_QUAD_TOL))
    details: Dict[str, Any] = {}
    passed = True
    for k in cfg["lower_bound_ks"]:
        k = int(k)
        a, b = default_bracket(k, float(lb_cfg.get("bracket_n", 50.0)))
        target = gap_table(k, quad_tol)[-1].gap - float(cfg["lower_bound_slack"])
        _, history = grow_triangle_lower_bound(
            k, a, b, target,
            n_start=int(lb_cfg.get("n_start", 8)),
            n_cap=int(lb_cfg.get("n_cap", 4096)),
        )
        feasible = all(h["max_ap"] <= 1.0 + float(cfg["lower_bound_ap_tol"]) for h in history)
        reached = history[-1]["ar"] >= target
        details[str(k)] = {"target": target, "history": history, "feasible": feasible, "reached": reached}
        passed &= feasible and reached
    return bool(passed), details


def check_matroid(config: dict, cfg: Dict[str, Any]) -> Tuple[bool, Dict[str, Any]]:
    bad = []
    for k in range(1, int(cfg["matroid_k_max"]) + 1):
        demo = matroid_demo(k, k)
        if demo.ap_best > 1.0 or demo.ratio < demo.harmonic * (1.0 - 1e-12):
            bad.append(demo.to_dict())
    h4 = matroid_demo(8, 4).vcg_rev
    h4_ok = abs(h4 - 25.0 / 12.0) <= 1e-12
    return not bad and h4_ok, {"violations": bad, "h4": h4}


def check_grouping(config: dict, cfg: Dict[str, Any]) -> Tuple[bool, Dict[str, Any]]:
    rng = _rng(config, 10)
    k_lo, k_hi = (int(v) for v in cfg["grouping_k_range"])
    feasible_count, failures = 0, []
    for trial in range(int(cfg["grouping_trials"])):
        k = int(rng.integers(k_lo, k_hi + 1))
        n = int(rng.integers(k, 4 * k + 1))
        inst = random_feasible_triangles(rng, n, k)
        if not check_feasibility(inst).ok:
            continue
        feasible_count += 1
        summary = group_partition(triangles_of(inst), k)
        relaxed = relaxed_constraint_check(inst)
        if not (summary.bounds_hold() and relaxed):
            failures.append({"trial": trial, "k": k, "n": n, "bounds": summary.bounds(), "relaxed": relaxed})
    return not failures, {"feasible_instances": feasible_count, "failures": failures[:10]}


def _random_mixed_instance(rng: np.random.Generator, n_max: int, k_max: int) -> Instance:
    n = int(rng.integers(1, n_max + 1))
    k = int(rng.integers(1, k_max + 1))
    cdfs = []
    for _ in range(n):
        if rng.random() < 0.3:
            cdfs.append(PointMass(float(rng.uniform(0.1, 3.0))))
        else:
            cdfs.append(Triangle.of(float(rng.uniform(0.2, 4.0)), float(rng.uniform(0.05, 0.95))))
    return Instance(tuple(cdfs), k)


def check_monte_carlo(config: dict, cfg: Dict[str, Any]) -> Tuple[bool, Dict[str, Any]]:
    rng = _rng(config, 11)
    sim_cfg = config.get("simulation", {}) if isinstance(config.get("simulation"), dict) else {}
    multiplier = float(sim_cfg.get("ci_multiplier", 4.0))
    block_size = int(sim_cfg.get("block_size", 10_000))
    threads = int(config.get("threads", 1))
    trials = int(cfg["monte_carlo_trials"])
    seed = int(config.get("seed", 0))
    failures, count = [], 0
    for idx in range(int(cfg["monte_carlo_instances"])):
        inst = _random_mixed_instance(rng, int(cfg["monte_carlo_n_max"]), int(cfg["monte_carlo_k_max"]))
        top = inst.support_max
        for price in rng.uniform(0.05, top, size=3):
            for mech, analytic, simulate in (
                ("ap", ap_revenue, simulate_ap),
                ("ar", ar_revenue, simulate_ar),
            ):
                exact = analytic(inst, float(price))
                sim = simulate(inst, float(price), trials, seed + count, threads, block_size)
                count += 1
                if abs(sim.mean - exact) > max(multiplier * sim.stderr, 1e-6):
                    failures.append({"instance": idx, "mech": mech, "price": float(price), "exact": exact, "sim": sim.to_dict()})
    return not failures, {"comparisons": count, "failures": failures[:10]}


CHECKS: List[Tuple[str, Callable[[dict, Dict[str, Any]], Tuple[bool, Dict[str, Any]]]]] = [
    ("gap_table", check_gap_table),
    ("sqrt_k_bounds", check_sqrt_k_bounds),
    ("lb_sandwich", check_lb_sandwich),
    ("ear_small_k", check_ear_bounds),
    ("bernoulli_sum", check_bernoulli_sum),
    ("log_concavity", check_log_concave),
    ("worst_case_iid", check_worst_case),
    ("triangle_lower_bound", check_lower_bound),
    ("matroid", check_matroid),
    ("grouping", check_grouping),
    ("monte_carlo", check_monte_carlo),
]


def run_check(name: str, fn, config: dict, cfg: Dict[str, Any]) -> CheckResult:
    started = time.perf_counter()
    try:
        passed, details = fn(config, cfg)
        code = "ok" if passed else "failed"
    except AuctionGapError as e:
        passed, details, code = False, e.to_dict(), e.code
    runtime_ms = (time.perf_counter() - started) * 1000.0
    logger.info("检查 %s：%s (%.0f ms)", name, "通过" if passed else "失败", runtime_ms)
    return CheckResult(name=name, passed=bool(passed), code=code, details=details, runtime_ms=runtime_ms)


def run_verification_suite(config: dict) -> Dict[str, Any]:
    """按配置运行全部（或 verify.only 指定的）检查。"""
    cfg = _verify_cfg(config)
    only = set(cfg.get("only") or [])
    results = [run_check(name, fn, config, cfg) for name, fn in CHECKS if not only or name in only]
    return {
        "passed": all(r.passed for r in results),
        "checks": [r.to_dict() for r in results],
        "config": {"seed": config.get("seed"), "tol": config.get("tol"), "verify": cfg},
    }
