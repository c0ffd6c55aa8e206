"""
DIR Laboratory: Experiment Profiler
===================================
Measures wall-clock time for each stage of the experiment pipeline:
  1. Vasicek ensemble simulation (the dominant cost)
  2. Statistic families and boundedness verdicts
  3. Deflator checks (unconditional, restart, Markov tail)
  4. Deterministic markets (arbitrage scan, monotonicity lattice)

Run with:
    python scripts/profile_experiments.py [--paths 10000] [--seed 42]

Results are printed as a formatted table and written to scripts/profile_report.json.
"""

import argparse
import json
import os
import sys
import time
from datetime import datetime

# ── ensure project root is on the path ──────────────────────────────────────
ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, ROOT)

# ── colour helpers (no external deps) ───────────────────────────────────────
GREEN  = "\033[92m"
YELLOW = "\033[93m"
RED    = "\033[91m"
BOLD   = "\033[1m"
RESET  = "\033[0m"

def colour(ms: float, warn=1000, bad=10000) -> str:
    if ms < warn:
        return f"{GREEN}{ms:9.1f} ms{RESET}"
    if ms < bad:
        return f"{YELLOW}{ms:9.1f} ms{RESET}"
    return f"{RED}{ms:9.1f} ms{RESET}"

def banner(title: str):
    print(f"\n{BOLD}{'─'*60}{RESET}")
    print(f"{BOLD}  {title}{RESET}")
    print(f"{BOLD}{'─'*60}{RESET}")

def timer(label: str, fn, *args, **kwargs):
    """Run fn(*args, **kwargs), return (result, elapsed_ms)."""
    t0 = time.perf_counter()
    result = fn(*args, **kwargs)
    elapsed_ms = (time.perf_counter() - t0) * 1000
    print(f"  {'·'} {label:<46} {colour(elapsed_ms)}")
    return result, elapsed_ms


# ── individual stage benchmarks ─────────────────────────────────────────────

def bench_simulation(paths: int, seed: int):
    banner("Stage 1 · Vasicek Simulation")
    from src.core.markets import VasicekParams, make_time_grid, market_from_vasicek, simulate_vasicek

    params = VasicekParams(1.0, 1.5)
    ensemble, ms_short = timer(f"simulate_vasicek(horizon=2, {paths} paths)",
                               simulate_vasicek, params, make_time_grid(2.0), paths, seed)
    _, ms_long = timer(f"simulate_vasicek(horizon=10, {paths} paths)",
                       simulate_vasicek, params, make_time_grid(10.0), paths, seed)
    return market_from_vasicek(params, ensemble), {
        "simulate_h2_ms": ms_short,
        "simulate_h10_ms": ms_long,
    }


def bench_verdicts(market):
    banner("Stage 2 · Families and Verdicts")
    from src.core.dir_checks import (
        DEFAULT_MATURITIES,
        forward_dir_experiment,
        forward_yield_equivalence_experiment,
        yield_dir_experiment,
        yield_family,
    )

    results = {}
    _, results["yield_family_ms"] = timer("yield_family(t=2)", yield_family, market, 2.0)
    _, results["yield_dir_ms"] = timer("yield_dir_experiment(s=1, t=2)",
                                       yield_dir_experiment, market, 1.0, 2.0, DEFAULT_MATURITIES)
    _, results["equivalence_ms"] = timer("forward_yield_equivalence_experiment(1, 2)",
                                         forward_yield_equivalence_experiment, market, 1.0, 2.0)
    _, results["forward_dir_ms"] = timer("forward_dir_experiment(1, 1.5, 1.5, 2)",
                                         forward_dir_experiment, market, 1.0, 1.5, 1.5, 2.0)
    return results


def bench_deflators(market, paths: int, seed: int):
    banner("Stage 3 · Deflator Checks")
    from src.core.deflators import (
        check_martingale_unconditional,
        check_supermartingale_restart,
        markov_tail_check,
    )

    results = {}
    _, results["unconditional_ms"] = timer("check_martingale_unconditional(t<=2, T=5)",
                                           check_martingale_unconditional, market, [0.0, 1.0, 2.0], 5.0)
    _, results["restart_ms"] = timer("check_supermartingale_restart(1, 2, 6)",
                                     check_supermartingale_restart, market, 1.0, 2.0, 6.0,
                                     n_paths=paths, seed=seed)
    _, results["markov_ms"] = timer("markov_tail_check(1, 2, 10)", markov_tail_check,
                                    market, 1.0, 2.0, 10.0)
    return results


def bench_deterministic():
    banner("Stage 4 · Deterministic Markets")
    from src.core.deflators import find_supermartingale_violation
    from src.core.dir_checks import arbitrage_scan
    from src.core.markets import build_dir_violation_market, build_min_exp_market, with_deflator

    results = {}
    _, results["arbitrage_ms"] = timer("arbitrage_scan(min-exp, 0, 3)",
                                       arbitrage_scan, build_min_exp_market(), 0.0, 3.0)
    trial = with_deflator(build_dir_violation_market(), lambda t: 0.0)
    lattice = [0.25 * k for k in range(17)]
    _, results["lattice_scan_ms"] = timer("find_supermartingale_violation(17 times)",
                                          find_supermartingale_violation, trial, lattice)
    return results


# ── summary table ────────────────────────────────────────────────────────────

def print_summary(all_results: dict):
    banner("Summary: Bottleneck Report")

    entries = [(k, v) for k, v in all_results.items() if k.endswith("_ms")]
    print(f"\n  {'Stage':<44} {'Time':>12}")
    print(f"  {'─'*44} {'─'*12}")
    for label, val in entries:
        print(f"  {label:<44} {colour(val)}")

    if entries:
        top = sorted(entries, key=lambda x: x[1], reverse=True)[:3]
        print(f"\n{BOLD}  Top bottlenecks:{RESET}")
        for rank, (label, val) in enumerate(top, 1):
            print(f"    {rank}. {label}: {val:.0f} ms")


# ── main ─────────────────────────────────────────────────────────────────────

def main():
    parser = argparse.ArgumentParser(description="Profile the DIR laboratory experiments.")
    parser.add_argument("--paths", type=int, default=10_000, help="Monte Carlo paths (default: 10000).")
    parser.add_argument("--seed", type=int, default=42, help="Master seed (default: 42).")
    args = parser.parse_args()

    print(f"\n{BOLD}DIR Laboratory: Experiment Profiler{RESET}")
    print(f"Timestamp: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    print(f"Paths    : {args.paths}")

    all_results = {"timestamp": datetime.now().isoformat(), "paths": args.paths, "seed": args.seed}

    market = None
    try:
        market, timings = bench_simulation(args.paths, args.seed)
        all_results.update(timings)
    except Exception as e:
        print(f"  ERROR in simulation bench: {e}")

    if market is not None:
        try:
            all_results.update(bench_verdicts(market))
        except Exception as e:
            print(f"  ERROR in verdict bench: {e}")
        try:
            all_results.update(bench_deflators(market, args.paths, args.seed))
        except Exception as e:
            print(f"  ERROR in deflator bench: {e}")

    try:
        all_results.update(bench_deterministic())
    except Exception as e:
        print(f"  ERROR in deterministic bench: {e}")

    print_summary(all_results)

    report_path = os.path.join(ROOT, "scripts", "profile_report.json")
    with open(report_path, "w") as f:
        json.dump(all_results, f, indent=2)
    print(f"\n  Report saved → {report_path}\n")


if __name__ == "__main__":
    main()
