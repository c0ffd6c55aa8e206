import dataclasses
from typing import Any, Dict, List, Sequence

import pandas as pd

from src.core import deflators, dir_checks
from src.core.errors import DomainError
from src.core.markets import (
    DEFAULT_STEP,
    MarketModel,
    SavingsAccountKind,
    SavingsAccountSpec,
    VasicekParams,
    build_deterministic_emm_market,
    build_dir_violation_market,
    build_flat_market,
    build_min_exp_market,
    make_time_grid,
    market_from_vasicek,
    simulate_vasicek,
)
from src.utils.logger import log_error, log_info

MARKET_KINDS = ("vasicek", "dir-violation", "min-exp", "exp-neg-t2", "exp-t2", "flat")

_DETERMINISTIC_BUILDERS = {
    "dir-violation": lambda spec: build_dir_violation_market(),
    "min-exp": lambda spec: build_min_exp_market(),
    "exp-neg-t2": lambda spec: build_deterministic_emm_market(
        SavingsAccountSpec(SavingsAccountKind.EXP_NEG_T_SQUARED)),
    "exp-t2": lambda spec: build_deterministic_emm_market(
        SavingsAccountSpec(SavingsAccountKind.EXP_T_SQUARED)),
    "flat": lambda spec: build_flat_market(spec.get("rate", 0.03)),
}


@dataclasses.dataclass
class ExperimentResult:
    """What an experiment hands back to the runner: a JSON report, CSV tables and the asserted checks."""
    experiment: str
    report: Dict[str, Any]
    tables: Dict[str, pd.DataFrame] = dataclasses.field(default_factory=dict)
    checks: Dict[str, bool] = dataclasses.field(default_factory=dict)
    violations: List[str] = dataclasses.field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def build_market(spec: Dict[str, Any], horizon: float = 0.0) -> MarketModel:
    """
    Market from a spec such as {"kind": "vasicek", "r0": 1, "b": 1.5,
    "n_paths": 10000, "seed": 42}. Vasicek paths are simulated on [0, horizon].
    """
    kind = spec.get("kind")
    if kind == "vasicek":
        params = VasicekParams(float(spec.get("r0", 1.0)), float(spec.get("b", 1.5)))
        grid = make_time_grid(horizon, float(spec.get("step", DEFAULT_STEP)))
        ensemble = simulate_vasicek(params, grid, int(spec.get("n_paths", 10_000)),
                                    int(spec.get("seed", 0)))
        return market_from_vasicek(params, ensemble)
    if kind not in _DETERMINISTIC_BUILDERS:
        msg = f"Unknown market kind '{kind}'; expected one of {', '.join(MARKET_KINDS)}"
        log_error(msg)
        raise DomainError(msg)
    return _DETERMINISTIC_BUILDERS[kind](spec)


def _from_dir_report(name: str, report: dir_checks.DirExperimentReport) -> ExperimentResult:
    checks = {key: bool(check["passed"]) for key, check in report.checks.items()
              if check.get("applicable", True)}
    checks["verdict_consistent_with_hypothesis"] = not report.theorem_violated
    return ExperimentResult(name, report.to_dict(), {"quantiles.csv": report.quantile_frame()},
                            checks, report.property_violations())


# ── Handlers ─────────────────────────────────────────────────────────────────

def dir_yields(market: Dict[str, Any], s: float, t: float, maturities: Sequence[float],
               delta: float = 0.05) -> ExperimentResult:
    model = build_market(market, horizon=t)
    report = dir_checks.yield_dir_experiment(model, s, t, maturities, delta)
    return _from_dir_report("dir-yields", report)


def dir_forwards(market: Dict[str, Any], s: float, s_prime: float, t: float, t_prime: float,
                 maturities: Sequence[float], delta: float = 0.05) -> ExperimentResult:
    model = build_market(market, horizon=max(s_prime, t_prime))
    report = dir_checks.forward_dir_experiment(model, s, s_prime, t, t_prime, maturities, delta)
    return _from_dir_report("dir-forwards", report)


def equivalence(market: Dict[str, Any], t: float, t_prime: float, maturities: Sequence[float],
                delta: float = 0.05) -> ExperimentResult:
    model = build_market(market, horizon=t_prime)
    report = dir_checks.forward_yield_equivalence_experiment(model, t, t_prime, maturities, delta)
    return _from_dir_report("equivalence", report)


def deflator_check(market: Dict[str, Any], s: float, t: float, T: float) -> ExperimentResult:
    """
    Deterministic markets: exact monotonicity over the lattice of {0, s, t, T}.
    Vasicek: unconditional expectations at 0, s and t with the measured
    allowance, and the restart check at (s, t, T). Both: sampled positivity.
    """
    model = build_market(market, horizon=t)
    times = sorted({0.0, float(s), float(t)})
    if model.is_deterministic:
        report = deflators.check_deterministic_supermartingale(
            model, deflators.supermartingale_lattice(times + [float(T)]))
    else:
        ensemble = model.ensemble
        allowance = 0.0
        if (ensemble.time_grid.size - 1) % 2 == 0 and ensemble.time_grid.size > 1:
            coarse = market_from_vasicek(model.params, ensemble.coarsen(2))
            allowance = deflators.measure_discretization_allowance(model, coarse, times, T)
        report = deflators.check_martingale_unconditional(model, times, T, allowance)
        report.extend(deflators.check_supermartingale_restart(
            model, s, t, T, n_paths=int(market.get("n_paths", 10_000)),
            seed=int(market.get("seed", 0)), step=float(market.get("step", DEFAULT_STEP))))
    report.extend(deflators.check_deflator_positivity(model, times))

    checks = {f"{c.kind.value}@s={c.s},t={c.t},T={c.T}": c.passed for c in report.checks}
    violations = [f"{c.kind.value} failed at s={c.s}, t={c.t}, T={c.T}" for c in report.failures()]
    table = pd.DataFrame([c.to_dict() for c in report.checks],
                         columns=["kind", "s", "t", "T", "estimate", "se", "bound", "pass"])
    log_info(f"Deflator check on '{model.identifier}': {'pass' if report.passed else 'FAIL'}")
    return ExperimentResult("deflator-check", report.to_dict(), {"deflator_checks.csv": table},
                            checks, violations)


def arbitrage(market: Dict[str, Any], t: float, T: float) -> ExperimentResult:
    model = build_market(market)
    certificate = dir_checks.arbitrage_scan(model, t, T)
    golsch = dir_checks.golsch_condition_check(model, t, T)
    report = {
        "market": model.identifier,
        "certificate": certificate.to_dict() if certificate else None,
        "payoff": certificate.payoff if certificate else None,
        "price_condition": golsch.to_dict(),
    }
    violations = []
    if certificate is not None and not certificate.zero_cost:
        violations.append(f"arbitrage portfolio entry cost {certificate.entry_cost:.3g} is not zero")
    checks = {"zero_cost": not violations, "price_condition": golsch.passed}
    return ExperimentResult("arbitrage", report,
                            {"arbitrage.csv": dir_checks.arbitrage_table(model, [(t, T)])},
                            checks, violations)


def tail_bound(market: Dict[str, Any], s: float, t: float, T: float,
               ells: Sequence[float] = (1.0, 2.0, 3.0)) -> ExperimentResult:
    model = build_market(market, horizon=t)
    table = deflators.markov_tail_check(model, s, t, T, ells)
    checks = {f"ell={row.ell:g}": bool(row.passed) for row in table.itertuples()}
    violations = [f"Markov bound exceeded at ell={ell:g}" for ell, ok in
                  zip(table["ell"], table["passed"]) if not ok]
    report = {"market": model.identifier, "s": s, "t": t, "T": T,
              "rows": table.to_dict(orient="records")}
    return ExperimentResult("tail-bound", report, {"tail.csv": table}, checks, violations)


def default_handlers() -> Dict[str, Any]:
    return {
        "dir-yields": dir_yields,
        "dir-forwards": dir_forwards,
        "equivalence": equivalence,
        "deflator-check": deflator_check,
        "arbitrage": arbitrage,
        "tail-bound": tail_bound,
    }

