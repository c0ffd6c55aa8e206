"""
Theorem-level experiments on a market: the refined DIR statements for yields
and forward rates, the forward/yield equivalence, the classical DIR
comparison of long-yield bands, and the explicit one-period arbitrage.

Event verdicts are market-level. Every instantiated market has its
boundedness events equal to the whole space or empty, so one verdict per
(market, time) stands in for event membership; reports say so.
"""

import dataclasses
import json
import math
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.core.asymptotics import (
    DEFAULT_DELTA,
    DEFAULT_SLACK_FACTOR,
    DEFAULT_TAIL_FRACTION,
    NOISE_SE,
    BoundednessVerdict,
    Direction,
    StatisticFamily,
    TailBand,
    Verdict,
    op_bound_verdict,
    plimsup_band,
)
from src.core.errors import DomainError, PreconditionError
from src.core.markets import MarketModel, VasicekMarket
from src.core.term_structure import (
    IDENTITY_RTOL,
    equivalence_identity_residual,
    forward_rate_from_log_prices,
)
from src.utils.io import to_jsonable
from src.utils.logger import log_error, log_info, log_warning

EVENT_SCOPE_NOTE = ("event verdicts are market-level: each market's boundedness events "
                    "are the whole space or empty, no per-scenario membership is computed")
NO_DEFLATOR_NOTE = "no deflator declared; theorem hypothesis unmet"
ZERO_COST_ATOL = 1e-12
MAX_LOG_FLOAT = math.log(np.finfo(float).max)


def _fail(msg: str, exc=DomainError):
    log_error(msg)
    raise exc(msg)


def geometric_grid(start: float, factor: float, count: int) -> np.ndarray:
    """start, start*factor, ..., start*factor^(count-1)."""
    if not start > 0 or not factor > 1 or int(count) != count or count < 1:
        _fail(f"Bad geometric grid: start={start}, factor={factor}, count={count}")
    return float(start) * float(factor) ** np.arange(int(count))


DEFAULT_MATURITIES = geometric_grid(25.0, 2.0, 6)


def _maturities(maturities, after: float) -> np.ndarray:
    grid = np.asarray(maturities, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        _fail("Maturity grid must be a nonempty 1-D sequence")
    if grid[0] <= after:
        _fail(f"Maturities must all exceed {after}, smallest is {grid[0]}")
    return grid


def _stack(rows: List[np.ndarray], n: int) -> np.ndarray:
    return np.vstack([np.broadcast_to(row, (n,)) for row in rows])


# ── Statistic families ───────────────────────────────────────────────────────

def yield_family(market: MarketModel, t: float, maturities=DEFAULT_MATURITIES) -> StatisticFamily:
    """R_t^T for every maturity, paired by scenario."""
    grid = _maturities(maturities, t)
    rows = [market.yields(t, T) for T in grid]
    return StatisticFamily(grid, _stack(rows, market.n_scenarios), label=f"R_{t:g}")


def _forward_rows(market: MarketModel, t: float, t_prime: float, grid: np.ndarray) -> List[np.ndarray]:
    log_short = market.log_prices(t, t_prime)
    return [np.asarray(forward_rate_from_log_prices(log_short, market.log_prices(t, T), t, t_prime, T))
            for T in grid]


def forward_family(market: MarketModel, t: float, t_prime: float,
                   maturities=DEFAULT_MATURITIES) -> StatisticFamily:
    """F_{t,t'}^T for every maturity, paired by scenario."""
    if not 0 <= t < t_prime:
        _fail(f"Need 0 <= t < t', got t={t}, t'={t_prime}")
    grid = _maturities(maturities, t_prime)
    rows = _forward_rows(market, t, t_prime, grid)
    return StatisticFamily(grid, _stack(rows, market.n_scenarios), label=f"F_{t:g},{t_prime:g}")


def yield_boundedness_events(market: MarketModel, t: float, maturities=DEFAULT_MATURITIES,
                             delta: float = DEFAULT_DELTA) -> Dict[str, BoundednessVerdict]:
    """
    Market-level verdicts on R_t^T: "below" stands for the event where long
    yields are bounded below, "above" and "two_sided" likewise.
    """
    family = yield_family(market, t, maturities)
    verdict = op_bound_verdict(family, "one", delta, Direction.TWO_SIDED)
    return {
        "below": verdict.components["below"],
        "above": verdict.components["above"],
        "two_sided": verdict,
    }


def monotone_events_check(market: MarketModel, times: Sequence[float],
                          maturities=DEFAULT_MATURITIES,
                          delta: float = DEFAULT_DELTA) -> List[dict]:
    """
    For each s <= t from times: bounded-below at s must imply bounded-below
    at t. A pair holds unless s is bounded and t is not.
    """
    times = sorted(float(x) for x in times)
    below = {x: yield_boundedness_events(market, x, maturities, delta)["below"] for x in times}
    results = []
    for i, s in enumerate(times):
        for t in times[i + 1:]:
            holds = not (below[s].is_bounded and not below[t].is_bounded)
            results.append({"s": s, "t": t, "below_s": below[s].verdict.value,
                            "below_t": below[t].verdict.value, "holds": holds})
            if not holds:
                log_warning(f"Bounded-below yields at s={s} but not at t={t} on '{market.identifier}'")
    return results


def yield_decomposition_residual(market: MarketModel, s: float, t: float, T: float) -> float:
    """
    Largest relative residual over scenarios of
    (T - t)(R_s - R_t) = -(t - s) R_s + log(L_t / L_s) - log(Y_t / Y_s).
    """
    if not market.has_deflator:
        _fail(f"Market '{market.identifier}' declares no deflator", PreconditionError)
    if not 0 <= s <= t < T:
        _fail(f"Need 0 <= s <= t < T, got s={s}, t={t}, T={T}")
    log_p_s, log_p_t = market.log_prices(s, T), market.log_prices(t, T)
    log_y_s, log_y_t = market.log_deflators(s), market.log_deflators(t)
    r_s, r_t = -log_p_s / (T - s), -log_p_t / (T - t)
    lhs = (T - t) * (r_s - r_t)
    rhs = -(t - s) * r_s + ((log_y_t + log_p_t) - (log_y_s + log_p_s)) - (log_y_t - log_y_s)
    scale = np.maximum.reduce([np.ones_like(lhs), np.abs(log_p_s), np.abs(log_p_t),
                               np.abs(log_y_s), np.abs(log_y_t)])
    return float(np.max(np.abs(lhs - rhs) / scale))


# ── Reports ──────────────────────────────────────────────────────────────────

def _band_dict(bands: Dict[float, TailBand]) -> List[dict]:
    return [dataclasses.asdict(band) for band in bands.values()]


def _market_metadata(market: MarketModel) -> dict:
    meta = {
        "identifier": market.identifier,
        "character": market.character.value,
        "n_scenarios": market.n_scenarios,
        "has_deflator": market.has_deflator,
    }
    if isinstance(market, VasicekMarket):
        grid = market.ensemble.time_grid
        meta.update({
            "r0": market.params.r0,
            "b": market.params.b,
            "master_seed": market.ensemble.master_seed,
            "horizon": float(grid[-1]),
            "grid_points": int(grid.size),
        })
    return meta


@dataclasses.dataclass
class DirExperimentReport:
    market: dict
    kind: str
    times: Dict[str, float]
    maturities: np.ndarray
    statistic: str
    verdict: BoundednessVerdict
    hypothesis: Dict[str, BoundednessVerdict] = dataclasses.field(default_factory=dict)
    bands: Dict[str, Dict[float, TailBand]] = dataclasses.field(default_factory=dict)
    diagnostics: dict = dataclasses.field(default_factory=dict)
    checks: Dict[str, dict] = dataclasses.field(default_factory=dict)
    notes: List[str] = dataclasses.field(default_factory=list)

    @property
    def hypothesis_holds(self) -> bool:
        return self.market["has_deflator"] and all(v.is_bounded for v in self.hypothesis.values())

    @property
    def theorem_violated(self) -> bool:
        """Hypothesis met but the statistic looks unbounded."""
        return (self.kind in ("yields", "forwards") and self.hypothesis_holds
                and self.verdict.verdict == Verdict.UNBOUNDED)

    def property_violations(self) -> List[str]:
        """Asserted properties that failed in this run."""
        violations = [f"{name} failed" for name, check in self.checks.items()
                      if check.get("applicable", True) and not check["passed"]]
        if self.theorem_violated:
            violations.append(f"{self.statistic} unbounded although the theorem hypothesis holds")
        return violations

    def quantile_frame(self) -> pd.DataFrame:
        return self.verdict.evidence.to_frame()

    def to_dict(self) -> dict:
        return {
            "market": self.market,
            "experiment": self.kind,
            "times": self.times,
            "maturities": self.maturities,
            "statistic": self.statistic,
            "verdict": self.verdict.to_dict(),
            "hypothesis": {k: v.to_dict() for k, v in self.hypothesis.items()},
            "hypothesis_holds": self.hypothesis_holds,
            "bands": {k: _band_dict(v) for k, v in self.bands.items()},
            "diagnostics": self.diagnostics,
            "checks": self.checks,
            "violations": self.property_violations(),
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(to_jsonable(self.to_dict()), indent=4, allow_nan=False)


def _limit_diagnostics(family: StatisticFamily) -> dict:
    """Moments of the statistic at the largest maturity."""
    x = family.samples[-1]
    n = x.size
    mean = float(x.mean())
    if n < 2:
        return {"T": float(family.maturities[-1]), "mean": mean, "mean_se": 0.0,
                "variance": 0.0, "variance_se": 0.0, "n": n}
    variance = float(x.var(ddof=1))
    fourth = float(np.mean((x - mean) ** 4))
    return {
        "T": float(family.maturities[-1]),
        "mean": mean,
        "mean_se": math.sqrt(variance / n),
        "variance": variance,
        "variance_se": math.sqrt(max(fourth - variance ** 2, 0.0) / n),
        "n": n,
    }


def _classical_dir_check(bands_s: Dict[float, TailBand], bands_t: Dict[float, TailBand],
                         applicable: bool, slack_factor: float = DEFAULT_SLACK_FACTOR) -> dict:
    """
    Band of R_s against band of R_t. The bands are read at a finite maturity,
    where R_s - R_t is only O(1/T), so the slack carries slack_factor / T on
    top of the sampling noise.
    """
    rows = []
    for delta, band_s in bands_s.items():
        band_t = bands_t[delta]
        noise = NOISE_SE * max(band_s.se, band_t.se)
        finite_maturity = slack_factor / min(band_s.maturity, band_t.maturity)
        slack = noise + finite_maturity
        rows.append({"delta": delta, "band_s": band_s.value, "band_t": band_t.value,
                     "noise": noise, "finite_maturity": finite_maturity, "slack": slack,
                     "passed": bool(band_s.value <= band_t.value + slack)})
    return {"applicable": applicable, "passed": all(r["passed"] for r in rows), "rows": rows}


def _decision(tail_fraction: float, slack_factor: float) -> dict:
    return {"tail_fraction": tail_fraction, "slack_factor": slack_factor}


# ── Experiments ──────────────────────────────────────────────────────────────

def yield_dir_experiment(market: MarketModel, s: float, t: float, maturities=DEFAULT_MATURITIES,
                         delta: float = DEFAULT_DELTA,
                         tail_fraction: float = DEFAULT_TAIL_FRACTION,
                         slack_factor: float = DEFAULT_SLACK_FACTOR) -> DirExperimentReport:
    """
    xi^T = T (R_s^T - R_t^T) checked for boundedness above. With a deflator
    and yields at t bounded below this is the O_P(1/T) domination of R_s
    by R_t; the report also carries both yield bands for the classical
    comparison plimsup R_s <= plimsup R_t.
    """
    if not 0 <= s <= t:
        _fail(f"Need 0 <= s <= t, got s={s}, t={t}")
    grid = _maturities(maturities, t)
    log_info(f"Yield DIR experiment on '{market.identifier}': s={s}, t={t}, "
             f"{grid.size} maturities up to {grid[-1]:g}")

    family_s = yield_family(market, s, grid)
    family_t = yield_family(market, t, grid)
    xi = StatisticFamily(grid, grid[:, None] * (family_s.samples - family_t.samples),
                         label="T*(R_s - R_t)")
    verdict = op_bound_verdict(xi, "one", delta, Direction.ABOVE, tail_fraction, slack_factor)
    below_t = op_bound_verdict(family_t, "one", delta, Direction.BELOW, tail_fraction, slack_factor)

    bands_s = plimsup_band(family_s, (delta,), tail_fraction)
    bands_t = plimsup_band(family_t, (delta,), tail_fraction)
    diagnostics = _limit_diagnostics(xi)
    diagnostics["difference_at_largest_T"] = float(np.mean(family_s.samples[-1] - family_t.samples[-1]))

    report = DirExperimentReport(
        market=_market_metadata(market), kind="yields", times={"s": s, "t": t},
        maturities=grid, statistic=xi.label, verdict=verdict,
        hypothesis={"yields_bounded_below_at_t": below_t},
        bands={"R_s": bands_s, "R_t": bands_t}, diagnostics=diagnostics,
        notes=[EVENT_SCOPE_NOTE],
    )
    report.diagnostics["decision"] = _decision(tail_fraction, slack_factor)
    report.checks["classical_dir"] = _classical_dir_check(bands_s, bands_t, report.hypothesis_holds,
                                                          slack_factor)
    if market.has_deflator and s < t:
        residual = max(yield_decomposition_residual(market, s, t, T) for T in grid)
        report.checks["decomposition_identity"] = {"residual": residual,
                                                   "passed": residual <= IDENTITY_RTOL}
    if not market.has_deflator:
        report.notes.append(NO_DEFLATOR_NOTE)
    log_info(f"Yield DIR verdict on '{market.identifier}': {verdict.verdict.value} "
             f"(hypothesis {'holds' if report.hypothesis_holds else 'unmet'})")
    return report


def forward_yield_equivalence_experiment(market: MarketModel, t: float, t_prime: float,
                                         maturities=DEFAULT_MATURITIES,
                                         delta: float = DEFAULT_DELTA,
                                         tail_fraction: float = DEFAULT_TAIL_FRACTION,
                                         slack_factor: float = DEFAULT_SLACK_FACTOR
                                         ) -> DirExperimentReport:
    """
    xi^T = T (F_{t,t'}^T - R_t^T), two-sided. Bounding xi from one side is
    equivalent to bounding the long yield R_t^T from the same side; both
    verdicts are recorded with their agreement per direction. The identity
    (T - t')(F - R_t^T) = (t' - t)(R_t^T - R_t^{t'}) is checked per scenario.
    """
    if not 0 <= t < t_prime:
        _fail(f"Need 0 <= t < t', got t={t}, t'={t_prime}")
    grid = _maturities(maturities, t_prime)
    log_info(f"Equivalence experiment on '{market.identifier}': t={t}, t'={t_prime}")

    log_short = market.log_prices(t, t_prime)
    forwards, residual = [], 0.0
    for T in grid:
        log_long = market.log_prices(t, T)
        forwards.append(np.asarray(forward_rate_from_log_prices(log_short, log_long, t, t_prime, T)))
        residual = max(residual, float(np.max(
            equivalence_identity_residual(log_short, log_long, t, t_prime, T))))
    family_r = yield_family(market, t, grid)
    family_f = StatisticFamily(grid, _stack(forwards, market.n_scenarios))
    xi = StatisticFamily(grid, grid[:, None] * (family_f.samples - family_r.samples),
                         label="T*(F_t,t' - R_t)")
    verdict = op_bound_verdict(xi, "one", delta, Direction.TWO_SIDED, tail_fraction, slack_factor)
    yields = op_bound_verdict(family_r, "one", delta, Direction.TWO_SIDED, tail_fraction, slack_factor)

    agreement = {
        "below": verdict.components["below"].verdict == yields.components["below"].verdict,
        "above": verdict.components["above"].verdict == yields.components["above"].verdict,
        "two_sided": verdict.verdict == yields.verdict,
    }
    report = DirExperimentReport(
        market=_market_metadata(market), kind="equivalence", times={"t": t, "t_prime": t_prime},
        maturities=grid, statistic=xi.label, verdict=verdict,
        hypothesis={"yields_at_t": yields},
        bands={"F": plimsup_band(family_f, (delta,), tail_fraction),
               "R_t": plimsup_band(family_r, (delta,), tail_fraction)},
        diagnostics=_limit_diagnostics(xi),
        checks={"equivalence_identity": {"residual": residual, "passed": residual <= IDENTITY_RTOL},
                "verdict_agreement": {"applicable": False, "passed": all(agreement.values()),
                                      **agreement}},
        notes=[EVENT_SCOPE_NOTE],
    )
    report.diagnostics["decision"] = _decision(tail_fraction, slack_factor)
    if not all(agreement.values()):
        report.notes.append("forward and yield verdicts disagree in some direction; "
                            "finite-grid verdicts can differ near the thresholds")
    log_info(f"Equivalence verdict on '{market.identifier}': {verdict.verdict.value}, "
             f"identity residual {residual:.2e}")
    return report


def forward_dir_experiment(market: MarketModel, s: float, s_prime: float, t: float, t_prime: float,
                           maturities=DEFAULT_MATURITIES, delta: float = DEFAULT_DELTA,
                           tail_fraction: float = DEFAULT_TAIL_FRACTION,
                           slack_factor: float = DEFAULT_SLACK_FACTOR) -> DirExperimentReport:
    """
    xi^T = T (F_{s,s'}^T - F_{t,t'}^T), bounded above when a deflator exists
    and yields are bounded above at s and below at t.
    """
    if not (0 <= s <= t and s < s_prime and t < t_prime):
        _fail(f"Need s <= t, s < s', t < t', got s={s}, s'={s_prime}, t={t}, t'={t_prime}")
    grid = _maturities(maturities, max(s_prime, t_prime))
    log_info(f"Forward DIR experiment on '{market.identifier}': "
             f"(s, s', t, t') = ({s}, {s_prime}, {t}, {t_prime})")

    family_s = forward_family(market, s, s_prime, grid)
    family_t = forward_family(market, t, t_prime, grid)
    xi = StatisticFamily(grid, grid[:, None] * (family_s.samples - family_t.samples),
                         label="T*(F_s,s' - F_t,t')")
    verdict = op_bound_verdict(xi, "one", delta, Direction.ABOVE, tail_fraction, slack_factor)
    above_s = op_bound_verdict(yield_family(market, s, grid), "one", delta, Direction.ABOVE,
                               tail_fraction, slack_factor)
    below_t = op_bound_verdict(yield_family(market, t, grid), "one", delta, Direction.BELOW,
                               tail_fraction, slack_factor)

    diagnostics = _limit_diagnostics(xi)
    diagnostics["difference_at_largest_T"] = float(np.mean(family_s.samples[-1] - family_t.samples[-1]))
    diagnostics["decision"] = _decision(tail_fraction, slack_factor)
    report = DirExperimentReport(
        market=_market_metadata(market), kind="forwards",
        times={"s": s, "s_prime": s_prime, "t": t, "t_prime": t_prime},
        maturities=grid, statistic=xi.label, verdict=verdict,
        hypothesis={"yields_bounded_above_at_s": above_s, "yields_bounded_below_at_t": below_t},
        bands={"F_s": plimsup_band(family_s, (delta,), tail_fraction),
               "F_t": plimsup_band(family_t, (delta,), tail_fraction)},
        diagnostics=diagnostics, notes=[EVENT_SCOPE_NOTE],
    )
    if not market.has_deflator:
        report.notes.append(NO_DEFLATOR_NOTE)
    log_info(f"Forward DIR verdict on '{market.identifier}': {verdict.verdict.value} "
             f"(hypothesis {'holds' if report.hypothesis_holds else 'unmet'})")
    return report


# ── Arbitrage ────────────────────────────────────────────────────────────────

@dataclasses.dataclass(frozen=True)
class ArbitrageCertificate:
    market: str
    t: float
    short_maturity: float
    T: float
    long_units: float
    short_units: float
    entry_cost: float
    payoff: float

    @property
    def zero_cost(self) -> bool:
        return abs(self.entry_cost) <= ZERO_COST_ATOL

    def to_dict(self) -> dict:
        return {
            "market": self.market,
            "entry_time": self.t,
            "maturities": [self.short_maturity, self.T],
            "positions": {
                f"long bond maturing {self.T:g}": self.long_units,
                f"short bond maturing {self.short_maturity:g}": self.short_units,
            },
            "entry_cost": self.entry_cost,
            "payoff_at_t_plus_1": self.payoff,
            "zero_cost": self.zero_cost,
        }


@dataclasses.dataclass(frozen=True)
class GolschCheck:
    market: str
    t: float
    T: float
    log_lhs: float
    log_rhs: float
    passed: bool
    witness: Optional[Tuple[float, float, float]] = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _deterministic_window(market: MarketModel, t: float, T: float):
    if not market.is_deterministic:
        _fail(f"Market '{market.identifier}' is stochastic; this check needs a deterministic market",
              PreconditionError)
    if not (math.isfinite(t) and math.isfinite(T)) or t < 0 or T < t + 2:
        _fail(f"Need 0 <= t and T >= t + 2, got t={t}, T={T}")


def _exp_difference(log_a: float, log_b: float) -> float:
    """exp(log_a) - exp(log_b) without overflow in the terms; +-inf when the result is out of range."""
    if log_a == log_b:
        return 0.0
    hi, lo, sign = (log_a, log_b, 1.0) if log_a > log_b else (log_b, log_a, -1.0)
    log_magnitude = hi + math.log(-math.expm1(lo - hi))
    if log_magnitude > MAX_LOG_FLOAT:
        return sign * math.inf
    return sign * math.exp(log_magnitude)


def arbitrage_scan(market: MarketModel, t: float, T: float) -> Optional[ArbitrageCertificate]:
    """
    Long exp(T - t - 1) bonds maturing at T, short one bond maturing at t + 1,
    unwound at t + 1. Returns a certificate when the payoff is positive.
    """
    _deterministic_window(market, t, T)
    log_units = T - t - 1.0
    entry_cost = _exp_difference(log_units + market.log_price(0, t, T),
                                 market.log_price(0, t, t + 1.0))
    # log of (payoff + 1); its sign decides before anything is exponentiated
    log_gross = log_units + market.log_price(0, t + 1.0, T)
    payoff = math.expm1(log_gross) if log_gross <= MAX_LOG_FLOAT else math.inf
    if log_gross <= 0:
        log_info(f"No arbitrage on '{market.identifier}' at t={t}, T={T} (payoff {payoff:.3g})")
        return None
    certificate = ArbitrageCertificate(market.identifier, float(t), float(t) + 1.0, float(T),
                                       math.exp(min(log_units, MAX_LOG_FLOAT)), 1.0, entry_cost, payoff)
    if not certificate.zero_cost:
        log_warning(f"Arbitrage portfolio on '{market.identifier}' is not costless: {entry_cost:.3g}")
    log_info(f"Arbitrage on '{market.identifier}' at t={t}, T={T}: payoff {payoff:.12g}")
    return certificate


def golsch_condition_check(market: MarketModel, t: float, T: float,
                           tolerance: float = IDENTITY_RTOL) -> GolschCheck:
    """P_t^T >= P_t^{t+1} P_{t+1}^T, compared in log space."""
    _deterministic_window(market, t, T)
    log_lhs = market.log_price(0, t, T)
    log_rhs = market.log_price(0, t, t + 1.0) + market.log_price(0, t + 1.0, T)
    passed = log_lhs >= log_rhs - tolerance * max(1.0, abs(log_rhs))
    witness = None if passed else (float(t), float(t) + 1.0, float(T))
    return GolschCheck(market.identifier, float(t), float(T), log_lhs, log_rhs, bool(passed), witness)


def arbitrage_table(market: MarketModel, entries: Iterable[Tuple[float, float]]) -> pd.DataFrame:
    """Arbitrage and price-condition results over (t, T) pairs, one row each."""
    rows = []
    for t, T in entries:
        certificate = arbitrage_scan(market, t, T)
        golsch = golsch_condition_check(market, t, T)
        rows.append({
            "t": float(t), "T": float(T),
            "entry_cost": certificate.entry_cost if certificate else float("nan"),
            "payoff": certificate.payoff if certificate else float("nan"),
            "arbitrage": certificate is not None,
            "condition_holds": golsch.passed,
        })
    return pd.DataFrame(rows, columns=["t", "T", "entry_cost", "payoff", "arbitrage", "condition_holds"])
