"""
Checks that a market's declared deflator Y is a strictly positive
supermartingale deflator, i.e. that L^T = Y P^T is a supermartingale.

The supermartingale property is conditional and cannot be verified from
samples alone. What is checked are necessary conditions:
  - exact monotonicity of L^T for deterministic markets,
  - E[L_t^T] = P_0^T for Q = P markets (unconditional expectations),
  - E[L_t^T / Y_s | r_s] = P_s^T(r_s) on restarted Vasicek paths,
  - the Markov bound P[L_t / L_s > e^l] <= e^-l used by the yield theorem.
"""

import dataclasses
import json
import math
from enum import Enum
from itertools import combinations_with_replacement
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import norm

from src.core.errors import DomainError, PreconditionError
from src.core.markets import (
    DEFAULT_STEP,
    MarketModel,
    ScenarioEnsemble,
    VasicekMarket,
    VasicekParams,
    make_time_grid,
    market_from_vasicek,
    simulate_vasicek,
    vasicek_short_rate_moments,
    vasicek_yield,
)
from src.utils.io import to_jsonable
from src.utils.logger import log_error, log_info, log_warning

STAT_TOLERANCE_SE = 4.0
MARKOV_TOLERANCE_SE = 3.0
EXACT_RTOL = 1e-12
DEFAULT_RESTART_QUANTILES = (0.05, 0.5, 0.95)

MarketFactory = Callable[[VasicekParams, ScenarioEnsemble], MarketModel]
Triple = Tuple[float, float, float]


class CheckKind(str, Enum):
    EXACT_MONOTONICITY = "exact-monotonicity"
    UNCONDITIONAL = "unconditional-expectation"
    RESTART = "restart-conditional"
    POSITIVITY = "sampled-minimum-positivity"


def _fail(msg: str, exc=DomainError):
    log_error(msg)
    raise exc(msg)


def _require_deflator(market: MarketModel):
    if not market.has_deflator:
        _fail(f"Market '{market.identifier}' declares no deflator", PreconditionError)


def _check_triple(s: Optional[float], t: float, T: float):
    if s is not None and not 0 <= s < t:
        _fail(f"Need 0 <= s < t, got s={s}, t={t}")
    if not 0 <= t <= T:
        _fail(f"Need 0 <= t <= T, got t={t}, T={T}")


def _mean_and_se(values: np.ndarray) -> Tuple[float, float]:
    if values.size < 2:
        return float(values.mean()), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


# ── Report types ─────────────────────────────────────────────────────────────

@dataclasses.dataclass(frozen=True, eq=False)
class DeflatedPriceSample:
    """log L_t^T = log Y_t + log P_t^T for every scenario."""
    t: float
    T: float
    log_values: np.ndarray

    @classmethod
    def from_market(cls, market: MarketModel, t: float, T: float) -> "DeflatedPriceSample":
        _require_deflator(market)
        _check_triple(None, t, T)
        log_values = market.log_deflators(t) + market.log_prices(t, T)
        if not np.all(np.isfinite(log_values)):
            _fail(f"Deflated prices of '{market.identifier}' are not finite at t={t}, T={T}")
        return cls(t, T, log_values)

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_values)


@dataclasses.dataclass(frozen=True)
class DeflatorCheck:
    kind: CheckKind
    s: Optional[float]
    t: float
    T: float
    estimate: float
    se: float
    bound: float
    passed: bool
    target: Optional[float] = None
    note: str = ""

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind.value,
            "s": self.s,
            "t": self.t,
            "T": self.T,
            "estimate": self.estimate,
            "se": self.se,
            "bound": self.bound,
            "pass": self.passed,
        }
        if self.target is not None:
            out["target"] = self.target
        if self.note:
            out["note"] = self.note
        return out


@dataclasses.dataclass
class DeflatorReport:
    market: str
    checks: List[DeflatorCheck] = dataclasses.field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failures(self) -> List[DeflatorCheck]:
        return [check for check in self.checks if not check.passed]

    def extend(self, other: "DeflatorReport") -> "DeflatorReport":
        self.checks.extend(other.checks)
        return self

    def to_dict(self) -> dict:
        return {
            "market": self.market,
            "passed": self.passed,
            "checks": [check.to_dict() for check in self.checks],
        }

    def to_json(self) -> str:
        return json.dumps(to_jsonable(self.to_dict()), indent=4, allow_nan=False)


# ── Deterministic markets ────────────────────────────────────────────────────

def supermartingale_lattice(times: Iterable[float]) -> List[Triple]:
    """All (s, t, T) drawn from times with s < t <= T, in lexicographic order."""
    grid = sorted(set(float(x) for x in times))
    if grid and grid[0] < 0:
        _fail(f"Lattice times must be nonnegative, got {grid[0]}")
    return [(s, t, T) for s, t, T in combinations_with_replacement(grid, 3) if s < t <= T]


def _monotone_check(market: MarketModel, s: float, t: float, T: float) -> DeflatorCheck:
    log_l_s = market.log_deflator(0, s) + market.log_price(0, s, T)
    log_l_t = market.log_deflator(0, t) + market.log_price(0, t, T)
    bound = log_l_s + EXACT_RTOL * max(1.0, abs(log_l_s))
    return DeflatorCheck(CheckKind.EXACT_MONOTONICITY, s, t, T, estimate=log_l_t, se=0.0,
                         bound=bound, passed=bool(log_l_t <= bound),
                         note="log-space comparison log L_t <= log L_s")


def check_deterministic_supermartingale(market: MarketModel,
                                        triples: Iterable[Triple]) -> DeflatorReport:
    """
    A deterministic supermartingale is a nonincreasing function, so each
    triple checks L_t^T <= L_s^T exactly (up to rounding in log space).
    """
    if not market.is_deterministic:
        _fail(f"Market '{market.identifier}' is stochastic; exact monotonicity needs a "
              "deterministic market", PreconditionError)
    _require_deflator(market)
    report = DeflatorReport(market.identifier)
    for s, t, T in triples:
        _check_triple(s, t, T)
        report.checks.append(_monotone_check(market, s, t, T))
    failed = len(report.failures())
    log_info(f"Monotonicity of '{market.identifier}': {len(report.checks) - failed} passed, "
             f"{failed} failed")
    return report


def find_supermartingale_violation(market: MarketModel, times: Iterable[float]) -> Optional[Triple]:
    """First lattice triple on which L^T increases, or None."""
    report = check_deterministic_supermartingale(market, supermartingale_lattice(times))
    failures = report.failures()
    if not failures:
        return None
    first = failures[0]
    log_info(f"Supermartingale violation on '{market.identifier}' at "
             f"(s, t, T) = ({first.s}, {first.t}, {first.T})")
    return first.s, first.t, first.T


# ── Expectation checks ───────────────────────────────────────────────────────

def _deflated_mean(market: MarketModel, t: float, T: float) -> Tuple[float, float]:
    return _mean_and_se(DeflatedPriceSample.from_market(market, t, T).values)


def measure_discretization_allowance(fine_market: MarketModel, coarse_market: MarketModel,
                                     t_values: Union[float, Iterable[float]], T: float) -> float:
    """
    Largest |m(t) at step h/2 - m(t) at step h| over t_values, where the two
    markets share their paths and differ only in the integration step.
    """
    t_values = [float(t_values)] if np.isscalar(t_values) else list(t_values)
    allowance = 0.0
    for t in t_values:
        fine, _ = _deflated_mean(fine_market, t, T)
        coarse, _ = _deflated_mean(coarse_market, t, T)
        allowance = max(allowance, abs(fine - coarse))
    log_info(f"Discretization allowance for '{fine_market.identifier}' at T={T}: {allowance:.3e}")
    return allowance


def check_martingale_unconditional(market: MarketModel, t_values: Iterable[float], T: float,
                                   allowance: float = 0.0,
                                   tolerance_se: float = STAT_TOLERANCE_SE) -> DeflatorReport:
    """
    For Q = P markets Y P^T is a true martingale, so the path mean of L_t^T
    estimates P_0^T at every t. Passes when |m(t) - P_0^T| <= k SE + allowance.
    """
    _require_deflator(market)
    if not allowance >= 0:
        _fail(f"Discretization allowance must be nonnegative, got {allowance}")
    target, _ = _deflated_mean(market, 0.0, T)
    report = DeflatorReport(market.identifier)
    for t in t_values:
        _check_triple(None, t, T)
        estimate, se = _deflated_mean(market, t, T)
        bound = tolerance_se * se + allowance + EXACT_RTOL * target
        report.checks.append(DeflatorCheck(
            CheckKind.UNCONDITIONAL, None, float(t), float(T), estimate, se, bound,
            passed=bool(abs(estimate - target) <= bound), target=target,
        ))
    for check in report.failures():
        log_warning(f"Martingale check failed on '{market.identifier}' at t={check.t}, T={T}: "
                    f"{check.estimate:.6g} vs {target:.6g} (bound {check.bound:.3g})")
    return report


def _bucket_seed(seed: int, bucket: int) -> int:
    return int(np.random.SeedSequence([seed, bucket]).generate_state(1, dtype=np.uint64)[0])


def check_supermartingale_restart(market: Union[MarketModel, VasicekParams], s: float, t: float,
                                  T: float, quantiles: Sequence[float] = DEFAULT_RESTART_QUANTILES,
                                  n_paths: int = 10_000, seed: int = 0,
                                  step: float = DEFAULT_STEP,
                                  market_factory: MarketFactory = market_from_vasicek,
                                  tolerance_se: float = STAT_TOLERANCE_SE) -> DeflatorReport:
    """
    Conditional check E[Y_t P_t^T / Y_s | r_s] <= P_s^T(r_s).

    The Vasicek state at s is the short rate alone, so each bucket value r_s
    (a quantile of its Normal law) restarts the model with r0 = r_s on
    [0, t - s]. The restarted market is compared against the closed-form
    P_s^T(r_s); the allowance is the h vs 2h difference on the same paths.
    """
    if isinstance(market, VasicekMarket):
        params, identifier = market.params, market.identifier
    elif isinstance(market, VasicekParams):
        params, identifier = market, f"vasicek(r0={market.r0:g},b={market.b:g})"
    else:
        identifier = getattr(market, "identifier", type(market).__name__)
        _fail(f"Market '{identifier}' is not restartable from a short-rate state",
              PreconditionError)
    _check_triple(s, t, T)

    mean_s, var_s = vasicek_short_rate_moments(params, s)
    horizon, remaining = t - s, T - s
    grid = make_time_grid(horizon, step)
    report = DeflatorReport(identifier)
    log_info(f"Restart check on '{identifier}' at s={s}, t={t}, T={T}: "
             f"{len(quantiles)} buckets x {n_paths} paths")

    for k, q in enumerate(quantiles):
        if not 0 < q < 1:
            _fail(f"Bucket quantile must lie in (0, 1), got {q}")
        r_s = float(mean_s + math.sqrt(var_s) * norm.ppf(q))
        restart = VasicekParams(r_s, params.b)
        ensemble = simulate_vasicek(restart, grid, n_paths, _bucket_seed(seed, k))
        shifted = market_factory(restart, ensemble)
        target = math.exp(-remaining * vasicek_yield(r_s, 0.0, remaining, params.b))

        estimate, se = _deflated_mean(shifted, horizon, remaining)
        allowance = 0.0
        if grid.size > 1 and (grid.size - 1) % 2 == 0:
            coarse = market_factory(restart, ensemble.coarsen(2))
            allowance = measure_discretization_allowance(shifted, coarse, horizon, remaining)

        bound = tolerance_se * se + allowance + EXACT_RTOL * target
        # supermartingale: only an excess over P_s^T is a violation, but
        # Q = P makes this an equality, so both sides are checked
        report.checks.append(DeflatorCheck(
            CheckKind.RESTART, float(s), float(t), float(T), estimate, se, bound,
            passed=bool(abs(estimate - target) <= bound), target=target,
            note=f"r_s={r_s:.6g} (quantile {q:g})",
        ))
    for check in report.failures():
        log_warning(f"Restart check failed on '{identifier}' ({check.note}): "
                    f"{check.estimate:.6g} vs {check.target:.6g}")
    return report


def check_deflator_positivity(market: MarketModel, times: Iterable[float]) -> DeflatorReport:
    """Sampled minimum of Y over the given times is strictly positive."""
    _require_deflator(market)
    times = [float(x) for x in times]
    if not times:
        _fail("Positivity check needs at least one time")
    log_minimum = min(float(np.min(market.log_deflators(x))) for x in times)
    passed = math.isfinite(log_minimum)
    report = DeflatorReport(market.identifier, [DeflatorCheck(
        CheckKind.POSITIVITY, None, min(times), max(times), estimate=log_minimum, se=0.0,
        bound=-math.inf, passed=passed, note="minimum of log Y over sampled times",
    )])
    return report


# ── Markov tail bound ────────────────────────────────────────────────────────

def markov_tail_check(market: MarketModel, s: float, t: float, T: float,
                      ells: Sequence[float] = (1.0, 2.0, 3.0),
                      tolerance_se: float = MARKOV_TOLERANCE_SE) -> pd.DataFrame:
    """
    Y P^T being a positive supermartingale, E[L_t / L_s] <= 1 and Markov's
    inequality gives P[L_t / L_s > e^l] <= e^-l. Each row compares the
    empirical frequency with that bound plus tolerance_se binomial SEs.
    """
    _check_triple(s, t, T)
    log_ratio = (DeflatedPriceSample.from_market(market, t, T).log_values
                 - DeflatedPriceSample.from_market(market, s, T).log_values)
    n = log_ratio.size
    rows = []
    for ell in ells:
        if not ell >= 0:
            _fail(f"Tail level must be nonnegative, got {ell}")
        bound = math.exp(-ell)
        threshold = bound + tolerance_se * math.sqrt(bound * (1.0 - bound) / n)
        p_hat = float(np.count_nonzero(log_ratio > ell)) / n
        rows.append({"ell": float(ell), "p_hat": p_hat, "bound": bound,
                     "threshold": threshold, "passed": bool(p_hat <= threshold)})
    table = pd.DataFrame(rows, columns=["ell", "p_hat", "bound", "threshold", "passed"])
    log_info(f"Markov tail check on '{market.identifier}' (s={s}, t={t}, T={T}): "
             f"{int(table['passed'].sum())}/{len(table)} rows pass")
    return table
