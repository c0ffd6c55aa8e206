"""
Finite-sample surrogates for boundedness in probability and plimsup.

A StatisticFamily holds one sample per maturity, paired by scenario. Verdicts
are read off the per-maturity tail quantiles over a maturity grid. They are
engineering heuristics: a finite grid can never prove an asymptotic
statement, which is why the verdict has a third state, "inconclusive".
"""

import dataclasses
import math
from enum import Enum
from typing import Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.core.errors import DomainError
from src.utils.logger import log_error, log_info

DEFAULT_DELTA = 0.05
DEFAULT_TAIL_FRACTION = 0.5
DEFAULT_SLACK_FACTOR = 2.0
MIN_GRID_POINTS = 6
NOISE_SE = 4.0

RATES = {
    "one": lambda T: np.ones_like(T),
    "inverse_t": lambda T: 1.0 / T,
    "inverse_sqrt_t": lambda T: 1.0 / np.sqrt(T),
}

Rate = Union[str, Sequence[float], np.ndarray]


class Direction(str, Enum):
    ABOVE = "above"
    BELOW = "below"
    TWO_SIDED = "two_sided"


class Verdict(str, Enum):
    BOUNDED = "bounded"
    UNBOUNDED = "unbounded"
    INCONCLUSIVE = "inconclusive"


def _fail(msg: str):
    log_error(msg)
    raise DomainError(msg)


def _check_level(q: float, name: str = "q"):
    if not 0.0 < q < 1.0:
        _fail(f"{name} must lie in (0, 1), got {q}")


def _sample(sample) -> np.ndarray:
    x = np.asarray(sample, dtype=float).ravel()
    if x.size == 0:
        _fail("Sample is empty")
    return x


def _rank(n: int, q: float) -> int:
    # 1-based rank ceil(q n); the epsilon keeps q*n = 95.00000000000001 at 95
    return min(n, max(1, math.ceil(q * n - 1e-9)))


# ── Sample statistics ────────────────────────────────────────────────────────

def empirical_tail_prob(sample, ell: float) -> Tuple[float, float]:
    """Fraction of the sample strictly above ell, with its binomial standard error."""
    x = _sample(sample)
    p_hat = float(np.count_nonzero(x > ell)) / x.size
    return p_hat, math.sqrt(p_hat * (1.0 - p_hat) / x.size)


def empirical_quantile(sample, q: float) -> float:
    """The ceil(q n)-th order statistic; no interpolation."""
    _check_level(q)
    x = np.sort(_sample(sample))
    return float(x[_rank(x.size, q) - 1])


def _sorted_quantile_se(x_sorted: np.ndarray, q: float) -> float:
    n = x_sorted.size
    half_width = math.sqrt(n * q * (1.0 - q))
    lo = _rank(n, q - half_width / n) if q - half_width / n > 0 else 1
    hi = _rank(n, q + half_width / n) if q + half_width / n < 1 else n
    return float(x_sorted[hi - 1] - x_sorted[lo - 1]) / 2.0


def quantile_standard_error(sample, q: float) -> float:
    """
    Half the distance between the order statistics one binomial standard
    deviation (sqrt(n q (1 - q)) ranks) either side of the quantile.
    """
    _check_level(q)
    return _sorted_quantile_se(np.sort(_sample(sample)), q)


# ── Families and curves ──────────────────────────────────────────────────────

@dataclasses.dataclass(frozen=True, eq=False)
class StatisticFamily:
    """
    samples[j, i] is the statistic at maturities[j] in scenario i.
    """
    maturities: np.ndarray
    samples: np.ndarray
    label: str = "xi"

    def __post_init__(self):
        maturities = np.asarray(self.maturities, dtype=float)
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        if maturities.ndim != 1 or samples.ndim != 2 or samples.shape[0] != maturities.size:
            _fail(f"Family needs one sample row per maturity, got {samples.shape} for "
                  f"{maturities.size} maturities")
        if samples.shape[1] == 0:
            _fail("Family samples are empty")
        if np.any(np.diff(maturities) <= 0):
            _fail("Family maturities must be strictly increasing")
        object.__setattr__(self, "maturities", maturities)
        object.__setattr__(self, "samples", samples)

    @property
    def n(self) -> int:
        return self.samples.shape[1]

    def scaled(self, rate: Rate) -> np.ndarray:
        alpha = resolve_rate(rate, self.maturities)
        return self.samples / alpha[:, None]


def resolve_rate(rate: Rate, maturities: np.ndarray) -> np.ndarray:
    if isinstance(rate, str):
        if rate not in RATES:
            _fail(f"Unknown rate '{rate}'; expected one of {sorted(RATES)}")
        alpha = RATES[rate](np.asarray(maturities, dtype=float))
    else:
        alpha = np.asarray(rate, dtype=float)
        if alpha.shape != np.shape(maturities):
            _fail("Rate sequence must match the maturity grid")
    if np.any(~np.isfinite(alpha)) or np.any(alpha <= 0):
        _fail("Rate must be finite and strictly positive on the grid")
    return alpha


@dataclasses.dataclass(frozen=True, eq=False)
class TailQuantileCurve:
    delta: float
    maturities: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    upper_se: np.ndarray
    lower_se: np.ndarray
    mean: np.ndarray
    se: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "T": self.maturities,
            "q_low": self.lower,
            "q_high": self.upper,
            "mean": self.mean,
            "se": self.se,
        })


def tail_quantile_curve(family: StatisticFamily, delta: float = DEFAULT_DELTA,
                        rate: Rate = "one") -> TailQuantileCurve:
    """Per-maturity q_delta and q_{1-delta} of xi^T / alpha^T, plus mean and SE."""
    _check_level(delta, "delta")
    scaled = family.scaled(rate)
    ordered = np.sort(scaled, axis=1)
    n = family.n
    upper_rank, lower_rank = _rank(n, 1.0 - delta), _rank(n, delta)
    return TailQuantileCurve(
        delta=delta,
        maturities=family.maturities,
        upper=ordered[:, upper_rank - 1],
        lower=ordered[:, lower_rank - 1],
        upper_se=np.array([_sorted_quantile_se(row, 1.0 - delta) for row in ordered]),
        lower_se=np.array([_sorted_quantile_se(row, delta) for row in ordered]),
        mean=scaled.mean(axis=1),
        se=scaled.std(axis=1, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(family.maturities.size),
    )


# ── Verdicts ─────────────────────────────────────────────────────────────────

@dataclasses.dataclass(frozen=True, eq=False)
class BoundednessVerdict:
    direction: Direction
    rate: str
    verdict: Verdict
    evidence: TailQuantileCurve
    delta: float
    tail_fraction: float
    slack_factor: float
    threshold: Optional[float] = None
    tail_max: Optional[float] = None
    reference: Optional[float] = None
    components: Dict[str, "BoundednessVerdict"] = dataclasses.field(default_factory=dict)

    @property
    def is_bounded(self) -> bool:
        return self.verdict == Verdict.BOUNDED

    def to_dict(self) -> dict:
        out = {
            "direction": self.direction.value,
            "rate": self.rate,
            "verdict": self.verdict.value,
            "decision": {
                "delta": self.delta,
                "tail_fraction": self.tail_fraction,
                "slack_factor": self.slack_factor,
                "noise_se": NOISE_SE,
            },
            "threshold": self.threshold,
            "tail_max": self.tail_max,
            "reference": self.reference,
            "note": "finite-grid heuristic; thresholds are engineering choices",
        }
        if self.components:
            out["components"] = {k: v.to_dict() for k, v in self.components.items()}
        return out


def _tail_size(m: int, tail_fraction: float) -> int:
    return max(1, math.ceil(tail_fraction * m - 1e-9))


def _one_sided(quantiles: np.ndarray, quantile_se: np.ndarray, tail_fraction: float,
               slack_factor: float) -> Tuple[Verdict, float, float, float]:
    tail = _tail_size(quantiles.size, tail_fraction)
    tail_max = float(np.max(quantiles[-tail:]))
    reference = float(np.median(quantiles))
    threshold = slack_factor * max(abs(reference), 1.0)
    if tail_max <= threshold:
        return Verdict.BOUNDED, threshold, tail_max, reference
    steps = np.diff(quantiles[-3:])
    noise = NOISE_SE * np.maximum(quantile_se[-3:][1:], quantile_se[-3:][:-1])
    if np.all(steps > noise):
        return Verdict.UNBOUNDED, threshold, tail_max, reference
    return Verdict.INCONCLUSIVE, threshold, tail_max, reference


def op_bound_verdict(family: StatisticFamily, rate: Rate = "one", delta: float = DEFAULT_DELTA,
                     direction: Union[Direction, str] = Direction.ABOVE,
                     tail_fraction: float = DEFAULT_TAIL_FRACTION,
                     slack_factor: float = DEFAULT_SLACK_FACTOR) -> BoundednessVerdict:
    """
    Decide whether xi^T / alpha^T looks bounded in probability over the grid.

    Above: c_j = q_{1-delta}(xi / alpha) at each maturity. Bounded when the tail
    maximum of c_j stays within slack_factor * max(|median c_j|, 1); unbounded
    when it does not and the last three c_j increase by more than their
    sampling noise; inconclusive otherwise. Below mirrors through -xi, and
    two-sided is bounded only when both sides are.
    """
    direction = Direction(direction)
    _check_level(delta, "delta")
    if family.maturities.size < MIN_GRID_POINTS:
        _fail(f"Need at least {MIN_GRID_POINTS} maturities for a verdict, got {family.maturities.size}")
    if not 0.0 < tail_fraction <= 1.0 or not slack_factor > 0:
        _fail(f"Bad decision parameters tail_fraction={tail_fraction}, slack_factor={slack_factor}")
    rate_name = rate if isinstance(rate, str) else "custom"
    curve = tail_quantile_curve(family, delta, rate)

    if direction == Direction.TWO_SIDED:
        above = op_bound_verdict(family, rate, delta, Direction.ABOVE, tail_fraction, slack_factor)
        below = op_bound_verdict(family, rate, delta, Direction.BELOW, tail_fraction, slack_factor)
        if above.is_bounded and below.is_bounded:
            verdict = Verdict.BOUNDED
        elif Verdict.UNBOUNDED in (above.verdict, below.verdict):
            verdict = Verdict.UNBOUNDED
        else:
            verdict = Verdict.INCONCLUSIVE
        return BoundednessVerdict(direction, rate_name, verdict, curve, delta, tail_fraction,
                                  slack_factor, components={"above": above, "below": below})

    scaled = family.scaled(rate)
    if direction == Direction.BELOW:
        scaled = -scaled
    ordered = np.sort(scaled, axis=1)
    rank = _rank(family.n, 1.0 - delta)
    quantiles = ordered[:, rank - 1]
    quantile_se = np.array([_sorted_quantile_se(row, 1.0 - delta) for row in ordered])

    verdict, threshold, tail_max, reference = _one_sided(quantiles, quantile_se,
                                                         tail_fraction, slack_factor)
    log_info(f"Verdict {family.label} [{direction.value}, rate={rate_name}, delta={delta}]: "
             f"{verdict.value} (tail max {tail_max:.6g}, threshold {threshold:.6g})")
    return BoundednessVerdict(direction, rate_name, verdict, curve, delta, tail_fraction,
                              slack_factor, threshold, tail_max, reference)


# ── plimsup bands ────────────────────────────────────────────────────────────

@dataclasses.dataclass(frozen=True)
class TailBand:
    delta: float
    value: float
    se: float
    maturity: float


def _band(family: StatisticFamily, deltas: Iterable[float], tail_fraction: float,
          mirror: bool) -> Dict[float, TailBand]:
    if not 0.0 < tail_fraction <= 1.0:
        _fail(f"tail_fraction must lie in (0, 1], got {tail_fraction}")
    samples = -family.samples if mirror else family.samples
    ordered = np.sort(samples, axis=1)
    tail = _tail_size(family.maturities.size, tail_fraction)
    bands = {}
    for delta in deltas:
        _check_level(delta, "delta")
        q = 1.0 - delta
        quantiles = ordered[-tail:, _rank(family.n, q) - 1]
        j = int(np.argmax(quantiles))
        row = ordered[-tail:][j]
        value, se = float(quantiles[j]), _sorted_quantile_se(row, q)
        if mirror:
            value = -value
        bands[delta] = TailBand(delta, value, se, float(family.maturities[-tail:][j]))
    return bands


def plimsup_band(family: StatisticFamily, deltas: Iterable[float] = (DEFAULT_DELTA,),
                 tail_fraction: float = DEFAULT_TAIL_FRACTION) -> Dict[float, TailBand]:
    """For each delta, the largest q_{1-delta}(xi^T) over the tail of the grid."""
    return _band(family, deltas, tail_fraction, mirror=False)


def pliminf_band(family: StatisticFamily, deltas: Iterable[float] = (DEFAULT_DELTA,),
                 tail_fraction: float = DEFAULT_TAIL_FRACTION) -> Dict[float, TailBand]:
    """Mirror image of plimsup_band: -plimsup(-xi)."""
    return _band(family, deltas, tail_fraction, mirror=True)
