"""
Market zoo: every bond market used by the experiments.

Markets expose log-prices as the primitive, since several deterministic
examples have prices of the form exp(T^2 - t^2) that overflow doubles long
before the maturity grids used here end. Deterministic markets carry a single
scenario; the Vasicek market carries one scenario per simulated path.
"""

import dataclasses
from abc import ABC, abstractmethod
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Tuple, Union

import numpy as np
import pandas as pd

from src.core.errors import DomainError, PreconditionError
from src.utils.io import write_csv_atomic
from src.utils.logger import log_error, log_info, log_latency

DEFAULT_STEP = 1.0 / 64.0
_GRID_ATOL = 1e-9

LogPriceFn = Callable[[float, float], float]
LogDeflatorFn = Callable[[float], float]


class MarketCharacter(str, Enum):
    DETERMINISTIC = "deterministic"
    STOCHASTIC = "stochastic"


def _fail(msg: str, exc=DomainError):
    log_error(msg)
    raise exc(msg)


def _check_window(t: float, T: float):
    if not (np.isfinite(t) and np.isfinite(T)) or t < 0 or T < t:
        _fail(f"Need 0 <= t <= T, got t={t}, T={T}")


class MarketModel(ABC):
    """
    A collection of bond price processes P^T indexed by maturity.

    Subclasses provide all-scenario vectors; the scalar accessors are derived.
    """

    identifier: str
    character: MarketCharacter

    @property
    @abstractmethod
    def n_scenarios(self) -> int:
        ...

    @property
    @abstractmethod
    def has_deflator(self) -> bool:
        ...

    @abstractmethod
    def log_prices(self, t: float, T: float) -> np.ndarray:
        """log P_t^T for every scenario, shape (n_scenarios,)."""

    @abstractmethod
    def log_deflators(self, t: float) -> np.ndarray:
        """log Y_t for every scenario; PreconditionError when no deflator is declared."""

    @property
    def is_deterministic(self) -> bool:
        return self.character == MarketCharacter.DETERMINISTIC

    def log_price(self, scenario: int, t: float, T: float) -> float:
        return float(self.log_prices(t, T)[self._scenario(scenario)])

    def log_deflator(self, scenario: int, t: float) -> float:
        return float(self.log_deflators(t)[self._scenario(scenario)])

    def yields(self, t: float, T: float) -> np.ndarray:
        if T <= t:
            _fail(f"Yield undefined for T <= t (t={t}, T={T})")
        return -self.log_prices(t, T) / (T - t)

    def _scenario(self, scenario: int) -> int:
        # deterministic markets answer the same for every scenario index
        if self.is_deterministic:
            return 0
        if not 0 <= scenario < self.n_scenarios:
            _fail(f"Scenario {scenario} outside [0, {self.n_scenarios})")
        return scenario


# ── Deterministic markets ────────────────────────────────────────────────────

@dataclasses.dataclass(frozen=True)
class DeterministicMarket(MarketModel):
    identifier: str
    log_price_fn: LogPriceFn
    log_deflator_fn: Optional[LogDeflatorFn] = None
    character: MarketCharacter = MarketCharacter.DETERMINISTIC

    @property
    def n_scenarios(self) -> int:
        return 1

    @property
    def has_deflator(self) -> bool:
        return self.log_deflator_fn is not None

    def log_prices(self, t: float, T: float) -> np.ndarray:
        _check_window(t, T)
        if T == t:
            return np.zeros(1)
        return np.array([float(self.log_price_fn(float(t), float(T)))])

    def log_deflators(self, t: float) -> np.ndarray:
        if self.log_deflator_fn is None:
            _fail(f"Market '{self.identifier}' declares no deflator", PreconditionError)
        if not np.isfinite(t) or t < 0:
            _fail(f"Deflator time must be nonnegative, got {t}")
        return np.array([float(self.log_deflator_fn(float(t)))])


def _dir_violation_log_price(t: float, T: float) -> float:
    return 0.0 if t < 1.0 else T * T - t * t


def _min_exp_log_price(t: float, T: float) -> float:
    return min(0.0, 1.0 - (T - t))


def _neg_t(t: float) -> float:
    return -t


def build_dir_violation_market() -> MarketModel:
    """Prices 1 before time 1 and exp(T^2 - t^2) afterwards; no deflator exists."""
    return DeterministicMarket("dir-violation", _dir_violation_log_price)


def build_min_exp_market() -> MarketModel:
    """P_t^T = min{1, exp(1 - (T - t))} with the deflator Y_t = exp(-t)."""
    return DeterministicMarket("min-exp", _min_exp_log_price, _neg_t)


def build_flat_market(rate: float) -> MarketModel:
    if not np.isfinite(rate):
        _fail(f"Flat rate must be finite, got {rate}")
    rate = float(rate)
    return DeterministicMarket(
        f"flat(r={rate:g})",
        lambda t, T: -rate * (T - t),
        lambda t: -rate * t,
    )


def with_deflator(market: MarketModel, log_deflator: LogDeflatorFn) -> MarketModel:
    """Attach a trial deflator to a deterministic market."""
    if not isinstance(market, DeterministicMarket):
        _fail(f"Trial deflators only attach to deterministic markets, not '{market.identifier}'",
              PreconditionError)
    return dataclasses.replace(market, log_deflator_fn=log_deflator)


# ── Savings-account (EMM) construction ───────────────────────────────────────

class SavingsAccountKind(str, Enum):
    EXP_NEG_T_SQUARED = "exp_neg_t_squared"
    EXP_T_SQUARED = "exp_t_squared"
    SHORT_RATE_INTEGRAL = "short_rate_integral"


@dataclasses.dataclass(frozen=True)
class SavingsAccountSpec:
    kind: SavingsAccountKind

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", SavingsAccountKind(self.kind))
        except ValueError:
            _fail(f"Unknown savings account kind: {self.kind}")

    def log_value(self, t: float) -> float:
        if self.kind == SavingsAccountKind.EXP_NEG_T_SQUARED:
            return -t * t
        if self.kind == SavingsAccountKind.EXP_T_SQUARED:
            return t * t
        _fail(f"Savings account '{self.kind.value}' is path-dependent; build it from an ensemble")


_EMM_IDENTIFIERS = {
    SavingsAccountKind.EXP_NEG_T_SQUARED: "exp-neg-t2",
    SavingsAccountKind.EXP_T_SQUARED: "exp-t2",
}


def build_deterministic_emm_market(spec: SavingsAccountSpec) -> MarketModel:
    """
    Market generated by a deterministic savings account B with Q = P:
    P_t^T = B_t / B_T and deflator Y = 1/B, so that Y P^T is constant in t.
    """
    if spec.kind not in _EMM_IDENTIFIERS:
        _fail(f"Unsupported savings account kind for a deterministic market: {spec.kind}")
    return DeterministicMarket(
        _EMM_IDENTIFIERS[spec.kind],
        lambda t, T: spec.log_value(t) - spec.log_value(T),
        lambda t: -spec.log_value(t),
    )


# ── Vasicek model ────────────────────────────────────────────────────────────

@dataclasses.dataclass(frozen=True)
class VasicekParams:
    """dr = (b - r) dt + sqrt(2) dW: speed 1 and volatility sqrt(2) are fixed."""
    r0: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.r0) and np.isfinite(self.b)):
            _fail(f"Vasicek parameters must be finite, got r0={self.r0}, b={self.b}")


def make_time_grid(horizon: float, step: float = DEFAULT_STEP) -> np.ndarray:
    """Uniform grid from 0 to horizon with spacing at most step."""
    if not horizon >= 0 or not step > 0:
        _fail(f"Need horizon >= 0 and step > 0, got horizon={horizon}, step={step}")
    n_steps = int(np.ceil(horizon / step - 1e-9))
    if n_steps == 0:
        return np.zeros(1)
    return np.linspace(0.0, horizon, n_steps + 1)


def _validate_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        _fail("Time grid must be a nonempty 1-D sequence")
    if grid[0] != 0.0:
        _fail(f"Time grid must start at 0, starts at {grid[0]}")
    if not np.all(np.isfinite(grid)) or np.any(np.diff(grid) <= 0):
        _fail("Time grid must be finite and strictly increasing")
    return grid


def _trapezoid_integral(short_rate: np.ndarray, grid: np.ndarray) -> np.ndarray:
    integrated = np.zeros_like(short_rate)
    if grid.size > 1:
        pieces = 0.5 * (short_rate[:, 1:] + short_rate[:, :-1]) * np.diff(grid)
        integrated[:, 1:] = np.cumsum(pieces, axis=1)
    return integrated


def path_generator(master_seed: int, path_index: int) -> np.random.Generator:
    """Path i's stream depends on (master_seed, i) only."""
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(master_seed, spawn_key=(path_index,))
    ))


@dataclasses.dataclass(frozen=True, eq=False)
class ScenarioEnsemble:
    params: VasicekParams
    time_grid: np.ndarray
    short_rate: np.ndarray
    integrated_rate: np.ndarray
    master_seed: int

    @property
    def n_paths(self) -> int:
        return self.short_rate.shape[0]

    def grid_index(self, t: float) -> int:
        """Exact grid lookup; there is no interpolation between grid points."""
        idx = int(np.searchsorted(self.time_grid, t - _GRID_ATOL))
        if idx >= self.time_grid.size or abs(self.time_grid[idx] - t) > _GRID_ATOL * max(1.0, abs(t)):
            _fail(f"Time {t} is not on the simulation grid")
        return idx

    def coarsen(self, factor: int) -> "ScenarioEnsemble":
        """
        Keep every factor-th grid point. The retained short rates are exact
        samples on the coarse grid; only the trapezoid integral changes.
        """
        if factor < 1 or (self.time_grid.size - 1) % factor != 0:
            _fail(f"Cannot coarsen a grid of {self.time_grid.size} points by {factor}")
        grid = self.time_grid[::factor]
        short_rate = self.short_rate[:, ::factor]
        return _frozen_ensemble(self.params, grid, short_rate, self.master_seed)

    def to_frame(self) -> pd.DataFrame:
        n_paths, n_points = self.short_rate.shape
        return pd.DataFrame({
            "path_id": np.repeat(np.arange(n_paths), n_points),
            "t": np.tile(self.time_grid, n_paths),
            "short_rate": self.short_rate.ravel(),
            "integrated_rate": self.integrated_rate.ravel(),
        })


def _frozen_ensemble(params, grid, short_rate, master_seed) -> ScenarioEnsemble:
    short_rate = np.ascontiguousarray(short_rate)
    integrated = _trapezoid_integral(short_rate, grid)
    grid = np.array(grid)
    for arr in (grid, short_rate, integrated):
        arr.setflags(write=False)
    return ScenarioEnsemble(params, grid, short_rate, integrated, master_seed)


def simulate_vasicek(params: VasicekParams, grid, n_paths: int, master_seed: int) -> ScenarioEnsemble:
    """
    Exact Ornstein-Uhlenbeck transitions on the grid:
    r_{u+h} | r_u ~ Normal(e^{-h} r_u + (1 - e^{-h}) b, 1 - e^{-2h}).
    The running integral of r is the trapezoid accumulation on the same grid.
    """
    grid = _validate_grid(grid)
    if int(n_paths) != n_paths or n_paths < 1:
        _fail(f"n_paths must be a positive integer, got {n_paths}")
    if int(master_seed) != master_seed or not 0 <= master_seed < 2 ** 64:
        _fail(f"master_seed must be an integer in [0, 2^64), got {master_seed}")
    n_paths, master_seed = int(n_paths), int(master_seed)
    n_steps = grid.size - 1

    log_info(f"Simulating Vasicek r0={params.r0}, b={params.b}: "
             f"{n_paths} paths x {grid.size} grid points, seed={master_seed}")
    with log_latency("simulate_vasicek"):
        noise = np.empty((n_paths, n_steps))
        if n_steps:
            for i in range(n_paths):
                noise[i] = path_generator(master_seed, i).standard_normal(n_steps)

        h = np.diff(grid)
        decay = np.exp(-h)
        pull = -np.expm1(-h)
        sd = np.sqrt(-np.expm1(-2.0 * h))

        short_rate = np.empty((n_paths, grid.size))
        short_rate[:, 0] = params.r0
        for k in range(n_steps):
            short_rate[:, k + 1] = (decay[k] * short_rate[:, k] + pull[k] * params.b
                                    + sd[k] * noise[:, k])

    return _frozen_ensemble(params, grid, short_rate, master_seed)


def export_ensemble_csv(ensemble: ScenarioEnsemble, path: Union[str, Path]):
    write_csv_atomic(ensemble.to_frame(), path)


def vasicek_short_rate_moments(params: VasicekParams, t: float) -> Tuple[float, float]:
    decay = np.exp(-t)
    return float(decay * params.r0 + (1.0 - decay) * params.b), float(-np.expm1(-2.0 * t))


def sample_vasicek_pair(params: VasicekParams, s: float, t: float, n: int,
                        seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Exact joint draw of (r_s, r_t) for s <= t."""
    if not 0 <= s <= t:
        _fail(f"Need 0 <= s <= t, got s={s}, t={t}")
    rng = np.random.default_rng(seed)
    mean_s, var_s = vasicek_short_rate_moments(params, s)
    r_s = mean_s + np.sqrt(var_s) * rng.standard_normal(n)
    h = t - s
    r_t = (np.exp(-h) * r_s - np.expm1(-h) * params.b
           + np.sqrt(-np.expm1(-2.0 * h)) * rng.standard_normal(n))
    return r_s, r_t


def vasicek_yield(r_t, t, T, b: float):
    """
    Closed-form Vasicek yield under speed 1 and volatility sqrt(2):
    g r_t + (1 - e^{-tau})^2 / (2 tau) + (b - 1)(1 - g), g = (1 - e^{-tau}) / tau.
    """
    tau = np.asarray(T, dtype=float) - np.asarray(t, dtype=float)
    if np.any(tau <= 0):
        _fail(f"Vasicek yield needs T > t (t={t}, T={T})")
    one_minus = -np.expm1(-tau)
    g = one_minus / tau
    value = g * np.asarray(r_t, dtype=float) + one_minus ** 2 / (2.0 * tau) + (b - 1.0) * (1.0 - g)
    return float(value) if np.ndim(value) == 0 else value


@dataclasses.dataclass(frozen=True, eq=False)
class VasicekMarket(MarketModel):
    params: VasicekParams
    ensemble: ScenarioEnsemble
    identifier: str = "vasicek"
    character: MarketCharacter = MarketCharacter.STOCHASTIC

    @property
    def n_scenarios(self) -> int:
        return self.ensemble.n_paths

    @property
    def has_deflator(self) -> bool:
        return True

    def log_prices(self, t: float, T: float) -> np.ndarray:
        _check_window(t, T)
        r_t = self.ensemble.short_rate[:, self.ensemble.grid_index(t)]
        if T == t:
            return np.zeros_like(r_t)
        return -(T - t) * vasicek_yield(r_t, t, T, self.params.b)

    def log_deflators(self, t: float) -> np.ndarray:
        # Q = P, so Y = 1/B with B = exp(int_0^t r_u du)
        return -self.ensemble.integrated_rate[:, self.ensemble.grid_index(t)]


def market_from_vasicek(params: VasicekParams, ensemble: ScenarioEnsemble) -> MarketModel:
    if ensemble.params != params:
        _fail(f"Ensemble was simulated with {ensemble.params}, not {params}")
    return VasicekMarket(params, ensemble,
                         identifier=f"vasicek(r0={params.r0:g},b={params.b:g})")
