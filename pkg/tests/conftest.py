import math

import numpy as np
import pytest

from src.core.markets import (
    MarketModel,
    VasicekParams,
    make_time_grid,
    market_from_vasicek,
    simulate_vasicek,
)

VASICEK = VasicekParams(r0=1.0, b=1.5)


class CorruptedMarket(MarketModel):
    """
    Wraps a market and injects a fault: log P_t^T shifted for t > 0 and/or
    log Y_t drifting by drift * t.
    """

    def __init__(self, base: MarketModel, log_price_shift: float = 0.0, log_deflator_drift: float = 0.0):
        self.base = base
        self.log_price_shift = log_price_shift
        self.log_deflator_drift = log_deflator_drift
        self.identifier = f"corrupted({base.identifier})"
        self.character = base.character

    @property
    def n_scenarios(self) -> int:
        return self.base.n_scenarios

    @property
    def has_deflator(self) -> bool:
        return self.base.has_deflator

    def log_prices(self, t, T):
        log_p = self.base.log_prices(t, T)
        return log_p + self.log_price_shift if 0 < t < T else log_p

    def log_deflators(self, t):
        return self.base.log_deflators(t) + self.log_deflator_drift * t


def price_corrupting_factory(factor: float):
    shift = math.log(factor)
    return lambda params, ensemble: CorruptedMarket(market_from_vasicek(params, ensemble),
                                                    log_price_shift=shift)


@pytest.fixture(scope="module")
def vasicek_market():
    """(r0, b) = (1, 1.5), 10^4 paths on [0, 2.5] with the default step."""
    ensemble = simulate_vasicek(VASICEK, make_time_grid(2.5), 10_000, master_seed=42)
    return market_from_vasicek(VASICEK, ensemble)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
