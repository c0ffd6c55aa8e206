"""
Curve mathematics: conversions among zero-coupon bond prices, continuously
compounded yields and forward rates.

Every function takes scalars or numpy arrays (one entry per scenario) and
broadcasts. Scalar inputs give a Python float back. The log-price variants are
the primitives; the price variants only exist for callers that hold a
representable price.
"""

from typing import Union

import numpy as np

from src.core.errors import DomainError
from src.utils.logger import log_error

ArrayLike = Union[float, np.ndarray]

IDENTITY_RTOL = 1e-12


def _out(value: np.ndarray) -> ArrayLike:
    return float(value) if np.ndim(value) == 0 else value


def _fail(msg: str):
    log_error(msg)
    raise DomainError(msg)


def _check_times(t: ArrayLike, T: ArrayLike):
    t_arr, T_arr = np.asarray(t, dtype=float), np.asarray(T, dtype=float)
    if not (np.all(np.isfinite(t_arr)) and np.all(np.isfinite(T_arr))):
        _fail(f"Times must be finite (t={t}, T={T})")
    if np.any(t_arr < 0):
        _fail(f"Time t must be nonnegative, got {t}")
    if np.any(T_arr <= t_arr):
        _fail(f"Maturity T must exceed t (t={t}, T={T})")


def _check_forward_times(t: ArrayLike, t_prime: ArrayLike, T: ArrayLike):
    _check_times(t, T)
    t_arr = np.asarray(t, dtype=float)
    tp_arr = np.asarray(t_prime, dtype=float)
    T_arr = np.asarray(T, dtype=float)
    if np.any(tp_arr <= t_arr) or np.any(tp_arr >= T_arr):
        _fail(f"Forward rate needs t < t' < T (t={t}, t'={t_prime}, T={T})")


def _check_prices(*prices: ArrayLike):
    for price in prices:
        arr = np.asarray(price, dtype=float)
        if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
            _fail(f"Bond prices must be finite and strictly positive, got {price}")


# ── Yields ───────────────────────────────────────────────────────────────────

def yield_from_log_price(log_price: ArrayLike, t: ArrayLike, T: ArrayLike) -> ArrayLike:
    """R_t^T = -log(P_t^T) / (T - t)."""
    _check_times(t, T)
    log_price = np.asarray(log_price, dtype=float)
    return _out(-log_price / (np.asarray(T, dtype=float) - np.asarray(t, dtype=float)))


def yield_from_price(price: ArrayLike, t: ArrayLike, T: ArrayLike) -> ArrayLike:
    _check_prices(price)
    return yield_from_log_price(np.log(np.asarray(price, dtype=float)), t, T)


def price_from_yield(y: ArrayLike, t: ArrayLike, T: ArrayLike) -> ArrayLike:
    """Inverse of yield_from_price: exp(-y (T - t))."""
    _check_times(t, T)
    tau = np.asarray(T, dtype=float) - np.asarray(t, dtype=float)
    return _out(np.exp(-np.asarray(y, dtype=float) * tau))


# ── Forward rates ────────────────────────────────────────────────────────────

def forward_rate_from_log_prices(log_p_short: ArrayLike, log_p_long: ArrayLike,
                                 t: ArrayLike, t_prime: ArrayLike, T: ArrayLike) -> ArrayLike:
    """
    Forward rate set at t for investment over [t', T].

    Args:
        log_p_short: log P_t^{t'}
        log_p_long: log P_t^T
    """
    _check_forward_times(t, t_prime, T)
    span = np.asarray(T, dtype=float) - np.asarray(t_prime, dtype=float)
    diff = np.asarray(log_p_short, dtype=float) - np.asarray(log_p_long, dtype=float)
    return _out(diff / span)


def forward_rate_from_prices(p_short: ArrayLike, p_long: ArrayLike,
                             t: ArrayLike, t_prime: ArrayLike, T: ArrayLike) -> ArrayLike:
    _check_prices(p_short, p_long)
    return forward_rate_from_log_prices(
        np.log(np.asarray(p_short, dtype=float)),
        np.log(np.asarray(p_long, dtype=float)),
        t, t_prime, T,
    )


def forward_rate_from_yields(r_long: ArrayLike, r_short: ArrayLike,
                             t: ArrayLike, t_prime: ArrayLike, T: ArrayLike) -> ArrayLike:
    """
    F = (T - t)/(T - t') R_t^T - (t' - t)/(T - t') R_t^{t'}.

    The two weights sum to one, so a flat curve gives back its own yield.
    """
    _check_forward_times(t, t_prime, T)
    t = np.asarray(t, dtype=float)
    t_prime = np.asarray(t_prime, dtype=float)
    T = np.asarray(T, dtype=float)
    span = T - t_prime
    return _out(((T - t) / span) * np.asarray(r_long, dtype=float)
                - ((t_prime - t) / span) * np.asarray(r_short, dtype=float))


# ── Identities ───────────────────────────────────────────────────────────────

def equivalence_identity_residual(log_p_short: ArrayLike, log_p_long: ArrayLike,
                                  t: ArrayLike, t_prime: ArrayLike, T: ArrayLike) -> ArrayLike:
    """
    Relative residual of (T - t')(F - R_t^T) = (t' - t)(R_t^T - R_t^{t'}).

    Scaled by the magnitude of the log-prices entering both sides, which is
    where the rounding error of either side comes from.
    """
    forward = forward_rate_from_log_prices(log_p_short, log_p_long, t, t_prime, T)
    r_long = yield_from_log_price(log_p_long, t, T)
    r_short = yield_from_log_price(log_p_short, t, t_prime)
    t = np.asarray(t, dtype=float)
    t_prime = np.asarray(t_prime, dtype=float)
    T = np.asarray(T, dtype=float)
    lhs = (T - t_prime) * (np.asarray(forward) - np.asarray(r_long))
    rhs = (t_prime - t) * (np.asarray(r_long) - np.asarray(r_short))
    scale = np.maximum.reduce([
        np.ones_like(lhs),
        np.abs(np.asarray(log_p_short, dtype=float)) * np.ones_like(lhs),
        np.abs(np.asarray(log_p_long, dtype=float)) * np.ones_like(lhs),
    ])
    return _out(np.abs(lhs - rhs) / scale)
