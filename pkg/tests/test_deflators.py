import json
import math

import numpy as np
import pytest

from src.core.deflators import (
    CheckKind,
    DeflatedPriceSample,
    check_deflator_positivity,
    check_deterministic_supermartingale,
    check_martingale_unconditional,
    check_supermartingale_restart,
    find_supermartingale_violation,
    markov_tail_check,
    measure_discretization_allowance,
    supermartingale_lattice,
)
from src.core.errors import DomainError, PreconditionError
from src.core.markets import (
    SavingsAccountKind,
    SavingsAccountSpec,
    build_deterministic_emm_market,
    build_dir_violation_market,
    build_min_exp_market,
    make_time_grid,
    market_from_vasicek,
    simulate_vasicek,
    vasicek_yield,
    with_deflator,
)
from tests.conftest import VASICEK, CorruptedMarket, price_corrupting_factory

LATTICE = supermartingale_lattice([0.0, 0.5, 1.0, 2.0, 3.0, 5.0, 8.0])


@pytest.fixture(scope="module")
def large_short_market():
    """10^5 paths on [0, 0.5], enough to see a 2% bias at T = 1."""
    ensemble = simulate_vasicek(VASICEK, make_time_grid(0.5), 100_000, master_seed=2024)
    return market_from_vasicek(VASICEK, ensemble)


# ── Deterministic markets ────────────────────────────────────────────────────

def test_lattice_ordering():
    assert supermartingale_lattice([2.0, 0.0, 1.0]) == [
        (0.0, 1.0, 1.0), (0.0, 1.0, 2.0), (0.0, 2.0, 2.0), (1.0, 2.0, 2.0)]
    with pytest.raises(DomainError):
        supermartingale_lattice([-1.0, 1.0])


@pytest.mark.parametrize("market", [
    build_min_exp_market(),
    build_deterministic_emm_market(SavingsAccountSpec(SavingsAccountKind.EXP_T_SQUARED)),
], ids=["min-exp", "exp-t2"])
def test_deterministic_deflators_pass(market):
    report = check_deterministic_supermartingale(market, LATTICE)
    assert report.passed
    assert len(report.checks) == len(LATTICE)
    assert all(check.kind == CheckKind.EXACT_MONOTONICITY for check in report.checks)


def test_min_exp_deflated_price_closed_form():
    sample = DeflatedPriceSample.from_market(build_min_exp_market(), 2.0, 6.0)
    assert sample.values[0] == pytest.approx(min(math.exp(-2.0), math.exp(1 - 6.0)), rel=1e-12)


def test_trial_deflator_on_violation_market_fails():
    trial = with_deflator(build_dir_violation_market(), lambda t: 0.0)
    report = check_deterministic_supermartingale(trial, [(0.5, 1.0, 2.0)])
    assert not report.passed
    assert report.checks[0].estimate == pytest.approx(3.0)

    witness = find_supermartingale_violation(trial, [0.0, 0.5, 1.0, 2.0, 3.0])
    assert witness is not None
    s, t, T = witness
    assert s < 1.0 <= t <= T
    assert find_supermartingale_violation(build_min_exp_market(), [0.0, 1.0, 2.0, 4.0]) is None


def test_monotonicity_preconditions(vasicek_market):
    with pytest.raises(PreconditionError):
        check_deterministic_supermartingale(vasicek_market, [(0.0, 1.0, 2.0)])
    with pytest.raises(PreconditionError):
        check_deterministic_supermartingale(build_dir_violation_market(), [(0.0, 1.0, 2.0)])
    with pytest.raises(DomainError):
        check_deterministic_supermartingale(build_min_exp_market(), [(1.0, 1.0, 2.0)])


# ── Unconditional expectations ───────────────────────────────────────────────

def test_unconditional_martingale_on_vasicek(vasicek_market):
    coarse = market_from_vasicek(VASICEK, vasicek_market.ensemble.coarsen(2))
    t_values = [0.0, 0.5, 1.0, 2.0]
    allowance = measure_discretization_allowance(vasicek_market, coarse, t_values, 5.0)
    report = check_martingale_unconditional(vasicek_market, t_values, 5.0, allowance=allowance)
    assert report.passed, report.to_json()

    at_zero = report.checks[0]
    target = math.exp(-5.0 * vasicek_yield(VASICEK.r0, 0.0, 5.0, VASICEK.b))
    assert at_zero.se <= 1e-12
    assert at_zero.estimate == at_zero.target == pytest.approx(target, rel=1e-12)


def test_unconditional_check_detects_deflator_drift(large_short_market):
    corrupted = CorruptedMarket(large_short_market, log_deflator_drift=0.04)
    report = check_martingale_unconditional(corrupted, [0.5], 1.0)
    assert not report.passed
    assert check_martingale_unconditional(large_short_market, [0.5], 1.0).passed


def test_unconditional_check_detects_price_corruption(large_short_market):
    corrupted = CorruptedMarket(large_short_market, log_price_shift=math.log(1.02))
    assert not check_martingale_unconditional(corrupted, [0.5], 1.0).passed


def test_unconditional_check_rejects_bad_arguments(vasicek_market):
    with pytest.raises(DomainError):
        check_martingale_unconditional(vasicek_market, [1.0 + 1e-3], 5.0)
    with pytest.raises(DomainError):
        check_martingale_unconditional(vasicek_market, [2.0], 1.0)
    with pytest.raises(DomainError):
        check_martingale_unconditional(vasicek_market, [1.0], 5.0, allowance=-1.0)
    with pytest.raises(PreconditionError):
        check_martingale_unconditional(build_dir_violation_market(), [1.0], 5.0)


# ── Restart-conditional expectations ─────────────────────────────────────────

def test_restart_check_passes_on_vasicek(vasicek_market):
    report = check_supermartingale_restart(vasicek_market, 1.0, 2.0, 6.0, n_paths=10_000, seed=3)
    assert report.passed, report.to_json()
    assert [check.note.split("quantile ")[1] for check in report.checks] == ["0.05)", "0.5)", "0.95)"]
    assert all(check.kind == CheckKind.RESTART for check in report.checks)


def test_restart_check_accepts_params():
    report = check_supermartingale_restart(VASICEK, 1.0, 1.5, 3.0, quantiles=(0.5,),
                                           n_paths=2_000, seed=4)
    assert report.passed and len(report.checks) == 1


def test_restart_check_detects_price_corruption():
    report = check_supermartingale_restart(VASICEK, 1.0, 1.25, 2.0, n_paths=100_000, seed=5,
                                           market_factory=price_corrupting_factory(1.02))
    assert len(report.failures()) == 3


def test_restart_check_needs_restartable_market():
    with pytest.raises(PreconditionError):
        check_supermartingale_restart(build_min_exp_market(), 1.0, 2.0, 6.0)
    with pytest.raises(DomainError):
        check_supermartingale_restart(VASICEK, 2.0, 1.0, 6.0)
    with pytest.raises(DomainError):
        check_supermartingale_restart(VASICEK, 1.0, 2.0, 6.0, quantiles=(1.0,), n_paths=10)


def test_restart_check_is_deterministic():
    first = check_supermartingale_restart(VASICEK, 0.5, 1.0, 2.0, n_paths=500, seed=9)
    second = check_supermartingale_restart(VASICEK, 0.5, 1.0, 2.0, n_paths=500, seed=9)
    assert [c.estimate for c in first.checks] == [c.estimate for c in second.checks]


# ── Positivity and Markov bound ──────────────────────────────────────────────

def test_deflator_positivity(vasicek_market):
    report = check_deflator_positivity(vasicek_market, [0.0, 1.0, 2.5])
    assert report.passed
    assert report.checks[0].kind == CheckKind.POSITIVITY
    with pytest.raises(DomainError):
        check_deflator_positivity(vasicek_market, [])


def test_markov_bound_on_vasicek():
    ensemble = simulate_vasicek(VASICEK, make_time_grid(2.0, 1 / 16), 100_000, master_seed=77)
    table = markov_tail_check(market_from_vasicek(VASICEK, ensemble), 1.0, 2.0, 10.0,
                              ells=(0.0, 1.0, 2.0, 3.0))
    assert list(table.columns) == ["ell", "p_hat", "bound", "threshold", "passed"]
    assert table["passed"].all()
    assert table.loc[0, "bound"] == 1.0
    assert np.all(np.diff(table["p_hat"]) <= 0)


def test_markov_bound_on_nonincreasing_market():
    table = markov_tail_check(build_min_exp_market(), 1.0, 2.0, 10.0)
    assert table["passed"].all()
    assert np.all(table["p_hat"] == 0.0)


def test_markov_bound_rejects_bad_arguments(vasicek_market):
    with pytest.raises(DomainError):
        markov_tail_check(vasicek_market, 2.0, 1.0, 10.0)
    with pytest.raises(DomainError):
        markov_tail_check(vasicek_market, 1.0, 2.0, 10.0, ells=(-1.0,))
    with pytest.raises(PreconditionError):
        markov_tail_check(build_dir_violation_market(), 0.0, 1.0, 2.0)


def test_report_serialisation():
    report = check_deterministic_supermartingale(build_min_exp_market(), [(0.0, 1.0, 3.0)])
    payload = json.loads(report.to_json())
    assert payload["market"] == "min-exp" and payload["passed"] is True
    assert set(payload["checks"][0]) >= {"kind", "s", "t", "T", "estimate", "se", "bound", "pass"}
