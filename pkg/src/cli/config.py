"""
ExperimentConfig: the parsed command line of one run.

parse_config(config.to_argv()) == config for every valid config, which is
what lets a manifest carry a run in replayable form.
"""

import argparse
import dataclasses
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

from src.core.dir_checks import geometric_grid
from src.core.errors import ConfigError
from src.core.experiments import MARKET_KINDS
from src.core.markets import DEFAULT_STEP
from src.utils.logger import log_error

EXPERIMENT_KINDS = ("dir-yields", "dir-forwards", "equivalence", "deflator-check",
                    "arbitrage", "tail-bound")
OUTPUT_FORMATS = ("all", "json")

# time points each experiment reads
_TIME_FIELDS = {
    "dir-yields": ("s", "t"),
    "dir-forwards": ("s", "s_prime", "t", "t_prime"),
    "equivalence": ("t", "t_prime"),
    "deflator-check": ("s", "t", "T"),
    "arbitrage": ("t", "T"),
    "tail-bound": ("s", "t", "T"),
}
_GRID_EXPERIMENTS = ("dir-yields", "dir-forwards", "equivalence")


def _fail(msg: str):
    log_error(msg)
    raise ConfigError(msg)


def format_number(x: float) -> str:
    """Shortest text that parses back to the same float; integral values drop the '.0'."""
    text = repr(float(x))
    return text[:-2] if text.endswith(".0") else text


@dataclasses.dataclass(frozen=True)
class GridSpec:
    """Geometric maturity grid 'AxBxC': start A, factor B, C points."""
    start: float
    factor: float
    count: int

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        parts = str(text).split("x")
        if len(parts) != 3:
            _fail(f"grid: expected AxBxC (start x factor x count), got '{text}'")
        try:
            start, factor, count = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            _fail(f"grid: could not parse '{text}' as AxBxC")
        if not (math.isfinite(start) and start > 0 and math.isfinite(factor) and factor > 1):
            _fail(f"grid: need start > 0 and factor > 1, got '{text}'")
        if count < 6:
            _fail(f"grid: need at least 6 maturities for a verdict, got {count}")
        return cls(start, factor, count)

    def maturities(self) -> List[float]:
        return geometric_grid(self.start, self.factor, self.count).tolist()

    def __str__(self) -> str:
        return f"{format_number(self.start)}x{format_number(self.factor)}x{self.count}"


DEFAULT_GRID = GridSpec(25.0, 2.0, 6)


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    market: str
    r0: float = 1.0
    b: float = 1.5
    rate: float = 0.03
    s: Optional[float] = None
    s_prime: Optional[float] = None
    t: Optional[float] = None
    t_prime: Optional[float] = None
    T: Optional[float] = None
    grid: GridSpec = DEFAULT_GRID
    paths: int = 10_000
    seed: int = 0
    step: float = DEFAULT_STEP
    delta: float = 0.05
    ells: Tuple[float, ...] = (1.0, 2.0, 3.0)
    out: str = "runs/latest"
    format: str = "all"

    # ── validation ──

    def validate(self) -> "ExperimentConfig":
        """Check every precondition the experiment will need before anything runs."""
        if self.experiment not in EXPERIMENT_KINDS:
            _fail(f"experiment: unknown kind '{self.experiment}'; expected one of "
                  f"{', '.join(EXPERIMENT_KINDS)}")
        if self.market not in MARKET_KINDS:
            _fail(f"market: unknown kind '{self.market}'; expected one of {', '.join(MARKET_KINDS)}")
        if self.format not in OUTPUT_FORMATS:
            _fail(f"format: expected one of {', '.join(OUTPUT_FORMATS)}, got '{self.format}'")
        for name in ("r0", "b", "rate"):
            if not math.isfinite(getattr(self, name)):
                _fail(f"{name}: must be finite")
        if self.paths < 1:
            _fail(f"paths: must be a positive integer, got {self.paths}")
        if not 0 <= self.seed < 2 ** 64:
            _fail(f"seed: must lie in [0, 2^64), got {self.seed}")
        if not (math.isfinite(self.step) and self.step > 0):
            _fail(f"step: must be positive, got {self.step}")
        if not 0 < self.delta < 1:
            _fail(f"delta: must lie in (0, 1), got {self.delta}")
        if any(not (math.isfinite(ell) and ell >= 0) for ell in self.ells) or not self.ells:
            _fail(f"ells: need nonnegative tail levels, got {self.ells}")

        times = {}
        for name in _TIME_FIELDS[self.experiment]:
            value = getattr(self, name)
            if value is None:
                _fail(f"{name}: required by '{self.experiment}'")
            if not (math.isfinite(value) and value >= 0):
                _fail(f"{name}: must be a nonnegative time, got {value}")
            times[name] = value
        self._validate_order(times)
        if self.experiment in _GRID_EXPERIMENTS:
            latest = max(times.values())
            if self.grid.start <= latest:
                _fail(f"grid: maturities must exceed {latest}, grid starts at {self.grid.start}")
        return self

    def _validate_order(self, times: Dict[str, float]):
        kind = self.experiment
        if "s" in times and "t" in times:
            strict = kind in ("deflator-check", "tail-bound")
            if times["s"] > times["t"] or (strict and times["s"] == times["t"]):
                _fail(f"s: must be {'<' if strict else '<='} t, got s={times['s']}, t={times['t']}")
        if "s_prime" in times and times["s_prime"] <= times["s"]:
            _fail(f"s_prime: must exceed s, got s={times['s']}, s'={times['s_prime']}")
        if "t_prime" in times and times["t_prime"] <= times["t"]:
            _fail(f"t_prime: must exceed t, got t={times['t']}, t'={times['t_prime']}")
        if "T" in times:
            if kind == "arbitrage" and times["T"] < times["t"] + 2:
                _fail(f"T: must be at least t + 2, got t={times['t']}, T={times['T']}")
            if times["T"] < times["t"]:
                _fail(f"T: must be at least t, got t={times['t']}, T={times['T']}")

    # ── conversions ──

    def market_spec(self) -> Dict[str, Any]:
        spec: Dict[str, Any] = {"kind": self.market}
        if self.market == "vasicek":
            spec.update(r0=self.r0, b=self.b, n_paths=self.paths, seed=self.seed, step=self.step)
        elif self.market == "flat":
            spec["rate"] = self.rate
        return spec

    def to_arguments(self) -> Dict[str, Any]:
        """Keyword arguments for the registry handler of this experiment."""
        args: Dict[str, Any] = {"market": self.market_spec()}
        for name in _TIME_FIELDS[self.experiment]:
            args[name] = getattr(self, name)
        if self.experiment in _GRID_EXPERIMENTS:
            args["maturities"] = self.grid.maturities()
            args["delta"] = self.delta
        if self.experiment == "tail-bound":
            args["ells"] = list(self.ells)
        return args

    def to_argv(self) -> List[str]:
        argv = [self.experiment, "--market", self.market,
                "--r0", format_number(self.r0), "--b", format_number(self.b),
                "--rate", format_number(self.rate)]
        for name, flag in (("s", "--s"), ("s_prime", "--s-prime"), ("t", "--t"),
                           ("t_prime", "--t-prime"), ("T", "--T")):
            value = getattr(self, name)
            if value is not None:
                argv += [flag, format_number(value)]
        argv += ["--grid", str(self.grid), "--paths", str(self.paths), "--seed", str(self.seed),
                 "--step", format_number(self.step), "--delta", format_number(self.delta),
                 "--ells", ",".join(format_number(x) for x in self.ells),
                 "--out", self.out, "--format", self.format]
        return argv

    def to_dict(self) -> Dict[str, Any]:
        out = dataclasses.asdict(self)
        out["grid"] = str(self.grid)
        out["ells"] = list(self.ells)
        return out

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        data = dict(data)
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            _fail(f"config: unknown fields {sorted(unknown)}")
        try:
            if "grid" in data:
                data["grid"] = GridSpec.parse(data["grid"])
            if "ells" in data:
                data["ells"] = tuple(float(x) for x in data["ells"])
            return cls(**data).validate()
        except TypeError as e:
            _fail(f"config: {e}")


# ── argparse surface ─────────────────────────────────────────────────────────

class ConfigParser(argparse.ArgumentParser):
    """ArgumentParser that raises ConfigError instead of exiting, so usage errors map to exit 1."""

    def error(self, message):
        _fail(message)


def _float_list(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def _grid(text: str) -> GridSpec:
    try:
        return GridSpec.parse(text)
    except ConfigError as e:
        raise argparse.ArgumentTypeError(str(e))


def add_experiment_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--market", required=True, choices=MARKET_KINDS, help="Market kind.")
    parser.add_argument("--r0", type=float, default=1.0, help="Vasicek initial short rate.")
    parser.add_argument("--b", type=float, default=1.5, help="Vasicek mean-reversion level.")
    parser.add_argument("--rate", type=float, default=0.03, help="Flat market rate.")
    parser.add_argument("--s", type=float, help="Earlier time point.")
    parser.add_argument("--s-prime", dest="s_prime", type=float, help="Forward start after s.")
    parser.add_argument("--t", type=float, help="Later time point.")
    parser.add_argument("--t-prime", dest="t_prime", type=float, help="Forward start after t.")
    parser.add_argument("--T", dest="T", type=float, help="Bond maturity.")
    parser.add_argument("--grid", type=_grid, default=DEFAULT_GRID,
                        help="Maturity grid AxBxC: start A, factor B, C points (default 25x2x6).")
    parser.add_argument("--paths", type=int, default=10_000, help="Monte Carlo paths.")
    parser.add_argument("--seed", type=int, default=0, help="Master seed (DIRLAB_SEED overrides).")
    parser.add_argument("--step", type=float, default=DEFAULT_STEP, help="Simulation time step.")
    parser.add_argument("--delta", type=float, default=0.05, help="Quantile tail level.")
    parser.add_argument("--ells", type=_float_list, default=(1.0, 2.0, 3.0),
                        help="Comma-separated Markov tail levels.")
    parser.add_argument("--out", default="runs/latest", help="Output directory.")
    parser.add_argument("--format", choices=OUTPUT_FORMATS, default="all",
                        help="'all' writes JSON and CSV, 'json' skips the tables.")


def build_experiment_parser() -> ConfigParser:
    parser = ConfigParser(prog="dirlab", description="Run one bond-market experiment.")
    subparsers = parser.add_subparsers(dest="experiment", required=True)
    for kind in EXPERIMENT_KINDS:
        add_experiment_arguments(subparsers.add_parser(kind))
    return parser


def config_from_namespace(args: argparse.Namespace) -> ExperimentConfig:
    fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    return ExperimentConfig(**{k: v for k, v in vars(args).items() if k in fields}).validate()


def parse_config(argv: Sequence[str]) -> ExperimentConfig:
    return config_from_namespace(build_experiment_parser().parse_args(list(argv)))
