import numbers
from typing import Any, Dict, List

from src.core.errors import ConfigError
from src.core.experiments import ExperimentResult, default_handlers
from src.utils.logger import log_info, log_latency

_MARKET_SCHEMA = {
    "type": "object",
    "description": (
        "Market spec. 'kind' is one of vasicek, dir-violation, min-exp, exp-neg-t2, exp-t2, flat. "
        "Vasicek reads r0, b, n_paths, seed and step; flat reads rate."
    ),
    "properties": {
        "kind": {"type": "string",
                 "enum": ["vasicek", "dir-violation", "min-exp", "exp-neg-t2", "exp-t2", "flat"]},
        "r0": {"type": "number"},
        "b": {"type": "number"},
        "rate": {"type": "number"},
        "n_paths": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "step": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["kind"],
}

_MATURITIES = {"type": "array", "items": {"type": "number"}, "minItems": 6,
               "description": "Increasing maturities, all beyond the latest time point."}
_DELTA = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1,
          "description": "Tail level of the quantile curves. Default 0.05."}


def _time(description: str) -> Dict[str, Any]:
    return {"type": "number", "minimum": 0, "description": description}


_TYPES = {
    "object": dict,
    "array": (list, tuple),
    "string": str,
    "number": numbers.Real,
    "integer": numbers.Integral,
}


def validate_arguments(schema: Dict[str, Any], value: Any, path: str = "arguments"):
    """
    Checks value against the subset of JSON schema the experiment schemas use:
    type, enum, numeric bounds, minItems, items, properties and required.
    Properties not in the schema are rejected.
    """
    expected = schema.get("type")
    if expected and (isinstance(value, bool) or not isinstance(value, _TYPES[expected])):
        raise ConfigError(f"{path}: expected {expected}, got {value!r}")
    if "enum" in schema and value not in schema["enum"]:
        raise ConfigError(f"{path}: {value!r} is not one of {', '.join(schema['enum'])}")
    if expected in ("number", "integer"):
        if "minimum" in schema and value < schema["minimum"]:
            raise ConfigError(f"{path}: {value} is below {schema['minimum']}")
        if "exclusiveMinimum" in schema and value <= schema["exclusiveMinimum"]:
            raise ConfigError(f"{path}: {value} must exceed {schema['exclusiveMinimum']}")
        if "exclusiveMaximum" in schema and value >= schema["exclusiveMaximum"]:
            raise ConfigError(f"{path}: {value} must be below {schema['exclusiveMaximum']}")
    if expected == "array":
        if len(value) < schema.get("minItems", 0):
            raise ConfigError(f"{path}: needs at least {schema['minItems']} items, got {len(value)}")
        for i, item in enumerate(value):
            validate_arguments(schema.get("items", {}), item, f"{path}[{i}]")
    if expected == "object":
        properties = schema.get("properties", {})
        missing = [key for key in schema.get("required", []) if key not in value]
        if missing:
            raise ConfigError(f"{path}: missing {', '.join(missing)}")
        unknown = sorted(set(value) - set(properties))
        if unknown:
            raise ConfigError(f"{path}: unknown {', '.join(unknown)}")
        for key, item in value.items():
            validate_arguments(properties[key], item, f"{path}.{key}")


class ExperimentRegistry:
    """
    In-process registry of the experiments the runner can execute by name.
    """

    def __init__(self):
        self.experiments = default_handlers()

    def list_experiments(self) -> List[Dict[str, Any]]:
        """
        Returns the experiment definitions with JSON-schema argument descriptions.
        """
        return [
            {
                "name": "dir-yields",
                "description": (
                    "Boundedness above of T*(R_s^T - R_t^T) over a maturity grid, with the "
                    "hypothesis verdict on R_t^T and the plimsup bands of both yields."
                ),
                "input_schema": {
                    "type": "object",
                    "properties": {
                        "market": _MARKET_SCHEMA,
                        "s": _time("Earlier time point."),
                        "t": _time("Later time point, s <= t."),
                        "maturities": _MATURITIES,
                        "delta": _DELTA,
                    },
                    "required": ["market", "s", "t", "maturities"],
                },
            },
            {
                "name": "dir-forwards",
                "description": (
                    "Boundedness above of T*(F_{s,s'}^T - F_{t,t'}^T), recording the yield "
                    "verdicts above at s and below at t that form the hypothesis."
                ),
                "input_schema": {
                    "type": "object",
                    "properties": {
                        "market": _MARKET_SCHEMA,
                        "s": _time("Setting time of the first forward rate."),
                        "s_prime": _time("Start of the first investment period, s < s'."),
                        "t": _time("Setting time of the second forward rate, s <= t."),
                        "t_prime": _time("Start of the second investment period, t < t'."),
                        "maturities": _MATURITIES,
                        "delta": _DELTA,
                    },
                    "required": ["market", "s", "s_prime", "t", "t_prime", "maturities"],
                },
            },
            {
                "name": "equivalence",
                "description": (
                    "Two-sided verdict on T*(F_{t,t'}^T - R_t^T), its agreement with the yield "
                    "verdicts at t, and the exact forward/yield identity per scenario."
                ),
                "input_schema": {
                    "type": "object",
                    "properties": {
                        "market": _MARKET_SCHEMA,
                        "t": _time("Setting time."),
                        "t_prime": _time("Start of the investment period, t < t'."),
                        "maturities": _MATURITIES,
                        "delta": _DELTA,
                    },
                    "required": ["market", "t", "t_prime", "maturities"],
                },
            },
            {
                "name": "deflator-check",
                "description": (
                    "Supermartingale checks of Y P^T: exact monotonicity on deterministic markets, "
                    "unconditional and restart-conditional expectations on Vasicek."
                ),
                "input_schema": {
                    "type": "object",
                    "properties": {
                        "market": _MARKET_SCHEMA,
                        "s": _time("Restart time."),
                        "t": _time("Evaluation time, s < t."),
                        "T": _time("Bond maturity, t <= T."),
                    },
                    "required": ["market", "s", "t", "T"],
                },
            },
            {
                "name": "arbitrage",
                "description": (
                    "Long exp(T - t - 1) bonds maturing at T against one short bond maturing at "
                    "t + 1, and the price condition P_t^T >= P_t^{t+1} P_{t+1}^T."
                ),
                "input_schema": {
                    "type": "object",
                    "properties": {
                        "market": _MARKET_SCHEMA,
                        "t": _time("Entry time."),
                        "T": _time("Long maturity, T >= t + 2."),
                    },
                    "required": ["market", "t", "T"],
                },
            },
            {
                "name": "tail-bound",
                "description": "Empirical P[L_t^T / L_s^T > e^l] against the Markov bound e^-l.",
                "input_schema": {
                    "type": "object",
                    "properties": {
                        "market": _MARKET_SCHEMA,
                        "s": _time("Earlier time."),
                        "t": _time("Later time, s < t."),
                        "T": _time("Bond maturity, t <= T."),
                        "ells": {"type": "array", "items": {"type": "number", "minimum": 0}},
                    },
                    "required": ["market", "s", "t", "T"],
                },
            },
        ]

    def input_schema(self, name: str) -> Dict[str, Any]:
        for entry in self.list_experiments():
            if entry["name"] == name:
                return entry["input_schema"]
        raise ValueError(f"Experiment {name} not found")

    def call_experiment(self, name: str, arguments: Dict[str, Any]) -> ExperimentResult:
        """
        Executes an experiment by name after checking the arguments against
        its input schema. Errors propagate; the runner maps them to exit codes.
        """
        if name not in self.experiments:
            raise ValueError(f"Experiment {name} not found")
        validate_arguments(self.input_schema(name), arguments)

        log_info(f"Running experiment '{name}'")
        with log_latency(f"experiment:{name}"):
            return self.experiments[name](**arguments)
