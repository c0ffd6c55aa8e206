"""
run / replay / batch.

Exit codes: 0 when every asserted property holds, 2 on a property violation
(or a replay whose tables differ), 1 on usage, configuration and
precondition errors. A run computes everything before it writes anything,
and each file is written atomically.
"""

import dataclasses
import json
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from dotenv import load_dotenv

from src import __version__
from src.cli.config import (
    ConfigParser,
    EXPERIMENT_KINDS,
    ExperimentConfig,
    add_experiment_arguments,
    config_from_namespace,
    parse_config,
)
from src.core.errors import ConfigError, DirLabError
from src.core.experiments import ExperimentResult
from src.core.registry import ExperimentRegistry
from src.utils.io import read_json, sha256_file, write_csv_atomic, write_json_atomic
from src.utils.logger import log_error, log_info, log_warning

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VIOLATION = 2

REPORT_FILE = "report.json"
MANIFEST_FILE = "manifest.json"


@dataclasses.dataclass
class RunManifest:
    config: Dict[str, Any]
    version: str
    duration_s: float
    checks: Dict[str, bool]
    violations: List[str]
    artifacts: Dict[str, str]
    report: str = REPORT_FILE

    @property
    def exit_code(self) -> int:
        return EXIT_VIOLATION if self.violations else EXIT_OK

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunManifest":
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"manifest: {e}")


def apply_environment(config: ExperimentConfig) -> ExperimentConfig:
    """DIRLAB_SEED, when set, replaces the seed of a fresh run."""
    raw = os.getenv("DIRLAB_SEED")
    if raw is None or raw.strip() == "":
        return config
    try:
        seed = int(raw)
    except ValueError:
        raise ConfigError(f"DIRLAB_SEED: expected an integer, got '{raw}'")
    log_info(f"DIRLAB_SEED overrides --seed {config.seed} with {seed}")
    return dataclasses.replace(config, seed=seed).validate()


def execute(config: ExperimentConfig, registry: Optional[ExperimentRegistry] = None) -> ExperimentResult:
    registry = registry or ExperimentRegistry()
    return registry.call_experiment(config.experiment, config.to_arguments())


def write_outputs(config: ExperimentConfig, result: ExperimentResult, duration_s: float,
                  out_dir: Union[str, Path]) -> RunManifest:
    out_dir = Path(out_dir)
    artifacts = {}
    if config.format == "all":
        for name, frame in result.tables.items():
            write_csv_atomic(frame, out_dir / name)
            artifacts[name] = sha256_file(out_dir / name)
    manifest = RunManifest(config.to_dict(), __version__, duration_s, result.checks,
                           result.violations, artifacts)
    report = dict(result.report)
    report["experiment"] = config.experiment
    report["manifest"] = MANIFEST_FILE
    write_json_atomic(report, out_dir / REPORT_FILE)
    write_json_atomic(manifest.to_dict(), out_dir / MANIFEST_FILE)
    return manifest


def run(config: ExperimentConfig, registry: Optional[ExperimentRegistry] = None) -> int:
    """Executes the configured experiment and writes its report, tables and manifest to config.out."""
    try:
        config.validate()
        start = time.perf_counter()
        result = execute(config, registry)
        duration = time.perf_counter() - start
    except (DirLabError, ValueError, ArithmeticError) as e:
        log_error(f"Run '{config.experiment}' on '{config.market}' failed: {e}")
        return EXIT_USAGE

    manifest = write_outputs(config, result, duration, config.out)
    for violation in manifest.violations:
        log_warning(f"Property violation: {violation}")
    log_info(f"Run '{config.experiment}' on '{config.market}' finished in {duration:.2f}s "
             f"with exit {manifest.exit_code}")
    return manifest.exit_code


def replay(manifest_path: Union[str, Path]) -> int:
    """
    Re-runs the config embedded in a manifest into a scratch directory and
    compares the table digests. DIRLAB_SEED is not consulted: the manifest
    already records the seed that was used. A --format json run has no
    tables and is refused.
    """
    manifest_path = Path(manifest_path)
    try:
        manifest = RunManifest.from_dict(read_json(manifest_path))
        if manifest.version != __version__:
            raise ConfigError(f"manifest version {manifest.version} does not match {__version__}")
        config = ExperimentConfig.from_dict(manifest.config)
        if not manifest.artifacts:
            raise ConfigError("manifest records no tables to compare; re-run with --format all")
    except (OSError, ValueError) as e:
        log_error(f"Cannot replay {manifest_path}: {e}")
        return EXIT_USAGE

    with tempfile.TemporaryDirectory(prefix="dirlab-replay-") as scratch:
        config = dataclasses.replace(config, out=scratch)
        code = run(config)
        if code == EXIT_USAGE:
            return EXIT_USAGE
        replayed = RunManifest.from_dict(read_json(Path(scratch) / MANIFEST_FILE))

    differing = sorted(name for name in set(manifest.artifacts) | set(replayed.artifacts)
                       if manifest.artifacts.get(name) != replayed.artifacts.get(name))
    if differing:
        log_warning(f"Replay of {manifest_path} differs in {', '.join(differing)}")
        return EXIT_VIOLATION
    log_info(f"Replay of {manifest_path} reproduced {len(manifest.artifacts)} tables bit for bit")
    return EXIT_OK


def _batch_entry(entry: Dict[str, Any], out_root: Path) -> int:
    name = entry.get("name")
    args = entry.get("args")
    if not name or not isinstance(args, list):
        log_error(f"Batch entry needs 'name' and an 'args' list: {entry}")
        return EXIT_USAGE
    try:
        config = apply_environment(parse_config(args))
    except ConfigError:
        return EXIT_USAGE
    return run(dataclasses.replace(config, out=str(out_root / name)))


def batch(configs_path: Union[str, Path], out_root: Union[str, Path], jobs: int = 1) -> int:
    """Runs every entry of a JSON list of {"name", "args"}; the worst exit code wins."""
    try:
        entries = read_json(configs_path)
    except (OSError, ValueError) as e:
        log_error(f"Cannot read batch file {configs_path}: {e}")
        return EXIT_USAGE
    if not isinstance(entries, list) or not entries:
        log_error(f"Batch file {configs_path} must hold a nonempty list")
        return EXIT_USAGE

    out_root = Path(out_root)
    log_info(f"Batch of {len(entries)} experiments with {jobs} job(s)")
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        codes = list(pool.map(lambda entry: _batch_entry(entry, out_root), entries))
    for entry, code in zip(entries, codes):
        log_info(f"  {entry.get('name')}: exit {code}")
    return max(codes)


def list_experiments(as_json: bool = False) -> int:
    """Prints the experiment names with their descriptions, or the full schemas as JSON."""
    entries = ExperimentRegistry().list_experiments()
    if as_json:
        print(json.dumps(entries, indent=4))
    else:
        for entry in entries:
            print(f"{entry['name']:<16} {entry['description']}")
    return EXIT_OK


def build_parser() -> ConfigParser:
    parser = ConfigParser(prog="dirlab", description="Bond-market DIR laboratory.")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS:
        add_experiment_arguments(subparsers.add_parser(kind, help=f"Run the {kind} experiment."))
    replay_parser = subparsers.add_parser("replay", help="Re-run a manifest and compare its tables.")
    replay_parser.add_argument("manifest")
    batch_parser = subparsers.add_parser("batch", help="Run a JSON list of experiments.")
    batch_parser.add_argument("configs")
    batch_parser.add_argument("--out", default="runs", help="Root directory, one subdirectory per entry.")
    batch_parser.add_argument("--jobs", type=int, default=1, help="Experiments run in parallel.")
    list_parser = subparsers.add_parser("list", help="Show the experiments and their input schemas.")
    list_parser.add_argument("--json", action="store_true", help="Print the JSON input schemas.")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        if args.command == "replay":
            return replay(args.manifest)
        if args.command == "batch":
            return batch(args.configs, args.out, args.jobs)
        if args.command == "list":
            return list_experiments(args.json)
        args.experiment = args.command
        config = apply_environment(config_from_namespace(args))
    except ConfigError as e:
        print(f"dirlab: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    return run(config)
