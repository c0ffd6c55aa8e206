import argparse
import os
import sys

# Ensure project root is in path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from src.cli.runner import EXIT_OK, batch, replay
from src.utils.logger import log_info, log_warning

_CONFIGS = "data/acceptance_configs.json"


def main():
    parser = argparse.ArgumentParser(description="Run the acceptance experiments and replay each one.")
    parser.add_argument("--configs", default=_CONFIGS, help=f"Batch file (default: {_CONFIGS}).")
    parser.add_argument("--out", default="runs/acceptance", help="Root output directory.")
    parser.add_argument("--jobs", type=int, default=1, help="Experiments run in parallel.")
    parser.add_argument("--skip-replay", action="store_true",
                        help="Skip the determinism replay of every run.")
    args = parser.parse_args()

    log_info("Starting acceptance run...")
    code = batch(args.configs, args.out, args.jobs)

    if not args.skip_replay:
        log_info("Replaying every run to confirm bit-identical tables...")
        for entry in sorted(os.listdir(args.out)):
            manifest = os.path.join(args.out, entry, "manifest.json")
            if not os.path.exists(manifest):
                continue
            replay_code = replay(manifest)
            if replay_code != EXIT_OK:
                log_warning(f"Replay of {entry} exited {replay_code}")
            code = max(code, replay_code)

    log_info(f"Acceptance run finished with exit {code}")
    sys.exit(code)


if __name__ == "__main__":
    main()
