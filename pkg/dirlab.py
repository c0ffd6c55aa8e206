"""
Command-line entry point.

    python dirlab.py dir-yields --market vasicek --r0 1 --b 1.5 --s 1 --t 2 --grid 25x2x6 --paths 10000 --seed 42
    python dirlab.py arbitrage --market min-exp --t 0 --T 3
    python dirlab.py replay runs/latest/manifest.json
    python dirlab.py batch data/acceptance_configs.json --jobs 4
    python dirlab.py list --json
"""

import sys

from src.cli.runner import main

if __name__ == "__main__":
    sys.exit(main())
