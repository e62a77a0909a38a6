"""Main 2025 to 2026 transfer table for every configured method.

Extra arguments are forwarded, e.g. ``--seed 2027 --out results/``.
"""

import sys

from genrotda.cli import main

if __name__ == "__main__":
    sys.exit(main(["run", *sys.argv[1:]]))
