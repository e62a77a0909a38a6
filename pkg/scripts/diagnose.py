"""Generator alignment diagnostics and PCA point clouds.

Extra arguments are forwarded, e.g. ``--seed 2027 --out results/``.
"""

import sys

from genrotda.cli import main

if __name__ == "__main__":
    sys.exit(main(["diagnose", *sys.argv[1:]]))
