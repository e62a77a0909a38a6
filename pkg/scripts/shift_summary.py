"""Station-hour demand shift between the two years for the busiest stations.

Extra arguments are forwarded, e.g. ``--seed 2027 --out results/``.
"""

import sys

from genrotda.cli import main

if __name__ == "__main__":
    sys.exit(main(["shift-summary", *sys.argv[1:]]))
