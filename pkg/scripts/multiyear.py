"""Four adjacent-year and four two-year tasks with grouped averages.

Extra arguments are forwarded, e.g. ``--seed 2027 --out results/``.
"""

import sys

from genrotda.cli import main

if __name__ == "__main__":
    sys.exit(main(["multiyear", *sys.argv[1:]]))
