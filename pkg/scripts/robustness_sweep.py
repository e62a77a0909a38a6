"""MAE of the OT methods as the unlabeled target pool is contaminated.

Extra arguments are forwarded, e.g. ``--seed 2027 --out results/``.
"""

import sys

from genrotda.cli import main

if __name__ == "__main__":
    sys.exit(main(["robustness", *sys.argv[1:]]))
