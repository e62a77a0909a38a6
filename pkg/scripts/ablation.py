"""Generator x robust ablation grid (pass --contamination 0.2 for the contaminated variant).

Extra arguments are forwarded, e.g. ``--seed 2027 --out results/``.
"""

import sys

from genrotda.cli import main

if __name__ == "__main__":
    sys.exit(main(["ablation", *sys.argv[1:]]))
