"""Hypothesis checklists and audited roots for the two bundled algebraic examples.

    python scripts/reproduce_examples.py [--seed 0]
"""

import argparse

from lipglobal.cli import _fixture_path
from lipglobal.expr import load_problem
from lipglobal.solve import SolveOptions, solve_algebraic


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for name in ("example1", "example2"):
        p = load_problem(_fixture_path(name))
        sol = solve_algebraic(p, opts=SolveOptions(seed=args.seed))
        print(f"== {name}")
        for line in sol.checklist.lines():
            print("  " + line)
        print(f"  root = {sol.root.x}  residual = {sol.root.residual:.3g}  "
              f"basin = {sol.root.basin_count}/{sol.roots.starts}")


if __name__ == "__main__":
    main()
