"""Compare the global-inversion conditions on f_a(x) = (x1 + a|x1|, x1^3 + x2).

For |a| < 1 the map is a global homeomorphism. The rank certificate and
coercivity route says so; the Pourciau integral of m(t) converges, so that
condition is silent. Writes one CSV per value of a into --out.

    python scripts/fa_separation.py --a -0.5 0 0.5 --out fa_out
"""

import argparse
from pathlib import Path

from lipglobal.cli import _fixture_path, emit_plot_data
from lipglobal.expr import load_problem
from lipglobal.theorems import compare_conditions


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--a", type=float, nargs="+", default=[-0.5, 0.0, 0.5])
    ap.add_argument("--targets", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="fa_out")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for a in args.a:
        rep = compare_conditions(load_problem(_fixture_path("fa"), params={"a": a}), seed=args.seed, targets=args.targets)
        print(f"== a = {a}")
        print(rep.table())
        emit_plot_data(rep.pourciau, out / f"pourciau_a{a:+g}.csv")
        emit_plot_data(rep.hadamard_levy, out / f"hadamard_levy_a{a:+g}.csv")


if __name__ == "__main__":
    main()
