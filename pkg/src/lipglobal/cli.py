"""Command-line front end.

Every run writes its reports and CSVs into ``--out`` together with a
``manifest.txt`` (flat key=value) that is enough to reproduce them.

Exit codes: 0 success, 1 a hypothesis check failed (e.g. a rank-deficient
witness or several roots), 2 usage or problem-file errors, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import fields, replace
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .certify import (
    CoercivityReport,
    RankCertificate,
    coercivity_probe,
    growth_constants,
    rank_certificate,
    rank_csv,
    spectral_report,
    write_report,
)
from .clarke import LeastSquares
from .expr import ProblemDef, ProblemError, as_system, inverse_problem, load_problem, parse_box, print_problem
from .mpass import PathState, PreconditionError, theorem4_consistency
from .solve import (
    Atlas,
    MultipleRoots,
    NoRootFound,
    RootSet,
    SolveError,
    SolveOptions,
    StationaryNonroot,
    find_roots,
    implicit_atlas,
    invert,
    rank_deficiency,
    solve_algebraic,
)
from .theorems import ConditionProfile, compare_conditions

EXIT_OK, EXIT_HYPOTHESIS, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

FIXTURES = {
    "example1": ("algebraic problem with A^T A positive definite", ["algebraic"]),
    "example2": ("algebraic problem with singular A", ["algebraic"]),
    "fa": ("f_a, a global homeomorphism outside Pourciau's condition", ["compare"]),
    "cubic": ("x^3 + x = y, implicit function over y", ["atlas", "--from", "-2", "--to", "2"]),
    "twowell": ("x^2 - 1, two roots and a stationary non-root", ["solve"]),
}


class UsageError(Exception):
    pass


def _r(v) -> str:
    """Stable text for a CSV cell."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_r(v) for v in row])


def _names(prefix: str, k: int, single: str | None = None) -> list[str]:
    if k == 1 and single is not None:
        return [single]
    return [f"{prefix}{i + 1}" for i in range(k)]


def emit_plot_data(obj, path) -> Path:
    """Write an atlas, condition profile, root set, coercivity report or string path as CSV.

    Headers:
      Atlas            y | y1..ym, x | x1..xn, residual, ratio, break
      ConditionProfile t (or r for the Hadamard-Levy integrand), value, cumulative_integral
      RootSet          y1..ym, x1..xn, residual, stationarity, basin_count, break_flag
      CoercivityReport radius, sphere_inf
      PathState        bead, x1..xn, value
    """
    path = Path(path)
    if isinstance(obj, Atlas):
        m = obj.entries[0].y.size if len(obj) else 1
        n = obj.entries[0].x.size if len(obj) else 1
        header = _names("y", m, "y") + _names("x", n, "x") + ["residual", "ratio", "break"]
        rows = ([*e.y, *e.x, e.residual, e.ratio, e.broken] for e in obj.entries)
    elif isinstance(obj, ConditionProfile):
        header = ["r" if obj.kind == "hadamard-levy" else "t", "value", "cumulative_integral"]
        rows = obj.rows()
    elif isinstance(obj, RootSet):
        m = obj.y.size
        n = obj.roots[0].x.size if obj.roots else (obj.nonroots[0].x.size if obj.nonroots else 0)
        header = _names("y", m) + _names("x", n) + ["residual", "stationarity", "basin_count", "break_flag"]
        rows = ([*obj.y, *r.x, r.residual, r.stationarity, r.basin_count, False] for r in obj.roots)
    elif isinstance(obj, CoercivityReport):
        header = ["radius", "sphere_inf"]
        rows = zip(obj.radii.tolist(), obj.infima.tolist())
    elif isinstance(obj, PathState):
        header = ["bead"] + _names("x", obj.beads.shape[1]) + ["value"]
        rows = ([i, *b, v] for i, (b, v) in enumerate(zip(obj.beads, obj.values)))
    else:
        raise TypeError(f"no CSV layout for {type(obj).__name__}")
    _write_csv(path, header, rows)
    return path


# ---------------------------------------------------------------------------
# configuration


def _fixture_path(name: str) -> Path:
    return Path(str(resources.files("lipglobal") / "fixtures" / f"{name}.prob"))


def resolve_problem_path(arg: str) -> Path:
    """A file path, or the name of a bundled fixture (``example1``, ``fixtures/fa.prob``)."""
    p = Path(arg)
    if p.is_file():
        return p
    stem = p.name[:-5] if p.name.endswith(".prob") else p.name
    if stem in FIXTURES:
        return _fixture_path(stem)
    raise UsageError(f"problem file not found: {arg}")


def _kv(items: list[str] | None, what: str) -> dict[str, str]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"{what} expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


_OPTION_FIELDS = {f.name for f in fields(SolveOptions)} - {"start_box", "workers", "seed"}


def _solve_options(args, overrides: dict[str, str]) -> SolveOptions:
    opts = SolveOptions(seed=args.seed, workers=max(1, args.threads))
    kw = {}
    for k, v in overrides.items():
        if k == "box":
            continue
        if k not in _OPTION_FIELDS:
            raise UsageError(f"unknown setting {k!r}; known: box, {', '.join(sorted(_OPTION_FIELDS))}")
        try:
            kw[k] = int(v) if k in ("multistart", "max_iter", "samples") else float(v)
        except ValueError:
            raise UsageError(f"setting {k} needs a number, got {v!r}") from None
    return replace(opts, **kw)


def _load(args, overrides: dict[str, str]) -> ProblemDef:
    params = {}
    for k, v in _kv(args.param, "--param").items():
        try:
            params[k] = float(v)
        except ValueError:
            raise UsageError(f"--param {k} needs a number, got {v!r}") from None
    if getattr(args, "a", None) is not None:
        params["a"] = args.a
    p = load_problem(resolve_problem_path(args.problem), params=params or None)
    if "box" in overrides:
        p = p.with_box(parse_box(overrides["box"]))
    return p


def _vector(values, k: int, what: str) -> np.ndarray | None:
    if values is None:
        return None
    v = np.asarray(values, dtype=float)
    if v.size != k:
        raise UsageError(f"{what} needs {k} value(s), got {v.size}")
    return v


def write_manifest(out: Path, args, argv: list[str]) -> None:
    items = {
        "toolkit": "lipglobal",
        "version": __version__,
        "subcommand": args.command,
        "problem": getattr(args, "problem", ""),
        "seed": args.seed,
        "threads": args.threads,
        "argv": " ".join(argv),
    }
    for k, v in sorted(_kv(args.set, "--set").items()):
        items[f"set.{k}"] = v
    for k, v in sorted(_kv(args.param, "--param").items()):
        items[f"param.{k}"] = v
    with open(out / "manifest.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{k}={v}\n" for k, v in items.items())


# ---------------------------------------------------------------------------
# subcommands


def _objective_for(p: ProblemDef, y=None) -> LeastSquares:
    """phi_y for the problem: 1/2||F(x,y)||^2, 1/2||f(x) - y||^2, or 1/2||Ax - F(x) - xi||^2."""
    if p.A is None and p.m == 0:
        q = inverse_problem(p)
        return LeastSquares(q, np.zeros(p.n) if y is None else y)
    sysp, dy = as_system(p)
    return LeastSquares(sysp, (dy if dy is not None else np.zeros(sysp.m)) if y is None else y)


def cmd_check(args, p: ProblemDef, opts: SolveOptions, out: Path) -> int:
    header = {"problem": p.name, "n": p.n, "m": p.m}
    sections = {"problem": print_problem(p)}
    if p.A is not None:
        s = spectral_report(p.A)
        g = growth_constants(p, seed=args.seed)
        header.update(A1="holds" if s.a1 else "fails", det_A=f"{s.det_A:.12g}")
        sections["spectral"] = "\n".join(
            [f"eigenvalues = {', '.join(f'{v:.10g}' for v in s.eigenvalues)}", f"det(A^T A) = {s.det_AtA:.12g}"]
        )
        sections["growth"] = f"a_est = {g.a_est:.6g}\nb_est = {g.b_est:.6g}\ngamma = {g.gamma_fit:.4g}\ntheta = {g.theta_fit:.4g}"
    y = _vector(args.y, p.m, "--y") if p.m else None
    cert = rank_certificate(p, seed=args.seed)
    coer = coercivity_probe(_objective_for(p, y), p.n, seed=args.seed)
    header.update(rank=cert.verdict, coercivity=coer.verdict)
    sections["rank"] = _rank_text(cert)
    sections["coercivity"] = f"exponent = {coer.exponent:.4g}\nconstant = {coer.constant:.4g}"
    write_report(out / "check.txt", header, sections)
    (out / "rank_leaves.csv").write_text(rank_csv(cert) + "\n", encoding="utf-8")
    emit_plot_data(coer, out / "coercivity.csv")
    for k, v in header.items():
        print(f"{k}: {v}")
    failed = cert.verdict == "rank-deficient-witness" or coer.verdict == "non-coercive-witness"
    return EXIT_HYPOTHESIS if failed else EXIT_OK


def _rank_text(cert: RankCertificate) -> str:
    lines = [f"verdict = {cert.verdict}", f"mode = {cert.mode}", f"subdivisions = {cert.subdivisions}"]
    if cert.det_range is not None:
        lines.append(f"det range = [{cert.det_range.lo:.10g}, {cert.det_range.hi:.10g}]")
    if cert.witness is not None:
        lines.append(f"witness = {np.array2string(cert.witness, precision=8)} (det {cert.witness_det:.3g})")
    if cert.note:
        lines.append(f"note = {cert.note}")
    return "\n".join(lines)


def _rootset_report(rs: RootSet, p: ProblemDef, out: Path, y=None) -> None:
    emit_plot_data(rs, out / "roots.csv")
    n = p.n
    rows = []
    for s in rs.nonroots:
        try:
            sig = rank_deficiency(p, s, y)
        except (ValueError, ArithmeticError):
            sig = math.nan
        rows.append([*rs.y, *s.x, s.residual, s.value, s.stationarity, s.basin_count, sig])
    _write_csv(
        out / "stationary.csv",
        _names("y", rs.y.size) + _names("x", n) + ["residual", "value", "stationarity", "basin_count", "sigma_min"],
        rows,
    )
    print(f"verdict: {rs.verdict} ({len(rs.roots)} root(s), {len(rs.nonroots)} stationary non-root(s), "
          f"{rs.unconverged} unconverged of {rs.starts} starts)")
    for r in rs.roots:
        print(f"root x = {np.array2string(r.x, precision=10)}  residual {r.residual:.3g}  basin {r.basin_count}")
    for row, s in zip(rows, rs.nonroots):
        print(f"stationary non-root x = {np.array2string(s.x, precision=10)}  value {s.value:.10g}  sigma_min {row[-1]:.3g}")


def _rootset_exit(rs: RootSet) -> int:
    if rs.verdict == "unique":
        return EXIT_OK
    if rs.verdict == "none-found":
        print("no root found; run `check` to probe coercivity", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_HYPOTHESIS


def cmd_solve(args, p, opts, out) -> int:
    sysp, _ = as_system(p)
    y = _vector(args.y, sysp.m, "--y") if args.y is not None else None
    rs = find_roots(p, y, opts)
    _rootset_report(rs, p, out, rs.y)
    return _rootset_exit(rs)


def cmd_invert(args, p, opts, out) -> int:
    if p.m != 0:
        raise UsageError("invert needs a pure map (m = 0)")
    t = _vector(args.target, p.n, "--target")
    try:
        root = invert(p, t, opts)
    except SolveError as exc:
        _rootset_report(exc.rootset, inverse_problem(p), out, t)
        raise
    rs = RootSet(t, (root,), (), 0, opts.multistart or 0, "unique")
    emit_plot_data(rs, out / "roots.csv")
    print(f"x = {np.array2string(root.x, precision=10)}  residual {root.residual:.3g}")
    return EXIT_OK


def cmd_atlas(args, p, opts, out) -> int:
    sysp, _ = as_system(p)
    m = sysp.m
    if m == 0:
        raise UsageError("atlas needs a y-block (m > 0) or an algebraic problem")
    yb = p.y_box() if p.A is None else None
    lo = _vector(args.y_from, m, "--from") if args.y_from is not None else None
    hi = _vector(args.y_to, m, "--to") if args.y_to is not None else None
    if lo is None or hi is None:
        if not yb:
            raise UsageError("give --from and --to (the problem declares no y box)")
        lo = np.array([b[0] for b in yb]) if lo is None else lo
        hi = np.array([b[1] for b in yb]) if hi is None else hi
    Y = lo + np.linspace(0.0, 1.0, args.samples)[:, None] * (hi - lo)
    atlas = implicit_atlas(p, Y, opts, audit_every=args.audit_every)
    emit_plot_data(atlas, out / "atlas.csv")
    ratios = [e.ratio for e in atlas.entries if math.isfinite(e.ratio)]
    header = {
        "problem": p.name,
        "samples": len(atlas),
        "breaks": atlas.breaks,
        "max_residual": f"{max(e.residual for e in atlas.entries):.3g}",
        "max_ratio": f"{max(ratios):.6g}" if ratios else "nan",
    }
    write_report(out / "atlas.txt", header, {})
    for k, v in header.items():
        print(f"{k}: {v}")
    return EXIT_HYPOTHESIS if atlas.breaks else EXIT_OK


def cmd_algebraic(args, p, opts, out) -> int:
    if p.A is None:
        raise UsageError("algebraic needs a problem with a matrix A")
    xi = _vector(args.xi, p.n, "--xi")
    sol = solve_algebraic(p, xi, opts)
    ck = sol.checklist
    lines = ck.lines()
    write_report(
        out / "algebraic.txt",
        {"problem": p.name, "theorem": ck.theorem, "claim": sol.claim},
        {"checklist": "\n".join(lines), "rank": _rank_text(ck.rank)},
    )
    (out / "rank_leaves.csv").write_text(rank_csv(ck.rank) + "\n", encoding="utf-8")
    emit_plot_data(ck.coercivity, out / "coercivity.csv")
    emit_plot_data(sol.roots, out / "roots.csv")
    for line in lines:
        print(line)
    print(f"root x = {np.array2string(sol.root.x, precision=10)}  residual {sol.root.residual:.3g}  "
          f"basin {sol.root.basin_count}/{sol.roots.starts}")
    return EXIT_OK if ck.evidenced else EXIT_HYPOTHESIS


def cmd_mpass(args, p, opts, out) -> int:
    sysp, dy = as_system(p)
    y = _vector(args.y, sysp.m, "--y") if args.y is not None else dy
    x1 = _vector(args.x1, p.n, "--x1")
    x2 = _vector(args.x2, p.n, "--x2")
    chk = theorem4_consistency(p, y, x1, x2, None, opts.eps_r, K=args.K, eps_s=opts.eps_s, seed=args.seed)
    sad = chk.saddle
    point = sad.point + x2
    header = {
        "problem": p.name,
        "verdict": sad.verdict,
        "point": np.array2string(point, precision=12),
        "value": repr(sad.value),
        "stationarity": f"{sad.stationarity:.3g}",
        "ring": "none" if sad.ring is None else f"rho={sad.ring.rho:.6g} inf={sad.ring.infimum:.6g}",
        "history_nonincreasing": bool(np.all(np.diff(sad.history) <= 0)),
        "rank_holds": chk.rank_holds,
        "roots_verified": chk.roots_verified,
        "contradiction": chk.contradiction,
    }
    write_report(out / "mpass.txt", header, {})
    _write_csv(out / "history.csv", ["iteration", "max_value"], enumerate(sad.history.tolist()))
    if sad.path is not None:
        emit_plot_data(PathState(sad.path.beads + x2, sad.path.values, sad.path.iteration), out / "path.csv")
    for k, v in header.items():
        print(f"{k}: {v}")
    return EXIT_HYPOTHESIS if chk.contradiction else EXIT_OK


def cmd_compare(args, p, opts, out) -> int:
    rep = compare_conditions(p, seed=args.seed, targets=args.targets, y_count=args.y_count)
    table = rep.table()
    write_report(out / "compare.txt", {"problem": p.name, "params": dict(p.params)}, {"conditions": table})
    if rep.pourciau is not None:
        emit_plot_data(rep.pourciau, out / "pourciau.csv")
    if rep.hadamard_levy is not None:
        emit_plot_data(rep.hadamard_levy, out / "hadamard_levy.csv")
    if rep.rank is not None:
        (out / "rank_leaves.csv").write_text(rank_csv(rep.rank) + "\n", encoding="utf-8")
    _write_csv(
        out / "inversions.csv",
        _names("y", p.n) + _names("x", p.n) + ["max_error", "verdict_unique"],
        ([*y, *(x if x is not None else [math.nan] * p.n), err, v == "unique"] for y, x, err, v in rep.inversions),
    )
    print(table)
    return EXIT_OK


# ---------------------------------------------------------------------------
# fixtures


def _verify_checks(only: set[str] | None, seed: int) -> list[tuple[str, bool, str]]:
    from .mpass import mountain_pass
    from .solve import implicit_atlas as atlas_of

    out: list[tuple[str, bool, str]] = []

    def want(name):
        return only is None or name in only

    if want("example1"):
        p = load_problem(_fixture_path("example1"))
        sol = solve_algebraic(p, None, SolveOptions(seed=seed))
        ck, lam = sol.checklist, sol.checklist.spectral.eigenvalues
        out += [
            ("example1 A1 eigenvalues", ck.spectral.a1 and 0.133 <= lam[0] <= 0.135 and 29.86 <= lam[1] <= 29.87, f"{lam}"),
            ("example1 rank det >= 3.9", ck.rank.holds and ck.rank.det_range.lo >= 3.9, str(ck.rank.det_range)),
            ("example1 coercive", ck.coercivity.coercive, ck.coercivity.verdict),
            (
                "example1 unique root (0,0)",
                sol.roots.verdict == "unique" and np.allclose(sol.root.x, 0, atol=1e-8) and sol.root.residual <= 1e-9,
                f"{sol.root.x} from {sol.roots.starts} starts",
            ),
        ]
    if want("example2"):
        p = load_problem(_fixture_path("example2"))
        sol = solve_algebraic(p, None, SolveOptions(seed=seed))
        ck = sol.checklist
        out += [
            ("example2 det A = 0, A1 fails", abs(ck.spectral.det_A) <= 1e-12 and not ck.spectral.a1, f"{ck.spectral.det_A}"),
            ("example2 corollary route", ck.theorem == "corollary10" and ck.coercivity.coercive, ck.coercivity.verdict),
            ("example2 rank", ck.rank.holds, str(ck.rank.det_range)),
            ("example2 unique root", sol.roots.verdict == "unique", f"{sol.root.x}"),
        ]
    if want("fa"):
        for a in (-0.5, 0.0, 0.5):
            p = load_problem(_fixture_path("fa"), params={"a": a})
            rep = compare_conditions(p, seed=seed)
            cert = rep.rank
            leaves_ok = cert.holds and all(
                lf.det.lo >= 1 - abs(a) - 1e-9 and lf.det.hi <= 1 + abs(a) + 1e-9 for lf in cert.leaves
            )
            pm = rep.pourciau
            band = pm.values * pm.grid**2
            sel = (pm.grid >= 10) & (pm.grid <= 100)
            ratio = float(band[sel].max() / band[sel].min())
            out += [
                (f"fa a={a} rank", leaves_ok, str(cert.det_range)),
                (f"fa a={a} coercive", all(c.coercive for c in rep.coercivity), f"{len(rep.coercivity)} y"),
                (
                    f"fa a={a} pourciau",
                    pm.verdict == "converges-likely" and -2.3 <= pm.exponent <= -1.7 and ratio <= 3.0,
                    f"p={pm.exponent:.4f} band={ratio:.4f}",
                ),
                (f"fa a={a} inversion", rep.row("audited-inversion").holds, rep.row("audited-inversion").detail),
            ]
    if want("cubic"):
        p = load_problem(_fixture_path("cubic"))
        at = atlas_of(p, np.linspace(-2, 2, 41), SolveOptions(seed=seed))
        out.append(
            ("cubic atlas", at.breaks == 0 and max(e.residual for e in at.entries) <= 1e-9, f"{len(at)} samples, {at.breaks} breaks")
        )
    if want("twowell"):
        p = load_problem(_fixture_path("twowell"))
        rs = find_roots(p, None, SolveOptions(seed=seed))
        xs = sorted(float(r.x[0]) for r in rs.roots)
        ok_roots = len(xs) == 2 and abs(xs[0] + 1) <= 1e-8 and abs(xs[1] - 1) <= 1e-8
        ok_non = len(rs.nonroots) == 1 and abs(rs.nonroots[0].x[0]) <= 1e-6 and abs(rs.nonroots[0].value - 0.5) <= 1e-8
        sig = rank_deficiency(p, rs.nonroots[0]) if rs.nonroots else math.nan
        out.append(("twowell roots and non-root", ok_roots and ok_non and sig <= 1e-6, f"roots {xs}, sigma_min {sig:.3g}"))
        sad = mountain_pass(_objective_for(p), [-1.0], [1.0], seed=seed)
        out.append(
            (
                "twowell mountain pass",
                abs(sad.point[0]) <= 1e-4 and abs(sad.value - 0.5) <= 1e-4 and sad.stationarity <= 1e-8,
                f"v={sad.point[0]:.3g} c={sad.value:.10g}",
            )
        )
    return out


def cmd_fixtures(args, out: Path) -> int:
    if args.verify:
        only = set(args.only.split(",")) if args.only else None
        if only and not only <= FIXTURES.keys():
            raise UsageError(f"unknown fixture(s): {', '.join(sorted(only - FIXTURES.keys()))}")
        checks = _verify_checks(only, args.seed)
        lines = [f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})" for name, ok, detail in checks]
        (out / "verify.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        print("\n".join(lines))
        return EXIT_OK if all(ok for _, ok, _ in checks) else EXIT_HYPOTHESIS
    if args.action == "run":
        if args.name not in FIXTURES:
            raise UsageError(f"unknown fixture {args.name!r}")
        sub = FIXTURES[args.name][1]
        argv = [sub[0], args.name, *sub[1:], "--out", str(out), "--seed", str(args.seed), "--threads", str(args.threads)]
        return run(argv)
    for name, (desc, sub) in FIXTURES.items():
        print(f"{name:10s} {desc}  [{' '.join(sub)}]  {_fixture_path(name)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _vec_arg(text: str) -> list[float]:
    """A vector flag value: ``2``, ``1,-2`` or ``[1, -2]`` (write ``--y=-1,2`` when it starts with a minus)."""
    body = text.strip().removeprefix("[").removesuffix("]")
    try:
        return [float(v) for v in body.replace(" ", ",").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a vector: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="multistart worker threads")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="solver setting or box override")
    common.add_argument("--param", action="append", metavar="NAME=VALUE", help="problem parameter override")

    ap = argparse.ArgumentParser(prog="lipglobal", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"lipglobal {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        if name != "fixtures":
            sp.add_argument("problem", help="problem file or bundled fixture name")
        return sp

    sp = add("check", "spectral, rank and coercivity certificates")
    sp.add_argument("--y", type=_vec_arg)
    sp = add("solve", "all roots of F(., y) by multistart")
    sp.add_argument("--y", type=_vec_arg)
    sp = add("atlas", "continuation of the implicit function along a y segment")
    sp.add_argument("--from", dest="y_from", type=_vec_arg)
    sp.add_argument("--to", dest="y_to", type=_vec_arg)
    sp.add_argument("--samples", type=int, default=41)
    sp.add_argument("--audit-every", type=int, default=10)
    sp = add("invert", "audited preimage of a target under a pure map")
    sp.add_argument("--target", type=_vec_arg, required=True)
    sp = add("algebraic", "hypothesis checklist and solution of Ax = F(x) + xi")
    sp.add_argument("--xi", type=_vec_arg)
    sp = add("mpass", "mountain-pass probe between two roots")
    sp.add_argument("--x1", type=_vec_arg, required=True)
    sp.add_argument("--x2", type=_vec_arg, required=True)
    sp.add_argument("--y", type=_vec_arg)
    sp.add_argument("--K", type=int, default=32, help="number of string segments")
    sp = add("compare", "global inversion conditions side by side")
    sp.add_argument("--a", type=float, help="value of the parameter a")
    sp.add_argument("--targets", type=int, default=50)
    sp.add_argument("--y-count", type=int, default=5)
    sp = add("fixtures", "list, run or verify the bundled examples")
    sp.add_argument("action", nargs="?", choices=["list", "run"], default="list")
    sp.add_argument("name", nargs="?")
    sp.add_argument("--verify", action="store_true", help="run every fixture and check its expected verdicts")
    sp.add_argument("--only", help="comma-separated fixture names for --verify")
    return ap


COMMANDS: dict[str, Callable] = {
    "check": cmd_check,
    "solve": cmd_solve,
    "atlas": cmd_atlas,
    "invert": cmd_invert,
    "algebraic": cmd_algebraic,
    "mpass": cmd_mpass,
    "compare": cmd_compare,
}


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    op = args.command
    try:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_manifest(out, args, argv)
        if op == "fixtures":
            return cmd_fixtures(args, out)
        overrides = _kv(args.set, "--set")
        opts = _solve_options(args, overrides)
        p = _load(args, overrides)
        return COMMANDS[op](args, p, opts, out)
    except (UsageError, ProblemError, PreconditionError) as exc:
        print(f"{op}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MultipleRoots, StationaryNonroot) as exc:
        print(f"{op}: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except NoRootFound as exc:
        print(f"{op}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"{op}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run())
