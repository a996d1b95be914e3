"""Classical global-inversion conditions evaluated on the same map.

* Pourciau: m(t) = inf over |z| <= t of the smallest singular value over the
  generalized Jacobian; the condition asks that its integral diverges.
* Hadamard-Levy: the integrand min over |x| = r of 1 / ||f'(x)^-1||.
* Ioffe: the surjection modulus Sur(f, x)(t), estimated from the image of a
  circle by winding number and distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from .certify import coercivity_probe, rank_certificate, sphere_directions
from .clarke import LeastSquares, ball_points, jacobian_family
from .expr import ProblemDef, algebraic_map, default_eta, evaluate, evaluate_many, inverse_problem, selection_jacobians
from .solve import SolveError, SolveOptions, invert

__all__ = [
    "ConditionProfile",
    "SurEstimate",
    "LiusternikCheck",
    "ConditionRow",
    "ComparisonReport",
    "matrix_lower_bound",
    "min_sigma_at",
    "pourciau_m",
    "hadamard_levy_integrand",
    "hadamard_levy_profile",
    "ioffe_sur",
    "liusternik_check",
    "compare_conditions",
    "fit_decay",
]

MARGIN = 0.1
FIT_RESIDUAL = 0.1


def matrix_lower_bound(A) -> float:
    """[A] = inf over unit u of |Au|, i.e. the smallest singular value."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    return float(np.linalg.svd(A, compute_uv=False)[-1])


def _pure(p: ProblemDef) -> ProblemDef:
    if p.m:
        raise ValueError("this condition needs a pure map (m = 0)")
    return algebraic_map(p) if p.A is not None else p


def min_sigma_at(p: ProblemDef, X: np.ndarray, family: bool = True) -> np.ndarray:
    """Smallest singular value of the Jacobian at each row of X.

    Points on a kink use the minimum over the vertices of the pointwise
    family when ``family`` is set; otherwise they are nudged off the kink.
    """
    X = np.atleast_2d(X)
    _, J, absv = selection_jacobians(p, X)
    out = np.linalg.svd(J, compute_uv=False)[:, -1]
    if absv.shape[1]:
        eta = 1e-10 * (1.0 + np.max(np.abs(X), axis=1))
        for i in np.flatnonzero(np.any(np.abs(absv) <= eta[:, None], axis=1)):
            if family:
                out[i] = jacobian_family(p, X[i], eta=default_eta(X[i])).min_singular_value()
            else:
                z = X[i] + 1e3 * eta[i]
                out[i] = np.linalg.svd(selection_jacobians(p, z[None])[1][0], compute_uv=False)[-1]
    return out


def _tangent_basis(u: np.ndarray) -> np.ndarray:
    return np.linalg.svd(u[None, :])[2][1:]


def _refine_on_sphere(fun, U: np.ndarray, rho: float, step0: float, iters: int = 40) -> tuple[np.ndarray, np.ndarray]:
    """Compass search on the sphere of radius rho, per starting direction; never increases values."""
    vals = fun(rho * U)
    U = U.copy()
    if U.shape[1] == 1:
        return U, vals
    for j in range(len(U)):
        u, v, h = U[j], vals[j], step0
        for _ in range(iters):
            B = _tangent_basis(u)
            cands = np.vstack([np.cos(h) * u + np.sin(h) * s * b for b in B for s in (1.0, -1.0)])
            cands /= np.linalg.norm(cands, axis=1, keepdims=True)
            cv = fun(rho * cands)
            k = int(np.argmin(cv))
            if cv[k] < v:
                u, v = cands[k], cv[k]
            else:
                h *= 0.5
        U[j], vals[j] = u, v
    return U, vals


@dataclass(frozen=True)
class ConditionProfile:
    kind: str
    grid: np.ndarray
    values: np.ndarray
    integral: np.ndarray  # cumulative trapezoid
    exponent: float
    constant: float
    fit_residual: float
    verdict: str  # diverges-likely | converges-likely | inconclusive

    def rows(self):
        return zip(self.grid.tolist(), self.values.tolist(), self.integral.tolist())


def fit_decay(t: np.ndarray, v: np.ndarray, decades: float = 1.0) -> tuple[float, float, float]:
    """Power-law fit v ~ c t^p over the last ``decades`` of the grid; returns (p, c, rms log residual)."""
    sel = (t >= t[-1] / 10**decades) & (v > 0)
    if sel.sum() < 2:
        return math.nan, math.nan, math.inf
    lt, lv = np.log(t[sel]), np.log(v[sel])
    slope, icpt = np.polyfit(lt, lv, 1)
    res = float(np.sqrt(np.mean((lv - (slope * lt + icpt)) ** 2)))
    return float(slope), float(math.exp(icpt)), res


def _profile(kind: str, grid: np.ndarray, values: np.ndarray) -> ConditionProfile:
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(grid))))
    p, c, res = fit_decay(grid, values)
    if math.isfinite(p) and res <= FIT_RESIDUAL and p <= -1.0 - MARGIN:
        verdict = "converges-likely"
    elif math.isfinite(p) and res <= FIT_RESIDUAL and p >= -1.0 + MARGIN:
        verdict = "diverges-likely"
    elif np.all(values == 0.0) and len(values):
        verdict = "converges-likely"
    else:
        verdict = "inconclusive"
    return ConditionProfile(kind, grid, values, cum, p, c, res, verdict)


DEFAULT_T_GRID = tuple(np.geomspace(0.1, 100.0, 31).tolist())


def pourciau_m(
    p: ProblemDef,
    t_grid: Sequence[float] = DEFAULT_T_GRID,
    samples: int = 256,
    seed: int = 0,
    refine: int = 4,
) -> ConditionProfile:
    """Running minimum over growing balls of the vertex-minimal smallest singular value."""
    q = _pure(p)
    n = q.n
    t = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t) <= 0) or t[0] <= 0:
        raise ValueError("t_grid must be positive and increasing")
    B = ball_points(n, samples, seed)
    D = sphere_directions(n, samples, seed + 1)
    vals = np.empty(len(t))
    running = math.inf
    for i, ti in enumerate(t):
        inner = min_sigma_at(q, ti * B).min()
        sph = min_sigma_at(q, ti * D)
        best = np.argsort(sph)[:refine]
        _, rv = _refine_on_sphere(lambda Z: min_sigma_at(q, Z), D[best], ti, math.pi / samples)
        running = min(running, float(inner), float(sph.min()), float(rv.min()))
        vals[i] = running
    return _profile("pourciau", t, vals)


def hadamard_levy_integrand(p: ProblemDef, r: float, samples: int = 256, seed: int = 0, refine: int = 4) -> float:
    """min over sampled |x| = r of sigma_min(f'(x)) (0 if some sample is singular)."""
    q = _pure(p)
    D = sphere_directions(q.n, samples, seed)
    fun = lambda Z: min_sigma_at(q, Z, family=False)  # noqa: E731
    sph = fun(r * D)
    best = np.argsort(sph)[:refine]
    _, rv = _refine_on_sphere(fun, D[best], r, math.pi / samples)
    return float(max(0.0, min(sph.min(), rv.min())))


def hadamard_levy_profile(p: ProblemDef, r_grid: Sequence[float] = DEFAULT_T_GRID, samples: int = 256, seed: int = 0):
    r = np.asarray(r_grid, dtype=float)
    vals = np.array([hadamard_levy_integrand(p, ri, samples, seed) for ri in r])
    return _profile("hadamard-levy", r, vals)


# ---------------------------------------------------------------------------
# surjection modulus


@dataclass(frozen=True)
class SurEstimate:
    value: float
    resolution: float  # the value carries about +/- this much sampling uncertainty
    winding: int


def _winding(curve: np.ndarray, w: np.ndarray) -> int:
    a = np.arctan2(curve[:, 1] - w[1], curve[:, 0] - w[0])
    da = np.diff(np.concatenate((a, a[:1])))
    da = (da + np.pi) % (2 * np.pi) - np.pi
    return int(round(da.sum() / (2 * np.pi)))


def _seg_dist(P: np.ndarray, Q: np.ndarray, w: np.ndarray) -> np.ndarray:
    d = Q - P
    dd = np.einsum("ij,ij->i", d, d)
    s = np.clip(np.einsum("ij,ij->i", w - P, d) / np.where(dd > 0, dd, 1.0), 0.0, 1.0)
    return np.linalg.norm(P + s[:, None] * d - w, axis=1)


def ioffe_sur(p: ProblemDef, x, t: float, samples: int = 720, seed: int = 0) -> SurEstimate:
    """Largest r with B[f(x), r] inside f(B(x, t)), estimated from the image of the sphere.

    n = 1: the image of [x - t, x + t] is an interval. n = 2: points with
    nonzero winding number of the image circle are covered, so the estimate is
    the distance from f(x) to the image curve when f(x) winds, else 0.
    """
    q = _pure(p)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if t <= 0:
        raise ValueError("t must be positive")
    fx = evaluate(q, x)
    if q.n == 1:
        s = x[0] + t * np.linspace(-1.0, 1.0, samples + 1)
        img = evaluate_many(q, s[:, None])[:, 0]
        lo, hi = img.min(), img.max()
        val = max(0.0, min(fx[0] - lo, hi - fx[0]))
        return SurEstimate(float(val), float(np.max(np.abs(np.diff(img)))), 1 if val > 0 else 0)
    if q.n != 2:
        raise ValueError("surjection modulus sampling supports n <= 2")
    th = 2 * np.pi * np.arange(samples) / samples
    U = np.stack([np.cos(th), np.sin(th)], axis=1)
    curve = evaluate_many(q, x + t * U)
    wind = _winding(curve, fx)
    nxt = np.roll(curve, -1, axis=0)
    seglen = np.linalg.norm(nxt - curve, axis=1)
    if wind == 0:
        return SurEstimate(0.0, float(seglen.max()), 0)
    dist = _seg_dist(curve, nxt, fx)
    k = int(np.argmin(dist))
    # local refinement of the closest boundary point over the neighbouring angles
    lo_t, hi_t = th[k] - 2 * np.pi / samples, th[k] + 4 * np.pi / samples
    g = lambda a: float(np.linalg.norm(evaluate(q, x + t * np.array([np.cos(a), np.sin(a)])) - fx))  # noqa: E731
    phi = (math.sqrt(5) - 1) / 2
    a, b = lo_t, hi_t
    c, d = b - phi * (b - a), a + phi * (b - a)
    gc, gd = g(c), g(d)
    for _ in range(60):
        if gc < gd:
            b, d, gd = d, c, gc
            c = b - phi * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + phi * (b - a)
            gd = g(d)
    # curve samples bound the distance from above; chords would undershoot it
    val = min(float(np.linalg.norm(curve - fx, axis=1).min()), gc, gd)
    return SurEstimate(val, float(seglen.max()), wind)


@dataclass(frozen=True)
class LiusternikCheck:
    x: np.ndarray
    ts: np.ndarray
    ratios: np.ndarray
    extrapolated: float
    sigma_min: float

    @property
    def relative_error(self) -> float:
        return abs(self.extrapolated - self.sigma_min) / max(self.sigma_min, 1e-300)


def liusternik_check(p: ProblemDef, x, ts: Sequence[float] = (1e-1, 1e-2, 1e-3), samples: int = 720) -> LiusternikCheck:
    """Sur(f, x)(t) / t for small t, extrapolated linearly to t = 0, against sigma_min(f'(x))."""
    q = _pure(p)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    ts_a = np.asarray(ts, dtype=float)
    ratios = np.array([ioffe_sur(q, x, t, samples).value / t for t in ts_a])
    slope, icpt = np.polyfit(ts_a, ratios, 1)
    sig = jacobian_family(q, x).min_singular_value()
    return LiusternikCheck(x, ts_a, ratios, float(icpt), sig)


# ---------------------------------------------------------------------------
# comparison table


@dataclass(frozen=True)
class ConditionRow:
    condition: str
    verdict: str
    holds: bool | None
    detail: str


@dataclass(frozen=True)
class ComparisonReport:
    name: str
    rows: tuple[ConditionRow, ...]
    rank: object = field(repr=False, default=None)
    coercivity: tuple = field(repr=False, default=())
    pourciau: ConditionProfile | None = field(repr=False, default=None)
    hadamard_levy: ConditionProfile | None = field(repr=False, default=None)
    liusternik: tuple = field(repr=False, default=())
    inversions: tuple = field(repr=False, default=())

    def row(self, condition: str) -> ConditionRow:
        for r in self.rows:
            if r.condition == condition:
                return r
        raise KeyError(condition)

    def table(self) -> str:
        w = max(len(r.condition) for r in self.rows)
        v = max(len(r.verdict) for r in self.rows)
        lines = [f"{'condition'.ljust(w)}  {'holds'.ljust(5)}  {'verdict'.ljust(v)}  detail"]
        for r in self.rows:
            h = "?" if r.holds is None else ("pass" if r.holds else "fail")
            lines.append(f"{r.condition.ljust(w)}  {h.ljust(5)}  {r.verdict.ljust(v)}  {r.detail}")
        return "\n".join(lines)


def compare_conditions(
    p: ProblemDef,
    seed: int = 0,
    region=None,
    y_count: int = 5,
    targets: int = 50,
    target_box: float = 3.0,
    inversion_starts: int | None = 16,
    t_grid: Sequence[float] = DEFAULT_T_GRID,
    r_grid: Sequence[float] = DEFAULT_T_GRID,
    liusternik_points: int = 2,
) -> ComparisonReport:
    """Run each global-inversion condition on the same pure map and tabulate the verdicts."""
    q = _pure(p)
    n = q.n
    region = region or q.box or tuple((-10.0, 10.0) for _ in range(n))
    rows: list[ConditionRow] = []

    # Hadamard-Palais route: coercive phi_y plus maximal rank
    inv = inverse_problem(q)
    ys = 2.0 * qmc.Halton(d=n, scramble=True, seed=np.random.default_rng(seed)).random(y_count) - 1.0
    coer = tuple(coercivity_probe(LeastSquares(inv, y), n, seed=seed) for y in ys)
    cert = rank_certificate(q, region, seed=seed)
    all_coercive = all(c.coercive for c in coer)
    hp = all_coercive and cert.holds
    det_txt = f"det in {cert.det_range}" if cert.det_range is not None else cert.verdict
    rows.append(
        ConditionRow(
            "hadamard-palais",
            "pass" if hp else "fail",
            hp,
            f"coercive-evidence at {sum(c.coercive for c in coer)}/{len(coer)} y; rank {cert.verdict} on box ({det_txt})",
        )
    )

    pm = pourciau_m(q, t_grid, seed=seed)
    rows.append(
        ConditionRow(
            "pourciau",
            pm.verdict,
            None if pm.verdict == "inconclusive" else pm.verdict == "diverges-likely",
            f"m(t) ~ {pm.constant:.4g} t^{pm.exponent:.3f} (fit rms {pm.fit_residual:.2g})",
        )
    )
    hl = hadamard_levy_profile(q, r_grid, seed=seed)
    rows.append(
        ConditionRow(
            "hadamard-levy",
            hl.verdict,
            None if hl.verdict == "inconclusive" else hl.verdict == "diverges-likely",
            f"integrand ~ {hl.constant:.4g} r^{hl.exponent:.3f} (fit rms {hl.fit_residual:.2g})",
        )
    )

    checks = []
    if n <= 2 and liusternik_points:
        box = np.array(region, dtype=float)
        P = box[:, 0] + qmc.Halton(d=n, scramble=True, seed=np.random.default_rng(seed + 7)).random(
            16 * liusternik_points
        ) * (box[:, 1] - box[:, 0])
        P = 0.2 * P  # stay at moderate scale
        # keep points whose 0.1-ball does not reach a kink
        _, _, absv = selection_jacobians(q, P)
        if absv.shape[1]:
            P = P[np.min(np.abs(absv), axis=1) > 0.2]
        for x in P[:liusternik_points]:
            try:
                checks.append(liusternik_check(q, x))
            except (ArithmeticError, ValueError):
                continue
        worst = max((c.relative_error for c in checks), default=math.nan)
        ok = bool(checks) and worst <= 0.05
        rows.append(
            ConditionRow(
                "liusternik",
                "consistent" if ok else "inconsistent",
                ok,
                f"max relative error of extrapolated Sur/t vs sigma_min: {worst:.3g} at {len(checks)} points",
            )
        )

    # audited inversion on random targets
    opts = SolveOptions(multistart=inversion_starts, seed=seed, start_box=tuple(map(tuple, region)))
    T = target_box * (2.0 * qmc.Halton(d=n, scramble=True, seed=np.random.default_rng(seed + 11)).random(targets) - 1.0)
    results = []
    for y in T:
        try:
            root = invert(q, y, opts)
            err = float(np.max(np.abs(evaluate(q, root.x) - y)))
            results.append((y, root.x, err, "unique"))
        except SolveError as exc:
            rs = exc.rootset
            if rs is not None and len(rs.roots) == 1:
                # one root next to a stationary non-root: keep the root, flag the audit
                x = rs.roots[0].x
                results.append((y, x, float(np.max(np.abs(evaluate(q, x) - y))), rs.verdict))
            else:
                results.append((y, None, math.inf, rs.verdict if rs is not None else "error"))
    good = sum(1 for r in results if r[3] == "unique" and r[2] <= 1e-8)
    single = sum(1 for r in results if r[1] is not None and r[2] <= 1e-8)
    worst_err = max((r[2] for r in results if r[1] is not None), default=math.nan)
    extra = f" ({single - good} more with one root beside a stationary non-root)" if single > good else ""
    rows.append(
        ConditionRow(
            "audited-inversion",
            "pass" if good == len(results) else "fail",
            good == len(results),
            f"{good}/{len(results)} targets with one root{extra}; max |f(x)-y| = {worst_err:.2g}",
        )
    )
    return ComparisonReport(q.name, tuple(rows), cert, coer, pm, hl, tuple(checks), tuple(results))
