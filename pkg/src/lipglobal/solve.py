"""Global implicit functions and inverses by coercive least-squares minimization.

Roots of F(., y) are the zero-value minimizers of phi_y(x) = 1/2 ||F(x, y)||^2.
A gradient-sampling minimizer is run from many quasi-random starts; converged
points are clustered and split into roots and stationary non-roots.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import qmc

from .certify import (
    CoercivityReport,
    GrowthReport,
    RankCertificate,
    SpectralReport,
    coercivity_probe,
    growth_constants,
    rank_certificate,
    spectral_report,
)
from .clarke import LeastSquares, Objective, jacobian_family, min_norm_element
from .expr import ProblemDef, algebraic_map, algebraic_system, as_system, evaluate, inverse_problem

__all__ = [
    "SolveOptions",
    "MinimizeResult",
    "Root",
    "StationaryPoint",
    "RootSet",
    "AtlasEntry",
    "Atlas",
    "SolveError",
    "MultipleRoots",
    "NoRootFound",
    "StationaryNonroot",
    "minimize_nonsmooth",
    "minimize_many",
    "find_roots",
    "implicit_eval",
    "implicit_atlas",
    "invert",
    "AlgebraicChecklist",
    "AlgebraicSolution",
    "solve_algebraic",
    "start_points",
    "default_multistart",
]


@dataclass(frozen=True)
class SolveOptions:
    multistart: int | None = None  # None: 64 for n <= 2, else 32 * 2**n
    start_box: tuple[tuple[float, float], ...] | None = None
    eps_r: float = 1e-9
    eps_s: float = 1e-8
    cluster_rel: float = 1e-6
    max_iter: int = 2000
    seed: int = 0
    samples: int | None = None  # bundle size, default 2(n+1)
    initial_radius: float | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        if self.eps_r <= 0 or self.eps_s <= 0 or self.cluster_rel <= 0:
            raise ValueError("tolerances and cluster radius must be positive")
        if self.multistart is not None and self.multistart < 1:
            raise ValueError("multistart must be positive")

    def cluster_radius(self, x) -> float:
        return self.cluster_rel * (1.0 + float(np.linalg.norm(x)))


def default_multistart(n: int) -> int:
    return 64 if n <= 2 else 32 * 2**n


# ---------------------------------------------------------------------------
# gradient sampling with a variable metric


@dataclass(frozen=True)
class MinimizeResult:
    x: np.ndarray
    value: float
    stationarity: float
    radius: float
    iterations: int
    converged: bool
    reason: str
    history: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))


def _ball(rng: np.random.Generator, k: int, n: int) -> np.ndarray:
    d = rng.standard_normal((k, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * rng.random((k, 1)) ** (1.0 / n)


def minimize_many(
    objective: Objective,
    X0,
    opts: SolveOptions = SolveOptions(),
    *,
    ftarget: float = -math.inf,
    stat_scale=None,
    rngs=None,
) -> list[MinimizeResult]:
    """Run gradient sampling from each row of X0, vectorizing evaluations across starts.

    Each iteration samples a bundle in B(x, radius), takes the min-norm element
    v_H of the bundle in the BFGS metric H as search direction d = -H v_H and
    backtracks (Armijo c = 1e-4, halving). The radius is cut whenever the
    Euclidean min-norm ||v|| falls below it, and after a failed line search.
    A start stops when ||v|| <= eps_s * stat_scale(f) at radius
    <= eps_s * min(1, stat_scale(f)), or when f <= ftarget.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    S, n = X0.shape
    k = opts.samples or 2 * (n + 1)
    if rngs is None:
        rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(opts.seed).spawn(S)]
    eps = opts.eps_s
    X = X0.copy()
    F, Gc = objective.values_grads(X)
    F = F.copy()
    H = np.repeat(np.eye(n)[None], S, axis=0)
    r0 = np.array(
        [opts.initial_radius if opts.initial_radius else 0.1 * (1.0 + np.linalg.norm(x)) for x in X0]
    )
    R = r0.copy()
    nu = np.full(S, np.inf)
    iters = np.zeros(S, dtype=int)
    done = np.zeros(S, dtype=bool)
    reason = ["iteration cap"] * S
    history: list[list[float]] = [[float(f)] for f in F]
    ladder = 0.5 ** np.arange(0, 40)
    eye = np.eye(n)
    for s in range(S):
        if F[s] <= ftarget:
            done[s], reason[s], nu[s] = True, "target", float(np.linalg.norm(Gc[s]))

    def scale(f):
        return 1.0 if stat_scale is None else stat_scale(f)

    for _ in range(opts.max_iter):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        # bundle gradients for all active starts in one call
        P = np.concatenate([X[s] + R[s] * _ball(rngs[s], k, n) for s in act])
        _, GP = objective.values_grads(P)
        GP = GP.reshape(len(act), k, n)
        D = np.zeros((len(act), n))
        want_step = np.zeros(len(act), dtype=bool)
        for j, s in enumerate(act):
            iters[s] += 1
            Gb = np.vstack([Gc[s][None], GP[j]])
            if not np.all(np.isfinite(Gb)):
                done[s], reason[s] = True, "non-finite gradient"
                continue
            meas = min_norm_element(Gb)
            nu[s] = meas.norm
            tol_s = eps * scale(F[s])
            # the radius must shrink with the scale too, or a ball straddling a nearby root looks stationary
            if nu[s] <= tol_s and R[s] <= eps * min(1.0, scale(F[s])):
                done[s], reason[s] = True, "stationary"
                continue
            floor = 1e-15 * (1.0 + float(np.linalg.norm(X[s])))
            if nu[s] <= max(R[s], tol_s):
                if R[s] <= floor:
                    done[s], reason[s] = True, "radius underflow"
                    continue
                # jump down the dyadic radius schedule to just below max(nu, tol_s / 2)
                target = max(nu[s], 0.5 * min(tol_s, eps), floor)
                jmp = max(1, math.ceil(math.log2(R[s] / target))) if target < R[s] else 1
                R[s] *= 0.5**jmp
                H[s] = np.eye(n)
                continue
            if np.array_equal(H[s], eye):
                d = -meas.vector
            else:
                try:
                    L = np.linalg.cholesky(H[s])
                except np.linalg.LinAlgError:
                    H[s] = eye
                    L = eye
                d = -(L @ min_norm_element(Gb @ L).vector)
            if not np.all(np.isfinite(d)) or not np.any(d):
                R[s] *= 0.5
                continue
            D[j] = d
            want_step[j] = True
        idx = np.flatnonzero(want_step)
        if idx.size:
            sel = act[idx]
            trial = X[sel][:, None, :] + ladder[None, :, None] * D[idx][:, None, :]
            fv = objective.values(trial.reshape(-1, n)).reshape(len(sel), len(ladder))
            dec = np.einsum("ij,ij->i", D[idx], D[idx])
            newx, news = [], []
            for j, s in enumerate(sel):
                d = D[idx[j]]
                # Armijo with slope estimate -||v||_H^2 = -(d . H^{-1} d)
                slope = float(d @ np.linalg.solve(H[s], d)) if dec[j] > 0 else 0.0
                ok = np.flatnonzero(fv[j] <= F[s] - 1e-4 * ladder * slope)
                ok = ok[np.isfinite(fv[j][ok])]
                if ok.size == 0 or fv[j][ok[0]] > F[s]:
                    R[s] *= 0.5
                    H[s] = np.eye(n)
                    if R[s] < 1e-15 * (1.0 + float(np.linalg.norm(X[s]))):
                        done[s], reason[s] = True, "line search failed"
                    continue
                t = ladder[ok[0]]
                newx.append(s)
                news.append(X[s] + t * d)
            if newx:
                newx_a = np.array(newx)
                fnew, gnew = objective.values_grads(np.array(news))
                for j, s in enumerate(newx_a):
                    step = news[j] - X[s]
                    yv = gnew[j] - Gc[s]
                    sy = float(step @ yv)
                    if sy > 1e-12 * np.linalg.norm(step) * np.linalg.norm(yv) and sy > 0:
                        rho = 1.0 / sy
                        V = np.eye(n) - rho * np.outer(step, yv)
                        H[s] = V @ H[s] @ V.T + rho * np.outer(step, step)
                    X[s] = news[j]
                    F[s] = min(float(fnew[j]), F[s])
                    Gc[s] = gnew[j]
                    history[s].append(F[s])
                    if F[s] <= ftarget:
                        done[s], reason[s] = True, "target"
                        nu[s] = float(np.linalg.norm(gnew[j]))
    out = []
    for s in range(S):
        conv = reason[s] in ("stationary", "target")
        out.append(
            MinimizeResult(
                x=X[s].copy(),
                value=float(F[s]),
                stationarity=float(nu[s]),
                radius=float(R[s]),
                iterations=int(iters[s]),
                converged=conv,
                reason=reason[s],
                history=np.array(history[s]),
            )
        )
    return out


def minimize_nonsmooth(objective: Objective, x0, opts: SolveOptions = SolveOptions(), **kw) -> MinimizeResult:
    """Gradient-sampling minimization from a single start."""
    return minimize_many(objective, np.atleast_1d(np.asarray(x0, dtype=float))[None], opts, **kw)[0]


# ---------------------------------------------------------------------------
# multistart root finding


@dataclass(frozen=True)
class Root:
    x: np.ndarray
    residual: float
    stationarity: float
    basin_count: int


@dataclass(frozen=True)
class StationaryPoint:
    x: np.ndarray
    residual: float
    value: float
    stationarity: float
    basin_count: int


@dataclass(frozen=True)
class RootSet:
    y: np.ndarray
    roots: tuple[Root, ...]
    nonroots: tuple[StationaryPoint, ...]
    unconverged: int
    starts: int
    verdict: str  # unique | multiple | none-found | suspect

    @property
    def unique(self) -> bool:
        return self.verdict == "unique"


class SolveError(RuntimeError):
    def __init__(self, message: str, rootset: RootSet | None = None):
        self.rootset = rootset
        super().__init__(message)


class MultipleRoots(SolveError):
    pass


class NoRootFound(SolveError):
    pass


class StationaryNonroot(SolveError):
    pass


def _box_of(p: ProblemDef, opts: SolveOptions) -> np.ndarray:
    box = opts.start_box or p.x_box() or tuple((-10.0, 10.0) for _ in range(p.n))
    B = np.array(box, dtype=float)
    if B.shape != (p.n, 2):
        raise ValueError(f"start box must have {p.n} intervals")
    return B


def start_points(box: np.ndarray, count: int, seed: int) -> np.ndarray:
    """Box center first, then scrambled Halton points."""
    lo, hi = box[:, 0], box[:, 1]
    center = 0.5 * (lo + hi)
    if count == 1:
        return center[None]
    H = qmc.Halton(d=len(lo), scramble=True, seed=np.random.default_rng(seed)).random(count - 1)
    return np.vstack([center, lo + H * (hi - lo)])


def _cluster(points: list[np.ndarray], opts: SolveOptions) -> list[list[int]]:
    reps: list[np.ndarray] = []
    members: list[list[int]] = []
    for i, x in enumerate(points):
        for c, r in enumerate(reps):
            if np.linalg.norm(x - r) <= max(opts.cluster_radius(r), 1e3 * opts.eps_r):
                members[c].append(i)
                break
        else:
            reps.append(x)
            members.append([i])
    return members


def find_roots(p: ProblemDef, y=None, opts: SolveOptions = SolveOptions()) -> RootSet:
    """Multistart minimization of phi_y, clustering and root audit.

    Algebraic problems (with A) are solved as Ax - F(x) - xi = 0 with y = xi.
    """
    sysp, default_y = as_system(p)
    if y is None:
        y = default_y if default_y is not None else np.zeros(sysp.m)
    y = np.asarray(y, dtype=float).reshape(sysp.m)
    count = opts.multistart or default_multistart(p.n)
    starts = start_points(_box_of(p, opts), count, opts.seed)
    obj = LeastSquares(sysp, y)
    ftarget = 0.5 * (0.1 * opts.eps_r) ** 2

    def relative(f):
        # stationarity relative to ||F||, so approach to a regular root is not mistaken for a stop
        return min(1.0, math.sqrt(2.0 * max(f, 0.0)))

    seqs = np.random.SeedSequence(opts.seed).spawn(count)
    chunks = np.array_split(np.arange(count), max(1, opts.workers))

    def run(ix):
        rngs = [np.random.default_rng(seqs[i]) for i in ix]
        return minimize_many(obj, starts[ix], opts, ftarget=ftarget, stat_scale=relative, rngs=rngs)

    if opts.workers > 1:
        with ThreadPoolExecutor(opts.workers) as ex:
            results = [r for part in ex.map(run, [c for c in chunks if c.size]) for r in part]
    else:
        results = run(np.arange(count))
    root_pts, root_res = [], []
    non_pts, non_res = [], []
    unconverged = 0
    for res in results:
        resid = float(np.linalg.norm(evaluate(sysp, res.x, y)))
        if resid <= opts.eps_r:
            root_pts.append(res.x)
            root_res.append(res)
        elif res.converged:
            non_pts.append(res.x)
            non_res.append(res)
        else:
            unconverged += 1
    roots = []
    for members in _cluster(root_pts, opts):
        best = min(members, key=lambda i: root_res[i].value)
        x = root_pts[best]
        roots.append(
            Root(
                x=x.copy(),
                residual=float(np.linalg.norm(evaluate(sysp, x, y))),
                stationarity=root_res[best].stationarity,
                basin_count=len(members),
            )
        )
    nonroots = []
    for members in _cluster(non_pts, opts):
        best = min(members, key=lambda i: non_res[i].stationarity)
        x = non_pts[best]
        r = float(np.linalg.norm(evaluate(sysp, x, y)))
        nonroots.append(StationaryPoint(x.copy(), r, 0.5 * r * r, non_res[best].stationarity, len(members)))
    if not roots:
        verdict = "none-found"
    elif len(roots) > 1:
        verdict = "multiple"
    elif nonroots:
        verdict = "suspect"
    else:
        verdict = "unique"
    return RootSet(y.copy(), tuple(roots), tuple(nonroots), unconverged, count, verdict)


def _require_unique(rs: RootSet) -> Root:
    if rs.verdict == "unique":
        return rs.roots[0]
    if rs.verdict == "multiple":
        xs = ", ".join(np.array2string(r.x, precision=6) for r in rs.roots)
        raise MultipleRoots(f"{len(rs.roots)} roots found: {xs}", rs)
    if rs.verdict == "suspect":
        xs = ", ".join(np.array2string(s.x, precision=6) for s in rs.nonroots)
        raise StationaryNonroot(f"stationary non-root(s) at {xs} alongside the root", rs)
    hint = "" if not rs.nonroots else f" ({len(rs.nonroots)} stationary non-roots)"
    raise NoRootFound(f"no root found from {rs.starts} starts{hint}; try a coercivity probe", rs)


def implicit_eval(p: ProblemDef, y=None, opts: SolveOptions = SolveOptions()) -> Root:
    """The audited unique root x = f(y) of F(x, y) = 0."""
    return _require_unique(find_roots(p, y, opts))


def invert(p: ProblemDef, target, opts: SolveOptions = SolveOptions()) -> Root:
    """Audited preimage of ``target`` under a pure map f (m = 0)."""
    q = inverse_problem(p)
    target = np.asarray(target, dtype=float).reshape(p.n)
    return implicit_eval(q.with_box(p.x_box()) if p.x_box() else q, target, opts)


# ---------------------------------------------------------------------------
# continuation over y


@dataclass(frozen=True)
class AtlasEntry:
    y: np.ndarray
    x: np.ndarray
    residual: float
    ratio: float  # ||x_k - x_{k-1}|| / ||y_k - y_{k-1}|| (nan at the first sample)
    broken: bool
    audited: bool


@dataclass(frozen=True)
class Atlas:
    entries: tuple[AtlasEntry, ...]

    @property
    def breaks(self) -> int:
        return sum(e.broken for e in self.entries)

    @property
    def xs(self) -> np.ndarray:
        return np.array([e.x for e in self.entries])

    @property
    def ys(self) -> np.ndarray:
        return np.array([e.y for e in self.entries])

    def __len__(self) -> int:
        return len(self.entries)


def implicit_atlas(p: ProblemDef, y_samples, opts: SolveOptions = SolveOptions(), audit_every: int = 10) -> Atlas:
    """Continuation of the implicit function along ordered y samples.

    The first sample and every ``audit_every``-th sample get a full multistart
    audit; the rest warm-start from the previous root with a small sampling
    radius. A step is flagged as a break when the warm-started root and the
    audited root differ, or the warm start fails and a fresh solve is needed.
    """
    sysp, _ = as_system(p)
    Ys = np.asarray(y_samples, dtype=float).reshape(-1, sysp.m)
    if len(Ys) == 0:
        return Atlas(())
    entries: list[AtlasEntry] = []
    ftarget = 0.5 * (0.1 * opts.eps_r) ** 2
    prev_x = prev_y = None
    for i, y in enumerate(Ys):
        broken = False
        audited = i == 0 or i % audit_every == 0
        x = None
        if prev_x is not None:
            step = float(np.linalg.norm(y - prev_y))
            local = replace(opts, initial_radius=max(1e-3 * step, opts.eps_s))
            res = minimize_nonsmooth(LeastSquares(sysp, y), prev_x, local, ftarget=ftarget)
            if np.linalg.norm(evaluate(sysp, res.x, y)) <= opts.eps_r:
                x = res.x
        if audited or x is None:
            root = implicit_eval(p, y, opts)
            if x is not None and np.linalg.norm(root.x - x) > opts.cluster_radius(root.x):
                broken = True
            if x is None and prev_x is not None:
                broken = np.linalg.norm(root.x - prev_x) > 10 * (1.0 + np.linalg.norm(y - prev_y))
            x = root.x
        resid = float(np.linalg.norm(evaluate(sysp, x, y)))
        if prev_x is None:
            ratio = math.nan
        else:
            dy = float(np.linalg.norm(y - prev_y))
            ratio = float(np.linalg.norm(x - prev_x) / dy) if dy > 0 else math.nan
        entries.append(AtlasEntry(y.copy(), np.array(x, dtype=float), resid, ratio, bool(broken), audited))
        prev_x, prev_y = np.array(x, dtype=float), y
    return Atlas(tuple(entries))


def rank_deficiency(p: ProblemDef, point: StationaryPoint, y=None) -> float:
    """Min singular value over the Jacobian family at a stationary non-root."""
    sysp, default_y = as_system(p)
    y = default_y if y is None else y
    return jacobian_family(sysp, point.x, y).min_singular_value()


# ---------------------------------------------------------------------------
# algebraic problems Ax = F(x) + xi


@dataclass(frozen=True)
class AlgebraicChecklist:
    spectral: SpectralReport
    growth: GrowthReport
    rank: RankCertificate
    coercivity: CoercivityReport
    theorem: str  # theorem6 | theorem7 | corollary10
    route: str  # ax-minus-f | f-minus-ax
    growth_ok: bool

    @property
    def evidenced(self) -> bool:
        """All hypotheses of the selected theorem have supporting evidence."""
        return self.growth_ok and self.rank.holds and self.coercivity.coercive

    def lines(self) -> list[str]:
        s, g = self.spectral, self.growth
        lam = ", ".join(f"{v:.10g}" for v in s.eigenvalues)
        out = [
            f"eigenvalues(A^T A) = [{lam}]",
            f"det A = {s.det_A:.12g}",
            f"A1 = {'holds' if s.a1 else 'fails'}",
            f"growth a_est = {g.a_est:.6g}, b_est = {g.b_est:.6g}, gamma = {g.gamma_fit:.4g}, theta = {g.theta_fit:.4g}",
            f"rank = {self.rank.verdict}"
            + (f", det in [{self.rank.det_range.lo:.10g}, {self.rank.det_range.hi:.10g}]" if self.rank.det_range else ""),
            f"coercivity = {self.coercivity.verdict}",
            f"theorem = {self.theorem} (route {self.route})",
            f"claim = {'evidenced' if self.evidenced else 'audited only'}",
        ]
        return out


@dataclass(frozen=True)
class AlgebraicSolution:
    checklist: AlgebraicChecklist
    root: Root
    roots: RootSet

    @property
    def claim(self) -> str:
        return "evidenced" if self.checklist.evidenced else "audited only"


def _select_route(spec: SpectralReport, growth: GrowthReport) -> tuple[str, str]:
    if spec.a1:
        if growth.theorem6_linear or growth.sublinear:
            return "theorem6", "ax-minus-f"
        if growth.theorem7_linear or growth.superlinear:
            return "theorem7", "f-minus-ax"
    # direct coercivity of 1/2 ||Ax - F(x) - xi||^2 stands in for the growth condition
    return "corollary10", "ax-minus-f"


def algebraic_checklist(p: ProblemDef, xi=None, seed: int = 0) -> AlgebraicChecklist:
    """Collect the hypothesis evidence for Ax = F(x) + xi and pick the theorem it supports."""
    if p.A is None:
        raise ValueError("problem has no matrix A")
    xi = np.asarray(p.xi if xi is None else xi, dtype=float).reshape(p.n)
    spec = spectral_report(p.A)
    growth = growth_constants(p, seed=seed)
    theorem, route = _select_route(spec, growth)
    rank = rank_certificate(p, seed=seed)
    coer = coercivity_probe(LeastSquares(algebraic_system(p, route), xi if route == "ax-minus-f" else -xi), p.n, seed=seed)
    growth_ok = coer.coercive if theorem == "corollary10" else True
    return AlgebraicChecklist(spec, growth, rank, coer, theorem, route, growth_ok)


def solve_algebraic(p: ProblemDef, xi=None, opts: SolveOptions = SolveOptions()) -> AlgebraicSolution:
    """Check the hypotheses for Ax = F(x) + xi, then find the audited unique solution.

    The map is inverted along the selected route: x -> Ax - F(x) with target
    xi, or x -> F(x) - Ax with target -xi. Failing checks only weaken the
    claim to "audited only"; solver failures raise as in implicit_eval.
    """
    xi = np.asarray(p.xi if xi is None else xi, dtype=float).reshape(p.n)
    check = algebraic_checklist(p, xi, opts.seed)
    g = algebraic_map(p, check.route)
    target = xi if check.route == "ax-minus-f" else -xi
    q = inverse_problem(g)
    rs = find_roots(q.with_box(p.x_box()) if p.x_box() else q, target, opts)
    return AlgebraicSolution(check, _require_unique(rs), rs)
