"""Clarke generalized Jacobians, gradient bundles and the min-norm stationarity measure.

A generalized Jacobian is represented as an affine matrix family
``J0 + sum_i t_i E_i`` with every ``t_i`` in [-1, 1]. Parameters belong to abs
nodes: all occurrences of ``abs(u)`` with structurally equal ``u`` share one
parameter, since they switch together.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import nnls
from scipy.stats import qmc

from .expr import EvaluationError, ProblemDef, _as_points, default_eta, format_expr, selection_jacobians

__all__ = [
    "JacobianFamily",
    "GradientBundle",
    "StationarityMeasure",
    "PhiSubgradients",
    "Objective",
    "FunctionObjective",
    "LeastSquares",
    "NonsmoothSamplingError",
    "jacobian_family",
    "sample_gradients",
    "ball_points",
    "min_norm_element",
    "phi_subgradients",
]

MODES = ("pointwise", "outer-global")
MAX_VERTEX_PARAMS = 16


# ---------------------------------------------------------------------------
# Jacobian families


@dataclass(frozen=True)
class JacobianFamily:
    base: np.ndarray
    directions: tuple[np.ndarray, ...]
    anchor: tuple[np.ndarray, np.ndarray]
    mode: str
    exact: bool
    labels: tuple[str, ...] = ()

    @property
    def n_params(self) -> int:
        return len(self.directions)

    @property
    def is_singleton(self) -> bool:
        return not self.directions

    def member(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if t.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters")
        if np.any(np.abs(t) > 1.0):
            raise ValueError("parameters must lie in [-1, 1]")
        out = self.base.copy()
        for ti, E in zip(t, self.directions):
            out += ti * E
        return out

    def vertex_params(self) -> np.ndarray:
        k = self.n_params
        if k > MAX_VERTEX_PARAMS:
            raise ValueError(f"{k} parameters is too many to enumerate vertices")
        if k == 0:
            return np.zeros((1, 0))
        return np.array(list(itertools.product((-1.0, 1.0), repeat=k)))

    def vertices(self) -> np.ndarray:
        T = self.vertex_params()
        if self.n_params == 0:
            return self.base[None].copy()
        D = np.stack(self.directions)
        return self.base[None] + np.einsum("vk,kij->vij", T, D)

    def min_singular_value(self) -> float:
        """Smallest singular value over the vertex matrices."""
        return float(np.min(np.linalg.svd(self.vertices(), compute_uv=False)[:, -1]))


class _Form:
    """Affine-in-parameters derivative: monomial (tuple of parameter ids) -> gradient row."""

    __slots__ = ("terms",)

    def __init__(self, terms: dict[tuple[int, ...], np.ndarray]):
        self.terms = terms

    def scaled(self, c: float) -> "_Form":
        if c == 0.0:
            return _Form({})
        return _Form({k: c * v for k, v in self.terms.items()})

    def plus(self, other: "_Form", sign: float = 1.0) -> "_Form":
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out[k] + sign * v if k in out else sign * v
        return _Form(out)

    def times_param(self, g: int) -> "_Form":
        return _Form({tuple(sorted(k + (g,))): v for k, v in self.terms.items()})


def jacobian_family(
    p: ProblemDef, x, y=None, eta: float | None = None, mode: str = "pointwise"
) -> JacobianFamily:
    """Affine family enclosing the Clarke generalized x-Jacobian of F(., y) at x.

    In pointwise mode only abs nodes with |argument| <= eta get a parameter;
    the others keep their sign. In outer-global mode every abs node gets one.
    ``exact`` is True when the family is known to equal the Clarke Jacobian
    (active arguments have linearly independent gradients and no active abs
    sits inside another active abs); otherwise it is an outer approximation.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    X, Y = _as_points(p, x, y)
    xv, yv = X[0], Y[0]
    if eta is None:
        eta = default_eta(xv, yv if p.m else None)
    prog = p._program
    n = p.n
    vals: list[float] = [0.0] * len(prog.code)
    ders: list[_Form] = [_Form({})] * len(prog.code)
    groups: dict = {}
    group_grad: dict[int, _Form] = {}
    labels: list[str] = []
    for i, (kind, args, value, index, block) in enumerate(prog.code):
        if kind == "const":
            vals[i] = value
        elif kind == "var":
            if block == "x":
                vals[i] = float(xv[index])
                e = np.zeros(n)
                e[index] = 1.0
                ders[i] = _Form({(): e})
            else:
                vals[i] = float(yv[index])
        elif kind in ("add", "sub"):
            a, b = args
            s = 1.0 if kind == "add" else -1.0
            vals[i] = vals[a] + s * vals[b]
            ders[i] = ders[a].plus(ders[b], s)
        elif kind == "mul":
            a, b = args
            vals[i] = vals[a] * vals[b]
            ders[i] = ders[a].scaled(vals[b]).plus(ders[b].scaled(vals[a]))
        elif kind == "div":
            a, b = args
            if vals[b] == 0.0:
                raise EvaluationError(f"division by zero at node {i} ({format_expr(prog.nodes[i])})", i)
            q = vals[a] / vals[b]
            vals[i] = q
            ders[i] = ders[a].scaled(1.0 / vals[b]).plus(ders[b].scaled(-q / vals[b]))
        elif kind == "pow":
            (a,) = args
            e = int(value)
            vals[i] = vals[a] ** e
            ders[i] = ders[a].scaled(e * vals[a] ** (e - 1)) if e else _Form({})
        elif kind == "neg":
            (a,) = args
            vals[i] = -vals[a]
            ders[i] = ders[a].scaled(-1.0)
        elif kind == "abs":
            (a,) = args
            u = vals[a]
            vals[i] = abs(u)
            if mode == "outer-global" or abs(u) <= eta:
                key = prog.nodes[a]
                if key not in groups:
                    groups[key] = len(groups)
                    group_grad[groups[key]] = ders[a]
                    labels.append(f"t{groups[key] + 1}: abs({format_expr(key)})")
                ders[i] = ders[a].times_param(groups[key])
            else:
                ders[i] = ders[a].scaled(1.0 if u >= 0.0 else -1.0)
    rows = [ders[idx].terms for idx in prog.outputs]
    monomials = sorted({k for r in rows for k in r}, key=lambda k: (len(k), k))
    base = np.zeros((n, n))
    directions: list[np.ndarray] = []
    dir_labels: list[str] = []
    higher = False
    for mono in monomials:
        M = np.zeros((n, n))
        for c, r in enumerate(rows):
            if mono in r:
                M[c] = r[mono]
        if mono == ():
            base = M
            continue
        if not np.any(M):
            continue
        if len(mono) > 1:
            higher = True
        directions.append(M)
        dir_labels.append(" * ".join(labels[g].split(":")[0] for g in mono) if len(mono) > 1 else labels[mono[0]])
    if mode == "outer-global":
        exact = not directions
    else:
        used = sorted({g for mono in monomials if mono for g in mono})
        grads = []
        ok = not higher
        for g in used:
            terms = group_grad[g].terms
            if any(k != () for k in terms):
                ok = False
                break
            grads.append(terms.get((), np.zeros(n)))
        if ok and grads:
            G = np.array(grads)
            ok = bool(np.all(np.linalg.norm(G, axis=1) > 0.0)) and np.linalg.matrix_rank(G) == len(grads)
        exact = ok
    return JacobianFamily(
        base=base,
        directions=tuple(directions),
        anchor=(xv.copy(), yv.copy()),
        mode=mode,
        exact=exact,
        labels=tuple(dir_labels),
    )


# ---------------------------------------------------------------------------
# scalar objectives


class Objective:
    """Scalar objective on R^n with vectorized values and a.e. gradients."""

    dim: int

    def values(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def values_grads(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def smooth_mask(self, X: np.ndarray) -> np.ndarray:
        return np.ones(len(X), dtype=bool)

    def __call__(self, x) -> float:
        return float(self.values(np.atleast_2d(np.asarray(x, dtype=float)))[0])

    def grad(self, x) -> np.ndarray:
        return self.values_grads(np.atleast_2d(np.asarray(x, dtype=float)))[1][0]


class FunctionObjective(Objective):
    """Objective from a Python callable; central differences when no gradient is given."""

    def __init__(
        self,
        f: Callable[[np.ndarray], float],
        dim: int,
        grad: Callable[[np.ndarray], np.ndarray] | None = None,
        nonsmooth: Callable[[np.ndarray], bool] | None = None,
    ):
        self.f = f
        self.dim = dim
        self._grad = grad
        self._nonsmooth = nonsmooth

    def values(self, X):
        return np.array([float(self.f(x)) for x in np.atleast_2d(X)])

    def _fd(self, x):
        h = 1e-7 * (1.0 + np.max(np.abs(x)))
        g = np.empty(self.dim)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = h
            g[i] = (self.f(x + e) - self.f(x - e)) / (2 * h)
        return g

    def values_grads(self, X):
        X = np.atleast_2d(X)
        g = self._grad or self._fd
        return self.values(X), np.array([np.asarray(g(x), dtype=float) for x in X]).reshape(len(X), self.dim)

    def smooth_mask(self, X):
        if self._nonsmooth is None:
            return np.ones(len(X), dtype=bool)
        return np.array([not self._nonsmooth(x) for x in np.atleast_2d(X)])


class LeastSquares(Objective):
    """phi(x) = 1/2 ||F(x + shift, y)||^2 for an expression-built F."""

    def __init__(self, p: ProblemDef, y=None, shift=None):
        self.p = p
        self.dim = p.n
        self.y = np.zeros(p.m) if y is None else np.asarray(y, dtype=float).reshape(p.m)
        self.shift = np.zeros(p.n) if shift is None else np.asarray(shift, dtype=float).reshape(p.n)

    def residuals(self, X) -> np.ndarray:
        X = np.atleast_2d(X) + self.shift
        Y = np.broadcast_to(self.y, (len(X), self.p.m))
        return _run_values(self.p, X, Y)

    def values(self, X):
        r = self.residuals(X)
        return 0.5 * np.einsum("ki,ki->k", r, r)

    def values_grads(self, X):
        X = np.atleast_2d(X) + self.shift
        r, J, _ = selection_jacobians(self.p, X, np.broadcast_to(self.y, (len(X), self.p.m)))
        return 0.5 * np.einsum("ki,ki->k", r, r), np.einsum("kij,ki->kj", J, r)

    def smooth_mask(self, X):
        X = np.atleast_2d(X) + self.shift
        _, _, absvals = selection_jacobians(self.p, X, np.broadcast_to(self.y, (len(X), self.p.m)))
        return np.all(absvals != 0.0, axis=1)


def _run_values(p: ProblemDef, X, Y) -> np.ndarray:
    from .expr import _run

    return _run(p._program, X, Y, jac=False)[0]


# ---------------------------------------------------------------------------
# gradient bundles


class NonsmoothSamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class GradientBundle:
    center: np.ndarray
    points: np.ndarray
    gradients: np.ndarray
    values: np.ndarray
    radius: float

    def __len__(self) -> int:
        return len(self.gradients)


def ball_points(n: int, k: int, seed: int | np.random.SeedSequence | None = 0) -> np.ndarray:
    """k scrambled-Halton points in the unit ball of R^n (rejection from the cube)."""
    sampler = qmc.Halton(d=n, scramble=True, seed=np.random.default_rng(seed))
    out: list[np.ndarray] = []
    have = 0
    while have < k:
        P = 2.0 * sampler.random(max(8, 2 * (k - have) * (2**n))) - 1.0
        P = P[np.einsum("ij,ij->i", P, P) <= 1.0]
        out.append(P)
        have += len(P)
    return np.concatenate(out)[:k]


def sample_gradients(
    objective: Objective, u, radius: float, k: int | None = None, seed=0, max_resample: int = 10
) -> GradientBundle:
    """Gradients of the objective at k quasi-random points of the ball B(u, radius)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    n = u.size
    if radius <= 0:
        raise ValueError("radius must be positive")
    if k is None:
        k = 2 * (n + 1)
    if k < 1:
        raise ValueError("k must be positive")
    P = u + radius * ball_points(n, k, seed)
    ok = objective.smooth_mask(P)
    extra = k
    for attempt in range(max_resample + 1):
        if ok.all():
            break
        if attempt == max_resample:
            raise NonsmoothSamplingError(f"{int((~ok).sum())} samples stayed on nonsmooth points")
        bad = np.flatnonzero(~ok)
        fresh = u + radius * ball_points(n, extra + len(bad), seed)[extra : extra + len(bad)]
        extra += len(bad)
        P[bad] = fresh
        ok[bad] = objective.smooth_mask(fresh)
    vals, grads = objective.values_grads(P)
    return GradientBundle(center=u, points=P, gradients=grads, values=vals, radius=float(radius))


# ---------------------------------------------------------------------------
# nearest point of a convex hull to the origin


@dataclass(frozen=True)
class StationarityMeasure:
    vector: np.ndarray
    norm: float
    weights: np.ndarray
    iterations: int
    converged: bool = True

    @property
    def inconclusive(self) -> bool:
        return not self.converged


def _affine_min_norm(G: np.ndarray) -> np.ndarray:
    """Weights (summing to 1) of the min-norm point of the affine hull of the rows of G."""
    k = len(G)
    if k == 1:
        return np.ones(1)
    # bordered Gram system [Q 1; 1^T 0]; falls back to least squares when the support is degenerate
    K = np.empty((k + 1, k + 1))
    K[:k, :k] = G @ G.T
    K[:k, k] = K[k, :k] = 1.0
    K[k, k] = 0.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    try:
        sol = np.linalg.solve(K, rhs)
        w = sol[:k]
        if np.all(np.isfinite(sol)) and np.max(np.abs(K @ sol - rhs)) <= 1e-10 * (1.0 + np.max(np.abs(K)) * np.max(np.abs(sol))):
            return w
    except np.linalg.LinAlgError:
        pass
    B = (G[1:] - G[0]).T
    c, *_ = np.linalg.lstsq(B, -G[0], rcond=None)
    return np.concatenate(([1.0 - c.sum()], c))


def _polish(G: np.ndarray, lam: np.ndarray, extra: int) -> np.ndarray:
    """Active-set minor cycles on supp(lam) + {extra}; returns new feasible weights."""
    lam = lam.copy()
    S = sorted(set(np.flatnonzero(lam > 0.0)) | {extra})
    for _ in range(len(G) + 5):
        mu = _affine_min_norm(G[S])
        if np.all(mu > 0.0):
            new = np.zeros_like(lam)
            new[S] = mu
            return new
        cur = lam[S]
        # move from cur toward mu until a weight hits zero
        neg = mu <= 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(neg, cur / np.where(neg, cur - mu, 1.0), np.inf)
        ratios[np.isnan(ratios)] = 0.0
        theta = float(np.min(ratios))
        nxt = cur + theta * (mu - cur)
        nxt[nxt <= 1e-300] = 0.0
        nxt[np.argmin(ratios)] = 0.0
        lam = np.zeros_like(lam)
        lam[S] = nxt
        S = [s for s, v in zip(S, nxt) if v > 0.0]
        if not S:
            break
    return lam


def _wolfe(G: np.ndarray, lam: np.ndarray, v: np.ndarray, slack, cycles: int):
    it = 0
    for it in range(1, cycles + 1):
        p = G @ v
        vv = float(v @ v)
        j = int(np.argmin(p))
        if vv - p[j] <= slack(vv):
            return lam, v, it, True
        if lam[j] > 0.0:
            break  # no progress possible from the current support
        new = _polish(G, lam, j)
        tot = new.sum()
        if not tot > 0:
            break
        new /= tot
        v2 = new @ G
        if float(v2 @ v2) >= vv:
            break
        lam, v = new, v2
    return lam, v, it, False


def min_norm_element(bundle, tol: float = 1e-10, max_iter: int = 100_000) -> StationarityMeasure:
    """Projection of the origin onto the convex hull of the bundle's gradients.

    Wolfe's active-set method, then Mitchell-Demyanov-Malozemov pair
    exchanges with periodic exact polishing, then a Lawson-Hanson NNLS solve
    if both stall. ``bundle`` is a GradientBundle or a (k, n) array.
    """
    G = np.atleast_2d(np.asarray(getattr(bundle, "gradients", bundle), dtype=float))
    m = len(G)
    if m == 0:
        raise ValueError("empty bundle")
    scale = max(1.0, float(np.max(np.abs(G))))
    Q = G @ G.T
    i0 = int(np.argmin(np.diag(Q)))
    lam = np.zeros(m)
    lam[i0] = 1.0
    if m == 1:
        return StationarityMeasure(G[0].copy(), float(np.linalg.norm(G[0])), lam, 0, True)
    v = G[i0].copy()
    gmax = float(np.max(np.abs(G)))
    noise = 64 * np.finfo(float).eps * gmax * math.sqrt(G.shape[1])

    def slack(vv: float) -> float:
        # optimality gap target plus the rounding floor of v . g, relative to the bundle's own size
        return (tol * scale) ** 2 + noise * (math.sqrt(vv) + gmax)

    # Wolfe's method first; pair exchanges take over if it stalls
    lam, v, it, converged = _wolfe(G, lam, v, slack, 4 * m + 10)
    budget = min(max_iter, it + 10 * m + 50)
    while not converged and it < budget:
        p = G @ v
        vv = float(v @ v)
        i_min = int(np.argmin(p))
        if vv - p[i_min] <= slack(vv):
            converged = True
            break
        if it % 8 == 7 or vv - p[i_min] <= 1e3 * slack(vv):
            lam2 = _polish(G, lam, i_min)
            if lam2.sum() > 0:
                lam2 /= lam2.sum()
                v2 = lam2 @ G
                if v2 @ v2 <= vv:
                    lam, v = lam2, v2
                    p = G @ v
                    vv = float(v @ v)
                    i_min = int(np.argmin(p))
                    if vv - p[i_min] <= slack(vv):
                        it += 1
                        converged = True
                        break
        supp = np.flatnonzero(lam > 0.0)
        i_max = int(supp[np.argmax(p[supp])])
        d = G[i_min] - G[i_max]
        dd = float(d @ d)
        if dd == 0.0:
            lam[i_min] += lam[i_max]
            lam[i_max] = 0.0
        else:
            s = min(max(-float(v @ d) / dd, 0.0), lam[i_max])
            lam[i_max] -= s
            lam[i_min] += s
            v = lam @ G
        it += 1
    lam = np.clip(lam, 0.0, None)
    lam /= lam.sum()
    v = lam @ G
    if not converged:
        # nearly dependent supports make both routes above crawl; finish with an exact NNLS solve
        lam2 = _nnls_weights(G)
        v2 = lam2 @ G
        if float(v2 @ v2) <= float(v @ v):
            lam, v = lam2, v2
        vv = float(v @ v)
        converged = vv - float(np.min(G @ v)) <= slack(vv)
    return StationarityMeasure(v, float(np.linalg.norm(v)), lam, it, converged)


def _nnls_weights(G: np.ndarray) -> np.ndarray:
    """min ||G^T u||^2 + (sum u - 1)^2 over u >= 0; u / sum(u) is the min-norm convex combination."""
    A = np.vstack([G.T, np.ones(len(G))])
    b = np.zeros(A.shape[0])
    b[-1] = 1.0
    u, _ = nnls(A, b, maxiter=50 * A.shape[1])
    tot = u.sum()
    if not tot > 0:
        w = np.zeros(len(G))
        w[int(np.argmin(np.einsum("ij,ij->i", G, G)))] = 1.0
        return w
    return u / tot


# ---------------------------------------------------------------------------
# the chain-rule set {B^T F : B in the family}


@dataclass(frozen=True)
class PhiSubgradients:
    residual: np.ndarray
    family: JacobianFamily
    images: np.ndarray  # B^T r for each vertex B
    measure: StationarityMeasure
    tol: float = field(default=1e-8)

    @property
    def residual_norm(self) -> float:
        return float(np.linalg.norm(self.residual))

    @property
    def stationary(self) -> bool:
        return self.measure.norm <= self.tol

    @property
    def is_root(self) -> bool:
        return self.residual_norm <= self.tol

    @property
    def maximal_rank(self) -> bool:
        return self.family.min_singular_value() > self.tol

    @property
    def rank_deficient_explains(self) -> bool:
        """A stationary point that is not a root must have a rank-deficient family."""
        return self.stationary and not self.is_root and not self.maximal_rank


def phi_subgradients(
    p: ProblemDef, x, y=None, *, tol: float = 1e-8, eta: float | None = None, mode: str = "pointwise"
) -> PhiSubgradients:
    """Vertices of {B^T F(x, y)} and the min-norm element of their hull."""
    r = np.asarray(_run_values(p, *_as_points(p, x, y))[0])
    fam = jacobian_family(p, x, y, eta=eta, mode=mode)
    images = np.einsum("vij,i->vj", fam.vertices(), r)
    return PhiSubgradients(residual=r, family=fam, images=images, measure=min_norm_element(images), tol=tol)
