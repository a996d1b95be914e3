"""Certificates for the hypotheses of the global theorems.

* rank_certificate: interval branch-and-bound proof that every member of the
  Jacobian family is nonsingular on a box, or a point witness of singularity.
* coercivity_probe: sphere-infimum growth evidence (never a proof).
* spectral_report / growth_constants: the spectral assumption on A^T A and
  the growth rates of F used by the algebraic theorems.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from . import interval as iv
from .clarke import LeastSquares, Objective, jacobian_family
from .expr import ProblemDef, algebraic_map, interval_jacobian
from .interval import Interval

__all__ = [
    "RankCertificate",
    "Leaf",
    "CoercivityReport",
    "SpectralReport",
    "GrowthReport",
    "rank_certificate",
    "coercivity_probe",
    "sphere_directions",
    "spectral_report",
    "growth_constants",
    "float_det",
    "jacobi_eigenvalues",
    "write_report",
    "rank_csv",
    "coercivity_csv",
    "DEFAULT_SCHEDULE",
]

DEFAULT_SCHEDULE = (1.0, 10.0, 100.0, 1000.0, 10000.0)


# ---------------------------------------------------------------------------
# maximal rank by interval subdivision


@dataclass(frozen=True)
class Leaf:
    box: tuple[tuple[float, float], ...]
    det: Interval
    depth: int


@dataclass(frozen=True)
class RankCertificate:
    region: tuple[tuple[float, float], ...]
    verdict: str  # maximal-rank | rank-deficient-witness | inconclusive
    mode: str
    det_range: Interval | None
    subdivisions: int
    leaves: tuple[Leaf, ...] = ()
    witness: np.ndarray | None = None
    witness_params: np.ndarray | None = None
    witness_det: float | None = None
    offending: tuple[tuple[float, float], ...] | None = None
    note: str = ""

    @property
    def holds(self) -> bool:
        return self.verdict == "maximal-rank"


def _det_interval(p: ProblemDef, box: np.ndarray, mode: str) -> Interval:
    n = p.n
    _, J = interval_jacobian(p, [tuple(b) for b in box[:n]], [tuple(b) for b in box[n:]], mode=mode)
    return iv.det(J)


def float_det(M: np.ndarray) -> float:
    """Determinant by cofactor expansion (exact on small integer-like matrices)."""
    M = np.asarray(M, dtype=float)
    n = len(M)
    if n == 1:
        return float(M[0, 0])
    if n == 2:
        return float(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])
    if n > 6:
        return float(np.linalg.det(M))
    total = 0.0
    for j in range(n):
        if M[0, j] == 0.0:
            continue
        minor = np.delete(M[1:], j, axis=1)
        total += (-1) ** j * float(M[0, j]) * float_det(minor)
    return float(total)


def _witness_search(p: ProblemDef, box: np.ndarray, mode: str, rng: np.random.Generator, samples: int = 32):
    """Look for a point and family parameters with (numerically) zero determinant."""
    n, m = p.n, p.m
    lo, hi = box[:, 0], box[:, 1]
    dim = len(lo)
    pts = [0.5 * (lo + hi)]
    if dim <= 6:
        for corner in np.array(np.meshgrid(*[[0, 1]] * dim)).T.reshape(-1, dim):
            pts.append(np.where(corner == 1, hi, lo))
    pts.extend(lo + rng.random((samples, dim)) * (hi - lo))
    fam_mode = "outer-global" if mode == "outer-global" else "pointwise"

    def vertex_dets(z):
        fam = jacobian_family(p, z[:n], z[n:] if m else None, mode=fam_mode)
        V = fam.vertices()
        d = np.array([float_det(v) for v in V])
        scl = np.array([max(np.prod(np.linalg.norm(v, axis=1)), 1e-300) for v in V])
        return fam, d, scl

    best = None
    records = []
    for z in pts:
        fam, d, scl = vertex_dets(z)
        records.append((z, fam, d))
        i = int(np.argmin(np.abs(d) / scl))
        if abs(d[i]) <= 1e-12 * scl[i]:
            return z, fam.vertex_params()[i], float(d[i])
        # sign change along a parameter edge: det is affine in each parameter
        T = fam.vertex_params()
        for a in range(len(T)):
            for b in range(a + 1, len(T)):
                diff = np.flatnonzero(T[a] != T[b])
                if len(diff) == 1 and d[a] * d[b] < 0:
                    s = d[a] / (d[a] - d[b])
                    t = T[a] + s * (T[b] - T[a])
                    val = float_det(fam.member(t))
                    ms = max(np.prod(np.linalg.norm(fam.member(t), axis=1)), 1e-300)
                    if abs(val) <= 1e-12 * ms and (best is None or abs(val) < abs(best[2])):
                        best = (z, t, val)
    if best is not None:
        return best
    # sign change between two points for the same vertex: bisect the segment
    for (z1, f1, d1), (z2, f2, d2) in zip(records, records[1:]):
        if len(d1) != len(d2):
            continue
        for v in np.flatnonzero(d1 * d2 < 0):
            a, b, da = z1, z2, d1[v]
            for _ in range(80):
                mid = 0.5 * (a + b)
                fam, d, scl = vertex_dets(mid)
                if len(d) != len(d1):
                    break
                if abs(d[v]) <= 1e-12 * scl[v]:
                    return mid, fam.vertex_params()[v], float(d[v])
                if d[v] * da < 0:
                    b = mid
                else:
                    a, da = mid, d[v]
    return None


def rank_certificate(
    p: ProblemDef,
    region=None,
    mode: str = "outer-global",
    max_depth: int = 20,
    max_leaves: int = 200_000,
    seed: int = 0,
) -> RankCertificate:
    """Certify that every family member is nonsingular on ``region``.

    For algebraic problems the family is that of x -> Ax - F(x). ``region``
    covers the x-block, or the x- and y-blocks; missing y intervals default to
    [-10, 10]. Boxes whose interval determinant contains 0 are bisected along
    their widest side up to ``max_depth``; undecided leaves are then searched
    for a singular witness.
    """
    if mode not in ("pointwise", "outer-global"):
        raise ValueError(f"unknown mode {mode!r}")
    q = algebraic_map(p) if p.A is not None else p
    if q.n > 6:
        raise ValueError("interval determinant supports n <= 6")
    if region is None:
        region = q.box or tuple((-10.0, 10.0) for _ in range(q.n))
    region = tuple((float(a), float(b)) for a, b in region)
    if len(region) == q.n and q.m:
        region = region + tuple((-10.0, 10.0) for _ in range(q.m))
    if len(region) != q.n + q.m:
        raise ValueError(f"region must have {q.n} or {q.n + q.m} intervals")
    root = np.array(region, dtype=float)
    if not np.all(np.isfinite(root)) or np.any(root[:, 0] > root[:, 1]):
        raise ValueError("region must be a bounded, nonempty box")

    queue: deque[tuple[np.ndarray, int]] = deque([(root, 0)])
    leaves: list[Leaf] = []
    offending: list[tuple[np.ndarray, Interval]] = []
    count = 0
    while queue:
        box, depth = queue.popleft()
        count += 1
        try:
            d = _det_interval(q, box, mode)
        except (ArithmeticError, ValueError):
            d = Interval(-math.inf, math.inf)
        if not d.contains_zero():
            leaves.append(Leaf(tuple(map(tuple, box)), d, depth))
            continue
        widths = box[:, 1] - box[:, 0]
        if depth >= max_depth or count + len(queue) >= max_leaves or widths.max() == 0.0:
            offending.append((box, d))
            continue
        k = int(np.argmax(widths))
        mid = 0.5 * (box[k, 0] + box[k, 1])
        left, right = box.copy(), box.copy()
        left[k, 1] = mid
        right[k, 0] = mid
        queue.append((left, depth + 1))
        queue.append((right, depth + 1))

    if not offending:
        hull = leaves[0].det
        for lf in leaves[1:]:
            hull = hull.hull(lf.det)
        return RankCertificate(region, "maximal-rank", mode, hull, count, tuple(leaves))

    rng = np.random.default_rng(seed)
    for box, d in offending:
        w = _witness_search(q, box, mode, rng)
        if w is not None:
            z, t, val = w
            return RankCertificate(
                region,
                "rank-deficient-witness",
                mode,
                None,
                count,
                tuple(leaves),
                witness=np.asarray(z, dtype=float),
                witness_params=np.asarray(t, dtype=float),
                witness_det=val,
                offending=tuple(map(tuple, box)),
            )
    box, d = offending[0]
    return RankCertificate(
        region,
        "inconclusive",
        mode,
        None,
        count,
        tuple(leaves),
        offending=tuple(map(tuple, box)),
        note=f"{len(offending)} undecided leaves; first det range {d}",
    )


# ---------------------------------------------------------------------------
# coercivity evidence


@dataclass(frozen=True)
class CoercivityReport:
    radii: np.ndarray
    infima: np.ndarray
    argmins: np.ndarray
    exponent: float
    constant: float
    verdict: str  # coercive-evidence | non-coercive-witness | inconclusive
    witness_direction: np.ndarray | None = None
    witness_bound: float | None = None
    samples: int = 0

    @property
    def coercive(self) -> bool:
        return self.verdict == "coercive-evidence"


def sphere_directions(n: int, count: int, seed=0) -> np.ndarray:
    """Low-discrepancy unit vectors (scrambled Halton pushed through the normal quantile)."""
    if n == 1:
        base = np.array([[1.0], [-1.0]])
        return np.resize(base, (max(count, 2), 1))[: max(count, 2)]
    U = qmc.Halton(d=n, scramble=True, seed=np.random.default_rng(seed)).random(count)
    Z = ndtri(np.clip(U, 1e-12, 1 - 1e-12))
    return Z / np.linalg.norm(Z, axis=1, keepdims=True)


def _sphere_descent(objective: Objective, center: np.ndarray, rho: float, D: np.ndarray, steps: int, maximize=False):
    """Per-point projected descent on the sphere |z - center| = rho; never increases any value."""
    sign = -1.0 if maximize else 1.0
    Z = center + rho * D
    f = sign * objective.values(Z)
    if len(center) == 1 or steps == 0:
        return Z, sign * f
    ang = np.full(len(Z), 0.1)
    for _ in range(steps):
        _, g = objective.values_grads(Z)
        g = sign * g
        U = (Z - center) / rho
        gt = g - np.einsum("ij,ij->i", g, U)[:, None] * U
        gn = np.linalg.norm(gt, axis=1)
        move = gn > 0
        if not move.any():
            break
        dirn = np.where(move[:, None], gt / np.where(gn > 0, gn, 1.0)[:, None], 0.0)
        Unew = U - ang[:, None] * dirn
        Unew /= np.linalg.norm(Unew, axis=1, keepdims=True)
        Znew = center + rho * Unew
        fnew = sign * objective.values(Znew)
        better = move & (fnew < f)
        Z[better], f[better] = Znew[better], fnew[better]
        ang = np.where(better, np.minimum(ang * 2.0, 1.0), ang * 0.5)
        if np.all(ang < 1e-12):
            break
    return Z, sign * f


def _loglog_fit(r: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    ok = v > 0
    if ok.sum() < 2:
        return math.nan, math.nan
    slope, icpt = np.polyfit(np.log(r[ok]), np.log(v[ok]), 1)
    return float(slope), float(math.exp(icpt))


def coercivity_probe(
    objective: Objective,
    n: int | None = None,
    schedule: Sequence[float] = DEFAULT_SCHEDULE,
    samples_per_sphere: int | None = None,
    seed: int = 0,
    refine_steps: int = 40,
    center=None,
) -> CoercivityReport:
    """Sphere-infimum growth of ``objective`` over the radius schedule.

    Every sampled direction is refined by descent on the sphere, so a larger
    (nested) sample set never raises the reported infimum.
    """
    n = n or objective.dim
    radii = np.asarray(schedule, dtype=float)
    if len(radii) < 4 or np.any(np.diff(radii) <= 0) or radii[0] <= 0:
        raise ValueError("schedule must have at least 4 strictly increasing positive radii")
    if radii[-1] / radii[0] < 1e3 * (1 - 1e-12):
        raise ValueError("schedule must span at least 3 decades")
    k = samples_per_sphere or 64 * n
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    D = sphere_directions(n, k, seed)
    infs, args = [], []
    for r in radii:
        Z, f = _sphere_descent(objective, c, r, D, refine_steps)
        i = int(np.argmin(f))
        infs.append(float(f[i]))
        args.append(Z[i])
    infs_a = np.array(infs)
    args_a = np.array(args)
    expo, const = _loglog_fit(radii, infs_a)
    # a direction along which the objective stays bounded over the whole schedule
    bound = 10.0 * (1.0 + max(abs(float(objective(c))), abs(infs_a[0])))
    for z in args_a[::-1]:
        u = z - c
        if not np.any(u):
            continue
        u = u / np.linalg.norm(u)
        along = objective.values(c + radii[:, None] * u)
        if np.all(along <= bound):
            return CoercivityReport(
                radii, infs_a, args_a, expo, const, "non-coercive-witness", u, float(bound), samples=k
            )
    if math.isfinite(expo) and expo > 0 and infs_a[-1] > 10.0 * infs_a[0] and infs_a[-1] > 0:
        return CoercivityReport(radii, infs_a, args_a, expo, const, "coercive-evidence", samples=k)
    return CoercivityReport(radii, infs_a, args_a, expo, const, "inconclusive", samples=k)


# ---------------------------------------------------------------------------
# spectral assumption


@dataclass(frozen=True)
class SpectralReport:
    A: np.ndarray
    eigenvalues: np.ndarray  # of A^T A, ascending
    a1: bool
    det_A: float
    det_AtA: float

    @property
    def sqrt_l1(self) -> float:
        return math.sqrt(max(self.eigenvalues[0], 0.0))

    @property
    def sqrt_lN(self) -> float:
        return math.sqrt(max(self.eigenvalues[-1], 0.0))


def jacobi_eigenvalues(S: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending."""
    A = np.array(S, dtype=float)
    n = len(A)
    scale = max(np.linalg.norm(A), 1e-300)
    for _ in range(max_sweeps):
        off = math.sqrt(max(np.sum(A**2) - np.sum(np.diag(A) ** 2), 0.0))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) <= 1e-20 * scale:
                    # below rounding of the diagonal; rotating would overflow theta
                    A[p, q] = A[q, p] = 0.0
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * A[p, q])
                # hypot avoids overflowing theta^2 when the off-diagonal entry is tiny
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                R = np.eye(n)
                R[p, p] = R[q, q] = c
                R[p, q], R[q, p] = s, -s
                A = R.T @ A @ R
    return np.sort(np.diag(A))


def spectral_report(A) -> SpectralReport:
    """Eigenvalues of A^T A and the positive-definiteness verdict (lambda_1 > 1e-10 lambda_N)."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    S = A.T @ A
    dA = float_det(A)
    dS = float_det(S)
    if len(A) == 1:
        lam = np.array([S[0, 0]])
    elif len(A) == 2:
        tr = S[0, 0] + S[1, 1]
        disc = math.hypot(S[0, 0] - S[1, 1], 2.0 * S[0, 1])
        big = 0.5 * (tr + disc)
        # the small root from the product of roots avoids cancellation; det S = (det A)^2
        small = dA * dA / big if big > 0 else 0.0
        lam = np.array([small, big])
    else:
        lam = jacobi_eigenvalues(S)
    lam = np.maximum(lam, 0.0)
    a1 = bool(lam[0] > 1e-10 * lam[-1]) if lam[-1] > 0 else False
    return SpectralReport(A=A, eigenvalues=lam, a1=a1, det_A=dA, det_AtA=dS)


# ---------------------------------------------------------------------------
# growth constants


@dataclass(frozen=True)
class GrowthReport:
    radii: np.ndarray
    sup_norm: np.ndarray  # max ||F|| per sphere
    inf_norm: np.ndarray  # min ||F|| per sphere
    a_est: float
    b_est: float
    gamma_fit: float
    theta_fit: float
    sqrt_l1: float | None = None
    sqrt_lN: float | None = None

    @property
    def theorem6_linear(self) -> bool | None:
        return None if self.sqrt_l1 is None else self.a_est < self.sqrt_l1

    @property
    def theorem7_linear(self) -> bool | None:
        return None if self.sqrt_lN is None else self.b_est > self.sqrt_lN

    @property
    def sublinear(self) -> bool:
        return math.isfinite(self.gamma_fit) and self.gamma_fit < 1.0

    @property
    def superlinear(self) -> bool:
        return math.isfinite(self.theta_fit) and self.theta_fit > 1.0


class _NormObjective(Objective):
    """||F(x)|| as an objective (for extremizing on spheres)."""

    def __init__(self, p: ProblemDef):
        self.ls = LeastSquares(p)
        self.dim = p.n

    def values(self, X):
        return np.sqrt(2.0 * self.ls.values(X))

    def values_grads(self, X):
        f, g = self.ls.values_grads(X)
        nrm = np.sqrt(2.0 * f)
        return nrm, g / np.where(nrm > 0, nrm, 1.0)[:, None]


def growth_constants(
    p: ProblemDef,
    schedule: Sequence[float] = DEFAULT_SCHEDULE,
    samples: int | None = None,
    seed: int = 0,
    refine_steps: int = 40,
) -> GrowthReport:
    """Sup/inf of ||F(x)||/||x|| on spheres and power-law fits of their growth.

    a_est and b_est are taken over the upper half of the schedule ("for all
    sufficiently large x"). F is the nonlinear term (the problem's components
    at y = 0).
    """
    if p.m:
        raise ValueError("growth constants need a pure map (m = 0)")
    q = ProblemDef(p.n, 0, p.components, name=p.name)
    radii = np.asarray(schedule, dtype=float)
    k = samples or 64 * p.n
    D = sphere_directions(p.n, k, seed)
    obj = _NormObjective(q)
    c = np.zeros(p.n)
    sups, infs = [], []
    for r in radii:
        _, fmin = _sphere_descent(obj, c, r, D, refine_steps)
        _, fmax = _sphere_descent(obj, c, r, D, refine_steps, maximize=True)
        sups.append(float(np.max(fmax)))
        infs.append(float(np.min(fmin)))
    sups_a, infs_a = np.array(sups), np.array(infs)
    tail = radii >= np.median(radii)
    a_est = float(np.max(sups_a[tail] / radii[tail]))
    b_est = float(np.min(infs_a[tail] / radii[tail]))
    gamma, _ = _loglog_fit(radii[tail], sups_a[tail])
    theta, _ = _loglog_fit(radii[tail], infs_a[tail])
    l1 = lN = None
    if p.A is not None:
        spec = spectral_report(p.A)
        l1, lN = spec.sqrt_l1, spec.sqrt_lN
    return GrowthReport(radii, sups_a, infs_a, a_est, b_est, gamma, theta, l1, lN)


# ---------------------------------------------------------------------------
# report file


def write_report(path, header: dict, sections: dict[str, str]) -> None:
    """Structured text report: key = value header, then named sections."""
    lines = [f"{k} = {v}" for k, v in header.items()]
    for name, body in sections.items():
        lines.append("")
        lines.append(f"[{name}]")
        lines.append(body.rstrip("\n"))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def rank_csv(cert: RankCertificate) -> str:
    dims = len(cert.region)
    cols = [f"lo{i + 1}" for i in range(dims)] + [f"hi{i + 1}" for i in range(dims)] + ["det_lo", "det_hi", "depth"]
    rows = [",".join(cols)]
    for lf in cert.leaves:
        vals = [lo for lo, _ in lf.box] + [hi for _, hi in lf.box] + [lf.det.lo, lf.det.hi, lf.depth]
        rows.append(",".join(repr(float(v)) if not isinstance(v, int) else str(v) for v in vals))
    return "\n".join(rows)


def coercivity_csv(rep: CoercivityReport) -> str:
    rows = ["radius,sphere_inf"]
    rows += [f"{r!r},{v!r}" for r, v in zip(rep.radii.tolist(), rep.infima.tolist())]
    return "\n".join(rows)
