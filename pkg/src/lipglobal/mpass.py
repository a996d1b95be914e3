"""Mountain-pass probe: a bead-chain string between two roots and its min-max point.

Given two minimizers u1, u2 of J, the string is relaxed by moving interior
beads down the component of the gradient normal to the path, then
re-spaced by arc length. Its highest bead is then refined by climbing-image
steps to a critical point whose value estimates the mountain-pass level c.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .certify import _sphere_descent, rank_certificate, sphere_directions
from .clarke import LeastSquares, Objective, min_norm_element, sample_gradients
from .expr import ProblemDef, as_system, evaluate

__all__ = [
    "PathState",
    "RingResult",
    "SaddleEstimate",
    "ConsistencyCheck",
    "PreconditionError",
    "ring_infimum",
    "find_mountain_ring",
    "default_ring_schedule",
    "mountain_pass",
    "shifted_objective",
    "theorem4_consistency",
    "reparametrize",
]


class PreconditionError(ValueError):
    pass


@dataclass
class PathState:
    beads: np.ndarray  # (K + 1, n), endpoints pinned
    values: np.ndarray
    iteration: int = 0

    @property
    def max_index(self) -> int:
        return int(np.argmax(self.values))

    @property
    def max_value(self) -> float:
        return float(np.max(self.values))

    def spacing(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.beads, axis=0), axis=1)


@dataclass(frozen=True)
class RingResult:
    rho: float
    infimum: float
    argmin: np.ndarray


@dataclass(frozen=True)
class SaddleEstimate:
    point: np.ndarray
    value: float
    stationarity: float
    verdict: str  # saddle-found | degenerate | budget-exhausted
    ring: RingResult | None
    history: np.ndarray = field(repr=False)  # path max per accepted string iteration
    path: PathState | None = field(default=None, repr=False)
    iterations: int = 0


def ring_infimum(objective: Objective, center, rho: float, samples: int | None = None, seed: int = 0, refine_steps: int = 40):
    """Estimated infimum of the objective on the sphere |u - center| = rho, and its argmin."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    n = c.size
    if rho <= 0:
        raise ValueError("rho must be positive")
    k = samples or 64 * n
    if k < 16 * n and n > 1:
        raise ValueError(f"need at least {16 * n} samples")
    D = sphere_directions(n, k, seed)
    Z, f = _sphere_descent(objective, c, rho, D, refine_steps)
    i = int(np.argmin(f))
    return float(f[i]), Z[i].copy()


def default_ring_schedule(u1, u2, count: int = 9) -> np.ndarray:
    e = float(np.linalg.norm(np.asarray(u2, dtype=float) - np.asarray(u1, dtype=float)))
    return e * np.geomspace(0.05, 0.95, count)


def find_mountain_ring(
    objective: Objective,
    u1,
    u2,
    schedule: Sequence[float] | None = None,
    eps: float = 1e-12,
    samples: int | None = None,
    seed: int = 0,
) -> RingResult | None:
    """First radius (around u1) whose sphere infimum exceeds max(J(u1), J(u2)) + eps."""
    u1 = np.atleast_1d(np.asarray(u1, dtype=float))
    u2 = np.atleast_1d(np.asarray(u2, dtype=float))
    dist = float(np.linalg.norm(u2 - u1))
    if dist == 0.0:
        raise PreconditionError("the two points coincide; a mountain pass needs two distinct roots")
    sched = default_ring_schedule(u1, u2) if schedule is None else np.asarray(schedule, dtype=float)
    if np.any(sched <= 0) or np.any(sched >= dist):
        raise ValueError("ring radii must lie in (0, |u2 - u1|)")
    level = max(objective(u1), objective(u2))
    for rho in sched:
        inf, arg = ring_infimum(objective, u1, float(rho), samples, seed)
        if inf > level + eps:
            return RingResult(float(rho), inf, arg)
    return None


def reparametrize(beads: np.ndarray) -> np.ndarray:
    """Resample a polyline at equal arc length, keeping its endpoints."""
    seg = np.linalg.norm(np.diff(beads, axis=0), axis=1)
    s = np.concatenate(([0.0], np.cumsum(seg)))
    if s[-1] == 0.0:
        return beads.copy()
    target = np.linspace(0.0, s[-1], len(beads))
    out = np.empty_like(beads)
    for j in range(beads.shape[1]):
        out[:, j] = np.interp(target, s, beads[:, j])
    out[0], out[-1] = beads[0], beads[-1]
    return out


def _tangents(beads: np.ndarray) -> np.ndarray:
    T = beads[2:] - beads[:-2]
    nrm = np.linalg.norm(T, axis=1, keepdims=True)
    return T / np.where(nrm > 0, nrm, 1.0)


def _climb(objective: Objective, x: np.ndarray, tau: np.ndarray, tol: float, max_iter: int = 500):
    """Climbing-image refinement: ascend along tau, descend across it, until the gradient is small."""
    f, g = objective.values_grads(x[None])
    g = g[0]
    h = 0.1
    for _ in range(max_iter):
        gn = float(np.linalg.norm(g))
        if gn <= tol:
            break
        step = g - 2.0 * float(g @ tau) * tau
        xn = x - h * step
        _, gnew = objective.values_grads(xn[None])
        gnew = gnew[0]
        if np.linalg.norm(gnew) < gn:
            x, g = xn, gnew
            h = min(h * 1.5, 1e6)
        else:
            h *= 0.5
            if h < 1e-16:
                break
    return x


def mountain_pass(
    objective: Objective,
    u1,
    u2,
    K: int = 32,
    max_iters: int = 2000,
    eps_s: float = 1e-8,
    seed: int = 0,
    find_ring: bool = True,
    keep_path: bool = True,
) -> SaddleEstimate:
    """Min-max estimate over paths joining u1 and u2 by a relaxed bead chain."""
    u1 = np.atleast_1d(np.asarray(u1, dtype=float))
    u2 = np.atleast_1d(np.asarray(u2, dtype=float))
    if K < 8:
        raise ValueError("K must be at least 8")
    if np.linalg.norm(u2 - u1) == 0.0:
        raise PreconditionError("the two points coincide; a mountain pass needs two distinct roots")
    f1, f2 = objective(u1), objective(u2)
    if not (math.isfinite(f1) and math.isfinite(f2)):
        raise PreconditionError("objective is not finite at the endpoints")
    ring = find_mountain_ring(objective, u1, u2, seed=seed) if find_ring else None
    endmax = max(f1, f2)

    beads = u1 + np.linspace(0.0, 1.0, K + 1)[:, None] * (u2 - u1)
    vals = objective.values(beads)
    state = PathState(beads, vals)
    history = [float(vals.max())]
    if float(vals[1:-1].max()) <= endmax + 1e-12:
        return SaddleEstimate(beads[state.max_index].copy(), state.max_value, math.nan, "degenerate", ring, np.array(history), state)

    length = float(np.linalg.norm(u2 - u1))
    h = 0.1
    it = 0
    for it in range(1, max_iters + 1):
        interior = state.beads[1:-1]
        _, G = objective.values_grads(interior)
        T = _tangents(state.beads)
        Gp = G - np.einsum("ij,ij->i", G, T)[:, None] * T
        gmax = float(np.max(np.linalg.norm(Gp, axis=1)))
        if gmax <= eps_s:
            break
        accepted = False
        while h * gmax > 1e-14 * (1.0 + length):
            trial = state.beads.copy()
            trial[1:-1] -= h * Gp
            trial = reparametrize(trial)
            tv = objective.values(trial)
            if tv.max() <= state.max_value:
                state = PathState(trial, tv, it)
                history.append(float(tv.max()))
                h = min(h * 1.2, 1e3)
                accepted = True
                break
            h *= 0.5
        if not accepted:
            break

    i = state.max_index
    if state.max_value <= endmax + 1e-12 or i in (0, K):
        return SaddleEstimate(state.beads[i].copy(), state.max_value, math.nan, "degenerate", ring, np.array(history), state, it)
    tau = _tangents(state.beads)[i - 1]
    v = _climb(objective, state.beads[i].copy(), tau, 0.1 * eps_s)
    c = float(objective(v))
    # stationarity from a bundle at radius eps_s that includes the center gradient
    b = sample_gradients(objective, v, eps_s, seed=seed)
    g0 = objective.grad(v)
    meas = min_norm_element(np.vstack([g0[None], b.gradients]))
    sep = min(np.linalg.norm(v - u1), np.linalg.norm(v - u2))
    ok = meas.norm <= eps_s and c >= endmax - eps_s and sep > 1e-6 * (1.0 + np.linalg.norm(v))
    verdict = "saddle-found" if ok else "budget-exhausted"
    return SaddleEstimate(v, c, meas.norm, verdict, ring, np.array(history), state if keep_path else None, it)


def shifted_objective(p: ProblemDef, y, x2) -> LeastSquares:
    """psi_y(x) = 1/2 ||F(x + x2, y)||^2, with the second root moved to the origin."""
    sysp, default_y = as_system(p)
    y = default_y if y is None else y
    return LeastSquares(sysp, y, shift=x2)


@dataclass(frozen=True)
class ConsistencyCheck:
    saddle: SaddleEstimate
    rank_holds: bool
    roots_verified: bool
    contradiction: bool


def theorem4_consistency(p: ProblemDef, y, x1, x2, box=None, tol: float = 1e-9, **kw) -> ConsistencyCheck:
    """Mountain pass on psi_y between two claimed roots, checked against a rank certificate.

    A saddle with c > 0 between two verified roots inside a box where the
    family has maximal rank contradicts the theorem; ``contradiction`` flags it.
    """
    sysp, default_y = as_system(p)
    yv = default_y if y is None else y
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    verified = bool(
        np.linalg.norm(evaluate(sysp, x1, yv)) <= tol and np.linalg.norm(evaluate(sysp, x2, yv)) <= tol
    )
    psi = shifted_objective(p, yv, x2)
    sad = mountain_pass(psi, x1 - x2, np.zeros_like(x2), **kw)
    cert = rank_certificate(p, box)
    found = sad.verdict == "saddle-found" and sad.value > 0
    return ConsistencyCheck(sad, cert.holds, verified, bool(found and cert.holds and verified))
