"""Finite-horizon Whittle index by subsidy backward induction and bisection.

Decision steps run ``t = 0..T`` with the continuation after step ``T`` equal
to zero, so step ``T`` is the myopic last round.  A simulation with ``T``
rounds therefore uses index tables built with horizon ``T - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ActionVector, RmabInstance, TransitionModel
from .softfair import top_k

DEFAULT_TOL = 1e-9
MAX_BISECTION_STEPS = 200


class BracketError(RuntimeError):
    """The indifference equation has no sign change on the bracket, or bisection stalled."""


@dataclass(frozen=True)
class SubsidyValueTable:
    vq: np.ndarray  # (T+1, s, a)
    v: np.ndarray  # (T+1, s)
    m: float


def subsidy_backward_induction(model: TransitionModel, m: float, T: int, gamma: float) -> SubsidyValueTable:
    """Q-values of one arm when every passive step earns an extra ``m``."""
    p = model.p
    vq = np.empty((T + 1, 2, 2))
    v = np.empty((T + 1, 2))
    cont = np.zeros(2)
    for t in range(T, -1, -1):
        for a in (0, 1):
            vq[t, :, a] = p[a, :, 1] + gamma * (p[a] @ cont)
        vq[t, :, 0] += m
        v[t] = vq[t].max(axis=1)
        cont = v[t]
    return SubsidyValueTable(vq, v, float(m))


def bracket(T: int, gamma: float) -> tuple[float, float]:
    if gamma < 1.0:
        b = 1.0 / (1.0 - gamma)
    else:
        b = float(T + 1)
    return -b, b


def _indifference(model: TransitionModel, m: float, t: int, s: int, T: int, gamma: float) -> float:
    """Passive minus active Q at (t, s); only steps t..T are needed."""
    p = model.p
    cont = np.zeros(2)
    for tau in range(T, t - 1, -1):
        q = np.stack([p[a, :, 1] + gamma * (p[a] @ cont) for a in (0, 1)], axis=1)
        q[:, 0] += m
        if tau == t:
            return float(q[s, 0] - q[s, 1])
        cont = q.max(axis=1)
    raise AssertionError("unreachable")


def whittle_index(model: TransitionModel, t: int, s: int, T: int, gamma: float,
                  tol: float = DEFAULT_TOL, max_steps: int = MAX_BISECTION_STEPS) -> float:
    """Subsidy at which passive and active are equally good at step ``t`` in state ``s``."""
    if not 0 <= t <= T:
        raise ValueError(f"timestep {t} outside 0..{T}")
    lo, hi = bracket(T, gamma)
    f_lo = _indifference(model, lo, t, s, T, gamma)
    f_hi = _indifference(model, hi, t, s, T, gamma)
    if abs(f_lo) <= tol:
        return lo
    if abs(f_hi) <= tol:
        return hi
    if not (f_lo < 0.0 < f_hi):
        raise BracketError(f"no sign change on [{lo}, {hi}] (f={f_lo:.3g}, {f_hi:.3g})")
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        f = _indifference(model, mid, t, s, T, gamma)
        if abs(f) <= tol:
            return mid
        if f > 0.0:
            hi = mid
        else:
            lo = mid
    raise BracketError(f"bisection did not reach tol={tol} in {max_steps} steps")


def _sweep(P: np.ndarray, m: np.ndarray, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Indifference gap and its slope in ``m`` for every (arm, start step, start state).

    ``m`` has shape (n, T+1, 2).  One backward pass serves all start steps:
    the slice for start step ``t0`` is live while ``tau >= t0``.
    """
    n, T1, _ = m.shape
    T = T1 - 1
    g = P[:, :, :, 1]  # (n, a, s)
    p = [P[:, a][:, None, None] for a in (0, 1)]  # (n, 1, 1, s, s_next)
    f = np.empty(m.shape)
    df = np.empty(m.shape)
    v = np.zeros((n, T1, 2, 2))  # (arm, t0, s0, s)
    dv = np.zeros((n, T1, 2, 2))
    diag = np.arange(2)
    for tau in range(T, -1, -1):
        live = slice(0, tau + 1)
        vn, dvn = v[:, live, :, None, :], dv[:, live, :, None, :]
        q0 = m[:, live, :, None] + g[:, None, None, 0, :] + gamma * (p[0] * vn).sum(-1)
        q1 = g[:, None, None, 1, :] + gamma * (p[1] * vn).sum(-1)
        d0 = 1.0 + gamma * (p[0] * dvn).sum(-1)
        d1 = gamma * (p[1] * dvn).sum(-1)
        f[:, tau] = q0[:, tau, diag, diag] - q1[:, tau, diag, diag]
        df[:, tau] = d0[:, tau, diag, diag] - d1[:, tau, diag, diag]
        passive = q0 >= q1
        v[:, live] = np.where(passive, q0, q1)
        dv[:, live] = np.where(passive, d0, d1)
    return f, df


def index_tables(P: np.ndarray, T: int, gamma: float, tol: float = DEFAULT_TOL,
                 max_steps: int = MAX_BISECTION_STEPS) -> np.ndarray:
    """Whittle indices ``w[i, t, s]`` for a stack of arms ``P`` of shape (n, 2, 2, 2).

    Bisection safeguarded by Newton steps: the gap is piecewise linear in the
    subsidy, so a Newton step taken inside the bracket usually lands on the
    root exactly.  A final Newton polish is kept wherever it shrinks the gap.
    """
    P = np.asarray(P, dtype=np.float64)
    n = P.shape[0]
    lo_b, hi_b = bracket(T, gamma)
    shape = (n, T + 1, 2)
    lo = np.full(shape, lo_b)
    hi = np.full(shape, hi_b)
    f_lo, _ = _sweep(P, lo, gamma)
    f_hi, _ = _sweep(P, hi, gamma)
    if np.any(f_lo > tol) or np.any(f_hi < -tol):
        raise BracketError("indifference equation has no sign change on the bracket for some (arm, t, s)")

    x = 0.5 * (lo + hi)
    width_prev = hi - lo
    result = np.full(shape, np.nan)
    gap = np.full(shape, np.nan)
    slope = np.full(shape, np.nan)
    for _ in range(max_steps):
        f, df = _sweep(P, x, gamma)
        pending = np.isnan(result)
        done = pending & (np.abs(f) <= tol)
        result[done], gap[done], slope[done] = x[done], f[done], df[done]
        pending &= ~done
        if not pending.any():
            break
        hi = np.where(pending & (f > 0.0), x, hi)
        lo = np.where(pending & (f < 0.0), x, lo)
        width = hi - lo
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = x - f / df
        ok = (df > 0.0) & (newton > lo) & (newton < hi) & (width <= 0.5 * width_prev)
        x = np.where(ok, newton, 0.5 * (lo + hi))
        width_prev = np.where(ok, width_prev, width)
    else:
        raise BracketError(f"bisection did not reach tol={tol} in {max_steps} steps")

    with np.errstate(divide="ignore", invalid="ignore"):
        polish = np.where(slope > 0.0, result - gap / slope, result)
    f2, _ = _sweep(P, polish, gamma)
    return np.where(np.abs(f2) < np.abs(gap), polish, result)


def indexability_violations(model: TransitionModel, T: int, gamma: float, grid_points: int = 100) -> list[tuple[int, int]]:
    """(t, s) pairs whose passive-optimal subsidy set is not an up-set on a grid."""
    lo, hi = bracket(T, gamma)
    grid = np.linspace(lo, hi, grid_points)
    bad = []
    tables = [subsidy_backward_induction(model, m, T, gamma) for m in grid]
    for t in range(T + 1):
        for s in range(2):
            passive = np.array([tab.vq[t, s, 0] >= tab.vq[t, s, 1] for tab in tables])
            first = np.argmax(passive) if passive.any() else grid_points
            if not passive[first:].all():
                bad.append((t, s))
    return bad


def oracle_policy(instance: RmabInstance, index_table: np.ndarray, s, t: int) -> ActionVector:
    """Top-k arms by current-state index, ties to the lower arm index."""
    s = np.asarray(s, dtype=np.intp)
    scores = index_table[np.arange(instance.n), t, s]
    return ActionVector.from_indices(instance.n, top_k(scores, instance.k))


class WhittlePolicy:
    """Index policy that rebuilds its tables whenever the instance changes."""

    name = "oracle"

    def __init__(self, tol: float = DEFAULT_TOL):
        self.tol = tol
        self._key = None
        self.table = None

    def reset(self, instance: RmabInstance) -> None:
        key = (id(instance), instance.T, instance.gamma)
        if key != self._key:
            self.table = index_tables(instance.P, instance.T - 1, instance.gamma, self.tol)
            self._key = key

    def start_episode(self, instance: RmabInstance) -> None:
        self.reset(instance)

    def decide(self, instance, s, t, rng):
        return oracle_policy(instance, self.table, s, t).a


def index_table_csv(table: np.ndarray, path: str | Path) -> None:
    lines = ["arm,t,state,index"]
    n, T1, _ = table.shape
    for i in range(n):
        for t in range(T1):
            for s in range(2):
                lines.append(f"{i},{t},{s},{table[i, t, s]:.6g}")
    Path(path).write_text("\n".join(lines) + "\n")
