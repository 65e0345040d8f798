"""Brute-force joint-MDP solver for small instances.

Joint states are bitmasks (bit ``i`` is the state of arm ``i``); joint
actions are sorted index combinations of the active arms.  Expected next
values are computed arm by arm on a ``(2,)*n`` tensor, so the full joint
transition matrix is never formed.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .core import RmabInstance
from .softfair import SoftFairPolicy, logits, run_episode, top_k
from . import rng as rngs

MAX_ARMS = 12
FIXED_POINT_TOL = 1e-10
MAX_ITERATIONS = 100_000


class StateSpaceCapError(ValueError):
    pass


@dataclass(frozen=True)
class JointModel:
    """Joint MDP of ``n`` arms.  ``k=None`` allows every subset of arms."""

    P: np.ndarray  # (n, 2, 2, 2)
    k: int | None
    gamma: float

    def __post_init__(self):
        P = np.asarray(self.P, dtype=np.float64)
        if P.ndim != 4 or P.shape[1:] != (2, 2, 2):
            raise ValueError("P must have shape (n, 2, 2, 2)")
        n = P.shape[0]
        if n > MAX_ARMS:
            raise StateSpaceCapError(f"joint solver is limited to n <= {MAX_ARMS} (got {n})")
        if self.k is not None and not 0 <= self.k <= n:
            raise ValueError(f"k={self.k} outside 0..{n}")
        object.__setattr__(self, "P", P)
        if self.k is None:
            acts = [c for r in range(n + 1) for c in combinations(range(n), r)]
        else:
            acts = list(combinations(range(n), self.k))
        object.__setattr__(self, "actions", tuple(acts))
        masks = np.zeros((len(acts), n), dtype=np.intp)
        for j, c in enumerate(acts):
            masks[j, list(c)] = 1
        object.__setattr__(self, "action_masks", masks)
        states = (np.arange(2 ** n)[:, None] >> np.arange(n)) & 1
        object.__setattr__(self, "state_bits", states)
        # R[s, a] = sum_i p[i][a_i][s_i][1]
        g = P[:, :, :, 1]  # (n, a, s)
        arm = np.arange(n)
        R = np.stack([g[arm, masks[j][None, :], states].sum(axis=1) for j in range(len(acts))], axis=1)
        object.__setattr__(self, "R", R)

    @classmethod
    def from_instance(cls, instance: RmabInstance, k: int | None = -1) -> "JointModel":
        return cls(instance.P, instance.k if k == -1 else k, instance.gamma)

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def num_states(self) -> int:
        return 2 ** self.n

    @property
    def num_actions(self) -> int:
        return len(self.actions)

    def state_index(self, s) -> int:
        return int(sum(int(b) << i for i, b in enumerate(s)))

    def action_index(self, active) -> int:
        return self.actions.index(tuple(sorted(int(i) for i in active)))

    def expected_next(self, v: np.ndarray) -> np.ndarray:
        """``E[v(s') | s, a]`` for every joint state and action, shape (S, A)."""
        n = self.n
        out = np.empty((self.num_states, self.num_actions))
        for j, mask in enumerate(self.action_masks):
            x = v.reshape((2,) * n)
            for i in range(n):
                axis = n - 1 - i  # C order puts the highest bit first
                x = np.moveaxis(np.tensordot(self.P[i, mask[i]], x, axes=([1], [axis])), 0, axis)
            out[:, j] = x.reshape(-1)
        return out


def _model(obj, k=-1) -> JointModel:
    if isinstance(obj, JointModel):
        return obj
    return JointModel.from_instance(obj, k)


def soft_expectation(q: np.ndarray, c: float) -> np.ndarray:
    """Per-row expectation of ``q`` under ``softmax(c * q)``."""
    z = c * (q - q.max(axis=1, keepdims=True))
    w = np.exp(z)
    w /= w.sum(axis=1, keepdims=True)
    return (w * q).sum(axis=1)


def bellman_operator(q: np.ndarray, model) -> np.ndarray:
    m = _model(model)
    return m.R + m.gamma * m.expected_next(q.max(axis=1))


def soft_operator(q: np.ndarray, model, c: float) -> np.ndarray:
    """Bellman operator with the max replaced by the softmax-weighted mean.

    With ``k = 1`` each joint action activates one arm, so the Boltzmann
    weights over joint actions are the per-arm select probabilities.
    """
    m = _model(model)
    return m.R + m.gamma * m.expected_next(soft_expectation(q, c))


@dataclass
class FixedPoint:
    q: np.ndarray
    iterations: int
    converged: bool
    trajectory_ok: bool = True  # value bounds and operator ordering held at every iterate


def iterate_to_fixed_point(model, c: float | None = None, q0: np.ndarray | None = None,
                           tol: float = FIXED_POINT_TOL, max_iter: int = MAX_ITERATIONS,
                           check: bool = False) -> FixedPoint:
    """Iterate the hard (``c=None``) or soft operator until successive iterates agree to ``tol``.

    With ``check=True`` every iterate is also tested against the value
    bounds ``[0, n/(1-gamma)]`` and, for the soft operator, against
    ``soft(Q) <= hard(Q)``.
    """
    m = _model(model)
    if not m.gamma < 1.0:
        raise ValueError("fixed-point iteration needs gamma < 1")
    q = np.zeros((m.num_states, m.num_actions)) if q0 is None else np.array(q0, dtype=np.float64)
    upper = m.n / (1.0 - m.gamma)
    ok = True
    for it in range(1, max_iter + 1):
        nxt = bellman_operator(q, m) if c is None else soft_operator(q, m, c)
        if check:
            if c is not None and np.any(nxt > bellman_operator(q, m) + 1e-12):
                ok = False
            if np.any(nxt < -1e-12) or np.any(nxt > upper + 1e-9):
                ok = False
        if np.max(np.abs(nxt - q)) < tol:
            return FixedPoint(nxt, it, True, ok)
        q = nxt
    return FixedPoint(q, max_iter, False, ok)


@dataclass
class GapReport:
    delta: np.ndarray  # max minus min Q per state
    gap: np.ndarray  # max Q minus softmax expectation
    lower: np.ndarray
    upper: float
    slack: float

    @property
    def lower_ok(self) -> np.ndarray:
        return self.lower <= self.gap + self.slack

    @property
    def upper_ok(self) -> np.ndarray:
        return self.gap <= self.upper + self.slack

    @property
    def holds(self) -> bool:
        return bool(self.lower_ok.all() and self.upper_ok.all())


def gap_statistics(q: np.ndarray, c: float, slack: float = 1e-10) -> GapReport:
    """Per-state gap between the max and the softmax mean of ``q`` (rows = states).

    The number of actions plays the role of ``n`` (one action per arm when
    ``k = 1``).
    """
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    n = q.shape[1]
    delta = q.max(axis=1) - q.min(axis=1)
    gap = q.max(axis=1) - soft_expectation(q, c)
    lower = delta / (n * np.exp(c * delta))
    return GapReport(delta, gap, lower, (n - 1) / (2.0 + c), slack)


@dataclass
class FiniteHorizonSolution:
    q: np.ndarray  # (T, S, A)
    v: np.ndarray  # (T+1, S)
    policy: np.ndarray  # (T, S) index of the optimal joint action, lowest index on ties
    model: JointModel

    def action(self, t: int, s) -> tuple[int, ...]:
        return self.model.actions[self.policy[t, self.model.state_index(s)]]


def finite_horizon_optimum(instance: RmabInstance) -> FiniteHorizonSolution:
    """Exact backward induction over rounds ``0..T-1`` with zero terminal value."""
    m = JointModel.from_instance(instance)
    T = instance.T
    q = np.empty((T, m.num_states, m.num_actions))
    v = np.zeros((T + 1, m.num_states))
    for t in range(T - 1, -1, -1):
        q[t] = m.R + m.gamma * m.expected_next(v[t + 1])
        v[t] = q[t].max(axis=1)
    return FiniteHorizonSolution(q, v, q.argmax(axis=2), m)


def argmax_sets(q: np.ndarray, model: JointModel, tol: float = 1e-12) -> list[list[tuple[int, ...]]]:
    """Every near-optimal joint action per row of ``q``."""
    best = q.max(axis=1, keepdims=True)
    return [[model.actions[j] for j in np.flatnonzero(row)] for row in (q >= best - tol)]


@dataclass
class LogitOptimalityResult:
    checked: int
    mismatches: list  # (t, state bits, lambda top-k, joint argmax set)

    @property
    def holds(self) -> bool:
        return not self.mismatches


def learned_softfair(instance: RmabInstance, c: float = 1e6, episodes: int = 200, seed: int = 0) -> SoftFairPolicy:
    """Run SoftFair for ``episodes`` seeded episodes and return the trained policy."""
    policy = SoftFairPolicy(c=c, inclusion_mode="exact" if instance.n <= 12 else None)
    policy.reset(instance)
    prng = rngs.stream(seed, rngs.STREAM_POLICY)
    for e in range(episodes):
        init = (rngs.stream(seed, rngs.STREAM_INITIAL, e).random(instance.n) < 0.5).astype(np.int8)
        run_episode(policy, instance, init, prng, rngs.stream(seed, rngs.STREAM_TRANSITIONS, e))
    return policy


def logit_optimality_check(instance: RmabInstance, c: float = 1e6, episodes: int = 200, seed: int = 0) -> LogitOptimalityResult:
    """Compare top-k by learned per-arm logits with the joint finite-horizon argmax.

    Every round ``t`` and every joint state is checked.  A match requires
    the logit top-k (lower index on ties) to be the joint argmax with the
    lowest action index among exact ties.
    """
    policy = learned_softfair(instance, c, episodes, seed)
    sol = finite_horizon_optimum(instance)
    m = sol.model
    table = policy.state.value_table
    mismatches, checked = [], 0
    for t in range(instance.T):
        for si, bits in enumerate(m.state_bits):
            lam = logits(instance, table, bits, t)
            mine = tuple(int(i) for i in top_k(lam, instance.k))
            joint = m.actions[sol.policy[t, si]]
            checked += 1
            if mine != joint:
                mismatches.append((t, tuple(int(b) for b in bits), mine, joint))
    return LogitOptimalityResult(checked, mismatches)


def conjecture_report(instance: RmabInstance, c: float) -> dict:
    """Gap between the optimal and the set-level soft fixed points for any ``k``.

    For inspection only; no bound is asserted for ``k != 1``.
    """
    m = JointModel.from_instance(instance)
    hard = iterate_to_fixed_point(m)
    soft = iterate_to_fixed_point(m, c=c)
    diff = hard.q - soft.q
    n, g = m.n, m.gamma
    return {
        "n": n,
        "k": m.k,
        "gamma": g,
        "c": c,
        "min_gap": float(diff.min()),
        "max_gap": float(diff.max()),
        "k1_bound": (n - 1) / ((2.0 + c) * (1.0 - g)),
        "converged": bool(hard.converged and soft.converged),
    }


def joint_q_csv(q: np.ndarray, model: JointModel) -> str:
    lines = ["state,action,q"]
    for si, bits in enumerate(model.state_bits):
        sname = "".join(str(int(b)) for b in bits)
        for j, act in enumerate(model.actions):
            lines.append(f"{sname},{'-'.join(map(str, act)) or 'none'},{q[si, j]:.6g}")
    return "\n".join(lines) + "\n"
