"""SoftFair: softmax value iteration over per-arm finite-horizon values."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ActionVector, EpisodeTrace, PolicyDecision, RmabInstance, TransitionModel, ValueTable
from .sampling import DEFAULT_MC_SAMPLES, inclusion_probs, sample_without_replacement


def q_value(model: TransitionModel, value_table: ValueTable, arm: int, t: int, s: int, a: int,
            gamma: float) -> float:
    """Expected reward plus discounted continuation from ``value_table`` at ``t + 1``."""
    if not 0 <= arm < value_table.n:
        raise IndexError(f"arm {arm} out of range")
    if not 0 <= t < value_table.T:
        raise IndexError(f"timestep {t} out of range for horizon {value_table.T}")
    nxt = value_table.v[arm, t + 1]
    p = model.p[a, s]
    return float(p[1] * (1.0 + gamma * nxt[1]) + p[0] * gamma * nxt[0])


def q_values(P: np.ndarray, v_next: np.ndarray, s: np.ndarray, gamma: float) -> np.ndarray:
    """Vectorised Q for every arm: returns shape (n, 2) with columns passive, active.

    ``P`` is (n, 2, 2, 2), ``v_next`` is (n, 2) and ``s`` is the state vector.
    """
    rows = P[np.arange(len(s)), :, s, :]  # (n, a, s_next)
    return rows[..., 1] * (1.0 + gamma * v_next[:, None, 1]) + rows[..., 0] * gamma * v_next[:, None, 0]


def logits(instance: RmabInstance, value_table: ValueTable, s, t: int) -> np.ndarray:
    """Per-arm active-minus-passive Q gap for the observed states."""
    s = np.asarray(s, dtype=np.intp)
    if s.shape != (instance.n,):
        raise ValueError(f"state vector must have length {instance.n}")
    q = q_values(instance.P, value_table.v[:, t + 1], s, instance.gamma)
    return q[:, 1] - q[:, 0]


def logits_via_zeta(instance: RmabInstance, value_table: ValueTable, s, t: int) -> np.ndarray:
    """The same logits routed through ``log zeta = Q - V``; kept for cross-checking."""
    s = np.asarray(s, dtype=np.intp)
    out = np.empty(instance.n)
    for i, arm in enumerate(instance.arms):
        v_here = value_table.v[i, t, s[i]]
        log_zeta = [q_value(arm, value_table, i, t, s[i], a, instance.gamma) - v_here for a in (0, 1)]
        out[i] = log_zeta[1] - log_zeta[0]
    return out


def select_probs(lam, c: float) -> np.ndarray:
    """Softmax of ``c * lam`` with the max subtracted first."""
    if not c > 0:
        raise ValueError("multiplier c must be positive")
    z = c * np.asarray(lam, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def top_k(scores, k: int) -> np.ndarray:
    """Indices of the ``k`` largest scores; ties go to the lower index."""
    return np.sort(np.argsort(-np.asarray(scores), kind="stable")[:k])


@dataclass
class SoftFairState:
    value_table: ValueTable
    c: float
    episode_index: int = 0


@dataclass
class SoftFairPolicy:
    """Algorithm-1 SoftFair as an episode policy.

    ``greedy=True`` selects the top-k arms by logit deterministically while
    the value update still mixes actions with softmax weights at
    ``update_c``.  ``double_buffer`` makes every lookup read the table as
    it stood at the start of the episode.
    """

    c: float = 1.0
    inclusion_mode: str | None = None
    mc_samples: int = DEFAULT_MC_SAMPLES
    greedy: bool = False
    update_c: float = 1.0
    double_buffer: bool = False
    name: str = "softfair"
    state: SoftFairState | None = field(default=None, repr=False)
    last_decision: PolicyDecision | None = field(default=None, repr=False)
    last_logits: np.ndarray | None = field(default=None, repr=False)
    _snapshot: ValueTable | None = field(default=None, repr=False)

    def reset(self, instance: RmabInstance) -> None:
        self.state = SoftFairState(ValueTable.zeros(instance.n, instance.T), self.c)

    def start_episode(self, instance: RmabInstance) -> None:
        if self.state is None or self.state.value_table.v.shape != (instance.n, instance.T + 1, 2):
            self.reset(instance)
        self.state.episode_index += 1
        self._snapshot = self.state.value_table.copy() if self.double_buffer else None

    def decide(self, instance: RmabInstance, s: np.ndarray, t: int, rng: np.random.Generator) -> np.ndarray:
        table = self.state.value_table
        lookup = self._snapshot if self._snapshot is not None else table
        lam = logits(instance, lookup, s, t)
        k = instance.k
        c = self.update_c if self.greedy else self.c
        probs = select_probs(lam, c)
        if self.greedy:
            chosen_idx = top_k(lam, k)
        else:
            chosen_idx = sample_without_replacement(probs, k, rng, log_weights=c * lam)
        incl = inclusion_probs(probs, k, mode=self.inclusion_mode, samples=self.mc_samples, rng=rng,
                               log_weights=c * lam)
        update_value(self.state, instance, s, t, incl, lookup=lookup)
        chosen = ActionVector.from_indices(instance.n, chosen_idx)
        self.last_logits = lam
        self.last_decision = PolicyDecision(probs, incl, chosen)
        return chosen.a


def update_value(state: SoftFairState, instance: RmabInstance, s, t: int, inclusion_prob,
                 lookup: ValueTable | None = None) -> ValueTable:
    """Replace ``V[i, t, s_i]`` by the inclusion-weighted mix of active and passive Q.

    Entries for other states and timesteps are left as they were.
    """
    s = np.asarray(s, dtype=np.intp)
    table = state.value_table
    src = lookup if lookup is not None else table
    q = q_values(instance.P, src.v[:, t + 1], s, instance.gamma)
    incl = np.asarray(inclusion_prob, dtype=np.float64)
    table.v[np.arange(instance.n), t, s] = incl * q[:, 1] + (1.0 - incl) * q[:, 0]
    return table


def step_states(P: np.ndarray, s: np.ndarray, a: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Next states given uniforms ``u``: arm i lands in 1 iff ``u_i < p[a_i, s_i, 1]``."""
    to_good = P[np.arange(len(s)), a, s, 1]
    return (u < to_good).astype(np.int8)


def run_episode(policy, instance: RmabInstance, initial, policy_rng: np.random.Generator,
                transition_rng: np.random.Generator) -> EpisodeTrace:
    """Play ``T`` rounds of ``policy``; transitions draw one uniform per arm per round."""
    n, T = instance.n, instance.T
    states = np.empty((T + 1, n), dtype=np.int8)
    actions = np.empty((T, n), dtype=np.int8)
    rewards = np.empty(T)
    states[0] = np.asarray(initial, dtype=np.int8)
    policy.start_episode(instance)
    P = instance.P
    for t in range(T):
        s = states[t].astype(np.intp)
        a = np.asarray(policy.decide(instance, s, t, policy_rng), dtype=np.intp)
        actions[t] = a
        nxt = step_states(P, s, a, transition_rng.random(n))
        states[t + 1] = nxt
        rewards[t] = nxt.sum()
    return EpisodeTrace(states, actions, rewards)


def run_softfair_episode(state: SoftFairState, instance: RmabInstance, initial, rng: np.random.Generator,
                         **policy_options) -> EpisodeTrace:
    """One episode of SoftFair that keeps learning in ``state``.

    Selection sampling and transitions share ``rng``.
    """
    policy = SoftFairPolicy(c=state.c, state=state, **policy_options)
    return run_episode(policy, instance, initial, rng, rng)
