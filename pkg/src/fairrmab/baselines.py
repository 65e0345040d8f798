"""Reference policies: Random, Myopic, FairMyopic and No-intervention."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ActionVector, PolicyDecision, RmabInstance
from .sampling import inclusion_probs, sample_without_replacement
from .softfair import select_probs, top_k


def myopic_gap(instance: RmabInstance, s) -> np.ndarray:
    """One-step gain of activating each arm: ``p[1][s_i][1] - p[0][s_i][1]``."""
    s = np.asarray(s, dtype=np.intp)
    g = instance.P[np.arange(instance.n), :, s, 1]
    return g[:, 1] - g[:, 0]


def random_policy(n: int, k: int, rng: np.random.Generator) -> ActionVector:
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n (k={k}, n={n})")
    return ActionVector.from_indices(n, rng.choice(n, size=k, replace=False))


def myopic_policy(instance: RmabInstance, s) -> ActionVector:
    return ActionVector.from_indices(instance.n, top_k(myopic_gap(instance, s), instance.k))


def fair_myopic_policy(instance: RmabInstance, s, c: float, rng: np.random.Generator,
                       with_inclusion: bool = False) -> PolicyDecision:
    gap = myopic_gap(instance, s)
    probs = select_probs(gap, c)
    chosen = ActionVector.from_indices(instance.n, sample_without_replacement(probs, instance.k, rng, log_weights=c * gap))
    incl = inclusion_probs(probs, instance.k, log_weights=c * gap) if with_inclusion else np.full(instance.n, np.nan)
    return PolicyDecision(probs, incl, chosen)


class _Stateless:
    name = "policy"

    def reset(self, instance: RmabInstance) -> None:
        pass

    def start_episode(self, instance: RmabInstance) -> None:
        pass


class RandomPolicy(_Stateless):
    name = "random"

    def decide(self, instance, s, t, rng):
        return random_policy(instance.n, instance.k, rng).a


class MyopicPolicy(_Stateless):
    name = "myopic"

    def decide(self, instance, s, t, rng):
        return myopic_policy(instance, s).a


@dataclass
class FairMyopicPolicy(_Stateless):
    c: float = 1.0
    name: str = "fairmyopic"
    last_decision: PolicyDecision | None = field(default=None, repr=False)

    def decide(self, instance, s, t, rng):
        self.last_decision = fair_myopic_policy(instance, s, self.c, rng)
        return self.last_decision.chosen.a


class NoInterventionPolicy(_Stateless):
    """Keeps every arm passive; the 0% reference for intervention benefit."""

    name = "none"

    def decide(self, instance, s, t, rng):
        return np.zeros(instance.n, dtype=np.int8)
