"""Domain types for two-state, two-action restless bandits.

Arrays follow one indexing convention throughout the package:
``p[a, s, s_next]`` for a single arm and ``P[i, a, s, s_next]`` for a stack
of arms.  State 1 is the "good" state and the per-arm reward of a round is
the indicator of landing in it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True)
class TransitionModel:
    """Transition probabilities of one arm, indexed ``p[a, s, s_next]``."""

    p: np.ndarray

    def __post_init__(self):
        arr = np.array(self.p, dtype=np.float64)
        if arr.shape != (2, 2, 2):
            raise ValueError(f"transition array must have shape (2, 2, 2), got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "p", arr)

    @classmethod
    def from_to_good(cls, passive: Sequence[float], active: Sequence[float]) -> "TransitionModel":
        """Build from the probabilities of moving to state 1.

        ``passive[s]`` is ``p[0, s, 1]`` and ``active[s]`` is ``p[1, s, 1]``.
        """
        to_good = np.array([passive, active], dtype=np.float64)
        return cls(np.stack([1.0 - to_good, to_good], axis=-1))

    @property
    def to_good(self) -> np.ndarray:
        """``p[a, s, 1]`` as a (2, 2) array."""
        return self.p[:, :, 1]

    def violations(self, strict: bool = False) -> list[str]:
        p = self.p
        out = []
        if not np.all(np.isfinite(p)):
            return ["non-finite probability"]
        if np.any(p < 0.0) or np.any(p > 1.0):
            out.append("probability outside [0, 1]")
        sums = p.sum(axis=-1)
        for a in range(2):
            for s in range(2):
                if abs(sums[a, s] - 1.0) > STOCHASTIC_TOL:
                    out.append(f"stochasticity: row p[{a}][{s}] sums to {sums[a, s]:.12g}")
        if strict:
            if np.any(p <= 0.0) or np.any(p >= 1.0):
                out.append("positivity: entries must lie strictly inside (0, 1)")
            g = p[:, :, 1]
            checks = [
                ("(i) p[0][0][1] < p[0][1][1]", g[0, 0] < g[0, 1]),
                ("(ii) p[1][0][1] < p[1][1][1]", g[1, 0] < g[1, 1]),
                ("(iii) p[0][0][1] < p[1][0][1]", g[0, 0] < g[1, 0]),
                ("(iv) p[0][1][1] < p[1][1][1]", g[0, 1] < g[1, 1]),
            ]
            out.extend(f"structural constraint {name} violated" for name, ok in checks if not ok)
        return out

    def to_json(self) -> dict:
        return {"p": self.p.tolist()}


def expected_reward(model: TransitionModel, s: int, a: int) -> float:
    """Expected reward of taking action ``a`` in state ``s``: ``p[a][s][1]``."""
    return float(model.p[a, s, 1])


@dataclass(frozen=True)
class RmabInstance:
    arms: tuple[TransitionModel, ...]
    k: int
    T: int
    gamma: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "arms", tuple(self.arms))
        problems = _parameter_problems(len(self.arms), self.k, self.T, self.gamma, self.c)
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def n(self) -> int:
        return len(self.arms)

    @property
    def P(self) -> np.ndarray:
        """Stacked transition array of shape (n, 2, 2, 2)."""
        cached = self.__dict__.get("_P")
        if cached is None:
            cached = np.stack([arm.p for arm in self.arms])
            cached.setflags(write=False)
            object.__setattr__(self, "_P", cached)
        return cached

    def replace(self, **changes) -> "RmabInstance":
        fields = {"arms": self.arms, "k": self.k, "T": self.T, "gamma": self.gamma, "c": self.c}
        fields.update(changes)
        return RmabInstance(**fields)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "T": self.T,
            "gamma": self.gamma,
            "c": self.c,
            "arms": [arm.to_json() for arm in self.arms],
        }

    @classmethod
    def from_json(cls, data: dict, strict: bool = False) -> "RmabInstance":
        arms = tuple(TransitionModel(np.asarray(arm["p"], dtype=np.float64)) for arm in data["arms"])
        if "n" in data and data["n"] != len(arms):
            raise ValueError(f"instance declares n={data['n']} but lists {len(arms)} arms")
        inst = cls(arms, int(data["k"]), int(data["T"]), float(data.get("gamma", 1.0)), float(data.get("c", 1.0)))
        report = validate_instance(inst, strict=strict)
        if report:
            raise ValueError("invalid instance: " + "; ".join(report))
        return inst


def _parameter_problems(n, k, T, gamma, c) -> list[str]:
    out = []
    if not (1 <= k < n):
        out.append(f"budget must satisfy 1 <= k < n (k={k}, n={n})")
    if T < 1:
        out.append(f"horizon T must be >= 1 (T={T})")
    if not (0.0 < gamma <= 1.0):
        out.append(f"gamma must lie in (0, 1] (gamma={gamma})")
    if not c > 0.0:
        out.append(f"multiplier c must be positive (c={c})")
    return out


def validate_instance(instance: RmabInstance, strict: bool = False) -> list[str]:
    """Return every violated invariant; an empty list means the instance is valid.

    ``strict`` additionally enforces positivity and the four structural
    inequalities on each arm.
    """
    report = _parameter_problems(instance.n, instance.k, instance.T, instance.gamma, instance.c)
    for i, arm in enumerate(instance.arms):
        report.extend(f"arm {i}: {msg}" for msg in arm.violations(strict=strict))
    return report


def load_instance(path: str | Path, strict: bool = False) -> RmabInstance:
    with open(path) as fh:
        return RmabInstance.from_json(json.load(fh), strict=strict)


def save_instance(instance: RmabInstance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance.to_json(), indent=1) + "\n")


@dataclass(frozen=True)
class ActionVector:
    """0/1 action per arm with exactly ``k`` active entries."""

    a: np.ndarray
    k: int

    def __post_init__(self):
        arr = np.array(self.a, dtype=np.int8)
        if arr.ndim != 1 or not np.all((arr == 0) | (arr == 1)):
            raise ValueError("actions must be a 1-d array of 0/1 entries")
        if int(arr.sum()) != self.k:
            raise ValueError(f"action vector has {int(arr.sum())} active arms, budget is {self.k}")
        arr.setflags(write=False)
        object.__setattr__(self, "a", arr)

    @classmethod
    def from_indices(cls, n: int, indices: Sequence[int]) -> "ActionVector":
        idx = np.asarray(indices, dtype=np.intp)
        if len(set(idx.tolist())) != len(idx):
            raise ValueError("duplicate arm index in action set")
        a = np.zeros(n, dtype=np.int8)
        a[idx] = 1
        return cls(a, len(idx))

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.a)


@dataclass(frozen=True)
class PolicyDecision:
    select_prob: np.ndarray
    inclusion_prob: np.ndarray
    chosen: ActionVector


@dataclass
class ValueTable:
    """Per-arm finite-horizon value estimates ``v[i, t, s]`` for ``t = 0..T``.

    Row ``T`` is the terminal row and stays zero.
    """

    v: np.ndarray

    @classmethod
    def zeros(cls, n: int, T: int) -> "ValueTable":
        return cls(np.zeros((n, T + 1, 2)))

    @property
    def n(self) -> int:
        return self.v.shape[0]

    @property
    def T(self) -> int:
        return self.v.shape[1] - 1

    def copy(self) -> "ValueTable":
        return ValueTable(self.v.copy())

    def bound_violations(self, gamma: float, tol: float = 1e-9) -> int:
        """Number of entries outside the attainable reward range."""
        if gamma < 1.0:
            upper = np.full(self.T + 1, 1.0 / (1.0 - gamma))
        else:
            upper = (self.T - np.arange(self.T + 1)).astype(float)
        upper = upper[None, :, None]
        return int(np.sum((self.v < -tol) | (self.v > upper + tol)))

    def to_csv(self, path: str | Path) -> None:
        lines = ["arm,t,state,value"]
        n, T1, _ = self.v.shape
        for i in range(n):
            for t in range(T1):
                for s in range(2):
                    lines.append(f"{i},{t},{s},{self.v[i, t, s]:.6g}")
        Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class EpisodeTrace:
    states: np.ndarray  # (T+1, n)
    actions: np.ndarray  # (T, n)
    rewards: np.ndarray  # (T,)
    pull_counts: np.ndarray = field(default=None)  # (n,)

    def __post_init__(self):
        if self.pull_counts is None:
            self.pull_counts = self.actions.sum(axis=0).astype(np.int64)

    @property
    def total_reward(self) -> float:
        return float(self.rewards.sum())
