"""Instance generators: structurally constrained synthetic arms and a CPAP-style adherence model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RmabInstance, TransitionModel

REJECTION_CAP = 100_000


class RejectionCapError(RuntimeError):
    pass


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    seed: int = 0
    k: int = 1
    T: int = 50
    gamma: float = 1.0
    c: float = 1.0
    # (low, high) for each to-good probability p[a][s][1], ordered (a=0,s=0), (0,1), (1,0), (1,1)
    ranges: tuple[tuple[float, float], ...] = ((0.0, 1.0),) * 4


def _draw_synthetic_arm(rng: np.random.Generator, ranges) -> tuple[TransitionModel, int]:
    lo = np.array([r[0] for r in ranges])
    hi = np.array([r[1] for r in ranges])
    for tries in range(1, REJECTION_CAP + 1):
        x = lo + (hi - lo) * rng.random(4)
        p00, p01, p10, p11 = x
        if np.all((x > 0.0) & (x < 1.0)) and p00 < p01 and p10 < p11 and p00 < p10 and p01 < p11:
            return TransitionModel.from_to_good((p00, p01), (p10, p11)), tries
    raise RejectionCapError(f"no arm met the structural constraints in {REJECTION_CAP} draws; check the ranges")


def generate_synthetic(spec: SyntheticSpec, return_tries: bool = False):
    """Rejection-sample every arm until positivity and the four constraints hold."""
    rng = np.random.default_rng(spec.seed)
    arms, tries = [], 0
    for _ in range(spec.n):
        arm, used = _draw_synthetic_arm(rng, spec.ranges)
        arms.append(arm)
        tries += used
    inst = RmabInstance(tuple(arms), spec.k, spec.T, spec.gamma, spec.c)
    if return_tries:
        return inst, tries
    return inst


@dataclass(frozen=True)
class CpapSpec:
    n: int
    seed: int = 0
    k: int = 1
    T: int = 80
    gamma: float = 1.0
    c: float = 1.0
    adherent_fraction: float = 0.5
    # passive to-good probabilities (from bad, from good) per cluster
    adherent_passive: tuple[float, float] = (0.7, 0.9)
    nonadherent_passive: tuple[float, float] = (0.2, 0.4)
    effect_range: tuple[float, float] = (0.05, 0.50)
    noise: float = 0.02
    clip: tuple[float, float] = (0.01, 0.99)


def generate_cpap(spec: CpapSpec) -> RmabInstance:
    """Two-cluster adherence arms with an additive intervention effect and per-arm noise.

    The first ``round(adherent_fraction * n)`` arms form the adherent cluster.
    Each arm draws one effect size and adds it to both of its passive
    to-good probabilities; noise is then added independently to all four
    to-good probabilities and the result clipped.
    """
    rng = np.random.default_rng(spec.seed)
    n_adherent = int(round(spec.adherent_fraction * spec.n))
    lo_clip, hi_clip = spec.clip
    arms = []
    for i in range(spec.n):
        passive = np.array(spec.adherent_passive if i < n_adherent else spec.nonadherent_passive, dtype=float)
        effect = rng.uniform(*spec.effect_range)
        active = passive + effect
        to_good = np.stack([passive, active])
        if spec.noise > 0.0:
            to_good = to_good + rng.uniform(-spec.noise, spec.noise, size=(2, 2))
        to_good = np.clip(to_good, lo_clip, hi_clip)
        arms.append(TransitionModel.from_to_good(to_good[0], to_good[1]))
    return RmabInstance(tuple(arms), spec.k, spec.T, spec.gamma, spec.c)
