"""Randomised property suites behind ``fairrmab verify``."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngs
from .core import RmabInstance
from .datasets import SyntheticSpec, generate_synthetic
from .oracle import JointModel, gap_statistics, iterate_to_fixed_point, logit_optimality_check
from .sampling import inclusion_exact, set_probabilities
from .softfair import SoftFairPolicy, run_episode, select_probs
from .whittle import index_tables, whittle_index

SUITES = ("terminal", "decay", "bounds", "fairness", "theorem2")


@dataclass
class SuiteResult:
    name: str
    checked: int = 0
    failures: list[str] = field(default_factory=list)
    details: dict = field(default_factory=dict)
    elapsed: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.failures

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.checked - len(self.failures)}/{self.checked} checks passed"


def random_models(trials: int, seed: int) -> RmabInstance:
    """``trials`` strict-constraint arms packed into one instance (k and T are placeholders)."""
    return generate_synthetic(SyntheticSpec(n=max(trials, 2), seed=rngs.child_seed(seed, rngs.label("models"))))


def orders_agree(x, y, tol: float = 0.0) -> bool:
    """``x_i > x_j`` implies ``y_i >= y_j - tol`` for all pairs; ties in ``y`` are allowed."""
    x, y = np.asarray(x), np.asarray(y)
    bad = (x[:, None] > x[None, :]) & (y[:, None] < y[None, :] - tol)
    return not bad.any()


def terminal_suite(trials: int = 100, seed: int = 0, T: int = 10, gamma: float = 0.95, tol: float = 1e-8) -> SuiteResult:
    res = SuiteResult("terminal")
    start = time.perf_counter()
    inst = random_models(trials, seed)
    for i, arm in enumerate(inst.arms[:trials]):
        for s in (0, 1):
            w = whittle_index(arm, T, s, T, gamma)
            delta = arm.p[1, s, 1] - arm.p[0, s, 1]
            res.checked += 1
            if abs(w - delta) > tol:
                res.failures.append(f"model {i} state {s}: index {w!r} vs gap {delta!r}")
    res.elapsed = time.perf_counter() - start
    return res


def decay_suite(trials: int = 100, seed: int = 0, T: int = 10, gamma: float = 0.95) -> SuiteResult:
    """Strict decrease of the index in ``t`` for both states."""
    res = SuiteResult("decay")
    start = time.perf_counter()
    inst = random_models(trials, seed)
    w = index_tables(inst.P[:trials], T, gamma)
    worst, genuine = 0.0, 0
    for i in range(trials):
        for s in (0, 1):
            for t in range(T):
                res.checked += 1
                a, b = float(w[i, t, s]), float(w[i, t + 1, s])
                if not a > b:
                    worst = max(worst, b - a)
                    genuine += b - a > 1e-8
                    res.failures.append(f"model {i} state {s}: w[{t}]={a!r} <= w[{t + 1}]={b!r}")
    # increases above 1e-8 are real; the rest are ties at solver precision
    res.details["worst_increase"] = worst
    res.details["increases_above_1e-8"] = int(genuine)
    res.elapsed = time.perf_counter() - start
    return res


def gap_suite(trials: int = 1000, seed: int = 0, gamma: float = 0.9, cs=(0.5, 1.0, 2.0, 5.0),
              slack: float = 1e-10) -> SuiteResult:
    """Per-state softmax gap sandwich on random joint Q-tables with ``k = 1``."""
    res = SuiteResult("gap")
    start = time.perf_counter()
    rng = rngs.stream(seed, rngs.label("gap"))
    by_c: dict[float, int] = {}
    worst_ratio = 0.0
    for d in range(trials):
        n = int(rng.integers(2, 5))
        c = float(cs[d % len(cs)])
        q = rng.uniform(0.0, n / (1.0 - gamma), size=(2 ** n, n))
        rep = gap_statistics(q, c, slack)
        res.checked += 1
        worst_ratio = max(worst_ratio, float((rep.gap / rep.upper).max()))
        if not rep.holds:
            by_c[c] = by_c.get(c, 0) + 1
            which = "upper" if not rep.upper_ok.all() else "lower"
            res.failures.append(f"draw {d} (n={n}, c={c:g}): {which} bound violated, max gap {rep.gap.max():.6g} vs {rep.upper:.6g}")
    res.details["failures_by_c"] = {str(k): v for k, v in sorted(by_c.items())}
    res.details["worst_gap_over_bound"] = worst_ratio
    res.elapsed = time.perf_counter() - start
    return res


def soft_bound_suite(trials: int = 50, seed: int = 0, ns=(2, 3, 4), gammas=(0.8, 0.9), cs=(1.0, 2.0, 5.0),
                     tol: float = 1e-8) -> SuiteResult:
    """Optimal minus soft fixed point within ``[0, (n-1)/((2+c)(1-gamma))]`` and value bounds along the way."""
    res = SuiteResult("soft_bound")
    start = time.perf_counter()
    rng = rngs.stream(seed, rngs.label("soft_bound"))
    worst = 0.0
    for d in range(trials):
        n = int(rng.choice(ns))
        gamma = float(rng.choice(gammas))
        c = float(rng.choice(cs))
        inst = generate_synthetic(SyntheticSpec(n=n, k=1, T=1, gamma=gamma, seed=int(rng.integers(2 ** 32))))
        m = JointModel.from_instance(inst)
        hard = iterate_to_fixed_point(m, check=True)
        soft = iterate_to_fixed_point(m, c=c, check=True)
        diff = hard.q - soft.q
        bound = (n - 1) / ((2.0 + c) * (1.0 - gamma))
        worst = max(worst, float(diff.max() / bound))
        res.checked += 1
        problems = []
        if not (hard.converged and soft.converged):
            problems.append("no convergence")
        if diff.min() < -tol:
            problems.append(f"soft exceeds optimal by {-diff.min():.3g}")
        if diff.max() > bound + tol:
            problems.append(f"gap {diff.max():.6g} > bound {bound:.6g}")
        if not (hard.trajectory_ok and soft.trajectory_ok):
            problems.append("value bounds or operator ordering violated along the iteration")
        if problems:
            res.failures.append(f"instance {d} (n={n}, gamma={gamma}, c={c:g}): " + "; ".join(problems))
    res.details["worst_gap_over_bound"] = worst
    res.elapsed = time.perf_counter() - start
    return res


def bounds_suite(trials: int = 100, seed: int = 0) -> SuiteResult:
    res = SuiteResult("bounds")
    parts = [gap_suite(trials, seed), soft_bound_suite(max(1, trials // 2), seed)]
    for p in parts:
        res.checked += p.checked
        res.failures += [f"[{p.name}] {f}" for f in p.failures]
        res.details[p.name] = p.details
        res.elapsed += p.elapsed
    return res


def fairness_run(seed: int = 0, n: int = 20, k: int = 3, T: int = 50, c: float = 1.0,
                 inclusion_mode: str | None = None) -> tuple[int, list[str]]:
    """Check logit, select and inclusion order agreement on every round of one SoftFair run."""
    inst = generate_synthetic(SyntheticSpec(n=n, k=k, T=T, c=c, seed=rngs.child_seed(seed, rngs.STREAM_INSTANCE)))
    policy = SoftFairPolicy(c=c, inclusion_mode=inclusion_mode)
    policy.reset(inst)
    failures, checked = [], 0
    prng = rngs.stream(seed, rngs.STREAM_POLICY)
    trng = rngs.stream(seed, rngs.STREAM_TRANSITIONS)
    init = (rngs.stream(seed, rngs.STREAM_INITIAL).random(n) < 0.5).astype(np.int8)

    class Watch:
        def __getattr__(self, name):
            return getattr(policy, name)

        def decide(self, instance, s, t, rng):
            nonlocal checked
            a = policy.decide(instance, s, t, rng)
            lam, dec = policy.last_logits, policy.last_decision
            checked += 1
            if not (orders_agree(lam, dec.select_prob) and orders_agree(dec.select_prob, lam)):
                failures.append(f"round {t}: select order differs from logit order")
            if not orders_agree(lam, dec.inclusion_prob, tol=1e-12):
                failures.append(f"round {t}: inclusion order differs from logit order")
            return a

    run_episode(Watch(), inst, init, prng, trng)
    return checked, failures


def set_mass_check(trials: int = 100, seed: int = 0, n: int = 6, k: int = 2) -> tuple[int, list[str]]:
    """Set-probability mass containing ``i`` ranks arms exactly as their logits do."""
    rng = rngs.stream(seed, rngs.label("set_mass"))
    failures = []
    for d in range(trials):
        lam = rng.normal(size=n)
        if d % 5 == 0:
            lam[1] = lam[0]  # exercise exact ties
        probs = select_probs(lam, float(rng.choice([0.5, 1.0, 2.0, 5.0])))
        mass = np.zeros(n)
        for subset, pr in set_probabilities(probs, k).items():
            mass[list(subset)] += pr
        if not np.allclose(mass, inclusion_exact(probs, k), atol=1e-12):
            failures.append(f"draw {d}: set enumeration disagrees with inclusion probabilities")
        for i in range(n):
            for j in range(n):
                if i != j and (mass[i] >= mass[j] - 1e-12) != (lam[i] >= lam[j]):
                    failures.append(f"draw {d}: arms {i},{j} mass/logit order mismatch")
    return trials, failures


def fairness_suite(trials: int = 10, seed: int = 0) -> SuiteResult:
    res = SuiteResult("fairness")
    start = time.perf_counter()
    for r in range(trials):
        checked, fails = fairness_run(seed=rngs.child_seed(seed, r), inclusion_mode="exact")
        res.checked += checked
        res.failures += [f"run {r} {f}" for f in fails]
    checked, fails = set_mass_check(max(trials, 20), seed)
    res.checked += checked
    res.failures += fails
    res.elapsed = time.perf_counter() - start
    return res


def logit_optimality_suite(trials: int = 50, seed: int = 0, T: int = 5, gamma: float = 0.9, episodes: int = 200) -> SuiteResult:
    res = SuiteResult("theorem2")
    start = time.perf_counter()
    rng = rngs.stream(seed, rngs.label("logit_optimality"))
    mismatched_states = 0
    for d in range(trials):
        n = int(rng.integers(2, 5))
        k = 1 if n == 2 else int(rng.integers(1, 3))
        inst = generate_synthetic(SyntheticSpec(n=n, k=k, T=T, gamma=gamma, seed=int(rng.integers(2 ** 32))))
        out = logit_optimality_check(inst, episodes=episodes, seed=int(rng.integers(2 ** 32)))
        res.checked += 1
        mismatched_states += len(out.mismatches)
        if not out.holds:
            t, s, mine, joint = out.mismatches[0]
            res.failures.append(f"instance {d} (n={n}, k={k}): {len(out.mismatches)}/{out.checked} (t, state) pairs differ; "
                                f"first at t={t}, s={s}: logits pick {mine}, joint optimum {joint}")
    res.details["mismatched_pairs"] = mismatched_states
    res.elapsed = time.perf_counter() - start
    return res


def run_suite(name: str, trials: int | None = None, seed: int = 0) -> SuiteResult:
    if name == "terminal":
        return terminal_suite(trials or 100, seed)
    if name == "decay":
        return decay_suite(trials or 100, seed)
    if name == "bounds":
        return bounds_suite(trials or 100, seed)
    if name == "fairness":
        return fairness_suite(trials or 10, seed)
    if name == "theorem2":
        return logit_optimality_suite(trials or 50, seed)
    raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
