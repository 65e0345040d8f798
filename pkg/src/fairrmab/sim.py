"""Episode engine, multi-policy experiment runner and the two evaluation metrics.

Randomness per simulation ``j`` (see :mod:`fairrmab.rng`):

* instance (generator sources only): ``(j, STREAM_INSTANCE)``
* initial states of episode ``e``: ``(j, STREAM_INITIAL, e)``
* transition uniforms of episode ``e``: ``(j, STREAM_TRANSITIONS, e)``
* policy draws: ``(j, STREAM_POLICY, crc32(policy label))``

Initial states and transition uniforms are shared by all policies, so two
policies that take the same actions see the same trajectory.  Each
simulation plays ``episodes`` episodes per policy with the policy's learned
state carried over; metrics are taken on the final episode.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import rng as rngs
from .baselines import FairMyopicPolicy, MyopicPolicy, NoInterventionPolicy, RandomPolicy
from .core import EpisodeTrace, RmabInstance, load_instance
from .datasets import CpapSpec, SyntheticSpec, generate_cpap, generate_synthetic
from .softfair import SoftFairPolicy, run_episode
from .whittle import WhittlePolicy

POLICY_KINDS = ("softfair", "softfair_greedy", "oracle", "myopic", "fairmyopic", "random", "none")

# With a single episode the SoftFair table is still all zeros when it is read,
# so SoftFair and FairMyopic coincide; the benchmark lets values warm up.
BENCHMARK_EPISODES = 5


class BenefitUndefined(ValueError):
    """Oracle reward does not exceed the no-intervention reward."""


def intervention_benefit(reward_method: float, reward_none: float, reward_oracle: float) -> float:
    """Reward gain over no intervention as a percentage of the oracle's gain."""
    denom = reward_oracle - reward_none
    if not denom > 0.0:
        raise BenefitUndefined(f"oracle reward {reward_oracle} does not exceed no-intervention {reward_none}")
    return 100.0 * (reward_method - reward_none) / denom


def action_entropy(pull_counts, k: int, T: int) -> float:
    """Shannon entropy (nats) of pull counts normalised by the ``k * T`` total pulls."""
    counts = np.asarray(pull_counts, dtype=np.float64)
    total = k * T
    if total <= 0:
        raise ValueError("k * T must be positive")
    prob = counts[counts > 0] / total
    return float(-(prob * np.log(prob)).sum())


@dataclass
class PullHistogram:
    counts: np.ndarray  # counts[j] = number of arms pulled exactly j times
    never_pulled_fraction: float


def pull_histogram(traces) -> PullHistogram:
    """Distribution of per-arm pull counts pooled over ``traces``."""
    traces = [traces] if isinstance(traces, EpisodeTrace) else list(traces)
    pulls = np.concatenate([tr.pull_counts for tr in traces])
    counts = np.bincount(pulls.astype(np.int64))
    return PullHistogram(counts, float(np.mean(pulls == 0)))


@dataclass(frozen=True)
class PolicySpec:
    kind: str
    c: float | None = None

    @property
    def label(self) -> str:
        if self.kind in ("softfair", "fairmyopic") and self.c is not None:
            return f"{self.kind}[c={self.c:g}]"
        return self.kind

    def build(self, default_c: float, inclusion_mode: str | None):
        c = self.c if self.c is not None else default_c
        if self.kind == "softfair":
            return SoftFairPolicy(c=c, inclusion_mode=inclusion_mode, name=self.label)
        if self.kind == "softfair_greedy":
            # selection ignores c; values are updated with softmax weights at c = 1
            return SoftFairPolicy(c=1.0, greedy=True, update_c=1.0, inclusion_mode=inclusion_mode, name=self.label)
        if self.kind == "fairmyopic":
            return FairMyopicPolicy(c=c, name=self.label)
        if self.kind == "oracle":
            return WhittlePolicy()
        if self.kind == "myopic":
            return MyopicPolicy()
        if self.kind == "random":
            return RandomPolicy()
        if self.kind == "none":
            return NoInterventionPolicy()
        raise ValueError(f"unknown policy {self.kind!r}; choose from {', '.join(POLICY_KINDS)}")


def parse_policy(text: str) -> PolicySpec:
    """``"softfair"``, ``"softfair:2"`` or ``"fairmyopic:0.5"``."""
    kind, _, c = text.strip().partition(":")
    kind = kind.strip().lower()
    if kind not in POLICY_KINDS:
        raise ValueError(f"unknown policy {kind!r}; choose from {', '.join(POLICY_KINDS)}")
    return PolicySpec(kind, float(c) if c else None)


@dataclass
class ExperimentConfig:
    """One experiment: instance source, policies and run counts.

    ``source`` is either ``{"path": ...}`` or a generator description
    ``{"kind": "synthetic" | "cpap", "n": ..., **spec_fields}``.  With a
    generator a fresh instance is drawn for each simulation.  ``k``, ``T``,
    ``gamma`` and ``c`` override whatever the source carries.
    """

    source: dict
    policies: list[PolicySpec]
    k: int | None = None
    T: int | None = None
    gamma: float | None = None
    c: float | None = None
    episodes: int = 1
    simulations: int = 50
    seed: int = 0
    inclusion_mode: str | None = None
    threads: int = 1

    def __post_init__(self):
        if self.simulations < 1:
            raise ValueError("simulations must be >= 1")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if not self.policies:
            raise ValueError("at least one policy is required")
        self.policies = [p if isinstance(p, PolicySpec) else parse_policy(p) for p in self.policies]
        labels = [p.label for p in self.policies]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate policy labels: {labels}")

    def to_json(self) -> dict:
        d = asdict(self)
        d["policies"] = [p.label for p in self.policies]
        d.pop("threads")
        return d


def benchmark_config(policies, c: float = 2.0, simulations: int = 50, seed: int = 0, n: int = 100, k: int = 10,
                     T: int = 50, episodes: int = BENCHMARK_EPISODES, threads: int = 1) -> ExperimentConfig:
    """The seeded synthetic benchmark: a fresh generated instance per simulation."""
    return ExperimentConfig(source={"kind": "synthetic", "n": n}, policies=list(policies), k=k, T=T, c=c,
                            episodes=episodes, simulations=simulations, seed=seed, threads=threads)


def _overrides(config: ExperimentConfig) -> dict:
    return {key: getattr(config, key) for key in ("k", "T", "gamma", "c") if getattr(config, key) is not None}


def instance_for_simulation(config: ExperimentConfig, sim: int, cache: dict | None = None) -> RmabInstance:
    src = dict(config.source)
    over = _overrides(config)
    if "path" in src:
        if cache is not None and "file" in cache:
            return cache["file"]
        inst = load_instance(src["path"])
        inst = inst.replace(**over) if over else inst
        if cache is not None:
            cache["file"] = inst
        return inst
    kind = src.pop("kind")
    src.pop("seed", None)
    seed = rngs.child_seed(config.seed, sim, rngs.STREAM_INSTANCE)
    fields = {**src, **over, "seed": seed}
    if kind == "synthetic":
        return generate_synthetic(SyntheticSpec(**fields))
    if kind == "cpap":
        return generate_cpap(CpapSpec(**fields))
    raise ValueError(f"unknown generator kind {kind!r}")


@dataclass
class SimulationResult:
    sim: int
    rewards: dict[str, float]
    pulls: dict[str, np.ndarray]
    k: int
    T: int


def run_simulation(config: ExperimentConfig, sim: int) -> SimulationResult:
    instance = instance_for_simulation(config, sim)
    n = instance.n
    initials = [
        (rngs.stream(config.seed, sim, rngs.STREAM_INITIAL, e).random(n) < 0.5).astype(np.int8)
        for e in range(config.episodes)
    ]
    default_c = config.c if config.c is not None else instance.c
    rewards, pulls = {}, {}
    for spec in config.policies:
        policy = spec.build(default_c, config.inclusion_mode)
        policy.reset(instance)
        policy_rng = rngs.stream(config.seed, sim, rngs.STREAM_POLICY, rngs.label(spec.label))
        trace = None
        for e in range(config.episodes):
            transition_rng = rngs.stream(config.seed, sim, rngs.STREAM_TRANSITIONS, e)
            trace = run_episode(policy, instance, initials[e], policy_rng, transition_rng)
        rewards[spec.label] = trace.total_reward
        pulls[spec.label] = trace.pull_counts
    return SimulationResult(sim, rewards, pulls, instance.k, instance.T)


def _mean_std(values) -> tuple[float, float]:
    arr = np.asarray([v for v in values if v is not None and not math.isnan(v)], dtype=float)
    if arr.size == 0:
        return float("nan"), float("nan")
    return float(math.fsum(arr) / arr.size), float(arr.std())


@dataclass
class PolicyMetrics:
    label: str
    rewards: list[float]
    benefits: list[float | None]
    entropies: list[float | None]
    never_pulled: list[float]
    histogram: list[int]
    reward_mean: float = field(init=False)
    reward_std: float = field(init=False)
    benefit_mean: float = field(init=False)
    benefit_std: float = field(init=False)
    entropy_mean: float = field(init=False)
    entropy_std: float = field(init=False)
    never_pulled_mean: float = field(init=False)

    def __post_init__(self):
        self.reward_mean, self.reward_std = _mean_std(self.rewards)
        self.benefit_mean, self.benefit_std = _mean_std(self.benefits)
        self.entropy_mean, self.entropy_std = _mean_std(self.entropies)
        self.never_pulled_mean = float(np.mean(self.never_pulled))


@dataclass
class MetricsReport:
    config: dict
    policies: dict[str, PolicyMetrics]
    benefit_of_means: dict[str, float | None]
    pulls: dict[str, list[np.ndarray]] = field(repr=False)

    def summary(self) -> dict:
        out = {}
        for label, m in self.policies.items():
            out[label] = {
                "reward_mean": m.reward_mean,
                "reward_std": m.reward_std,
                "benefit_mean": m.benefit_mean,
                "benefit_std": m.benefit_std,
                "benefit_of_means": self.benefit_of_means.get(label),
                "entropy_mean": m.entropy_mean,
                "entropy_std": m.entropy_std,
                "never_pulled_fraction": m.never_pulled_mean,
            }
        return out

    def to_json(self) -> str:
        payload = {
            "config": self.config,
            "summary": self.summary(),
            "per_simulation": {
                label: {"reward": m.rewards, "benefit": m.benefits, "entropy": m.entropies,
                        "never_pulled_fraction": m.never_pulled}
                for label, m in self.policies.items()
            },
            "pull_histogram": {label: m.histogram for label, m in self.policies.items()},
        }
        return json.dumps(_jsonable(payload), indent=1, sort_keys=False) + "\n"

    def runs_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["policy", "simulation", "reward", "benefit", "entropy", "never_pulled_fraction"])
        for label, m in self.policies.items():
            for j, (r, b, e, z) in enumerate(zip(m.rewards, m.benefits, m.entropies, m.never_pulled)):
                w.writerow([label, j, _g(r), _g(b), _g(e), _g(z)])
        return buf.getvalue()

    def pulls_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["policy", "simulation", "arm", "pulls"])
        for label, per_sim in self.pulls.items():
            for j, counts in enumerate(per_sim):
                for arm, c in enumerate(counts):
                    w.writerow([label, j, arm, int(c)])
        return buf.getvalue()

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["policy", "times_selected", "arms"])
        for label, m in self.policies.items():
            for times, arms in enumerate(m.histogram):
                w.writerow([label, times, arms])
        return buf.getvalue()

    def write(self, out_dir: str | Path, stem: str = "report") -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {
            f"{stem}.json": self.to_json(),
            f"{stem}_runs.csv": self.runs_csv(),
            f"{stem}_pulls.csv": self.pulls_csv(),
            f"{stem}_histogram.csv": self.histogram_csv(),
        }
        paths = []
        for name, text in files.items():
            p = out / name
            p.write_text(text)
            paths.append(p)
        return paths


def _g(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.6g}"


def _jsonable(obj: Any):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return None if math.isnan(x) else x
    return obj


def _resolve_threads(threads: int | None) -> int:
    if threads and threads > 0:
        return threads
    env = os.environ.get("RMAB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _run_one(args):
    config, sim = args
    return run_simulation(config, sim)


def run_experiment(config: ExperimentConfig) -> MetricsReport:
    """Run every policy for ``config.simulations`` seeded simulations and aggregate."""
    threads = _resolve_threads(config.threads)
    jobs = [(config, j) for j in range(config.simulations)]
    if threads > 1 and config.simulations > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(job) for job in jobs]
    return aggregate(config, results)


def aggregate(config: ExperimentConfig, results: list[SimulationResult]) -> MetricsReport:
    labels = [p.label for p in config.policies]
    has_refs = "none" in labels and "oracle" in labels
    policies = {}
    pulls = {label: [r.pulls[label] for r in results] for label in labels}
    for label in labels:
        rewards = [r.rewards[label] for r in results]
        benefits: list[float | None] = []
        for r in results:
            if not has_refs:
                benefits.append(None)
                continue
            try:
                benefits.append(intervention_benefit(r.rewards[label], r.rewards["none"], r.rewards["oracle"]))
            except BenefitUndefined:
                benefits.append(None)
        entropies = [
            action_entropy(r.pulls[label], r.k, r.T) if r.pulls[label].sum() > 0 else None for r in results
        ]
        hist = np.bincount(np.concatenate(pulls[label]).astype(np.int64))
        policies[label] = PolicyMetrics(label, rewards, benefits, entropies,
                                        [float(np.mean(p == 0)) for p in pulls[label]],
                                        hist.tolist())
    benefit_of_means: dict[str, float | None] = {}
    if has_refs:
        none_m, oracle_m = policies["none"].reward_mean, policies["oracle"].reward_mean
        for label in labels:
            try:
                benefit_of_means[label] = intervention_benefit(policies[label].reward_mean, none_m, oracle_m)
            except BenefitUndefined:
                benefit_of_means[label] = None
    return MetricsReport(config.to_json(), policies, benefit_of_means, pulls)
