"""Sequential weighted sampling without replacement and its inclusion probabilities.

Drawing one arm at a time from renormalised weights is the same law as
ranking independent exponential clocks ``E_i ~ Exp(w_i)`` (equivalently
Gumbel-perturbed log-weights) and keeping the ``k`` earliest.  The exact
and quadrature routes below use that representation; the Monte Carlo route
uses the Gumbel form for vectorised draws.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

WEIGHT_FLOOR = 1e-300
DEFAULT_PERMUTATION_CAP = 2_000_000
DEFAULT_MC_SAMPLES = 10_000


class PermutationCapError(ValueError):
    """Exact enumeration would exceed the configured permutation count."""


def _floored(weights) -> np.ndarray:
    w = np.maximum(np.asarray(weights, dtype=np.float64), WEIGHT_FLOOR)
    return w / w.sum()


def _log_weights(select_prob, log_weights=None) -> np.ndarray:
    """Log-weights for the sampler.

    Passing ``log_weights`` (for example ``c * lambda``) keeps later draws
    exact when the softmax of the leading arms has underflowed the rest.
    """
    if log_weights is not None:
        lw = np.asarray(log_weights, dtype=np.float64)
        return lw - lw.max()
    return np.log(_floored(select_prob))


def _masked_logsumexp(logw: np.ndarray, left: np.ndarray) -> np.ndarray:
    z = np.where(left, logw, -np.inf)
    top = z.max(axis=-1, keepdims=True)
    return top[..., 0] + np.log(np.exp(z - top).sum(axis=-1))


def sample_without_replacement(select_prob, k: int, rng: np.random.Generator, log_weights=None) -> np.ndarray:
    """Draw ``k`` distinct arms, one at a time from renormalised weights.

    Returns the chosen arm indices in draw order.  One uniform is consumed
    per draw.
    """
    logw = _log_weights(select_prob, log_weights)
    n = logw.size
    if not 0 <= k <= n:
        raise ValueError(f"cannot draw {k} arms from {n}")
    left = np.ones(n, dtype=bool)
    chosen = np.empty(k, dtype=np.intp)
    for j in range(k):
        z = np.where(left, logw, -np.inf)
        w = np.exp(z - z.max())
        cum = np.cumsum(w)
        u = rng.random() * cum[-1]
        idx = min(int(np.searchsorted(cum, u, side="right")), n - 1)
        # guard against u landing on the float edge of the last positive bin
        while not w[idx] > 0.0:
            idx -= 1
        chosen[j] = idx
        left[idx] = False
    return chosen


def permutation_count(n: int, k: int) -> int:
    return math.perm(n, k)


def _permutation_probs(logw: np.ndarray, k: int, cap: int) -> tuple[np.ndarray, np.ndarray]:
    n = logw.size
    count = permutation_count(n, k)
    if count > cap:
        raise PermutationCapError(f"{count} ordered {k}-permutations of {n} arms exceed cap {cap}")
    perms = np.array(list(itertools.permutations(range(n), k)), dtype=np.intp).reshape(count, k)
    left = np.ones((count, n), dtype=bool)
    rows = np.arange(count)
    logp = np.zeros(count)
    for j in range(k):
        logp += logw[perms[:, j]] - _masked_logsumexp(logw, left)
        left[rows, perms[:, j]] = False
    return perms, np.exp(logp)


def inclusion_exact(select_prob, k: int, cap: int = DEFAULT_PERMUTATION_CAP, log_weights=None) -> np.ndarray:
    """Inclusion probabilities by enumerating every ordered k-permutation."""
    logw = _log_weights(select_prob, log_weights)
    n = logw.size
    if k == 0:
        return np.zeros(n)
    perms, prob = _permutation_probs(logw, k, cap)
    incl = np.zeros(n)
    for j in range(k):
        incl += np.bincount(perms[:, j], weights=prob, minlength=n)
    return incl


def set_probabilities(select_prob, k: int, cap: int = DEFAULT_PERMUTATION_CAP,
                      log_weights=None) -> dict[tuple[int, ...], float]:
    """Probability of each unordered k-set, summed over its orderings."""
    perms, prob = _permutation_probs(_log_weights(select_prob, log_weights), k, cap)
    out: dict[tuple[int, ...], float] = {}
    for perm, pr in zip(perms.tolist(), prob.tolist()):
        key = tuple(sorted(perm))
        out[key] = out.get(key, 0.0) + pr
    return out


def inclusion_monte_carlo(select_prob, k: int, samples: int, rng: np.random.Generator,
                          chunk: int = 2_000, log_weights=None) -> np.ndarray:
    """Average inclusion indicators over ``samples`` independent draws."""
    logw = _log_weights(select_prob, log_weights)
    n = logw.size
    counts = np.zeros(n, dtype=np.int64)
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        keys = logw + rng.gumbel(size=(m, n))
        top = np.argpartition(-keys, k - 1, axis=1)[:, :k] if k < n else np.tile(np.arange(n), (m, 1))
        counts += np.bincount(top.ravel(), minlength=n)
        done += m
    return counts / samples


def inclusion_quadrature(select_prob, k: int, step: float = 0.2, log_weights=None) -> np.ndarray:
    """Inclusion probabilities from the exponential-clock integral.

    ``Pr(i chosen) = int_0^inf w_i exp(-w_i x) Pr(fewer than k other clocks
    rang by x) dx``.  The integral is taken on ``x = exp(y)`` with the
    trapezoid rule, which converges geometrically here because the
    integrand is analytic and decays double-exponentially in ``y``.
    Leave-one-out counting laws come from prefix/suffix Poisson-binomial
    recursions truncated at ``k`` successes.  Clock rates are floored, so
    arms whose weight underflows are treated as equally unlikely.
    """
    w = _floored(select_prob if log_weights is None else np.exp(_log_weights(None, log_weights)))
    n = w.size
    if k == 0:
        return np.zeros(n)
    if k >= n:
        return np.ones(n)
    y_lo = math.log(1e-17 / w.max())
    y_hi = math.log(45.0 / w.min())
    y = np.arange(y_lo, y_hi + step, step)
    x = np.exp(y)
    G = y.size
    # p_j(x): clock j has rung by time x
    rung = -np.expm1(-np.outer(w, x))  # (n, G)
    stay = 1.0 - rung

    prefix = np.zeros((n + 1, G, k))
    prefix[0, :, 0] = 1.0
    for j in range(n):
        cur = prefix[j] * stay[j][:, None]
        cur[:, 1:] += prefix[j][:, :-1] * rung[j][:, None]
        prefix[j + 1] = cur
    # suffix kept as a cumulative law: Pr(count <= c) over arms j..n-1
    suffix_cdf = np.ones((G, k))
    suffix_pmf = np.zeros((G, k))
    suffix_pmf[:, 0] = 1.0
    fewer = np.empty((n, G))
    for j in range(n - 1, -1, -1):
        # Pr(prefix_j + suffix_{j+1} < k) = sum_a prefix_j[a] * Pr(suffix <= k-1-a)
        fewer[j] = np.einsum("ga,ga->g", prefix[j], suffix_cdf[:, ::-1])
        nxt = suffix_pmf * stay[j][:, None]
        nxt[:, 1:] += suffix_pmf[:, :-1] * rung[j][:, None]
        suffix_pmf = nxt
        suffix_cdf = np.cumsum(suffix_pmf, axis=1)

    density = w[:, None] * x[None, :] * np.exp(-np.outer(w, x))  # dx = x dy
    integrand = density * fewer
    incl = step * (integrand.sum(axis=1) - 0.5 * (integrand[:, 0] + integrand[:, -1]))
    return np.clip(incl, 0.0, 1.0)


def default_mode(n: int, k: int) -> str:
    if k == 1:
        return "exact"
    if k <= 3 and n <= 12:
        return "exact"
    return "quadrature"


def inclusion_probs(select_prob, k: int, mode: str | None = None, samples: int = DEFAULT_MC_SAMPLES,
                    rng: np.random.Generator | None = None, cap: int = DEFAULT_PERMUTATION_CAP,
                    log_weights=None) -> np.ndarray:
    """Pr(arm i is among the k sequential draws) for every arm.

    ``mode`` is ``"exact"``, ``"monte_carlo"`` or ``"quadrature"``; ``None``
    picks by problem size.  With ``k == 1`` the weights are returned as is.
    ``log_weights``, when given, is used instead of ``select_prob`` by the
    exact and Monte Carlo routes.
    """
    w = np.asarray(select_prob, dtype=np.float64)
    n = w.size
    if not 1 <= k < n:
        raise ValueError(f"inclusion probabilities need 1 <= k < n (k={k}, n={n})")
    if k == 1:
        return w / w.sum()
    mode = mode or default_mode(n, k)
    if mode == "exact":
        return inclusion_exact(w, k, cap=cap, log_weights=log_weights)
    if mode == "monte_carlo":
        if rng is None:
            raise ValueError("monte_carlo mode needs an rng")
        return inclusion_monte_carlo(w, k, samples, rng, log_weights=log_weights)
    if mode == "quadrature":
        return inclusion_quadrature(w, k, log_weights=log_weights)
    raise ValueError(f"unknown inclusion mode {mode!r}")
