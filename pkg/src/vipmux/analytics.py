"""Closed-form attack-success-probability models and Monte-Carlo estimators.

Two defender models are covered.  Against a *static* network the scanner
draws addresses without replacement, so the number of live hosts found in k
probes is hypergeometric.  Against a *shuffled* network every address it has
probed may be reassigned behind its back; with a remap before every probe the
hit count is binomial with per-probe success n/N.

Binomial coefficients go through exact big-integer rationals up to
``EXACT_LIMIT`` and through log-gamma above it; survival probabilities use
``log1p``/``expm1`` so values like 1-(1-1/N)^k stay accurate for N up to 2**24.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy.special import gammaln

from .randomness import spawn_seeds

EXACT_LIMIT = 10_000


def _check_static(N: int, n: int, k: int, x: int = 0) -> None:
    if N < 0 or not 0 <= n <= N or not 0 <= k <= N or x < 0:
        raise ValueError(f"static model needs 0<=n<=N, 0<=k<=N, x>=0; got N={N} n={n} k={k} x={x}")


def _check_shuffled(N: int, k: int, x: int = 0) -> None:
    if N < 1 or k < 0 or x < 0:
        raise ValueError(f"shuffled model needs N>=1, k>=0, x>=0; got N={N} k={k} x={x}")


def _ln_comb(a: int, b: int) -> float:
    return float(gammaln(a + 1) - gammaln(b + 1) - gammaln(a - b + 1))


def asp_static_exact_rational(N: int, n: int, k: int, x: int) -> Fraction:
    """P(exactly x of the n live addresses fall in a k-subset of N), exact."""
    _check_static(N, n, k, x)
    if x > n or x > k or k - x > N - n:
        return Fraction(0)
    return Fraction(math.comb(n, x) * math.comb(N - n, k - x), math.comb(N, k))


def asp_static_exact(N: int, n: int, k: int, x: int) -> float:
    """Hypergeometric pmf for a no-repeat scan of a static network."""
    _check_static(N, n, k, x)
    if x > n or x > k or k - x > N - n:
        return 0.0
    if N <= EXACT_LIMIT:
        return float(asp_static_exact_rational(N, n, k, x))
    return math.exp(_ln_comb(n, x) + _ln_comb(N - n, k - x) - _ln_comb(N, k))


def asp_static_at_least_one(N: int, n: int, k: int) -> float:
    """1 - C(N-n,k)/C(N,k): chance a no-repeat k-scan finds any live host."""
    _check_static(N, n, k)
    if k == 0 or n == 0:
        return 0.0
    if k > N - n:
        return 1.0  # the scan cannot avoid every live address
    log_miss = _ln_comb(N - n, k) - _ln_comb(N, k)
    return float(-math.expm1(log_miss))


def asp_static_at_least(N: int, n: int, k: int, x: int) -> float:
    """Upper tail P(X >= x) of the static-network hypergeometric model."""
    _check_static(N, n, k, x)
    if x <= 0:
        return 1.0
    if x == 1:
        return asp_static_at_least_one(N, n, k)
    return float(sum(asp_static_exact(N, n, k, j) for j in range(x, min(n, k) + 1)))


def asp_shuffled_pmf(k: int, x: int, p: float) -> float:
    """Binomial pmf C(k,x) p^x (1-p)^(k-x) for the per-probe-remap defender."""
    if not 0.0 <= p <= 1.0 or k < 0 or x < 0:
        raise ValueError(f"need 0<=p<=1, k>=0, x>=0; got k={k} x={x} p={p}")
    if x > k:
        return 0.0
    if p == 0.0:
        return 1.0 if x == 0 else 0.0
    if p == 1.0:
        return 1.0 if x == k else 0.0
    log_pmf = _ln_comb(k, x) + x * math.log(p) + (k - x) * math.log1p(-p)
    return math.exp(log_pmf)


def asp_shuffled_at_least_one(N: int, k: int) -> float:
    """1 - (1 - 1/N)^k: chance of hitting a single moving target in k probes."""
    _check_shuffled(N, k)
    return float(-math.expm1(k * math.log1p(-1.0 / N)))


def asp_shuffled_at_least(N: int, n: int, k: int, x: int) -> float:
    """Upper tail P(X >= x) of the shuffled model with per-probe success n/N."""
    _check_shuffled(N, k, x)
    if not 0 <= n <= N:
        raise ValueError(f"need 0<=n<=N; got n={n} N={N}")
    if x <= 0:
        return 1.0
    if x == 1:
        if n == 0:
            return 0.0
        return float(-math.expm1(k * math.log1p(-n / N)))
    return float(sum(asp_shuffled_pmf(k, j, n / N) for j in range(x, k + 1)))


def overhead_flow_entries(n: int, m: int) -> int:
    """Steady-state edge flow-table entries for n hosts with m services each."""
    if n < 0 or m < 0:
        raise ValueError("host and service counts must be nonnegative")
    return n * m


def partial_scan_probe_budget(N: int, q: float) -> int:
    """Probes a scanner covering fraction q of the space gets per full remap."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"scan fraction must be in [0,1], got {q}")
    return round(q * N)


def asp_partial_scan(N: int, q: float) -> float:
    """Single-target ASP when only a fraction q of the space is scanned per remap."""
    return asp_shuffled_at_least_one(N, partial_scan_probe_budget(N, q))


DEFAULT_RATIO_GRID_POINTS = 100


def static_to_shuffled_ratio(
    N: int, n: int, k_values: list[int] | None = None
) -> tuple[float, list[int]]:
    """Mean over a k-grid of ASP(static)/ASP(shuffled) for at-least-one discovery.

    The averaging grid is not standardized anywhere, so it is an explicit
    input; the default is k = round(N*j/100) for j = 1..100.  The statistic is
    reported, never asserted against a reference value.
    """
    if k_values is None:
        k_values = [max(1, round(N * j / DEFAULT_RATIO_GRID_POINTS)) for j in range(1, DEFAULT_RATIO_GRID_POINTS + 1)]
    ratios = []
    for k in k_values:
        shuffled = asp_shuffled_at_least(N, n, k, 1)
        static = asp_static_at_least_one(N, n, k)
        if shuffled > 0.0:
            ratios.append(static / shuffled)
    if not ratios:
        raise ValueError("ratio grid produced no evaluable points")
    return float(np.mean(ratios)), list(k_values)


def monte_carlo_asp(
    campaign,
    topology,
    schedule,
    trials: int,
    seed: int | None,
    x: int = 1,
    method: str = "map",
):
    """Estimate P(at least x answered probes) over independent seeded campaigns.

    ``method="map"`` replays the remap/probe mechanics directly on the address
    map (vectorized; suitable for 1e5+ trials).  ``method="packet"`` runs each
    trial through the full packet-level simulator and is meant for small
    cross-validation runs.  Returns ``(estimate, standard_error)``.
    """
    from . import adversary  # local import; adversary pulls in the simulator

    if trials < 1:
        raise ValueError("trials must be >= 1")
    if method == "map":
        counts = adversary.batch_hit_counts(campaign, topology, schedule, trials, seed)
        hits = counts >= x
        est = float(np.mean(hits))
    elif method == "packet":
        wins = 0
        for child in spawn_seeds(seed, trials):
            outcome = adversary.execute_campaign(campaign, topology, schedule, child)
            if outcome.hit_count >= x:
                wins += 1
        est = wins / trials
    else:
        raise ValueError(f"unknown method {method!r}")
    stderr = math.sqrt(est * (1.0 - est) / trials)
    return est, stderr
