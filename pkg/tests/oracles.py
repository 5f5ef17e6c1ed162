"""Reference computations kept independent of the package under test."""

import math


def normal_cdf(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def normal_upper_quantile(p, lo=-40.0, hi=40.0, iters=200):
    """x with P(Z >= x) = p, by bisection on ``normal_cdf``."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if 1.0 - normal_cdf(mid) > p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def ks_statistic_uniform(samples, a, b):
    xs = sorted((x - a) / (b - a) for x in samples)
    n = len(xs)
    d = 0.0
    for i, x in enumerate(xs):
        d = max(d, (i + 1) / n - x, x - i / n)
    return d


def ks_critical(n, alpha=0.01):
    # Asymptotic one-sample KS critical value c(alpha) / sqrt(n).
    c = math.sqrt(-0.5 * math.log(alpha / 2))
    return c / math.sqrt(n)


def chi_square(observed, expected):
    return sum((o - e) ** 2 / e for o, e in zip(observed, expected))


def chi2_critical_wilson_hilferty(df, z=2.326347874):
    """Upper 1% chi-square quantile (z is the normal 99th percentile)."""
    return df * (1 - 2 / (9 * df) + z * math.sqrt(2 / (9 * df))) ** 3


def brute_tally(events, stop_time, n_candidates):
    """Last authentic vote per voter before the stop, found by filtering then max."""
    counts = [0] * n_candidates
    voters = {e["claimed"] for e in events}
    for v in voters:
        mine = [e for e in events if e["claimed"] == v and e["auth_ok"] and e["time"] < stop_time]
        if mine:
            last = max(mine, key=lambda e: (e["time"], e["seq"]))
            counts[last["candidate"]] += 1
    return counts
