import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def brute_force_assignment(cost):
    """Minimum of ``sum_i cost[i, p(i)] / n`` over all permutations ``p``."""
    n = cost.shape[0]
    best = np.inf
    for perm in itertools.permutations(range(n)):
        best = min(best, cost[np.arange(n), perm].sum() / n)
    return best


def quartic_gw(cx, cy, pi):
    """Half GW loss of a plan by the literal four-index sum."""
    n, m = pi.shape
    total = 0.0
    for i in range(n):
        for j in range(m):
            for k in range(n):
                for l in range(m):
                    total += (cx[i, k] - cy[j, l]) ** 2 * pi[i, j] * pi[k, l]
    return 0.5 * total


def random_metric(rng, n):
    """Random metric from a Euclidean cloud in a random dimension."""
    pts = rng.standard_normal((n, rng.integers(1, 5)))
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt((diff ** 2).sum(-1))


def monotone_paths(n, m):
    """Every warping path from (0, 0) to (n - 1, m - 1)."""
    out = []

    def walk(i, j, path):
        if (i, j) == (n - 1, m - 1):
            out.append(list(path))
            return
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            a, b = i + di, j + dj
            if a < n and b < m:
                path.append((a, b))
                walk(a, b, path)
                path.pop()

    walk(0, 0, [(0, 0)])
    return out


def finite_difference(f, x, h=1e-6):
    """Central differences of a scalar function of an array."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        g[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def pytest_terminal_summary(terminalreporter):
    """List the acceptance verdict lines recorded through ``record_property``."""
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            lines += [v for k, v in getattr(rep, "user_properties", []) if k == "criterion"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
