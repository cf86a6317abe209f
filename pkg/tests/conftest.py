from __future__ import annotations

import numpy as np
import pytest

from turnhash import stepfn


def random_step(rng: np.random.Generator, k: int, lo: float = 0.0, hi: float = 1.0) -> stepfn.StepFunction:
    """k-piece step function on [0, 1] with values uniform in [lo, hi]."""
    inner = np.sort(rng.uniform(0.0, 1.0, k - 1))
    return stepfn.make(np.concatenate([[0.0], inner, [1.0]]), rng.uniform(lo, hi, k))


def grid_updown(f, g, p: int, alphas: np.ndarray, n: int = 4001) -> float:
    """Oracle: midpoint-rule L_p of f - g - alpha minimized over an alpha grid."""
    xs = (np.arange(n) + 0.5) / n
    diff = f(xs) - g(xs)
    err = np.abs(diff[None, :] - alphas[:, None]) ** p
    return float(err.mean(axis=1).min() ** (1.0 / p))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def same_function(f, g, tol: float = 1e-9) -> bool:
    return (
        f.breakpoints.shape == g.breakpoints.shape
        and np.allclose(f.breakpoints, g.breakpoints, atol=tol)
        and np.allclose(f.values, g.values, atol=tol)
    )


def grid_slide(f, g, p: int, n: int = 2000) -> tuple[float, float]:
    """Oracle for the slide-aligned distance on an n-point grid.

    Samples ``extend_2pi(f)`` and ``g`` at cell midpoints. Slides run over
    multiples of 1/n, so each slide is a window of the sampled extension.
    For every slide the vertical shift is the exact minimizer of the
    sampled objective (median for p=1, mean for p=2), which is the limit
    of an arbitrarily dense alpha grid.

    Returns:
        (distance, slide) of the best grid point.
    """
    from turnhash import stepfn

    xs = (np.arange(2 * n) + 0.5) / n
    F = stepfn.extend_2pi(f)(xs)
    G = g(xs[:n])
    win = np.lib.stride_tricks.sliding_window_view(F, n)[:n]
    diff = G[None, :] - win
    if p == 1:
        alpha = np.median(diff, axis=1)
        d = np.abs(diff - alpha[:, None]).mean(axis=1)
    else:
        d = np.sqrt(diff.var(axis=1))
    s = int(np.argmin(d))
    return float(d[s]), s / n


# -- acceptance report ------------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def record_criterion(label: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
