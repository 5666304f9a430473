"""Closed-form rate bounds derived from a Lyapunov spectrum.

Conventions: `gammas` is the decreasing tuple (g_1 >= ... >= g_W > 0) of
top-half exponents.  The bound chain checked downstream is
floor = g_W <= cap < g_1, where cap is the width-2 value (2 g_1 + g_2)/3
when W = 2 and the general piecewise-linear root otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ConfigError


def _check_gammas(gammas) -> np.ndarray:
    g = np.asarray(gammas, dtype=float)
    problems = []
    if g.ndim != 1 or g.size < 1:
        problems.append(f"gammas must be a nonempty 1-D sequence, got shape {g.shape}")
    else:
        if not np.isfinite(g).all():
            problems.append("gammas must be finite")
        elif np.any(g <= 0):
            problems.append(f"gammas must be positive, got {g.tolist()}")
        elif np.any(np.diff(g) > 0):
            problems.append(f"gammas must be non-increasing, got {g.tolist()}")
    if problems:
        raise ConfigError(problems)
    return g


def rate_cap_general(gammas) -> float:
    """Unique root g of ((W-1) g - sum_{j<W} g_j)_+ + g = g_1.

    Closed form: g_1 itself when (W-1) g_1 <= sum of the others' top block,
    else the average (g_1 + sum_{j<W} g_j) / W.  Equals g_1 identically at
    W <= 2; the improvement over g_1 starts at W = 3.
    """
    g = _check_gammas(gammas)
    W = g.size
    s = float(g[: W - 1].sum())
    if (W - 1) * g[0] <= s:
        return float(g[0])
    return (float(g[0]) + s) / W


def rate_cap_general_bisect(gammas, tol: float = 1e-15) -> float:
    """Same root by bisection; kept as an independent cross-check route."""
    g = _check_gammas(gammas)
    W = g.size
    s = float(g[: W - 1].sum())
    g1 = float(g[0])

    def f(x):
        return max(0.0, (W - 1) * x - s) + x - g1

    lo, hi = 0.0, g1
    if f(hi) <= 0:  # root at the right endpoint (f is increasing)
        return g1
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:  # adjacent floats: tol below one ulp
            break
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def rate_cap_width2(gamma1: float, gamma2: float) -> float:
    """Improved width-2 cap (2 g_1 + g_2) / 3; strictly below g_1."""
    if not (np.isfinite(gamma1) and np.isfinite(gamma2)) or not gamma1 >= gamma2 > 0:
        raise ConfigError([f"need gamma1 >= gamma2 > 0, got {gamma1!r}, {gamma2!r}"])
    return (2.0 * gamma1 + gamma2) / 3.0


def uniform_rate_floor(gammas) -> float:
    """Slowest exponent g_W: decay at least this fast happens everywhere."""
    g = _check_gammas(gammas)
    return float(g[-1])


@dataclass(frozen=True)
class BoundSet:
    """All rate bounds derived from one spectrum, for embedding in reports."""

    width: int
    gamma1: float
    gamma_w: float
    floor: float
    cap_general: float
    cap_width2: float | None

    @classmethod
    def from_gammas(cls, gammas) -> "BoundSet":
        g = _check_gammas(gammas)
        W = g.size
        return cls(
            width=W,
            gamma1=float(g[0]),
            gamma_w=float(g[-1]),
            floor=uniform_rate_floor(g),
            cap_general=rate_cap_general(g),
            cap_width2=rate_cap_width2(g[0], g[1]) if W == 2 else None,
        )

    @property
    def cap(self) -> float:
        """The sharpest available cap for this width."""
        return self.cap_width2 if self.cap_width2 is not None else self.cap_general

    def as_dict(self) -> dict:
        return {
            "width": self.width,
            "gamma1": self.gamma1,
            "gamma_w": self.gamma_w,
            "floor": self.floor,
            "cap_general": self.cap_general,
            "cap_width2": self.cap_width2,
        }


BIN_NAMES = ("below_floor", "consistent", "between_cap_and_top", "above_top")


@dataclass(frozen=True)
class RateClassification:
    """Histogram of measured decay rates against the bound chain."""

    counts: dict
    total: int
    delta: float
    floor: float
    cap: float
    top: float

    @property
    def fractions(self) -> dict:
        if self.total == 0:
            return {k: math.nan for k in self.counts}
        return {k: v / self.total for k, v in self.counts.items()}


def classify_rates(gammas, rates, delta: float | None = None) -> RateClassification:
    """Bin measured rates against floor - delta, cap + delta, top + delta.

    delta defaults to 0.1 * g_1.  Rates below the floor or above the top
    exponent (with slack) contradict the bound chain; rates between cap
    and top are allowed but should be rare.
    """
    bounds = BoundSet.from_gammas(gammas)
    if delta is None:
        delta = 0.1 * bounds.gamma1
    if not np.isfinite(delta) or delta < 0:
        raise ConfigError([f"delta must be a nonnegative number, got {delta!r}"])
    r = np.asarray(rates, dtype=float)
    floor, cap, top = bounds.floor, bounds.cap, bounds.gamma1
    counts = {
        "below_floor": int(np.sum(r < floor - delta)),
        "consistent": int(np.sum((r >= floor - delta) & (r <= cap + delta))),
        "between_cap_and_top": int(np.sum((r > cap + delta) & (r <= top + delta))),
        "above_top": int(np.sum(r > top + delta)),
    }
    return RateClassification(counts, int(r.size), float(delta), floor, cap, top)
