"""Monte Carlo checks of the sphere-projection geometry.

Covers three ingredients used by the probabilistic rate arguments: the
density of the projection of a uniform sphere point onto a coordinate
block (two candidate radial forms, adjudicated empirically), Haar sampling
on the symplectic-orthogonal group via its unitary-group model, and the
probability that a random rotation admits a direction contracted below a
threshold by a fixed diagonal scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, betaln
from scipy.stats import kstest

from .model import ConfigError, _as_generator

QUADRATIC_FORM = "quadratic"  # density (1 - ||v||^2)^((l-k)/2 - 1), the correct one
LINEAR_FORM = "linear"  # density (1 - ||v||)^((l-k)/2 - 1), kept for comparison
FORMS = (QUADRATIC_FORM, LINEAR_FORM)


@dataclass(frozen=True)
class ProjectionDensitySpec:
    """Radial law of || P_k u || for u uniform on S^(l-1), P_k a k-block.

    form selects the exponent argument: "quadratic" uses 1 - r^2 (the
    push-forward actually is a Beta law in r^2), "linear" uses 1 - r.
    Both normalize to 1 on the unit ball; they disagree for every (l, k),
    and the (2, 1) arcsine case singles out the quadratic form.
    """

    ambient_dim: int
    block_dim: int
    form: str = QUADRATIC_FORM

    def __post_init__(self):
        problems = []
        if not (isinstance(self.ambient_dim, (int, np.integer)) and self.ambient_dim >= 2):
            problems.append(f"ambient_dim must be an integer >= 2, got {self.ambient_dim!r}")
        if not (isinstance(self.block_dim, (int, np.integer)) and 1 <= self.block_dim < self.ambient_dim):
            problems.append(
                f"block_dim must be in 1..ambient_dim-1, got {self.block_dim!r}"
            )
        if self.form not in FORMS:
            problems.append(f"form must be one of {FORMS}, got {self.form!r}")
        if problems:
            raise ConfigError(problems)

    @property
    def exponent(self) -> float:
        return (self.ambient_dim - self.block_dim) / 2.0 - 1.0

    def _beta_params(self):
        k, e = self.block_dim, self.exponent
        if self.form == QUADRATIC_FORM:
            return k / 2.0, e + 1.0  # law of r^2
        return float(k), e + 1.0  # law of r

    def radial_cdf(self, r):
        r = np.clip(np.asarray(r, dtype=float), 0.0, 1.0)
        a, b = self._beta_params()
        x = r * r if self.form == QUADRATIC_FORM else r
        return betainc(a, b, x)

    def radial_pdf(self, r):
        r = np.asarray(r, dtype=float)
        a, b = self._beta_params()
        inside = (r > 0) & (r < 1)
        out = np.zeros_like(r)
        rr = r[inside]
        x = rr * rr if self.form == QUADRATIC_FORM else rr
        logpdf = (a - 1) * np.log(x) + (b - 1) * np.log1p(-x) - betaln(a, b)
        jac = 2.0 * rr if self.form == QUADRATIC_FORM else 1.0
        out[inside] = np.exp(logpdf) * jac
        return out


def sample_sphere(dim: int, count: int, rng) -> np.ndarray:
    """Uniform points on S^(dim-1), one per row (Gaussian direction method)."""
    if not (isinstance(dim, (int, np.integer)) and dim >= 1):
        raise ConfigError([f"dim must be a positive integer, got {dim!r}"])
    gen = _as_generator(rng)
    x = gen.standard_normal((int(count), int(dim)))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def sample_haar_symplectic_orthogonal(width: int, count: int, rng) -> np.ndarray:
    """Haar samples from the symplectic-orthogonal group, (count, 2W, 2W).

    The group is the image of the unitary group U(W): draw a Haar unitary
    X + iY by QR of a complex Gaussian with the phase correction on the
    diagonal of R, then embed as [[X, -Y], [Y, X]].
    """
    if not (isinstance(width, (int, np.integer)) and width >= 1):
        raise ConfigError([f"width must be a positive integer, got {width!r}"])
    gen = _as_generator(rng)
    W, m = int(width), int(count)
    Z = gen.standard_normal((m, W, W)) + 1j * gen.standard_normal((m, W, W))
    Q, R = np.linalg.qr(Z / math.sqrt(2.0))
    d = np.einsum("mii->mi", R)
    Q = Q * (d / np.abs(d))[:, None, :]
    out = np.empty((m, 2 * W, 2 * W))
    out[:, :W, :W] = Q.real
    out[:, :W, W:] = -Q.imag
    out[:, W:, :W] = Q.imag
    out[:, W:, W:] = Q.real
    return out


def _haar_rotations(dim: int, count: int, gen) -> np.ndarray:
    """Haar samples on SO(dim) by QR of a real Gaussian with sign fixes."""
    Z = gen.standard_normal((int(count), int(dim), int(dim)))
    Q, R = np.linalg.qr(Z)
    d = np.sign(np.einsum("mii->mi", R))
    d[d == 0] = 1.0
    Q = Q * d[:, None, :]
    det = np.linalg.det(Q)
    Q[det < 0, :, -1] *= -1.0
    return Q


@dataclass(frozen=True)
class ArchimedesReport:
    """Two-form KS comparison of empirical projection radii."""

    ambient_dim: int
    block_dim: int
    samples: int
    ks_quadratic: float
    ks_linear: float
    ks_critical_1pct: float

    @property
    def quadratic_consistent(self) -> bool:
        return self.ks_quadratic < self.ks_critical_1pct

    @property
    def linear_consistent(self) -> bool:
        return self.ks_linear < self.ks_critical_1pct

    def as_dict(self) -> dict:
        return {
            "ambient_dim": self.ambient_dim,
            "block_dim": self.block_dim,
            "samples": self.samples,
            "ks_quadratic": self.ks_quadratic,
            "ks_linear": self.ks_linear,
            "ks_critical_1pct": self.ks_critical_1pct,
            "quadratic_consistent": self.quadratic_consistent,
            "linear_consistent": self.linear_consistent,
        }


def archimedes_test(ambient_dim: int, block_dim: int, samples: int, rng) -> ArchimedesReport:
    """KS-test the block projection radius against both candidate laws.

    The critical value is the asymptotic 1% Kolmogorov point 1.628/sqrt(n);
    a form is consistent when its KS distance stays below it.
    """
    if not (isinstance(samples, (int, np.integer)) and samples >= 100):
        raise ConfigError([f"samples must be an integer >= 100, got {samples!r}"])
    gen = _as_generator(rng)
    u = sample_sphere(int(ambient_dim), int(samples), gen)
    radii = np.linalg.norm(u[:, : int(block_dim)], axis=1)
    ks = {}
    for form in FORMS:
        spec = ProjectionDensitySpec(int(ambient_dim), int(block_dim), form)
        ks[form] = float(kstest(radii, spec.radial_cdf).statistic)
    crit = math.sqrt(-0.5 * math.log(0.005)) / math.sqrt(samples)
    return ArchimedesReport(
        int(ambient_dim), int(block_dim), int(samples), ks[QUADRATIC_FORM], ks[LINEAR_FORM], crit
    )


# ---------------------------------------------------------------------------
# contracted-direction probability


@dataclass(frozen=True)
class GeomLemmaCase:
    """One configuration: scales of D = diag(exp(a_j)), subspace dim, threshold.

    The probability of interest is P{some unit u in a random k-subspace has
    ||D U u|| <= exp(threshold)}, with U a Haar rotation; equivalently the
    smallest singular value of D times the first k columns of U drops
    below exp(threshold).
    """

    log_scales: tuple
    subspace_dim: int
    threshold: float

    def __post_init__(self):
        a = tuple(float(x) for x in self.log_scales)
        object.__setattr__(self, "log_scales", a)
        problems = []
        if len(a) < 1 or not all(math.isfinite(x) for x in a):
            problems.append(f"log_scales must be finite and nonempty, got {a!r}")
        elif any(x < y for x, y in zip(a, a[1:])):
            problems.append(f"log_scales must be non-increasing, got {a!r}")
        if not (isinstance(self.subspace_dim, (int, np.integer)) and 1 <= self.subspace_dim <= len(a)):
            problems.append(f"subspace_dim must be in 1..{len(a)}, got {self.subspace_dim!r}")
        if not math.isfinite(self.threshold):
            problems.append(f"threshold must be finite, got {self.threshold!r}")
        if problems:
            raise ConfigError(problems)

    @property
    def exponent_sum(self) -> float:
        """sum over j >= k of (a_j - threshold)_+ : the predicted log-rate."""
        return float(sum(max(x - self.threshold, 0.0) for x in self.log_scales[self.subspace_dim - 1 :]))


@dataclass(frozen=True)
class GeomLemmaReport:
    case: GeomLemmaCase
    samples: int
    empirical_p: float
    exponent_sum: float

    def as_dict(self) -> dict:
        return {
            "log_scales": list(self.case.log_scales),
            "subspace_dim": self.case.subspace_dim,
            "threshold": self.case.threshold,
            "samples": self.samples,
            "empirical_p": self.empirical_p,
            "exponent_sum": self.exponent_sum,
        }


def geom_lemma_probability(case: GeomLemmaCase, samples: int, rng) -> GeomLemmaReport:
    """Estimate the contracted-direction probability for one case."""
    if not (isinstance(samples, (int, np.integer)) and samples >= 100):
        raise ConfigError([f"samples must be an integer >= 100, got {samples!r}"])
    gen = _as_generator(rng)
    dim = len(case.log_scales)
    k = case.subspace_dim
    scales = np.exp(np.asarray(case.log_scales))
    hits = 0
    total = int(samples)
    batch = max(1, min(total, 2**22 // (dim * dim)))
    # relative slack so exact ties (e.g. all scales equal to the threshold)
    # are not split by SVD rounding; immaterial for continuous cases
    cutoff = math.exp(case.threshold) * (1.0 + 32.0 * np.finfo(float).eps)
    done = 0
    while done < total:
        m = min(batch, total - done)
        U = _haar_rotations(dim, m, gen)
        cols = scales[None, :, None] * U[:, :, :k]
        smin = np.linalg.svd(cols, compute_uv=False)[:, -1]
        hits += int(np.sum(smin <= cutoff))
        done += m
    return GeomLemmaReport(case, total, hits / total, case.exponent_sum)


@dataclass(frozen=True)
class GeomLemmaGridReport:
    """Family of cases with the envelope constant and the decay slope fit.

    fitted_c is the smallest constant making p <= c * exp(-exponent_sum)
    hold across the whole grid (so the bound holds at every grid point by
    construction once fitted); slope is the regression coefficient of
    log empirical_p on exponent_sum and should sit near -1.
    """

    reports: tuple
    fitted_c: float
    slope: float
    intercept: float

    def as_dict(self) -> dict:
        return {
            "cases": [r.as_dict() for r in self.reports],
            "fitted_c": self.fitted_c,
            "slope": self.slope,
            "intercept": self.intercept,
        }


def geom_lemma_grid(cases, samples: int, rng) -> GeomLemmaGridReport:
    """Run a family of cases and fit the exponential decay of the probability."""
    gen = _as_generator(rng)
    reports = tuple(geom_lemma_probability(c, samples, gen) for c in cases)
    es = np.array([r.exponent_sum for r in reports])
    ps = np.array([r.empirical_p for r in reports])
    fitted_c = float(np.max(ps * np.exp(es)))
    pos = ps > 0
    if pos.sum() >= 2 and np.ptp(es[pos]) > 0:
        slope, intercept = np.polyfit(es[pos], np.log(ps[pos]), 1)
    else:
        slope, intercept = math.nan, math.nan
    return GeomLemmaGridReport(reports, fitted_c, float(slope), float(intercept))
