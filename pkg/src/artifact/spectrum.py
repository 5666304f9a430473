"""Truncated strip operators, eigenfunction decay rates, and initial-condition scans.

The strip Hamiltonian acts on psi: {0..N-1} -> R^W as
(H psi)(n) = psi(n+1) + V(n) psi(n) + psi(n-1) with Dirichlet ends.  This
module assembles the N*W x N*W symmetric truncation, extracts eigenpairs
in an energy window, fits exponential decay rates to localized
eigenvectors, and scans the smallest singular value of the product
restricted to the boundary-condition subspace over an energy grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .cocycle import NumericalError, initial_condition_state, propagate_blocks
from .model import ConfigError, PotentialModel, _as_generator, sample_potential

DENSE_CUTOFF = 6000  # largest N*W solved by the dense symmetric driver
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class TruncatedOperator:
    """Finite block-tridiagonal truncation with Dirichlet ends."""

    width: int
    length: int
    blocks: np.ndarray  # (N, W, W) diagonal blocks

    @property
    def dim(self) -> int:
        return self.width * self.length

    def dense(self) -> np.ndarray:
        W, N = self.width, self.length
        H = np.zeros((N * W, N * W))
        for n in range(N):
            H[n * W : (n + 1) * W, n * W : (n + 1) * W] = self.blocks[n]
        off = np.arange((N - 1) * W)
        H[off, off + W] = 1.0
        H[off + W, off] = 1.0
        return H

    def banded(self) -> np.ndarray:
        """Lower banded storage (W+1 diagonals) for the banded eigensolver."""
        W, N = self.width, self.length
        dim = N * W
        ab = np.zeros((W + 1, dim))
        for d in range(W):  # within-block diagonals
            for n in range(N):
                for a in range(W - d):
                    ab[d, n * W + a] = self.blocks[n, a + d, a]
        ab[W, : dim - W] = 1.0  # inter-block identity
        return ab

    def matvec(self, psi: np.ndarray) -> np.ndarray:
        """Apply H to psi given as (N, W)."""
        out = np.einsum("nij,nj->ni", self.blocks, psi)
        out[:-1] += psi[1:]
        out[1:] += psi[:-1]
        return out


def assemble_truncation(model: PotentialModel, length: int, rng) -> TruncatedOperator:
    """Sample one realization of length N and wrap it as a truncated operator."""
    if not isinstance(length, (int, np.integer)) or length < 2:
        raise ConfigError([f"length must be an integer >= 2, got {length!r}"])
    gen = _as_generator(rng)
    return TruncatedOperator(model.width, int(length), sample_potential(model, int(length), gen))


def operator_from_blocks(blocks: np.ndarray) -> TruncatedOperator:
    """Wrap an existing realization (used to study the same disorder twice)."""
    blocks = np.asarray(blocks, dtype=float)
    if blocks.ndim != 3 or blocks.shape[1] != blocks.shape[2]:
        raise ConfigError([f"blocks must be (N, W, W), got {blocks.shape}"])
    return TruncatedOperator(blocks.shape[1], blocks.shape[0], blocks)


@dataclass(frozen=True)
class EigenPair:
    """Eigenvalue with its (N, W) eigenvector, unit l2 normalization."""

    energy: float
    psi: np.ndarray
    center: int  # layer index with the largest block norm
    residual: float
    norm_convention: str = "unit_l2"

    def left_normalized(self) -> np.ndarray:
        """psi scaled so the boundary block has unit norm (when nonzero)."""
        b0 = float(np.linalg.norm(self.psi[0]))
        if b0 <= 1e-12 * float(np.abs(self.psi).max()):
            raise NumericalError("boundary block too small for left normalization")
        return self.psi / b0


def eigenpairs_in_window(op: TruncatedOperator, window) -> list:
    """All eigenpairs with energy in [lo, hi], dense or banded as size dictates.

    Every returned pair satisfies ||H psi - E psi|| <= 1e-8; a larger
    residual aborts with NumericalError rather than returning bad data.
    """
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ConfigError([f"window must satisfy lo < hi, got [{lo}, {hi}]"])
    if op.dim <= DENSE_CUTOFF:
        vals, vecs = scipy.linalg.eigh(op.dense(), subset_by_value=(lo, hi))
    else:
        vals, vecs = scipy.linalg.eig_banded(
            op.banded(), lower=True, select="v", select_range=(lo, hi)
        )
    pairs = []
    for i, energy in enumerate(vals):
        psi = vecs[:, i].reshape(op.length, op.width)
        resid = float(np.linalg.norm(op.matvec(psi) - energy * psi))
        if resid > RESIDUAL_TOL:
            raise NumericalError(f"eigenpair residual {resid:.2e} exceeds {RESIDUAL_TOL:.0e}")
        center = int(np.argmax(np.linalg.norm(psi, axis=1)))
        pairs.append(EigenPair(float(energy), psi, center, resid))
    return pairs


# ---------------------------------------------------------------------------
# decay-rate fitting


@dataclass(frozen=True)
class FitPolicy:
    """Window and robustness knobs for decay-rate fits.

    noise_floor truncates the fit window where the eigenvector amplitude
    reaches the dense-solver noise plateau (absolute, for unit-l2 vectors);
    amp_floor is the hard underflow guard.  Only states centered in the
    left quarter (max_center_fraction) are fitted, so the fit window
    [center + buffer, right_fraction * N] stays long.
    """

    buffer: int = 10
    right_fraction: float = 0.9
    min_points: int = 10
    amp_floor: float = 1e-300
    noise_floor: float = 1e-12
    robust: bool = False
    max_center_fraction: float = 0.25


@dataclass(frozen=True)
class DecayRateFit:
    """Least-squares decay rate of log block amplitude over a layer window."""

    rate: float
    r_squared: float
    window: tuple
    points: int
    intercept: float
    robust: bool


def fit_decay_rate(pair: EigenPair, policy: FitPolicy = FitPolicy()):
    """Fit -d/dn log(||psi(n)|| + ||psi(n+1)||) on the right of the center.

    Returns None when the state is not left-localized or the usable window
    is shorter than policy.min_points.  The paired two-layer amplitude
    irons out the even/odd oscillation of strip eigenvectors.
    """
    N = pair.psi.shape[0]
    if pair.center > policy.max_center_fraction * N:
        return None
    norms = np.linalg.norm(pair.psi, axis=1)
    amps = norms[:-1] + norms[1:]
    lo = pair.center + policy.buffer
    hi = int(policy.right_fraction * N) - 1  # inclusive, <= N-2
    hi = min(hi, N - 2)
    if lo > hi:
        return None
    floor = max(policy.amp_floor, policy.noise_floor)
    window = amps[lo : hi + 1]
    dead = np.nonzero(window < floor)[0]
    if dead.size:
        hi = lo + int(dead[0]) - 1
        window = amps[lo : hi + 1]
    count = hi - lo + 1
    if count < policy.min_points:
        return None
    x = np.arange(lo, hi + 1, dtype=float)
    y = np.log(window)
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    sxy = float(np.sum((x - xm) * (y - ym)))
    slope = sxy / sxx
    intercept = ym - slope * xm
    sse = float(np.sum((y - (intercept + slope * x)) ** 2))
    syy = float(np.sum((y - ym) ** 2))
    r_squared = 1.0 - sse / syy if syy > 0 else 1.0
    if policy.robust:
        # median of paired-half slopes: immune to a few resonant spikes
        half = count // 2
        slopes = (y[half : 2 * half] - y[:half]) / half
        slope = float(np.median(slopes))
    return DecayRateFit(
        rate=-slope,
        r_squared=r_squared,
        window=(int(lo), int(hi)),
        points=int(count),
        intercept=float(intercept),
        robust=bool(policy.robust),
    )


# ---------------------------------------------------------------------------
# initial-condition (boundary subspace) scans


@dataclass(frozen=True)
class FastScanReport:
    """Grid scan of the smallest restricted singular value.

    min_log_s[i] is (1/n) log s_min of the n-step product restricted to the
    boundary-condition subspace {(v, 0)} at energy lambdas[i]; a strongly
    negative value flags an energy carrying an abnormally fast-decaying
    solution.  lipschitz_log_slack is log(n * exp(n (gamma1 + 4 eps)) * h)
    for grid spacing h: between grid points the scanned quantity cannot dip
    by more than exp(of it), so it quantifies what the grid can miss.
    """

    lambdas: np.ndarray
    min_log_s: np.ndarray
    global_min: float
    n: int
    grid_spacing: float
    gamma_thresholds: dict | None = None
    lipschitz_log_slack: float | None = None


def fast_scan(
    blocks: np.ndarray,
    center: float,
    radius: float,
    n: int,
    grid_points: int,
    gamma_thresholds: dict | None = None,
    gamma1: float | None = None,
    eps: float = 0.0,
) -> FastScanReport:
    """Scan (1/n) log s_min of the restricted product over a uniform grid.

    blocks is a sampled realization with at least n layers; the same
    realization is reused at every grid energy.
    """
    blocks = np.asarray(blocks, dtype=float)
    W = blocks.shape[1]
    problems = []
    if blocks.ndim != 3 or blocks.shape[2] != W:
        problems.append(f"blocks must be (n, W, W), got {blocks.shape}")
    if not isinstance(n, (int, np.integer)) or n < 1 or blocks.shape[0] < n:
        problems.append(f"need 1 <= n <= len(blocks), got n={n!r} with {blocks.shape[0]} blocks")
    if not isinstance(grid_points, (int, np.integer)) or grid_points < 2:
        problems.append(f"grid_points must be an integer >= 2, got {grid_points!r}")
    if not (np.isfinite(center) and np.isfinite(radius) and radius > 0):
        problems.append(f"need finite center and radius > 0, got {center!r}, {radius!r}")
    if problems:
        raise ConfigError(problems)
    lambdas = np.linspace(center - radius, center + radius, int(grid_points))
    spacing = float(lambdas[1] - lambdas[0])
    out = np.empty(len(lambdas))
    for i, lam in enumerate(lambdas):
        state = propagate_blocks(initial_condition_state(W), float(lam), blocks[:n])
        out[i] = state.log_scales[-1] / n
    slack = None
    if gamma1 is not None:
        slack = math.log(n) + n * (float(gamma1) + 4.0 * float(eps)) + math.log(spacing)
    return FastScanReport(
        lambdas=lambdas,
        min_log_s=out,
        global_min=float(out.min()),
        n=int(n),
        grid_spacing=spacing,
        gamma_thresholds=dict(gamma_thresholds) if gamma_thresholds else None,
        lipschitz_log_slack=slack,
    )


def restricted_min_log_s_dense(blocks: np.ndarray, lam: float, n: int) -> float:
    """Same statistic by brute force (dense product); only sane for small n."""
    blocks = np.asarray(blocks, dtype=float)
    W = blocks.shape[1]
    Phi = np.eye(2 * W)
    for k in range(n):
        T = np.zeros((2 * W, 2 * W))
        T[:W, :W] = lam * np.eye(W) - blocks[k]
        T[:W, W:] = -np.eye(W)
        T[W:, :W] = np.eye(W)
        Phi = T @ Phi
    s = np.linalg.svd(Phi[:, :W], compute_uv=False)
    return float(np.log(s[-1])) / n
