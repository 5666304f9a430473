"""Transfer-matrix products and Lyapunov-spectrum estimation.

The central object is a factored product state U * diag(exp(sig)) * Vt
maintained by the implicitly scaled Jacobi engine in `_product`, which
keeps every singular value of the running product to near relative
precision at any length.  On top of it sit replica estimators for the
Lyapunov spectrum, finite-length deviation statistics against reference
rates, a two-horizon deviation scan over an energy grid, and a
Chebyshev-node upper bound for the sup over an energy window of the
top-j log singular value sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _product
from .model import ConfigError, PotentialModel, RngStream, _as_generator, sample_potential

CHUNK = 16384


class NumericalError(RuntimeError):
    """A finite-matrix numerical operation failed (no convergence, overflow)."""


# ---------------------------------------------------------------------------
# transfer matrices


def symplectic_form(width: int) -> np.ndarray:
    """The 2W x 2W form J = [[0, -I], [I, 0]]."""
    J = np.zeros((2 * width, 2 * width))
    J[:width, width:] = -np.eye(width)
    J[width:, :width] = np.eye(width)
    return J


def symplectic_defect(matrix: np.ndarray) -> float:
    """max-abs entry of M^T J M - J; zero iff M preserves the form."""
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] % 2:
        raise ConfigError([f"expected a square even-dimension matrix, got shape {M.shape}"])
    J = symplectic_form(M.shape[0] // 2)
    return float(np.max(np.abs(M.T @ J @ M - J)))


@dataclass(frozen=True)
class TransferMatrix:
    """One-step map [[lam*I - V, -I], [I, 0]] acting on (psi(n), psi(n-1))."""

    entries: np.ndarray
    width: int


def transfer_matrix(lam: float, block: np.ndarray) -> TransferMatrix:
    """Build the transfer matrix at energy lam for a symmetric layer block.

    With the block stored exactly symmetric the result satisfies
    T^T J T = J with zero rounding defect.
    """
    V = np.asarray(block, dtype=float)
    if V.ndim != 2 or V.shape[0] != V.shape[1]:
        raise ConfigError([f"layer block must be square, got shape {V.shape}"])
    if not np.isfinite(V).all() or not np.isfinite(lam):
        raise ConfigError(["transfer matrix inputs must be finite"])
    if not np.array_equal(V, V.T):
        raise ConfigError(["layer block must be symmetric"])
    W = V.shape[0]
    T = np.zeros((2 * W, 2 * W))
    T[:W, :W] = -V
    idx = np.arange(W)
    T[idx, idx] += lam
    T[idx, W + idx] = -1.0
    T[W + idx, idx] = 1.0
    return TransferMatrix(T, W)


def transfer_stack(lam: float, blocks: np.ndarray) -> np.ndarray:
    """Vectorized transfer matrices for a run of layer blocks, (m, 2W, 2W)."""
    blocks = np.asarray(blocks, dtype=float)
    m, W, _ = blocks.shape
    T = np.zeros((m, 2 * W, 2 * W))
    T[:, :W, :W] = -blocks
    idx = np.arange(W)
    T[:, idx, idx] += lam
    T[:, idx, W + idx] = -1.0
    T[:, W + idx, idx] = 1.0
    return T


# ---------------------------------------------------------------------------
# factored product states


@dataclass
class CocycleState:
    """Running product in factored form: left_frame * exp(log_scales) * right_frame.

    left_frame has orthonormal columns (2W x K), log_scales is descending,
    right_frame holds the transposed right singular frame (rows are right
    singular directions).  K = 2W for the full product; K = W for products
    restricted to the boundary-condition subspace {(v, 0)}.
    pairing_residual is the worst relative reciprocal-pair defect
    max_j |sig_j + sig_{2W+1-j}| / max(1, sig_1) seen at any step so far
    (tracked for full-width states only).
    """

    left_frame: np.ndarray
    log_scales: np.ndarray
    right_frame: np.ndarray
    steps: int
    width: int
    pairing_residual: float = 0.0

    def copy(self) -> "CocycleState":
        return CocycleState(
            self.left_frame.copy(),
            self.log_scales.copy(),
            self.right_frame.copy(),
            self.steps,
            self.width,
            self.pairing_residual,
        )


def identity_state(width: int) -> CocycleState:
    """Empty full product: U = I, scales 0, Vt = I."""
    n = 2 * width
    return CocycleState(np.eye(n), np.zeros(n), np.eye(n), 0, width)


def initial_condition_state(width: int) -> CocycleState:
    """Empty product restricted to the subspace of vectors (v, 0)."""
    U = np.zeros((2 * width, width))
    U[:width, :width] = np.eye(width)
    return CocycleState(U, np.zeros(width), np.eye(width), 0, width)


def _advance_state(state: CocycleState, tstack: np.ndarray) -> CocycleState:
    out = state.copy()
    U = np.ascontiguousarray(out.left_frame)
    sig = np.ascontiguousarray(out.log_scales)
    Vt = np.ascontiguousarray(out.right_frame)
    worst, status = _product.advance(U, sig, Vt, np.ascontiguousarray(tstack, dtype=np.float64))
    if status == 1:
        raise NumericalError("singular value refactorization did not converge")
    if status == 2:
        raise NumericalError("product factor collapsed to dependent columns")
    out.left_frame = U
    out.log_scales = sig
    out.right_frame = Vt
    out.steps += tstack.shape[0]
    out.pairing_residual = max(out.pairing_residual, worst)
    return out


def propagate(state: CocycleState, tm: TransferMatrix) -> CocycleState:
    """One more factor on the left; returns the refactored state."""
    if tm.width != state.width:
        raise ConfigError([f"transfer width {tm.width} does not match state width {state.width}"])
    return _advance_state(state, tm.entries[None, :, :])


def propagate_blocks(state: CocycleState, lam: float, blocks: np.ndarray, chunk: int = CHUNK) -> CocycleState:
    """Propagate through a run of layer blocks at energy lam (chunked)."""
    blocks = np.asarray(blocks, dtype=float)
    if blocks.ndim != 3 or blocks.shape[1] != state.width or blocks.shape[2] != state.width:
        raise ConfigError([f"blocks must have shape (n, {state.width}, {state.width}), got {blocks.shape}"])
    for lo in range(0, blocks.shape[0], chunk):
        state = _advance_state(state, transfer_stack(lam, blocks[lo : lo + chunk]))
    return state


def singular_log_spectrum(state: CocycleState) -> np.ndarray:
    """Per-step log singular values (1/n) * log s_j of the current product."""
    if state.steps < 1:
        raise ConfigError(["spectrum of an empty product is undefined"])
    return state.log_scales / state.steps


def reconstruct(state: CocycleState) -> np.ndarray:
    """Materialize the product matrix; only sensible at mild scales."""
    if state.log_scales[0] > 700.0:
        raise NumericalError("product too large to materialize in double precision")
    return (state.left_frame * np.exp(state.log_scales)) @ state.right_frame


# ---------------------------------------------------------------------------
# Lyapunov spectrum estimation


def _run_model(state, model, lam, n, gen, chunk=CHUNK):
    done = 0
    while done < n:
        m = min(chunk, n - done)
        state = propagate_blocks(state, lam, sample_potential(model, m, gen))
        done += m
    return state


def replica_rates(model: PotentialModel, lam: float, n: int, burn_in: int, stream: RngStream):
    """One replica of the per-step rates (sig(burn_in+n) - sig(burn_in)) / n.

    Subtracting the scales at a short burn-in removes the O(1/n) offset
    coming from the angle between singular frames and the invariant
    filtration; for a constant hyperbolic factor the remaining error decays
    like the squared spectral-gap power of the burn-in length.  Returns
    (rates, pairing_residual).
    """
    gen = stream.generator()
    state = identity_state(model.width)
    if burn_in > 0:
        state = _run_model(state, model, lam, burn_in, gen)
    base = state.log_scales.copy()
    state = _run_model(state, model, lam, n, gen)
    return (state.log_scales - base) / n, state.pairing_residual


@dataclass(frozen=True)
class LyapunovEstimate:
    """Replica-averaged Lyapunov spectrum estimate with standard errors."""

    gammas: np.ndarray
    std_errors: np.ndarray
    replica_rates: np.ndarray
    n: int
    replicas: int
    lam: float
    burn_in: int
    pairing_residual: float


def lyapunov_estimate(
    model: PotentialModel,
    lam: float,
    n: int,
    replicas: int,
    rng: RngStream,
    burn_in: int = 64,
) -> LyapunovEstimate:
    """Estimate all 2W Lyapunov exponents at energy lam.

    Parameters
    ----------
    model, lam : potential law and energy.
    n : measured steps per replica (after burn_in extra steps).
    replicas : independent runs; the estimate is their mean and the
        standard errors are sample-sd / sqrt(replicas).
    rng : stream; replica r uses rng.child(r), so results are identical
        for any worker layout that preserves replica indices.
    """
    problems = []
    if not isinstance(n, (int, np.integer)) or n < 1:
        problems.append(f"n must be a positive integer, got {n!r}")
    if not isinstance(replicas, (int, np.integer)) or replicas < 2:
        problems.append(f"replicas must be an integer >= 2, got {replicas!r}")
    if not isinstance(burn_in, (int, np.integer)) or burn_in < 0:
        problems.append(f"burn_in must be a nonnegative integer, got {burn_in!r}")
    if not np.isfinite(lam):
        problems.append(f"lam must be finite, got {lam!r}")
    if problems:
        raise ConfigError(problems)
    rates = np.empty((replicas, 2 * model.width))
    worst = 0.0
    for r in range(replicas):
        rates[r], pr = replica_rates(model, float(lam), int(n), int(burn_in), rng.child(r))
        worst = max(worst, pr)
    return LyapunovEstimate(
        gammas=rates.mean(axis=0),
        std_errors=rates.std(axis=0, ddof=1) / math.sqrt(replicas),
        replica_rates=rates,
        n=int(n),
        replicas=int(replicas),
        lam=float(lam),
        burn_in=int(burn_in),
        pairing_residual=worst,
    )


def log_spectrum_trajectory(model: PotentialModel, lam: float, checkpoints, rng) -> np.ndarray:
    """Raw per-step log spectra (1/n) sig at each checkpoint n of one realization.

    checkpoints must be strictly increasing positive integers; the same
    realization is extended between them.  Returns (len(checkpoints), 2W).
    """
    cps = [int(c) for c in checkpoints]
    if not cps or any(c < 1 for c in cps) or any(b <= a for a, b in zip(cps, cps[1:])):
        raise ConfigError([f"checkpoints must be strictly increasing positive integers, got {checkpoints!r}"])
    gen = _as_generator(rng)
    state = identity_state(model.width)
    out = np.empty((len(cps), 2 * model.width))
    prev = 0
    for i, c in enumerate(cps):
        state = _run_model(state, model, lam, c - prev, gen)
        out[i] = state.log_scales / c
        prev = c
    return out


# ---------------------------------------------------------------------------
# deviation statistics


@dataclass(frozen=True)
class DeviationStat:
    """Finite-length deviation of the top-half rates from reference rates."""

    per_mode: np.ndarray  # |(1/n) log s_j - gamma_ref_j| for j = 1..W
    dev: float  # max over the top half
    n: int
    lam: float


def _deviation_from_blocks(blocks, lam, gamma_ref, width) -> DeviationStat:
    state = propagate_blocks(identity_state(width), lam, blocks)
    rates = singular_log_spectrum(state)[:width]
    per_mode = np.abs(rates - np.asarray(gamma_ref, dtype=float)[:width])
    return DeviationStat(per_mode, float(per_mode.max()), state.steps, float(lam))


def deviation_stat(model: PotentialModel, lam: float, n: int, gamma_ref, rng) -> DeviationStat:
    """Sample one realization and measure max_j |(1/n) log s_j - gamma_ref_j|."""
    gamma_ref = np.asarray(gamma_ref, dtype=float)
    if gamma_ref.size < model.width:
        raise ConfigError([f"gamma_ref needs at least {model.width} entries, got {gamma_ref.size}"])
    gen = _as_generator(rng)
    return _deviation_from_blocks(sample_potential(model, int(n), gen), float(lam), gamma_ref, model.width)


@dataclass(frozen=True)
class MinDevScan:
    """Two-horizon deviation scan of one realization over an energy grid."""

    lambdas: np.ndarray
    dev_short: np.ndarray  # deviations at horizon n
    dev_long: np.ndarray  # deviations at horizon n^2
    combined: np.ndarray  # pointwise min of the two
    sup_combined: float
    n: int


def min_dev_scan(
    model: PotentialModel,
    interval,
    n: int,
    grid_points: int,
    gamma_ref_table: np.ndarray,
    rng,
) -> MinDevScan:
    """Scan min(dev at n, dev at n^2) over an energy grid, one shared realization.

    The interesting summary is the sup over the grid: the two-horizon
    minimum should be uniformly small once n is large, even though each
    horizon alone can fail at scattered energies.
    gamma_ref_table holds the per-grid-point reference rates, shape
    (grid_points, >= W).
    """
    lo, hi = float(interval[0]), float(interval[1])
    problems = []
    if not lo < hi:
        problems.append(f"interval must satisfy lo < hi, got [{lo}, {hi}]")
    if not isinstance(n, (int, np.integer)) or n < 2:
        problems.append(f"n must be an integer >= 2, got {n!r}")
    elif n * n * model.width * model.width * 8 > 512 * 2**20:
        problems.append(f"n^2 = {n * n} layer blocks exceed the in-memory budget")
    if not isinstance(grid_points, (int, np.integer)) or grid_points < 1:
        problems.append(f"grid_points must be a positive integer, got {grid_points!r}")
    table = np.asarray(gamma_ref_table, dtype=float)
    if table.ndim != 2 or table.shape[0] != grid_points or table.shape[1] < model.width:
        problems.append(
            f"gamma_ref_table must have shape ({grid_points}, >= {model.width}), got {table.shape}"
        )
    if problems:
        raise ConfigError(problems)
    gen = _as_generator(rng)
    blocks = sample_potential(model, int(n) * int(n), gen)
    lambdas = np.linspace(lo, hi, int(grid_points))
    W = model.width
    dev_short = np.empty(len(lambdas))
    dev_long = np.empty(len(lambdas))
    for i, lam in enumerate(lambdas):
        ref = table[i, :W]
        state = propagate_blocks(identity_state(W), float(lam), blocks[:n])
        dev_short[i] = np.max(np.abs(singular_log_spectrum(state)[:W] - ref))
        state = propagate_blocks(state, float(lam), blocks[n:])
        dev_long[i] = np.max(np.abs(singular_log_spectrum(state)[:W] - ref))
    combined = np.minimum(dev_short, dev_long)
    return MinDevScan(lambdas, dev_short, dev_long, combined, float(combined.max()), int(n))


# ---------------------------------------------------------------------------
# Chebyshev-node sup bound for top-j log norms


_LEBESGUE_SMALL = {
    # provable interpolation constants (2/pi) log(m+1) + 1 for low degree
    1: 1.4413,
    2: 1.6994,
    3: 1.8826,
    4: 2.0246,
    5: 2.1407,
    6: 2.2388,
    7: 2.3238,
    8: 2.3988,
    9: 2.4659,
}


def lebesgue_factor(degree: int) -> float:
    """Node-max to interval-sup factor for degree-m polynomials at the
    m+1 first-kind Chebyshev points; logarithmic growth with a 25% margin."""
    if degree < 1:
        raise ConfigError([f"degree must be >= 1, got {degree}"])
    if degree < 10:
        return _LEBESGUE_SMALL[degree]
    return 1.25 * (2.0 / math.pi) * math.log(degree)


def chebyshev_nodes(center: float, radius: float, count: int) -> np.ndarray:
    """First-kind Chebyshev points scaled to (center - radius, center + radius)."""
    alpha = np.arange(count)
    return center + radius * np.cos(math.pi * (alpha + 0.5) / count)


@dataclass(frozen=True)
class GridSupBound:
    """Certified upper bound for sup over an energy window of
    (1/n) * sum_{i<=j} log s_i, from evaluations at Chebyshev nodes."""

    node_lambdas: np.ndarray
    node_values: np.ndarray
    node_max: float
    slack: float
    bound: float
    degree: int
    j: int
    n: int


def _top_sum(blocks, lam, n, j, width) -> float:
    state = propagate_blocks(identity_state(width), lam, blocks[:n])
    return float(np.sum(state.log_scales[:j])) / n


def grid_sup_log_norm(blocks: np.ndarray, center: float, radius: float, n: int, j: int) -> GridSupBound:
    """Bound the window sup of the top-j log singular value sum of the
    n-step product, using W*n + 1 Chebyshev nodes.

    Entries of the j-th exterior power of the product are polynomials of
    degree <= W*n in the energy, so the interval sup of their max-abs is
    at most the Lebesgue factor times the node max; converting between
    entry max and operator norm costs at most a binomial-coefficient
    factor each way.  Both factors land in `slack` (per-step units).
    """
    blocks = np.asarray(blocks, dtype=float)
    W = blocks.shape[1]
    problems = []
    if blocks.ndim != 3 or blocks.shape[2] != W:
        problems.append(f"blocks must be (n, W, W), got {blocks.shape}")
    if not isinstance(n, (int, np.integer)) or n < 1 or blocks.shape[0] < n:
        problems.append(f"need 1 <= n <= len(blocks), got n={n!r} with {blocks.shape[0]} blocks")
    if not isinstance(j, (int, np.integer)) or not (1 <= j <= W):
        problems.append(f"j must be in 1..{W}, got {j!r}")
    if not (np.isfinite(center) and np.isfinite(radius) and radius > 0):
        problems.append(f"need finite center and radius > 0, got {center!r}, {radius!r}")
    if problems:
        raise ConfigError(problems)
    degree = W * int(n)
    nodes = chebyshev_nodes(float(center), float(radius), degree + 1)
    values = np.array([_top_sum(blocks, float(lam), int(n), int(j), W) for lam in nodes])
    node_max = float(values.max())
    slack = (math.log(lebesgue_factor(degree)) + math.log(math.comb(2 * W, int(j)))) / int(n)
    return GridSupBound(nodes, values, node_max, slack, node_max + slack, degree, int(j), int(n))


def dense_grid_log_norm_max(blocks: np.ndarray, center: float, radius: float, n: int, j: int, points: int) -> float:
    """Direct max of the same top-j statistic on a uniform grid (check oracle)."""
    blocks = np.asarray(blocks, dtype=float)
    W = blocks.shape[1]
    grid = np.linspace(center - radius, center + radius, int(points))
    return max(_top_sum(blocks, float(lam), int(n), int(j), W) for lam in grid)
