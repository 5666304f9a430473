import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact.cocycle import (
    GridSupBound,
    chebyshev_nodes,
    dense_grid_log_norm_max,
    deviation_stat,
    grid_sup_log_norm,
    identity_state,
    initial_condition_state,
    lebesgue_factor,
    log_spectrum_trajectory,
    lyapunov_estimate,
    min_dev_scan,
    propagate,
    propagate_blocks,
    reconstruct,
    replica_rates,
    singular_log_spectrum,
    symplectic_defect,
    symplectic_form,
    transfer_matrix,
    transfer_stack,
)
from artifact.model import (
    ConfigError,
    RngStream,
    UniformInterval,
    deterministic,
    sample_potential,
    schrodinger_strip,
)


def random_symmetric(width, gen, scale=2.0):
    A = gen.uniform(-scale, scale, (width, width))
    return (A + A.T) / 2.0


def test_transfer_matrix_is_exactly_symplectic():
    gen = np.random.default_rng(0)
    for width in (1, 2, 3, 5):
        V = random_symmetric(width, gen)
        tm = transfer_matrix(0.37, V)
        assert symplectic_defect(tm.entries) == 0.0


@settings(max_examples=40, deadline=None)
@given(
    st.integers(min_value=1, max_value=4),
    st.floats(min_value=-5, max_value=5, allow_nan=False),
    st.integers(min_value=0, max_value=2**31 - 1),
)
def test_symplectic_defect_zero_for_any_symmetric_block(width, lam, seed):
    V = random_symmetric(width, np.random.default_rng(seed))
    assert symplectic_defect(transfer_matrix(lam, V).entries) == 0.0


def test_symplectic_form_and_defect_validation():
    J = symplectic_form(2)
    assert np.array_equal(J @ J, -np.eye(4))
    with pytest.raises(ConfigError):
        symplectic_defect(np.eye(3))
    with pytest.raises(ConfigError):
        transfer_matrix(0.0, [[0.0, 1.0], [0.5, 0.0]])
    with pytest.raises(ConfigError):
        transfer_matrix(float("inf"), [[0.0]])


def test_transfer_stack_matches_single_construction():
    gen = np.random.default_rng(1)
    blocks = np.array([random_symmetric(2, gen) for _ in range(5)])
    stack = transfer_stack(0.8, blocks)
    for i in range(5):
        assert np.array_equal(stack[i], transfer_matrix(0.8, blocks[i]).entries)


def test_reconstruct_matches_dense_product():
    gen = np.random.default_rng(2)
    width, n, lam = 2, 40, 0.6
    blocks = np.array([random_symmetric(width, gen) for _ in range(n)])
    state = propagate_blocks(identity_state(width), lam, blocks)
    dense = np.eye(2 * width)
    for i in range(n):
        dense = transfer_matrix(lam, blocks[i]).entries @ dense
    M = reconstruct(state)
    assert np.max(np.abs(M - dense)) <= 1e-9 * np.max(np.abs(dense))
    assert state.steps == n


def test_propagate_one_at_a_time_agrees_with_chunked():
    gen = np.random.default_rng(3)
    width, n, lam = 3, 25, -0.4
    blocks = np.array([random_symmetric(width, gen) for _ in range(n)])
    chunked = propagate_blocks(identity_state(width), lam, blocks)
    stepped = identity_state(width)
    for i in range(n):
        stepped = propagate(stepped, transfer_matrix(lam, blocks[i]))
    assert np.allclose(stepped.log_scales, chunked.log_scales, atol=1e-11)
    assert stepped.steps == chunked.steps == n


def test_pairing_residual_stays_tiny_through_long_products():
    model = schrodinger_strip(2, UniformInterval(-1.5, 1.5))
    gen = RngStream(11, 0).generator()
    state = propagate_blocks(identity_state(2), 0.3, sample_potential(model, 20_000, gen))
    assert state.pairing_residual <= 1e-10
    spec = singular_log_spectrum(state)
    # reciprocal pairing of the per-step spectrum
    assert np.allclose(spec, -spec[::-1], atol=1e-9)


def test_singular_log_spectrum_requires_steps():
    with pytest.raises(ConfigError):
        singular_log_spectrum(identity_state(1))


def exact_top_rate_integer_transfer(lam_int, n):
    """(1/n) log s_1 of [[lam, -1], [1, 0]]^n via exact integer powers."""
    M = [[lam_int, -1], [1, 0]]

    def matmul(A, B):
        return [
            [A[0][0] * B[0][0] + A[0][1] * B[1][0], A[0][0] * B[0][1] + A[0][1] * B[1][1]],
            [A[1][0] * B[0][0] + A[1][1] * B[1][0], A[1][0] * B[0][1] + A[1][1] * B[1][1]],
        ]

    P = [[1, 0], [0, 1]]
    base, k = M, n
    while k:
        if k & 1:
            P = matmul(P, base)
        base = matmul(base, base)
        k >>= 1
    f = sum(P[i][j] ** 2 for i in range(2) for j in range(2))
    with mpmath.workdps(60):
        fz = mpmath.mpf(f)
        s1sq = (fz + mpmath.sqrt(fz * fz - 4)) / 2  # det = 1, so s2 = 1/s1
        return float(mpmath.log(s1sq) / (2 * n))


def test_long_product_matches_exact_integer_power_oracle():
    n = 2000
    model = deterministic([[0.0]])
    blocks = sample_potential(model, n, RngStream(0, 0))
    state = propagate_blocks(identity_state(1), 3.0, blocks)
    rates = singular_log_spectrum(state)
    exact = exact_top_rate_integer_transfer(3, n)
    assert abs(rates[0] - exact) <= 1e-12
    assert abs(rates[1] + exact) <= 1e-12


def test_replica_rates_and_estimate_on_deterministic_model():
    model = deterministic([[1.0, 0.3], [0.3, -0.5]])
    est = lyapunov_estimate(model, 2.2, n=600, replicas=3, rng=RngStream(5, 0))
    # no randomness: replicas are bit-identical (std still sees ~ulp noise
    # from the mean-subtraction, so bound it rather than demand exact zero)
    assert np.array_equal(est.replica_rates[0], est.replica_rates[1])
    assert np.array_equal(est.replica_rates[0], est.replica_rates[2])
    assert np.all(est.std_errors <= 1e-15)
    assert est.pairing_residual <= 1e-10
    # spectrum is descending and reciprocal-paired
    assert np.all(np.diff(est.gammas) <= 1e-12)
    assert np.allclose(est.gammas, -est.gammas[::-1], atol=1e-9)


def test_replica_rates_reproducible_from_stream():
    model = schrodinger_strip(1, UniformInterval(-2, 2))
    r1, p1 = replica_rates(model, 0.0, 500, 32, RngStream(8, 0))
    r2, p2 = replica_rates(model, 0.0, 500, 32, RngStream(8, 0))
    assert np.array_equal(r1, r2)
    assert p1 == p2


def test_lyapunov_estimate_validation():
    model = schrodinger_strip(1, UniformInterval(-1, 1))
    with pytest.raises(ConfigError) as exc:
        lyapunov_estimate(model, float("nan"), n=0, replicas=1, rng=RngStream(0, 0))
    problems = exc.value.problems
    assert len(problems) == 3


def test_trajectory_matches_replica_at_single_checkpoint():
    model = schrodinger_strip(2, UniformInterval(-1, 1))
    traj = log_spectrum_trajectory(model, 0.5, [40], RngStream(9, 0))
    rates, _ = replica_rates(model, 0.5, 40, 0, RngStream(9, 0))
    assert np.array_equal(traj[0], rates)


def test_trajectory_checkpoint_validation_and_shape():
    model = schrodinger_strip(1, UniformInterval(-1, 1))
    traj = log_spectrum_trajectory(model, 0.0, [10, 20, 50], RngStream(10, 0))
    assert traj.shape == (3, 2)
    with pytest.raises(ConfigError):
        log_spectrum_trajectory(model, 0.0, [10, 10], RngStream(10, 0))
    with pytest.raises(ConfigError):
        log_spectrum_trajectory(model, 0.0, [], RngStream(10, 0))
    with pytest.raises(ConfigError):
        log_spectrum_trajectory(model, 0.0, [0, 5], RngStream(10, 0))


def test_initial_condition_state_tracks_restricted_product():
    gen = np.random.default_rng(4)
    width, n, lam = 2, 30, 0.9
    blocks = np.array([random_symmetric(width, gen) for _ in range(n)])
    state = propagate_blocks(initial_condition_state(width), lam, blocks)
    dense = np.eye(2 * width)
    for i in range(n):
        dense = transfer_matrix(lam, blocks[i]).entries @ dense
    restricted = dense[:, :width]  # image of the (v, 0) subspace
    exact = np.sort(np.log(np.linalg.svd(restricted, compute_uv=False)))[::-1]
    assert np.allclose(np.sort(state.log_scales)[::-1], exact, atol=1e-9)


def test_min_dev_scan_combined_and_validation():
    model = schrodinger_strip(1, UniformInterval(-1, 1))
    table = np.full((4, 1), 0.2)
    scan = min_dev_scan(model, (-0.3, 0.3), 12, 4, table, RngStream(12, 0))
    assert np.array_equal(scan.combined, np.minimum(scan.dev_short, scan.dev_long))
    assert scan.sup_combined == scan.combined.max()
    assert scan.lambdas.shape == (4,)
    with pytest.raises(ConfigError) as exc:
        min_dev_scan(model, (0.3, -0.3), 1, 0, np.zeros((2, 0)), RngStream(12, 0))
    assert len(exc.value.problems) >= 3
    with pytest.raises(ConfigError):
        # n^2 layer blocks would not fit the in-memory budget
        min_dev_scan(model, (-0.3, 0.3), 50_000, 4, table, RngStream(12, 0))


def test_lebesgue_factor_table_and_growth():
    assert lebesgue_factor(1) == 1.4413
    assert lebesgue_factor(9) == 2.4659
    assert lebesgue_factor(100) == 1.25 * (2.0 / math.pi) * math.log(100)
    assert lebesgue_factor(3) < lebesgue_factor(9) < lebesgue_factor(1000)
    with pytest.raises(ConfigError):
        lebesgue_factor(0)


def test_chebyshev_nodes_layout():
    nodes = chebyshev_nodes(1.5, 0.25, 9)
    assert nodes.shape == (9,)
    assert nodes.min() > 1.25 and nodes.max() < 1.75
    # first-kind points are symmetric about the center
    assert np.allclose(nodes + nodes[::-1], 3.0, atol=1e-14)


def test_grid_sup_bound_dominates_dense_scan():
    gen = np.random.default_rng(6)
    for width, n, j in ((1, 6, 1), (2, 4, 1), (2, 4, 2)):
        blocks = np.array([random_symmetric(width, gen) for _ in range(n)])
        bound = grid_sup_log_norm(blocks, 0.3, 0.5, n, j)
        dense = dense_grid_log_norm_max(blocks, 0.3, 0.5, n, j, 400)
        assert isinstance(bound, GridSupBound)
        assert bound.bound >= dense - 1e-12
        assert bound.bound == bound.node_max + bound.slack
        assert bound.degree == width * n
        assert len(bound.node_lambdas) == bound.degree + 1


def test_grid_sup_validation():
    blocks = np.zeros((4, 2, 2))
    with pytest.raises(ConfigError) as exc:
        grid_sup_log_norm(blocks, 0.0, -1.0, 10, 5)
    assert len(exc.value.problems) >= 3


def test_top_block_log_sums_are_submultiplicative():
    # sum_{i<=j} log s_i(AB) <= (same for A) + (same for B), per sample
    gen = np.random.default_rng(13)
    for _ in range(20):
        width = int(gen.integers(1, 4))
        lam = float(gen.uniform(-2, 2))
        blocks = np.array([random_symmetric(width, gen) for _ in range(12)])
        half = transfer_stack(lam, blocks[:6])
        rest = transfer_stack(lam, blocks[6:])
        A = np.linalg.multi_dot(list(half[::-1])) if len(half) > 1 else half[0]
        B = np.linalg.multi_dot(list(rest[::-1])) if len(rest) > 1 else rest[0]
        for j in range(1, 2 * width + 1):
            top = lambda M: float(np.sum(np.log(np.linalg.svd(M, compute_uv=False)[:j])))
            assert top(B @ A) <= top(A) + top(B) + 1e-9


def test_reconstructed_product_stays_symplectic():
    model = schrodinger_strip(2, UniformInterval(-1, 1))
    blocks = sample_potential(model, 100, RngStream(14, 0))
    state = propagate_blocks(identity_state(2), 0.2, blocks)
    M = reconstruct(state)
    J = symplectic_form(2)
    defect = np.max(np.abs(M.T @ J @ M - J))
    assert defect / max(1.0, float(np.abs(M).max()) ** 2) <= 1e-8


def test_deviation_stat_self_reference_and_convergence():
    model = schrodinger_strip(2, UniformInterval(-1, 1))
    n, lam = 200, 0.4
    blocks = sample_potential(model, n, RngStream(15, 0))
    state = propagate_blocks(identity_state(2), lam, blocks)
    ref = singular_log_spectrum(state)[:2]
    # same stream, same realization: deviation is exactly zero
    stat = deviation_stat(model, lam, n, ref, RngStream(15, 0))
    assert stat.dev == 0.0
    # fixed-matrix model converges onto the known rate
    free = deterministic([[0.0]])
    exact = exact_top_rate_integer_transfer(3, 1000)
    stat = deviation_stat(free, 3.0, 1000, [exact], RngStream(16, 0))
    assert stat.dev < 1e-3
