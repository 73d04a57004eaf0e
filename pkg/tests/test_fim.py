import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqbound import fim
from cqbound.errors import SingularMatrixError
from cqbound.estimator import ParticleSet
from cqbound.oracle import LinearGaussianModel, centralized_step, kalman_info_recursion
from cqbound.quantizer import QuantizerSpec, level_grad_coefficients, make_uniform
from cqbound.state_space import BearingObsModel, LinearObsModel, linear_model

from conftest import ScalarLinearObs


def random_psd(rng, n, jitter=0.1):
    a = rng.normal(size=(n, n))
    return a @ a.T + jitter * np.eye(n)


def one_particle(x):
    return ParticleSet(np.atleast_2d(x), [1.0])


class Quadratic:
    """Scalar nonlinear transition f(x) = x + 0.1 x^2 with unit noise."""

    Q_inv = np.eye(1)

    def jacobian(self, states):
        return (1.0 + 0.2 * states[:, 0])[:, None, None]


# schur_lower_right

def test_schur_block_diagonal(rng):
    C = random_psd(rng, 3)
    np.testing.assert_array_equal(fim.schur_lower_right(np.eye(3), np.zeros((3, 3)), np.zeros((3, 3)), C), C)


def test_schur_scalar():
    assert fim.schur_lower_right(2.0, 1.0, 1.0, 3.0)[0, 0] == pytest.approx(2.5)


def test_schur_matches_full_inverse(rng):
    for _ in range(20):
        M = random_psd(rng, 8)
        full = np.linalg.inv(np.linalg.inv(M)[4:, 4:])
        out = fim.schur_lower_right(M[:4, :4], M[:4, 4:], M[4:, :4], M[4:, 4:])
        np.testing.assert_allclose(out, full, atol=1e-9 * np.abs(full).max())


def test_schur_singular_raises():
    with pytest.raises(SingularMatrixError):
        fim.schur_lower_right(np.zeros((2, 2)), np.eye(2), np.eye(2), np.eye(2))


# B-blocks

def test_b_blocks_scalar_linear(rng):
    model = linear_model(np.eye(1), np.eye(1))
    for states in (rng.normal(size=(50, 1)), rng.normal(size=(3, 1)) * 100):
        b = fim.b_blocks_state(ParticleSet.uniform(states), model)
        assert (b.b11[0, 0], b.b12[0, 0], b.b22[0, 0]) == pytest.approx((1.0, -1.0, 1.0))


def test_b_blocks_nonlinear_score_oracle(rng):
    model = Quadratic()
    particles = ParticleSet(rng.normal(size=(40, 1)), rng.uniform(0.5, 1.5, 40))
    b = fim.b_blocks_state(particles, model)

    n = 1_000_000
    x0 = particles.states[rng.choice(particles.n, size=n, p=particles.weights), 0]
    w = rng.standard_normal(n)          # x1 - f(x0) under unit noise
    s0 = (1.0 + 0.2 * x0) * w           # d/dx0 log p(x1 | x0)
    s1 = -w                             # d/dx1 log p(x1 | x0)
    for est, samples in ((b.b11, s0 * s0), (b.b12, s0 * s1), (b.b22, s1 * s1)):
        se = samples.std(ddof=1) / np.sqrt(n)
        assert abs(est[0, 0] - samples.mean()) < 3 * se


# observation information

def test_j_raw_unit_scalar(rng, scalar_obs):
    p = ParticleSet.uniform(rng.normal(size=(30, 1)))
    assert fim.j_raw(p, np.zeros((1, 2)), scalar_obs)[0, 0] == pytest.approx(1.0)
    assert fim.j_raw(p, np.zeros((2, 2)), scalar_obs)[0, 0] == pytest.approx(2.0)


def test_j_raw_bearing_score_oracle(rng):
    obs = BearingObsModel(r0=0.01)
    x = np.array([400.0, 1.0, 700.0, -2.0])
    sensors = np.array([[100.0, 200.0], [900.0, 1000.0]])
    J = fim.j_raw(one_particle(x), sensors, obs)
    g, grad, r = obs.evaluate(x[None], sensors)
    n = 200_000
    noise = rng.standard_normal((n, 2))
    # score of the Gaussian likelihood at the true state (r held fixed)
    scores = (noise / np.sqrt(r)) @ grad[0]
    outer = scores[:, :, None] * scores[:, None, :]
    se = outer.std(axis=0, ddof=1) / np.sqrt(n)
    pos = np.ix_([0, 2], [0, 2])
    assert np.all(np.abs(J[pos] - outer.mean(axis=0)[pos]) < 3 * se[pos] + 1e-15)
    assert np.all(J[:, [1, 3]] == 0)


def test_j_quantized_one_bit(scalar_obs):
    J = fim.j_quantized(one_particle([0.0]), np.zeros((1, 2)), scalar_obs, QuantizerSpec([0.0]))
    assert J[0, 0] == pytest.approx(2.0 / np.pi, rel=1e-12)
    assert J[0, 0] == pytest.approx(0.63662, abs=1e-5)


def test_j_quantized_below_raw(rng):
    obs = BearingObsModel(r0=0.004)
    p = ParticleSet(rng.uniform(0, 1500, (100, 4)), rng.uniform(size=100))
    sensors = rng.uniform(0, 1500, (4, 2))
    Jr = fim.j_raw(p, sensors, obs)
    for bits in range(1, 9):
        Jq = fim.j_quantized(p, sensors, obs, make_uniform(bits, -np.pi, np.pi))
        assert np.linalg.eigvalsh(Jr - Jq).min() >= -1e-8 * np.trace(Jr)


def test_j_quantized_fine_limit(scalar_obs):
    g, r = 0.7, 1.0
    spec = make_uniform(8, g - 6 * np.sqrt(r), g + 6 * np.sqrt(r))
    Jq = fim.j_quantized(one_particle([g]), np.zeros((1, 2)), scalar_obs, spec)[0, 0]
    assert Jq == pytest.approx(1.0, rel=0.02)


def test_j_quantized_refinement_monotone(scalar_obs):
    # nested thresholds: bit b+1 splits every cell of bit b
    p = ParticleSet([[-0.4], [0.1], [0.9]], [0.2, 0.5, 0.3])
    prev = 0.0
    for bits in range(1, 9):
        J = fim.j_quantized(p, np.zeros((1, 2)), scalar_obs, make_uniform(bits, -3, 3))[0, 0]
        assert J >= prev - 1e-8 * J
        prev = J


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 8), st.floats(-4, 4), st.floats(1e-5, 2.0))
def test_windowed_factor_equals_full_sum(bits, g, r):
    spec = make_uniform(bits, -np.pi, np.pi)
    coef, h = level_grad_coefficients(g, r, spec)
    full = np.where(h >= 1e-12, coef**2 / np.maximum(h, 1e-300), 0.0).sum()
    assert fim.quantized_info_factor(np.array([g]), np.array([r]), spec)[0] == pytest.approx(full, rel=1e-12, abs=1e-300)


# recursions

def test_local_update_scalar_cv():
    blocks = fim.BBlocks(np.eye(1), -np.eye(1), np.eye(1))
    assert fim.local_fim_update(np.eye(1), blocks, np.eye(1))[0, 0] == pytest.approx(1.5)
    pred = fim.local_fim_update(np.eye(1), blocks)
    assert pred[0, 0] == pytest.approx(0.5)


def test_predictive_below_filtering(rng):
    L = random_psd(rng, 4)
    b = fim.b_blocks_state(one_particle(np.zeros(4)), linear_model(np.eye(4) + 0.1 * rng.normal(size=(4, 4)),
                                                                  random_psd(rng, 4)))
    J = random_psd(rng, 4, 0.0)
    diff = fim.local_fim_update(L, b, J) - fim.local_fim_update(L, b)
    assert np.linalg.eigvalsh(diff).min() >= -1e-9 * np.trace(diff)


def _four_state_linear(rng):
    F = np.eye(4)
    F[0, 1] = F[2, 3] = 1.0
    Q = 0.1 * random_psd(rng, 4)
    H = rng.normal(size=(3, 4))
    return F, Q, H, 0.5


def test_linear_gaussian_matches_kalman(rng):
    F, Q, H, r = _four_state_linear(rng)
    model, obs = linear_model(F, Q), LinearObsModel(r)
    L0 = np.eye(4) * 0.01
    expected = kalman_info_recursion(L0, LinearGaussianModel(F, Q, H, r * np.eye(3)), 50)
    L = L0
    p = one_particle(np.zeros(4))   # linear model: any particle gives the analytic expectation
    for k in range(50):
        L = fim.local_fim_update(L, fim.b_blocks_state(p, model), fim.j_raw(p, H, obs))
        np.testing.assert_allclose(L, expected[k], rtol=1e-8, atol=1e-8 * np.abs(expected[k]).max())
        assert np.abs(L - L.T).max() <= 1e-10 * np.abs(L).max()


def test_single_node_reduction(rng):
    obs = BearingObsModel(r0=0.001)
    model = linear_model(np.eye(4) + np.diag([0.5, 0, 0.5], 1), 0.1 * np.eye(4))
    particles = ParticleSet(rng.uniform(0, 1000, (60, 4)), rng.uniform(size=60))
    sensors = rng.uniform(0, 1000, (3, 2))
    L = G = np.eye(4)
    spec = make_uniform(6, -np.pi, np.pi)
    for _ in range(10):
        b = fim.b_blocks_state(particles, model)
        J = fim.j_quantized(particles, sensors, obs, spec)
        L_new, L_pred = fim.local_fim_update(L, b, J), fim.local_fim_update(L, b)
        c22 = fim.assemble_c22(L_new, L_pred, model.Q_inv)
        G = fim.global_fusion(G, fim.c_blocks(particles, model, c22))
        L = L_new
        np.testing.assert_allclose(G, L, rtol=1e-10, atol=1e-10 * np.abs(L).max())


def test_global_with_b_blocks_is_local(rng):
    b = fim.BBlocks(random_psd(rng, 2), rng.normal(size=(2, 2)), random_psd(rng, 2))
    L = random_psd(rng, 2)
    c = fim.CBlocks(b.b11, b.b12, b.b22)
    np.testing.assert_array_equal(fim.global_fusion(L, c), fim.local_fim_update(L, b))


def test_two_node_scalar_equals_centralized():
    model = linear_model(np.eye(1) * 0.9, np.eye(1) * 0.5)
    obs = LinearObsModel(0.7)
    p = one_particle([0.0])
    node_sensors = [np.array([[1.0]]), np.array([[2.0], [0.5]])]
    L = [np.eye(1), np.eye(1)]
    G = C = np.eye(1)
    for _ in range(20):
        b = fim.b_blocks_state(p, model)
        filt = [fim.local_fim_update(L[l], b, fim.j_raw(p, node_sensors[l], obs)) for l in range(2)]
        pred = [fim.local_fim_update(L[l], b) for l in range(2)]
        c22 = fim.assemble_c22(sum(filt), sum(pred), model.Q_inv)
        G = fim.global_fusion(G, fim.c_blocks(p, model, c22))
        C = centralized_step(C, p, p, np.vstack(node_sensors), model, obs)
        L = filt
        assert G[0, 0] == pytest.approx(C[0, 0], rel=1e-10)


# bounds

def test_rmse_bound_examples():
    assert fim.rmse_bound(np.eye(4)) == pytest.approx(np.sqrt(2))
    assert fim.rmse_bound(np.diag([4.0, 1, 4, 1])) == pytest.approx(np.sqrt(0.5))
    assert fim.position_variance(np.diag([4.0, 1, 4, 1])) == pytest.approx(0.5)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rmse_bound_monotone(seed):
    rng = np.random.default_rng(seed)
    A, B = random_psd(rng, 4), random_psd(rng, 4, 0.0)
    assert fim.rmse_bound(A + B) <= fim.rmse_bound(A) * (1 + 1e-12)


def test_is_valid_fim(rng):
    A = random_psd(rng, 4)
    assert fim.is_valid_fim(A)
    assert not fim.is_valid_fim(A + np.triu(np.ones((4, 4)), 1))
    assert not fim.is_valid_fim(-A)
