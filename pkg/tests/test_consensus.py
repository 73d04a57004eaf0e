import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqbound.consensus import ConsensusConfig, average_consensus, consensus_matrix, default_epsilon
from cqbound.errors import DisconnectedGraphError
from cqbound.network import build_paper_topology

PATH3 = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=bool)


def star(leaves):
    A = np.zeros((leaves + 1,) * 2, dtype=bool)
    A[0, 1:] = A[1:, 0] = True
    return A


def test_default_epsilon():
    assert default_epsilon(build_paper_topology().adjacency) == pytest.approx(0.2)
    assert default_epsilon(np.zeros((1, 1), dtype=bool)) == 1.0
    assert default_epsilon(star(5)) == pytest.approx(1 / 6)


def test_one_round_by_hand():
    out = average_consensus(np.array([1.0, 2.0, 3.0]), PATH3, ConsensusConfig(iterations=1, epsilon=1 / 3))
    np.testing.assert_allclose(out, [4 / 3, 2.0, 8 / 3])


def test_path_converges():
    out = average_consensus(np.array([1.0, 2.0, 3.0]), PATH3, ConsensusConfig(iterations=500))
    np.testing.assert_allclose(out, 2.0, atol=1e-6)


def test_fixed_point(rng):
    A = build_paper_topology().adjacency
    v = np.broadcast_to(rng.normal(size=(4, 4)), (9, 4, 4))
    out, rounds = average_consensus(v, A, ConsensusConfig(iterations=37, tol=0.0), return_rounds=True)
    assert rounds == 37
    np.testing.assert_allclose(out, v, atol=1e-14)


def test_zero_iterations_is_identity(rng):
    v = rng.normal(size=(9, 3))
    out, rounds = average_consensus(v, build_paper_topology().adjacency, ConsensusConfig(iterations=0),
                                    return_rounds=True)
    assert rounds == 0
    np.testing.assert_array_equal(out, v)


def test_singleton_graph():
    v = np.array([[1.0, 2.0]])
    out, rounds = average_consensus(v, np.zeros((1, 1), dtype=bool), return_rounds=True)
    assert rounds == 0
    np.testing.assert_array_equal(out, v)


def test_errors():
    A = np.zeros((3, 3), dtype=bool)
    with pytest.raises(DisconnectedGraphError):
        average_consensus(np.ones(3), A)
    with pytest.raises(ValueError):
        average_consensus(np.ones(4), PATH3)
    with pytest.raises(ValueError):
        consensus_matrix(star(5), 0.3)


def test_consensus_matrix_doubly_stochastic():
    W = consensus_matrix(build_paper_topology().adjacency, 0.2)
    np.testing.assert_allclose(W.sum(axis=0), 1)
    np.testing.assert_allclose(W.sum(axis=1), 1)
    np.testing.assert_array_equal(W, W.T)


def _random_connected(rng, n):
    while True:
        A = np.triu(rng.random((n, n)) < 0.4, 1)
        A = A | A.T
        from cqbound.network import is_connected
        if is_connected(A):
            return A


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**32 - 1))
def test_sum_conservation_and_monotone_error(n, seed):
    rng = np.random.default_rng(seed)
    A = _random_connected(rng, n)
    v = rng.normal(size=(n, 2, 2))
    hist = []
    average_consensus(v, A, ConsensusConfig(iterations=60, tol=0.0), history=hist)
    mean = v.mean(axis=0)
    err_prev = np.inf
    for state in hist:
        np.testing.assert_allclose(state.mean(axis=0), mean, atol=1e-10 * (1 + np.abs(mean).max()))
        err = np.linalg.norm(state - mean)
        assert err <= err_prev * (1 + 1e-12) + 1e-15
        err_prev = err
