"""Fixed-step linear average consensus over the processing-node graph."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DisconnectedGraphError
from .network import is_connected


@dataclass(frozen=True)
class ConsensusConfig:
    iterations: int = 100
    epsilon: float | None = None   # None -> default_epsilon(graph)
    tol: float = 1e-9              # early exit once the max per-round change drops below this

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("consensus iterations must be non-negative")


def default_epsilon(adjacency) -> float:
    adjacency = np.asarray(adjacency, dtype=bool)
    if adjacency.size == 0:
        raise ValueError("empty graph")
    return 1.0 / (adjacency.sum(axis=1).max() + 1.0)


def consensus_matrix(adjacency, epsilon: float) -> np.ndarray:
    """``I - eps * Laplacian``; doubly stochastic for symmetric graphs."""
    A = np.asarray(adjacency, dtype=float)
    deg = A.sum(axis=1)
    if deg.max() > 0 and not epsilon * deg.max() < 1.0:
        raise ValueError(f"step size {epsilon} too large for max degree {deg.max():.0f}")
    return np.eye(A.shape[0]) - epsilon * (np.diag(deg) - A)


def average_consensus(values, adjacency, config: ConsensusConfig = ConsensusConfig(), *,
                      return_rounds: bool = False, history: list | None = None):
    """Per-node estimates of the network average of ``values``.

    ``values`` stacks one array per node along axis 0.  Each round every
    node moves toward its neighbours: ``v_i += eps * sum_j (v_j - v_i)``.
    Multiply the result by the node count to obtain network sums.  When
    ``history`` is given, the state after every round is appended to it.
    """
    values = np.asarray(values, dtype=float)
    adjacency = np.asarray(adjacency, dtype=bool)
    n = adjacency.shape[0]
    if values.shape[0] != n:
        raise ValueError(f"expected one value per node ({n}), got {values.shape[0]}")
    if not is_connected(adjacency):
        raise DisconnectedGraphError("consensus requires a connected graph")
    eps = default_epsilon(adjacency) if config.epsilon is None else config.epsilon
    W = consensus_matrix(adjacency, eps)

    v = values.reshape(n, -1)
    rounds = 0
    if n > 1:
        for _ in range(config.iterations):
            nxt = W @ v
            rounds += 1
            delta = np.abs(nxt - v).max()
            v = nxt
            if history is not None:
                history.append(v.reshape(values.shape).copy())
            if delta < config.tol:
                break
    out = v.reshape(values.shape)
    return (out, rounds) if return_rounds else out
