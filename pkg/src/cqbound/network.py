"""Sensor/processing-node geometry and communication metering."""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import DisconnectedGraphError


@dataclass(frozen=True)
class Topology:
    sensors: np.ndarray        # (n_sensors, 2)
    sensor_node: np.ndarray    # (n_sensors,) owning processing node
    nodes: np.ndarray          # (n_f, 2)
    adjacency: np.ndarray      # (n_f, n_f) bool, no self loops

    @property
    def n_f(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_sensors(self) -> int:
        return self.sensors.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    @property
    def n_directed_edges(self) -> int:
        return int(self.adjacency.sum())

    def neighborhood(self, node: int) -> np.ndarray:
        """Sensor ids owned by ``node``."""
        return np.flatnonzero(self.sensor_node == node)

    def neighbors(self, node: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[node])


def is_connected(adjacency: np.ndarray) -> bool:
    n = adjacency.shape[0]
    if n <= 1:
        return True
    n_comp, _ = connected_components(np.asarray(adjacency, dtype=int), directed=False)
    return n_comp == 1


def build_topology(region_size=1500.0, sensor_grid=15, node_grid=3, comm_radius=550.0) -> Topology:
    """Uniform ``sensor_grid x sensor_grid`` sensors, one node per cell of a ``node_grid`` tiling.

    Sensors sit at the centres of their grid cells; each node sits at the
    centre of its square cell and owns the sensors inside it.  Nodes are
    linked when no farther apart than ``comm_radius``.
    """
    if region_size <= 0 or sensor_grid < 1 or node_grid < 1 or comm_radius < 0:
        raise ValueError("topology dimensions must be positive")
    pitch = region_size / sensor_grid
    axis = (np.arange(sensor_grid) + 0.5) * pitch
    sx, sy = np.meshgrid(axis, axis, indexing="xy")
    sensors = np.column_stack([sx.ravel(), sy.ravel()])

    cell = region_size / node_grid
    node_axis = (np.arange(node_grid) + 0.5) * cell
    nx_, ny_ = np.meshgrid(node_axis, node_axis, indexing="xy")
    nodes = np.column_stack([nx_.ravel(), ny_.ravel()])

    col = np.minimum((sensors[:, 0] // cell).astype(int), node_grid - 1)
    row = np.minimum((sensors[:, 1] // cell).astype(int), node_grid - 1)
    sensor_node = row * node_grid + col

    dist = np.linalg.norm(nodes[:, None, :] - nodes[None, :, :], axis=-1)
    adjacency = (dist <= comm_radius) & ~np.eye(len(nodes), dtype=bool)
    if not is_connected(adjacency):
        raise DisconnectedGraphError(
            f"communication radius {comm_radius} m leaves the {node_grid}x{node_grid} node graph disconnected")
    return Topology(sensors, sensor_node, nodes, adjacency)


def build_paper_topology(config=None) -> Topology:
    if config is None:
        return build_topology()
    return build_topology(config.region_size, config.sensor_grid, config.node_grid, config.comm_radius)


@dataclass(frozen=True)
class ActiveSet:
    per_node: tuple  # one array of sensor ids per processing node

    @property
    def all(self) -> np.ndarray:
        return np.concatenate(self.per_node) if self.per_node else np.empty(0, dtype=int)

    def __len__(self) -> int:
        return sum(len(ids) for ids in self.per_node)


def select_active(topology: Topology, k_per_node: int, rng: np.random.Generator) -> ActiveSet:
    """Uniformly sample ``k_per_node`` sensors without replacement inside each neighbourhood."""
    chosen = []
    for node in range(topology.n_f):
        owned = topology.neighborhood(node)
        if k_per_node > owned.size:
            raise ValueError(f"node {node} owns {owned.size} sensors, cannot activate {k_per_node}")
        chosen.append(np.sort(rng.choice(owned, size=k_per_node, replace=False)))
    return ActiveSet(tuple(chosen))


def write_topology_csv(topology: Topology, out) -> None:
    """Sensor layout as ``sensor_id,node_id,x,y`` rows, to a path or an open text stream."""
    own = not hasattr(out, "write")
    fh = open(out, "w", newline="") if own else out
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sensor_id", "node_id", "x", "y"])
        for sid, (pos, node) in enumerate(zip(topology.sensors, topology.sensor_node)):
            w.writerow([sid, int(node), f"{pos[0]:.6g}", f"{pos[1]:.6g}"])
    finally:
        if own:
            fh.close()


@dataclass
class CommLedger:
    """Abstract traffic counters for one run.

    ``fim_matrices`` counts n_x-by-n_x FIM payloads sent node-to-node during
    consensus; ``stat_matrices``/``stat_vectors`` count the posterior
    statistics exchanged for the fusion filter.
    """

    scheme: str = "cq"
    steps: int = 0
    consensus_rounds: int = 0
    sensor_messages: int = 0
    sensor_bits: int = 0
    fim_matrices: int = 0
    stat_matrices: int = 0
    stat_vectors: int = 0

    def record_sensors(self, n_messages: int, bits_each: int) -> None:
        self.sensor_messages += n_messages
        self.sensor_bits += n_messages * bits_each

    def record_fim_consensus(self, rounds: int, directed_edges: int, matrices_per_message: int = 1) -> None:
        self.consensus_rounds += rounds
        self.fim_matrices += matrices_per_message * rounds * directed_edges

    def record_stat_consensus(self, rounds: int, directed_edges: int) -> None:
        self.stat_matrices += rounds * directed_edges
        self.stat_vectors += rounds * directed_edges

    def merge(self, other: "CommLedger") -> None:
        for f in dataclasses.fields(self):
            if f.name != "scheme":
                setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))


def aux_model_ledger(cq: CommLedger, directed_edges: int) -> CommLedger:
    """Traffic the auxiliary-FIM scheme would need over the same consensus rounds.

    That scheme fuses the local FIM and the local auxiliary FIM, i.e. two
    matrices per message instead of one; all other traffic is unchanged.
    """
    aux = dataclasses.replace(cq, scheme="aux")
    aux.fim_matrices = 2 * cq.consensus_rounds * directed_edges
    return aux


def ledger_compare(ledger_cq: CommLedger, ledger_aux: CommLedger) -> float:
    """Node-to-node FIM payload of the auxiliary scheme relative to CQ."""
    if (ledger_cq.steps, ledger_cq.consensus_rounds) != (ledger_aux.steps, ledger_aux.consensus_rounds):
        raise ValueError("ledgers cover different iteration ranges")
    if ledger_cq.fim_matrices == 0:
        raise ValueError("no consensus traffic recorded; payload ratio undefined")
    return ledger_aux.fim_matrices / ledger_cq.fim_matrices
