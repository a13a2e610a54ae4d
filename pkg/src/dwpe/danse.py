"""Per-node distributed WPE with compressed cross-node data.

Each node predicts its own late reverberation from its local delayed frames
plus one compressed scalar stream per neighbor. The compressor a node
broadcasts is its own local prediction filter, refreshed every collab_period
rounds; between broadcasts neighbors keep using the last received snapshot.
Compression is applied to the same delayed frames the local prediction uses,
so both blocks of the extended observation share one time support.

A single-node network runs exactly the single-channel code path of the wpe
module: same kernels, same operation order, bit-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dsp import Spectrogram
from .errors import InvalidInputError, MissingDataError
from .metrics import ConvergenceTrace, convergence_error
from .netsim import Message, TransmissionLedger, deliver_round
from .wpe import (
    PsdEstimate,
    Stream,
    WpeParams,
    build_delayed_vector,
    normal_equations_all_bins,
    predict_all_bins,
    resolve_psd_floor,
    solve_all_bins,
    update_psd,
)


@dataclass
class NodeState:
    """Everything one node owns: signal, filters, compressor, PSD, inbox."""

    node_id: int
    num_nodes: int
    local_spec: Spectrogram
    params: WpeParams
    local_weights: np.ndarray = field(init=False)
    cross_weights: np.ndarray = field(init=False)
    compressor: np.ndarray = field(init=False)
    psd: PsdEstimate | None = field(init=False, default=None)
    inbox: dict[int, np.ndarray] = field(init=False, default_factory=dict)
    desired: np.ndarray = field(init=False)
    psd_floor: float = field(init=False)

    def __post_init__(self):
        if not (0 <= self.node_id < self.num_nodes):
            raise InvalidInputError(
                f"node_id {self.node_id} out of range for {self.num_nodes} nodes"
            )
        K = self.local_spec.num_bins
        L = self.params.filter_order
        self.local_weights = np.zeros((K, L), dtype=np.complex128)
        self.cross_weights = np.zeros((K, self.num_nodes - 1), dtype=np.complex128)
        self.compressor = np.zeros((K, L), dtype=np.complex128)
        # zero-initialized filters make the first desired estimate the observation
        self.desired = self.local_spec.data.copy()
        self.psd_floor = resolve_psd_floor(self.local_spec.data, self.params.psd_floor)

    @property
    def neighbor_ids(self) -> list[int]:
        return [j for j in range(self.num_nodes) if j != self.node_id]

    def check_inbox(self) -> bool:
        """True when cross-node data is available; raises on a partial inbox."""
        if not self.inbox:
            return False
        missing = [j for j in self.neighbor_ids if j not in self.inbox]
        if missing:
            raise MissingDataError(
                f"node {self.node_id}: no compressed data from neighbor {missing[0]}"
            )
        return True

    def streams(self) -> list[Stream]:
        """Extended observation as kernel streams: local delayed block first,
        then one compressed stream per neighbor in ascending id order."""
        out: list[Stream] = [
            (self.local_spec.data, self.params.filter_order, self.params.delay)
        ]
        if self.check_inbox():
            for j in self.neighbor_ids:
                out.append((self.inbox[j], 1, 0))
        return out


def compress_frame(delayed_vector: np.ndarray, compressor: np.ndarray) -> complex:
    """One compressed scalar: conjugate inner product of compressor and the
    neighbor's delayed observation vector."""
    delayed_vector = np.asarray(delayed_vector)
    compressor = np.asarray(compressor)
    if delayed_vector.shape != compressor.shape:
        raise InvalidInputError(
            f"compressor shape {compressor.shape} does not match vector "
            f"{delayed_vector.shape}"
        )
    return complex(np.vdot(compressor, delayed_vector))


def compress_all_frames(data: np.ndarray, compressor: np.ndarray,
                        params: WpeParams) -> np.ndarray:
    """Compressed scalar stream for every (frame, bin) of one channel.

    data is (N, K); compressor is (K, filter_order). Equivalent to
    compress_frame applied to the delayed vector at each (n, k).
    """
    N, _ = data.shape
    out = np.zeros_like(data)
    for lag in range(params.filter_order):
        shift = params.delay + lag
        if shift < N:
            out[shift:, :] += data[: N - shift, :] * compressor[:, lag].conj()[None, :]
    return out


def assemble_extended(local_vector: np.ndarray, inbox_row: Mapping[int, complex],
                      neighbor_ids: Sequence[int]) -> np.ndarray:
    """Extended observation: local delayed vector stacked over the compressed
    scalars of all neighbors in ascending node-id order."""
    missing = [j for j in neighbor_ids if j not in inbox_row]
    if missing:
        raise MissingDataError(f"no compressed data from neighbor {missing[0]}")
    cross = np.array([inbox_row[j] for j in sorted(neighbor_ids)], dtype=np.complex128)
    return np.concatenate([np.asarray(local_vector, dtype=np.complex128), cross])


def local_predict(node: NodeState, n: int, k: int) -> complex:
    """Desired-signal estimate at one (frame, bin) from the node's own
    reference and its extended observation."""
    local_vec = build_delayed_vector(node.local_spec, n, k, node.params)
    if node.inbox:
        inbox_row = {j: complex(node.inbox[j][n, k]) for j in node.inbox}
        extended = assemble_extended(local_vec, inbox_row, node.neighbor_ids)
        weights = np.concatenate([node.local_weights[k], node.cross_weights[k]])
    else:
        extended = local_vec
        weights = node.local_weights[k]
    return complex(node.local_spec.data[n, k] - np.vdot(weights, extended))


def local_solve(node: NodeState) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form per-bin solve of the node's extended system.

    Dimension filter_order + (M-1) once cross-node data has arrived; before
    the first broadcast the cross block is unidentifiable and only the local
    filter_order-dimensional system is solved (cross weights stay zero).

    With cross-node data the solve is proximally regularized toward the
    node's current weights: (Z + lam I) w = q + lam w_prev. Directions Z
    barely constrains stay where they were instead of wandering with every
    new compressor snapshot, while any fixed point still satisfies Z w = q
    exactly, so the solution is unbiased.
    """
    if node.psd is None:
        raise InvalidInputError("PSD estimate required before solving")
    streams = node.streams()
    Z, q = normal_equations_all_bins(streams, node.local_spec.data, node.psd.values)
    L = node.params.filter_order
    if len(streams) > 1:
        w_prev = np.concatenate([node.local_weights, node.cross_weights], axis=1)
        weights = solve_all_bins(Z, q, node.params.ridge_scale,
                                 prox_scale=node.params.prox_scale, prox_to=w_prev)
    else:
        weights = solve_all_bins(Z, q, node.params.ridge_scale)
    local = weights[:, :L]
    if weights.shape[1] > L:
        cross = weights[:, L:]
    else:
        cross = np.zeros((weights.shape[0], node.num_nodes - 1), dtype=np.complex128)
    return local, cross


def update_compressor(node: NodeState) -> None:
    """The broadcast compressor is the node's current local filter."""
    node.compressor = node.local_weights.copy()


def node_round(node: NodeState, round_index: int,
               collab_period: int) -> np.ndarray | None:
    """One full local round: PSD update, weight solve, desired re-prediction;
    on every collab_period-th round also refresh the compressor and return
    the compressed payload to broadcast.

    Once cross-node data is in play the weight update moves toward the
    solved value with the geometrically decaying step of params.step_size;
    simultaneous exact updates across the network need not settle, while the
    damped update keeps every per-round solve's fixed point unchanged.
    """
    if collab_period < 1:
        raise InvalidInputError(f"collab_period must be >= 1, got {collab_period}")
    node.psd = update_psd(node.desired, node.psd_floor)
    solved_local, solved_cross = local_solve(node)
    streams = node.streams()
    if len(streams) > 1:
        mu = node.params.step_size(round_index)
        node.local_weights = (1.0 - mu) * node.local_weights + mu * solved_local
        node.cross_weights = (1.0 - mu) * node.cross_weights + mu * solved_cross
        weights = np.concatenate([node.local_weights, node.cross_weights], axis=1)
    else:
        node.local_weights, node.cross_weights = solved_local, solved_cross
        weights = node.local_weights
    node.desired = predict_all_bins(node.local_spec.data, streams, weights)
    if round_index % collab_period == 0:
        update_compressor(node)
        return compress_all_frames(node.local_spec.data, node.compressor, node.params)
    return None


@dataclass
class DistributedResult:
    desired: list[Spectrogram]
    trace: ConvergenceTrace
    ledger: TransmissionLedger
    nodes: list[NodeState]
    rounds_run: int
    converged: bool


def run_distributed(observations: list[Spectrogram], params: WpeParams,
                    collab_period: int = 2,
                    max_rounds: int | None = None) -> DistributedResult:
    """Batch distributed dereverberation over a fully-connected network.

    All nodes execute their rounds between synchronization barriers;
    broadcasts submitted in round r are readable from round r+1 on. Stops
    after max_rounds (default params.max_iters) or once every node's desired
    signal changes by less than params.convergence_tol between rounds.
    """
    if not observations:
        raise InvalidInputError("at least one observation channel required")
    shapes = {(s.num_frames, s.num_bins) for s in observations}
    if len(shapes) != 1:
        raise InvalidInputError(f"observation shapes differ: {sorted(shapes)}")
    num_nodes = len(observations)
    rounds = max_rounds if max_rounds is not None else params.max_iters
    nodes = [
        NodeState(node_id=i, num_nodes=num_nodes, local_spec=obs, params=params)
        for i, obs in enumerate(observations)
    ]
    ledger = TransmissionLedger(mode="distributed")
    trace = ConvergenceTrace()
    converged = False
    rounds_run = 0
    for round_index in range(1, rounds + 1):
        previous = [node.desired for node in nodes]
        messages = []
        for node in nodes:
            payload = node_round(node, round_index, collab_period)
            if payload is not None:
                messages.append(
                    Message(sender=node.node_id, round_index=round_index,
                            payload=payload)
                )
        inboxes = deliver_round(messages, num_nodes, ledger)
        for node in nodes:
            for msg in inboxes[node.node_id]:
                node.inbox[msg.sender] = msg.payload
        rounds_run = round_index
        changes = []
        for node, prev in zip(nodes, previous):
            denom = float(np.linalg.norm(prev))
            change = (
                float(np.linalg.norm(node.desired - prev)) / denom
                if denom > 0 else 0.0
            )
            changes.append(change)
            if round_index >= 2:
                trace.add(node.node_id, round_index, change)
        if all(c < params.convergence_tol for c in changes):
            converged = True
            break
    template = observations[0]
    desired = [
        Spectrogram(node.desired, template.sample_rate, template.window)
        for node in nodes
    ]
    return DistributedResult(
        desired=desired, trace=trace, ledger=ledger, nodes=nodes,
        rounds_run=rounds_run, converged=converged,
    )
