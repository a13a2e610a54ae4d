"""Deterministic round-based simulator for a fully-connected node network.

Rounds are synchronous barriers: every sender submits at most one broadcast
per round, delivery hands each node the messages of all other senders ordered
by sender id, and no loss or latency is modeled. The transmission ledger
counts complex scalars, the unit the published transmission figures use.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, ProtocolError, UndefinedLagError

MODES = ("single", "centralized", "distributed")


@dataclass(frozen=True)
class Message:
    """One transmission: a broadcast (recipient None) or point-to-point."""

    sender: int
    round_index: int
    payload: np.ndarray
    recipient: int | None = None

    @property
    def payload_size(self) -> int:
        return int(np.asarray(self.payload).size)


@dataclass
class TransmissionLedger:
    """Running account of everything sent over the simulated network."""

    mode: str
    rows: list[tuple[int, str, int, int, int]] = field(default_factory=list)

    def record(self, round_index: int, sender: int, recipient: int, units: int) -> None:
        self.rows.append((round_index, self.mode, sender, recipient, units))

    @property
    def total_units(self) -> int:
        return sum(r[4] for r in self.rows)

    def units_in_round(self, round_index: int) -> int:
        return sum(r[4] for r in self.rows if r[0] == round_index)

    def rounds_with_traffic(self) -> list[int]:
        return sorted({r[0] for r in self.rows})

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["round", "mode", "from", "to", "units"])
            writer.writerows(self.rows)


def deliver_round(messages: list[Message], num_nodes: int,
                  ledger: TransmissionLedger | None = None) -> dict[int, list[Message]]:
    """Deliver one round of messages to per-node inboxes.

    Each broadcast reaches every other node exactly once; inbox order is by
    sender id regardless of submission order. A sender submitting twice in
    one round is a protocol error.
    """
    seen: set[int] = set()
    for msg in messages:
        if not (0 <= msg.sender < num_nodes):
            raise InvalidInputError(f"sender {msg.sender} out of range")
        if msg.sender in seen:
            raise ProtocolError(
                f"node {msg.sender} submitted twice in round {msg.round_index}"
            )
        seen.add(msg.sender)
    inboxes: dict[int, list[Message]] = {i: [] for i in range(num_nodes)}
    for msg in sorted(messages, key=lambda m: m.sender):
        if msg.recipient is None:
            recipients = [i for i in range(num_nodes) if i != msg.sender]
        else:
            if not (0 <= msg.recipient < num_nodes):
                raise InvalidInputError(f"recipient {msg.recipient} out of range")
            recipients = [msg.recipient]
        for rec in recipients:
            inboxes[rec].append(msg)
            if ledger is not None:
                ledger.record(msg.round_index, msg.sender, rec, msg.payload_size)
    return inboxes


def count_transmissions(mode: str, num_nodes: int, filter_order: int = 1) -> int:
    """Complex scalars moved per frame per frequency bin in each mode.

    Centralized mode ships every non-reference node's length-L delayed
    vector to the reference; distributed mode moves one compressed scalar
    per neighbor; single-channel moves nothing.
    """
    if num_nodes < 1:
        raise InvalidInputError(f"num_nodes must be >= 1, got {num_nodes}")
    if mode == "single":
        return 0
    if mode == "centralized":
        if filter_order < 1:
            raise InvalidInputError(f"filter_order must be >= 1, got {filter_order}")
        return (num_nodes - 1) * filter_order
    if mode == "distributed":
        return num_nodes - 1
    raise InvalidInputError(f"unknown mode {mode!r}; expected one of {MODES}")


def transmission_reduction(num_nodes: int, filter_order: int) -> float:
    """Fractional saving of distributed over centralized transmission."""
    cent = count_transmissions("centralized", num_nodes, filter_order)
    dist = count_transmissions("distributed", num_nodes)
    if cent == 0:
        raise InvalidInputError("no centralized transmission to reduce (M=1)")
    return 1.0 - dist / cent


def gcc_phat_lag(sig_a: np.ndarray, sig_b: np.ndarray, max_lag: int) -> int:
    """Integer lag maximizing the phase-transform cross-correlation.

    Positive lag means sig_b lags sig_a (sig_b looks like sig_a delayed).
    """
    a = np.asarray(sig_a, dtype=np.float64)
    b = np.asarray(sig_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise InvalidInputError("signals must be non-empty")
    if max_lag < 0 or max_lag >= min(a.size, b.size):
        raise InvalidInputError(
            f"max_lag {max_lag} must be in [0, {min(a.size, b.size)})"
        )
    if not np.any(a) or not np.any(b):
        raise UndefinedLagError("lag undefined for an all-zero signal")
    n = a.size + b.size
    spec_a = np.fft.rfft(a, n=n)
    spec_b = np.fft.rfft(b, n=n)
    cross = spec_b * spec_a.conj()
    mag = np.abs(cross)
    guard = 1e-12 * mag.max()
    phat = np.where(mag > guard, cross / np.maximum(mag, guard), 0.0)
    cc = np.fft.irfft(phat, n=n)
    lags = np.concatenate([np.arange(-max_lag, 0), np.arange(0, max_lag + 1)])
    window = np.concatenate([cc[-max_lag:] if max_lag else cc[:0], cc[: max_lag + 1]])
    return int(lags[int(np.argmax(window))])


def synchronize(observations: list[np.ndarray], reference: int,
                max_lag: int | None = None) -> tuple[list[np.ndarray], list[int]]:
    """Align signals to a reference node by their GCC-PHAT lags.

    Each signal is shifted by its measured lag (zero-padded at the displaced
    edge) so that all direct paths line up with the reference.
    """
    if not observations:
        raise InvalidInputError("at least one signal required")
    if not (0 <= reference < len(observations)):
        raise InvalidInputError(f"reference {reference} out of range")
    ref = np.asarray(observations[reference], dtype=np.float64)
    if max_lag is None:
        max_lag = min(2000, ref.size - 1)
    lags: list[int] = []
    for i, sig in enumerate(observations):
        if i == reference:
            lags.append(0)
            continue
        try:
            lags.append(gcc_phat_lag(ref, np.asarray(sig, dtype=np.float64), max_lag))
        except UndefinedLagError as exc:
            raise UndefinedLagError(f"node {i}: {exc}") from exc
    aligned = apply_lags(observations, lags)
    return aligned, lags


def apply_lags(observations: list[np.ndarray], lags: list[int]) -> list[np.ndarray]:
    """Shift each signal left by its lag (right for negative lags)."""
    if len(observations) != len(lags):
        raise InvalidInputError("one lag per signal required")
    out = []
    for sig, lag in zip(observations, lags):
        sig = np.asarray(sig, dtype=np.float64)
        shifted = np.zeros_like(sig)
        if lag >= 0:
            if lag < sig.size:
                shifted[: sig.size - lag] = sig[lag:]
        else:
            if -lag < sig.size:
                shifted[-lag:] = sig[: sig.size + lag]
        out.append(shifted)
    return out
