"""Objective dereverberation quality measures and convergence traces.

Cepstral distance and frequency-weighted segmental SNR follow the usual
reverberation-evaluation conventions: 25 ms frames with 10 ms hop, LPC order
12 at 16 kHz, active frames selected by a -40 dB energy threshold relative to
the loudest reference frame. The reference signal is the clean source
convolved with the early part of the RIR.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, UndefinedMetricError

LPC_ORDER = 12
FRAME_SECONDS = 0.025
HOP_SECONDS = 0.010
ACTIVE_THRESHOLD_DB = -40.0
CD_CLAMP = (0.0, 10.0)
FSNR_CLAMP = (-10.0, 35.0)
MEL_BANDS = 23
FSNR_WEIGHT_EXPONENT = 0.2


@dataclass
class MetricReport:
    """Quality metrics for one (node, utterance) pair."""

    cd: float
    fsnr: float

    def __post_init__(self):
        if self.cd < CD_CLAMP[0]:
            raise InvalidInputError(f"cd must be >= 0, got {self.cd}")
        if not (FSNR_CLAMP[0] <= self.fsnr <= FSNR_CLAMP[1]):
            raise InvalidInputError(f"fsnr {self.fsnr} outside clamp {FSNR_CLAMP}")


@dataclass
class ConvergenceTrace:
    """Round-over-round relative change of each node's desired signal."""

    errors: dict[int, list[float]] = field(default_factory=dict)
    rounds: dict[int, list[int]] = field(default_factory=dict)

    def add(self, node: int, round_index: int, value: float) -> None:
        self.errors.setdefault(node, [])
        self.rounds.setdefault(node, [])
        if round_index in self.rounds[node]:
            raise InvalidInputError(
                f"duplicate trace value for node {node}, round {round_index}"
            )
        self.errors[node].append(float(value))
        self.rounds[node].append(int(round_index))

    def per_node(self, node: int) -> np.ndarray:
        return np.asarray(self.errors.get(node, []), dtype=np.float64)

    def nodes(self) -> list[int]:
        return sorted(self.errors)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["node", "round", "error"])
            for node in self.nodes():
                for rnd, err in zip(self.rounds[node], self.errors[node]):
                    writer.writerow([node, rnd, repr(err)])


def convergence_error(current: np.ndarray, previous: np.ndarray) -> float:
    """Relative Frobenius change between consecutive desired estimates."""
    current = np.asarray(current)
    previous = np.asarray(previous)
    if current.shape != previous.shape:
        raise InvalidInputError(
            f"shape mismatch: {current.shape} vs {previous.shape}"
        )
    denom = float(np.linalg.norm(previous))
    if denom == 0.0:
        raise UndefinedMetricError("previous-round estimate has zero norm")
    return float(np.linalg.norm(current - previous)) / denom


def _frame_signal(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    if x.size < frame_len:
        raise UndefinedMetricError(
            f"signal of {x.size} samples shorter than one {frame_len}-sample metric frame"
        )
    n_frames = 1 + (x.size - frame_len) // hop
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx]


def _active_frames(ref_frames: np.ndarray) -> np.ndarray:
    energy = np.sum(ref_frames ** 2, axis=1)
    peak = energy.max()
    if peak <= 0:
        raise UndefinedMetricError("reference is silent; metrics undefined")
    return energy >= peak * 10.0 ** (ACTIVE_THRESHOLD_DB / 10.0)


def _check_pair(reference: np.ndarray, estimate: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if reference.shape != estimate.shape or reference.ndim != 1:
        raise InvalidInputError(
            f"reference/estimate must be equal-length 1-D, got "
            f"{reference.shape} and {estimate.shape}"
        )
    return reference, estimate


def _lpc(frame: np.ndarray, order: int) -> np.ndarray | None:
    """Levinson-Durbin LPC coefficients a[1..order]; None for degenerate frames."""
    r = np.array([np.dot(frame[: frame.size - k], frame[k:]) for k in range(order + 1)])
    if r[0] <= 0:
        return None
    a = np.zeros(order + 1)
    a[0] = 1.0
    err = r[0]
    for i in range(1, order + 1):
        if err <= 0:
            return None
        acc = r[i] + np.dot(a[1:i], r[i - 1 : 0 : -1])
        k = -acc / err
        new = a.copy()
        for j in range(1, i):
            new[j] = a[j] + k * a[i - j]
        new[i] = k
        a = new
        err *= 1.0 - k * k
    return a[1:]


def _lpc_cepstrum(a: np.ndarray, order: int) -> np.ndarray:
    """Cepstrum c[1..order] of the all-pole model with denominator 1 + sum a."""
    c = np.zeros(order + 1)
    for m in range(1, order + 1):
        acc = a[m - 1] if m <= a.size else 0.0
        for j in range(1, m):
            am = a[m - j - 1] if (m - j) <= a.size else 0.0
            acc += (j / m) * c[j] * am
        c[m] = -acc
    return c[1:]


def cepstral_distance(reference: np.ndarray, estimate: np.ndarray,
                      sample_rate: int = 16000) -> float:
    """Mean LPC-cepstrum distance in dB over active frames (lower is better).

    The zeroth cepstral coefficient is excluded, so the measure is invariant
    to a global gain on either signal.
    """
    reference, estimate = _check_pair(reference, estimate)
    frame_len = int(round(FRAME_SECONDS * sample_rate))
    hop = int(round(HOP_SECONDS * sample_rate))
    window = np.hanning(frame_len)
    ref_frames = _frame_signal(reference, frame_len, hop)
    est_frames = _frame_signal(estimate, frame_len, hop)
    active = _active_frames(ref_frames)
    scale = 10.0 / np.log(10.0)
    values = []
    for rf, ef in zip(ref_frames[active], est_frames[active]):
        a_ref = _lpc(rf * window, LPC_ORDER)
        a_est = _lpc(ef * window, LPC_ORDER)
        if a_ref is None or a_est is None:
            continue
        c_ref = _lpc_cepstrum(a_ref, LPC_ORDER)
        c_est = _lpc_cepstrum(a_est, LPC_ORDER)
        dist = scale * np.sqrt(2.0 * np.sum((c_ref - c_est) ** 2))
        values.append(np.clip(dist, *CD_CLAMP))
    if not values:
        raise UndefinedMetricError("no usable active frames for cepstral distance")
    return float(np.mean(values))


def _mel_filterbank(num_bands: int, n_fft: int, sample_rate: int) -> np.ndarray:
    def to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def from_mel(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    edges_mel = np.linspace(to_mel(0.0), to_mel(sample_rate / 2.0), num_bands + 2)
    edges_hz = from_mel(edges_mel)
    bin_freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    bank = np.zeros((num_bands, bin_freqs.size))
    for b in range(num_bands):
        lo, mid, hi = edges_hz[b : b + 3]
        rising = (bin_freqs - lo) / max(mid - lo, 1e-12)
        falling = (hi - bin_freqs) / max(hi - mid, 1e-12)
        bank[b] = np.clip(np.minimum(rising, falling), 0.0, 1.0)
    return bank


def fw_segmental_snr(reference: np.ndarray, estimate: np.ndarray,
                     sample_rate: int = 16000) -> float:
    """Mel-band-weighted segmental SNR in dB over active frames (higher is
    better); each frame clamped to [-10, 35] dB.

    Band weights are the reference band powers raised to 0.2; the error term
    is the band power of the time-domain difference signal.
    """
    reference, estimate = _check_pair(reference, estimate)
    frame_len = int(round(FRAME_SECONDS * sample_rate))
    hop = int(round(HOP_SECONDS * sample_rate))
    n_fft = int(2 ** np.ceil(np.log2(frame_len)))
    window = np.hanning(frame_len)
    bank = _mel_filterbank(MEL_BANDS, n_fft, sample_rate)
    ref_frames = _frame_signal(reference, frame_len, hop)
    err_frames = _frame_signal(reference - estimate, frame_len, hop)
    active = _active_frames(ref_frames)
    values = []
    for rf, ef in zip(ref_frames[active], err_frames[active]):
        ref_power = bank @ (np.abs(np.fft.rfft(rf * window, n=n_fft)) ** 2)
        err_power = bank @ (np.abs(np.fft.rfft(ef * window, n=n_fft)) ** 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            band_snr = 10.0 * np.log10(ref_power / err_power)
        band_snr = np.where(err_power > 0, band_snr, np.inf)
        usable = ref_power > 0
        if not np.any(usable):
            continue
        weights = ref_power[usable] ** FSNR_WEIGHT_EXPONENT
        frame_snr = float(np.sum(weights * band_snr[usable]) / np.sum(weights))
        values.append(float(np.clip(frame_snr, *FSNR_CLAMP)))
    if not values:
        raise UndefinedMetricError("no usable active frames for fw-segmental SNR")
    return float(np.mean(values))
