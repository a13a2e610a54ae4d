"""Synthetic speech-like test material.

The repository ships no recorded speech; tests and the default pipeline use a
deterministic surrogate instead: pitch-pulsed, formant-filtered excitation
with syllable-rate energy modulation and pauses. That gives the nonstationary,
spectrally colored temporal structure the dereverberation stack needs without
any dataset dependency.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import butter, lfilter

from .errors import InvalidInputError


def _resonator(freq: float, bandwidth: float, fs: float):
    """Second-order all-pole resonator coefficients."""
    r = np.exp(-np.pi * bandwidth / fs)
    theta = 2.0 * np.pi * freq / fs
    a = [1.0, -2.0 * r * np.cos(theta), r * r]
    return [1.0 - r], a


def speech_like(duration: float, sample_rate: int = 16000, seed: int = 0) -> np.ndarray:
    """Deterministic speech-like signal of the given duration in seconds.

    Built from ~180 ms segments, each either a pause or a voiced burst with
    its own pitch and three formants, cross-faded and peak-normalized to 0.5.
    """
    if duration <= 0:
        raise InvalidInputError(f"duration must be positive, got {duration}")
    rng = np.random.default_rng(seed)
    fs = sample_rate
    total = int(round(duration * fs))
    seg_len = int(0.18 * fs)
    fade = int(0.010 * fs)
    out = np.zeros(total + seg_len)

    pos = 0
    while pos < total:
        n = min(seg_len, total + seg_len - pos)
        is_pause = rng.random() < 0.15
        if not is_pause:
            f0 = rng.uniform(90.0, 220.0)
            # glottal-style pulse train with mild period jitter plus breath noise
            periods = []
            t = 0.0
            while t < n:
                periods.append(int(t))
                t += fs / (f0 * rng.uniform(0.97, 1.03))
            exc = np.zeros(n)
            exc[np.asarray(periods, dtype=int)] = 1.0
            exc += 0.05 * rng.standard_normal(n)
            seg = exc
            for freq, bw in (
                (rng.uniform(300.0, 900.0), rng.uniform(60.0, 110.0)),
                (rng.uniform(900.0, 2200.0), rng.uniform(90.0, 150.0)),
                (rng.uniform(2300.0, 3200.0), rng.uniform(130.0, 220.0)),
            ):
                b, a = _resonator(freq, bw, fs)
                seg = lfilter(b, a, seg)
            # syllabic amplitude arc
            env = rng.uniform(0.4, 1.0) * np.sin(np.pi * (np.arange(n) + 0.5) / n) ** 0.5
            seg = seg * env
            ramp = np.ones(n)
            edge = min(fade, n // 2)
            ramp[:edge] = np.linspace(0.0, 1.0, edge)
            ramp[n - edge:] = np.linspace(1.0, 0.0, edge)
            out[pos : pos + n] += seg * ramp
        pos += n - fade

    out = out[:total]
    # AC coupling, as any recorded speech would have
    b, a = butter(4, 70.0 / (fs / 2.0), btype="highpass")
    out = lfilter(b, a, out)
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= 0.5 / peak
    return out
