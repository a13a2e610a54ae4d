"""Room impulse response synthesis and reverberant observation rendering.

RIRs come from the rigid-shoebox image source model with uniform wall
reflection coefficients derived from the target reverberation time through
Sabine's formula. Fractional-sample arrival times are rounded to the nearest
sample; the speed of sound is fixed at 343 m/s.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .errors import ConfigurationError, InvalidInputError

SPEED_OF_SOUND = 343.0

_SCENARIO_KEYS = {
    "name", "room_dims", "source_pos", "mic_positions", "t60", "sample_rate",
    "rir_length",
}


@dataclass
class RoomScenario:
    """Geometry and acoustics of one simulated room.

    Every microphone is its own network node, so len(mic_positions) is the
    node count M.
    """

    room_dims: tuple[float, float, float]
    source_pos: tuple[float, float, float]
    mic_positions: list[tuple[float, float, float]]
    t60: float
    sample_rate: int = 16000
    rir_length: int = 8192
    name: str = "scenario"

    def __post_init__(self):
        self.room_dims = tuple(float(v) for v in self.room_dims)
        self.source_pos = tuple(float(v) for v in self.source_pos)
        self.mic_positions = [tuple(float(v) for v in p) for p in self.mic_positions]
        if len(self.room_dims) != 3 or any(v <= 0 for v in self.room_dims):
            raise ConfigurationError(f"room_dims must be 3 positive lengths, got {self.room_dims}")
        for label, pos in [("source", self.source_pos)] + [
            (f"mic {i}", p) for i, p in enumerate(self.mic_positions)
        ]:
            if len(pos) != 3 or not all(0 < pos[d] < self.room_dims[d] for d in range(3)):
                raise ConfigurationError(
                    f"{label} position {pos} not strictly inside room {self.room_dims}"
                )
        if len(self.mic_positions) < 1:
            raise ConfigurationError("scenario needs at least one microphone")
        if self.t60 <= 0:
            raise ConfigurationError(f"t60 must be positive, got {self.t60}")
        if self.rir_length < self.sample_rate * self.t60 / 2:
            raise ConfigurationError(
                f"rir_length {self.rir_length} too short to capture the decay "
                f"(need >= {self.sample_rate * self.t60 / 2:.0f} samples)"
            )

    @property
    def num_nodes(self) -> int:
        return len(self.mic_positions)

    def subset(self, mic_indices) -> "RoomScenario":
        """Scenario restricted to a subset of microphones."""
        picked = [self.mic_positions[i] for i in mic_indices]
        return RoomScenario(
            room_dims=self.room_dims, source_pos=self.source_pos,
            mic_positions=picked, t60=self.t60, sample_rate=self.sample_rate,
            rir_length=self.rir_length, name=f"{self.name}-{len(picked)}node",
        )


@dataclass
class ImpulseResponse:
    taps: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=np.float64)
        if self.taps.ndim != 1 or self.taps.size == 0:
            raise InvalidInputError("impulse response must be a non-empty 1-D array")
        if not np.all(np.isfinite(self.taps)):
            raise InvalidInputError("impulse response contains non-finite taps")

    def __len__(self) -> int:
        return self.taps.size

    def energy_decays(self) -> bool:
        """True when the trailing 10% of taps carry less energy than the
        leading 10% (the decay property of a physical RIR)."""
        tenth = max(1, self.taps.size // 10)
        head = float(np.sum(self.taps[:tenth] ** 2))
        tail = float(np.sum(self.taps[-tenth:] ** 2))
        return tail < head


def reflection_coefficient(scenario: RoomScenario) -> float:
    """Uniform wall reflection coefficient from Sabine's formula.

    alpha = 0.161 V / (S t60); walls get beta = sqrt(1 - alpha).
    """
    lx, ly, lz = scenario.room_dims
    volume = lx * ly * lz
    surface = 2.0 * (lx * ly + lx * lz + ly * lz)
    alpha = 0.161 * volume / (surface * scenario.t60)
    if alpha > 1.0:
        raise ConfigurationError(
            f"t60={scenario.t60}s unreachable for this room: Sabine absorption "
            f"{alpha:.3f} exceeds 1"
        )
    return float(np.sqrt(1.0 - alpha))


def _image_highpass(taps: np.ndarray, sample_rate: int,
                    cutoff_hz: float = 100.0) -> np.ndarray:
    """Second-order high-pass traditionally applied to image-source RIRs.

    The all-positive image amplitudes otherwise accumulate into a large
    nonphysical response at DC; this is the classic companion filter of the
    image method, implemented as in its original description.
    """
    w = 2.0 * np.pi * cutoff_hz / sample_rate
    r1 = np.exp(-w)
    b1 = 2.0 * r1 * np.cos(w)
    b2 = -r1 * r1
    a1 = -(1.0 + r1)
    out = np.zeros_like(taps)
    y1 = y2 = y0 = 0.0
    for n in range(taps.size):
        x0 = taps[n]
        y0 = b1 * y1 + b2 * y2 + x0
        out[n] = y0 + a1 * y1 + r1 * y2
        y2 = y1
        y1 = y0
    return out


def image_method_rir(scenario: RoomScenario, mic_index: int,
                     highpass: bool = True) -> ImpulseResponse:
    """Image-source RIR between the scenario source and one microphone.

    Deterministic given the scenario: the image lattice is enumerated out to
    the distance the configured RIR length can represent, each image
    contributing beta^order / (4 pi d) at the nearest-sample arrival time.
    The standard 100 Hz image-method high-pass removes the model's
    nonphysical DC build-up (disable with highpass=False).
    """
    if not (0 <= mic_index < scenario.num_nodes):
        raise InvalidInputError(
            f"mic_index {mic_index} out of range for {scenario.num_nodes} mics"
        )
    beta = reflection_coefficient(scenario)
    fs = scenario.sample_rate
    n_taps = scenario.rir_length
    dims = np.asarray(scenario.room_dims)
    src = np.asarray(scenario.source_pos)
    mic = np.asarray(scenario.mic_positions[mic_index])
    max_dist = SPEED_OF_SOUND * n_taps / fs

    # Per-axis image coordinates relative to the mic and their reflection
    # orders, for lattice index m and source parity q in {0, 1}:
    #   coord = (1 - 2q) * src + 2 m L - mic,  order = |m - q| + |m|
    coords = []
    orders = []
    for axis in range(3):
        n_img = int(np.ceil(max_dist / (2.0 * dims[axis])))
        m = np.arange(-n_img, n_img + 1)
        per_axis_coord = []
        per_axis_order = []
        for q in (0, 1):
            per_axis_coord.append((1 - 2 * q) * src[axis] + 2.0 * m * dims[axis] - mic[axis])
            per_axis_order.append(np.abs(m - q) + np.abs(m))
        coords.append(np.concatenate(per_axis_coord))
        orders.append(np.concatenate(per_axis_order))

    cx, cy, cz = coords
    ox, oy, oz = orders
    dist = np.sqrt(
        cx[:, None, None] ** 2 + cy[None, :, None] ** 2 + cz[None, None, :] ** 2
    ).ravel()
    order = (ox[:, None, None] + oy[None, :, None] + oz[None, None, :]).ravel()
    sample = np.rint(dist * fs / SPEED_OF_SOUND).astype(np.int64)
    keep = (sample < n_taps) & (dist > 0)
    gain = beta ** order[keep] / (4.0 * np.pi * dist[keep])
    taps = np.bincount(sample[keep], weights=gain, minlength=n_taps)
    if highpass:
        taps = _image_highpass(taps, fs)
    return ImpulseResponse(taps=taps, sample_rate=fs)


def render_observation(clean: np.ndarray, sample_rate: int,
                       rir: ImpulseResponse) -> np.ndarray:
    """Reverberant observation: linear convolution of the clean signal with
    the RIR, truncated to the clean-signal length for alignment."""
    clean = np.asarray(clean, dtype=np.float64)
    if clean.size == 0:
        raise InvalidInputError("clean signal is empty")
    if sample_rate != rir.sample_rate:
        raise InvalidInputError(
            f"sample-rate mismatch: signal {sample_rate} Hz vs RIR {rir.sample_rate} Hz"
        )
    full = fftconvolve(clean, rir.taps, mode="full")
    return full[: clean.size]


def split_early_late(rir: ImpulseResponse, boundary: int) -> tuple[ImpulseResponse, ImpulseResponse]:
    """Split an RIR at a tap boundary into early and late parts.

    Both parts keep the original length with zeros outside their segment, so
    early.taps + late.taps reproduces the original exactly and convolution
    with each part stays time-aligned.
    """
    if not (0 < boundary < len(rir)):
        raise InvalidInputError(
            f"boundary {boundary} out of range (0, {len(rir)})"
        )
    early = np.zeros_like(rir.taps)
    late = np.zeros_like(rir.taps)
    early[:boundary] = rir.taps[:boundary]
    late[boundary:] = rir.taps[boundary:]
    return (
        ImpulseResponse(taps=early, sample_rate=rir.sample_rate),
        ImpulseResponse(taps=late, sample_rate=rir.sample_rate),
    )


def estimate_t60(rir: ImpulseResponse) -> float:
    """Reverberation time from the Schroeder energy-decay curve.

    Fits the decay between the -5 dB and -25 dB points and extrapolates to
    -60 dB. Intended for reporting and sanity checks, not calibration.
    """
    energy = rir.taps ** 2
    total = energy.sum()
    if total <= 0:
        raise InvalidInputError("cannot estimate T60 of an all-zero RIR")
    edc = np.cumsum(energy[::-1])[::-1] / total
    with np.errstate(divide="ignore"):
        edc_db = 10.0 * np.log10(np.maximum(edc, 1e-300))
    idx_hi = int(np.argmax(edc_db <= -5.0))
    idx_lo = int(np.argmax(edc_db <= -25.0))
    if idx_lo <= idx_hi:
        raise InvalidInputError("RIR too short for a -5..-25 dB decay fit")
    t_hi = idx_hi / rir.sample_rate
    t_lo = idx_lo / rir.sample_rate
    return 3.0 * (t_lo - t_hi)


def scenario_to_file(scenario: RoomScenario, path) -> None:
    payload = {
        "name": scenario.name,
        "room_dims": list(scenario.room_dims),
        "source_pos": list(scenario.source_pos),
        "mic_positions": [list(p) for p in scenario.mic_positions],
        "t60": scenario.t60,
        "sample_rate": scenario.sample_rate,
        "rir_length": scenario.rir_length,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def scenario_from_file(path) -> RoomScenario:
    """Load a scenario from its JSON description; unknown keys are errors."""
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"scenario file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"scenario file {path} must hold a JSON object")
    unknown = set(raw) - _SCENARIO_KEYS
    if unknown:
        raise ConfigurationError(
            f"unknown scenario keys in {path}: {sorted(unknown)}"
        )
    missing = {"room_dims", "source_pos", "mic_positions", "t60"} - set(raw)
    if missing:
        raise ConfigurationError(f"scenario file {path} missing keys: {sorted(missing)}")
    return RoomScenario(
        room_dims=raw["room_dims"],
        source_pos=raw["source_pos"],
        mic_positions=raw["mic_positions"],
        t60=raw["t60"],
        sample_rate=raw.get("sample_rate", 16000),
        rir_length=raw.get("rir_length", 8192),
        name=raw.get("name", Path(path).stem),
    )


def default_simulated_scenario() -> RoomScenario:
    """The shipped 12-node scenario: one talker and four 3-mic linear arrays
    in a 6 x 5 x 3 m room at T60 0.83 s.

    The geometry approximates the dispersed-array layout the pipeline was
    designed around (exact positions are not published); every microphone is
    modeled as its own node. Nodes 0-2 form array 1, 3-5 array 2, 6-8
    array 3, 9-11 array 4.
    """
    arrays = [
        [(0.60, 1.80, 1.40), (0.60, 1.90, 1.40), (0.60, 2.00, 1.40)],
        [(5.40, 2.60, 1.40), (5.40, 2.70, 1.40), (5.40, 2.80, 1.40)],
        [(2.40, 0.60, 1.40), (2.50, 0.60, 1.40), (2.60, 0.60, 1.40)],
        [(3.00, 4.40, 1.40), (3.10, 4.40, 1.40), (3.20, 4.40, 1.40)],
    ]
    return RoomScenario(
        room_dims=(6.0, 5.0, 3.0),
        source_pos=(2.60, 2.40, 1.50),
        mic_positions=[m for arr in arrays for m in arr],
        t60=0.83,
        sample_rate=16000,
        rir_length=8192,
        name="simulated-12node",
    )


# Reporting nodes used by the experiment harness: one per array of the
# default scenario (arrays 1, 2 and 3).
DEFAULT_REPORT_NODES = (0, 3, 6)
