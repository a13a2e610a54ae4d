"""Single-channel and centralized multichannel WPE dereverberation.

Late reverberation at frame n is predicted linearly from delayed frames
n - delay .. n - delay - filter_order + 1 of every channel and subtracted
from a reference channel. The prediction weights minimize the PSD-weighted
squared residual, alternating a closed-form per-bin weight solve with an
update of the desired-signal PSD estimate (floored elementwise).

The batched per-bin kernels here are shared with the distributed module so
that the single-node network degenerates to exactly this code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dsp import Spectrogram
from .errors import InvalidInputError, NumericalError, SolverError

# Frames per accumulation chunk; fixed so operation order (and therefore
# floating-point results) never depends on signal length or caller.
CHUNK_FRAMES = 512

# Relative residual above which a per-bin solve is considered failed.
SOLVE_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class WpeParams:
    """Prediction-filter configuration shared by all dereverberation modes.

    psd_floor=None resolves at run time to a fraction of the mean observed
    power of the reference channel (see resolve_psd_floor). relaxation damps
    the per-round weight update of nodes that use cross-node data; it keeps
    simultaneous network-wide updates from oscillating and does not change
    the fixed point. Single-channel and centralized solves never damp.
    """

    delay: int = 4
    filter_order: int = 26
    psd_floor: float | None = None
    max_iters: int = 6
    convergence_tol: float = 1e-4
    ridge_scale: float = 1e-8
    relaxation: float = 1.0
    relaxation_decay: float = 0.9
    prox_scale: float = 0.03

    def __post_init__(self):
        if self.delay < 1:
            raise InvalidInputError(f"delay must be >= 1 frame, got {self.delay}")
        if self.filter_order < 1:
            raise InvalidInputError(f"filter_order must be >= 1, got {self.filter_order}")
        if self.psd_floor is not None and self.psd_floor <= 0:
            raise InvalidInputError(f"psd_floor must be positive, got {self.psd_floor}")
        if self.max_iters < 1:
            raise InvalidInputError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.ridge_scale < 0:
            raise InvalidInputError(f"ridge_scale must be >= 0, got {self.ridge_scale}")
        if not (0.0 < self.relaxation <= 1.0):
            raise InvalidInputError(f"relaxation must be in (0, 1], got {self.relaxation}")
        if not (0.0 < self.relaxation_decay <= 1.0):
            raise InvalidInputError(
                f"relaxation_decay must be in (0, 1], got {self.relaxation_decay}"
            )
        if self.prox_scale < 0:
            raise InvalidInputError(f"prox_scale must be >= 0, got {self.prox_scale}")

    def step_size(self, round_index: int) -> float:
        """Relaxation applied at the given 1-based round: a geometrically
        decaying step, the standard stabilizer for simultaneous network-wide
        updates."""
        return self.relaxation * self.relaxation_decay ** max(0, round_index - 1)


@dataclass
class PsdEstimate:
    """Desired-signal power estimate, strictly positive via the floor."""

    values: np.ndarray
    floor: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.floor <= 0:
            raise InvalidInputError(f"psd floor must be positive, got {self.floor}")
        if self.values.min(initial=np.inf) < self.floor:
            raise InvalidInputError("PSD estimate has entries below its floor")


# Default PSD floor as a fraction of the mean observed power. Large enough
# that near-silent time-frequency cells get a flat weighting instead of
# dominating the normal equations, which is what makes the alternating
# updates contract at a useful rate.
PSD_FLOOR_FRACTION = 0.05


def resolve_psd_floor(data: np.ndarray, psd_floor: float | None) -> float:
    """Explicit floor if given, else PSD_FLOOR_FRACTION of the mean power.

    An all-zero observation gets an arbitrary positive floor; the pipeline
    then produces all-zero output regardless of its value.
    """
    if psd_floor is not None:
        return float(psd_floor)
    mean_power = float(np.mean(np.abs(data) ** 2))
    return PSD_FLOOR_FRACTION * mean_power if mean_power > 0 else 1.0


def update_psd(desired: np.ndarray, floor: float) -> PsdEstimate:
    """Elementwise max(|desired|^2, floor)."""
    power = np.abs(np.asarray(desired)) ** 2
    return PsdEstimate(values=np.maximum(power, floor), floor=floor)


def build_delayed_vector(spectrogram: Spectrogram, n: int, k: int,
                         params: WpeParams) -> np.ndarray:
    """Delayed observation vector for frame n, bin k (0-based).

    Element i is S(n - delay - i, k); frames before the signal start are zero.
    """
    if not (0 <= n < spectrogram.num_frames):
        raise InvalidInputError(f"frame {n} out of range [0, {spectrogram.num_frames})")
    if not (0 <= k < spectrogram.num_bins):
        raise InvalidInputError(f"bin {k} out of range [0, {spectrogram.num_bins})")
    out = np.zeros(params.filter_order, dtype=np.complex128)
    for i in range(params.filter_order):
        src = n - params.delay - i
        if src >= 0:
            out[i] = spectrogram.data[src, k]
    return out


def predict_desired(ref_frame: complex, stacked: np.ndarray,
                    weights: np.ndarray) -> complex:
    """Desired-signal estimate: reference minus the weighted prediction
    (conjugate inner product)."""
    stacked = np.asarray(stacked)
    weights = np.asarray(weights)
    if stacked.shape != weights.shape:
        raise InvalidInputError(
            f"weights shape {weights.shape} does not match stacked {stacked.shape}"
        )
    return complex(ref_frame - np.vdot(weights, stacked))


def accumulate_normal_equations(stacked: np.ndarray, refs: np.ndarray,
                                sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normal equations of the PSD-weighted least-squares problem for one bin.

    stacked is (N, d) with one delayed observation vector per frame, refs the
    reference frames (N,), sigma the PSD weights (N,). Returns the Hermitian
    accumulation matrix Z = sum_n s_n s_n^H / sigma_n and the correlation
    vector q = sum_n s_n conj(ref_n) / sigma_n.
    """
    stacked = np.asarray(stacked, dtype=np.complex128)
    refs = np.asarray(refs, dtype=np.complex128)
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.min(initial=np.inf) <= 0:
        raise InvalidInputError("sigma entries must be strictly positive")
    with np.errstate(invalid="ignore"):
        weighted = stacked / sigma[:, None]
        Z = weighted.T @ stacked.conj()
        q = weighted.T @ refs.conj()
    if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(q))):
        raise NumericalError("normal-equation accumulation produced non-finite values")
    return Z, q


def solve_weights(Z: np.ndarray, q: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    """Solve (Z + ridge I) w = q for one bin's prediction weights."""
    Z = np.asarray(Z, dtype=np.complex128)
    q = np.asarray(q, dtype=np.complex128)
    if Z.ndim != 2 or Z.shape[0] != Z.shape[1] or q.shape != (Z.shape[0],):
        raise InvalidInputError(f"dimension mismatch: Z {Z.shape}, q {q.shape}")
    if ridge < 0:
        raise InvalidInputError(f"ridge must be >= 0, got {ridge}")
    A = Z + ridge * np.eye(Z.shape[0])
    qn = float(np.linalg.norm(q))
    if qn == 0.0:
        return np.zeros_like(q)
    try:
        w = np.linalg.solve(A, q)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"singular system (condition ~ {np.linalg.cond(A):.3e})") from exc
    residual = float(np.linalg.norm(A @ w - q))
    if not np.all(np.isfinite(w)) or residual > SOLVE_RESIDUAL_TOL * qn:
        raise SolverError(
            f"ill-conditioned system: relative residual {residual / qn:.3e}, "
            f"condition ~ {np.linalg.cond(A):.3e}"
        )
    return w


# ---------------------------------------------------------------------------
# Batched kernels over all bins. A "stream" is (data (N, K), order, delay):
# `order` stacked rows of `data` delayed by delay, delay+1, ... frames. The
# full stacked observation for a bin is the row-major concatenation of all
# streams. Shared by the centralized and distributed paths.
# ---------------------------------------------------------------------------

Stream = tuple[np.ndarray, int, int]


def streams_dim(streams: list[Stream]) -> int:
    return sum(order for _, order, _ in streams)


def stack_chunk(streams: list[Stream], start: int, stop: int) -> np.ndarray:
    """Materialize stacked observation rows for frames [start, stop).

    Returns a bin-major block of shape (K, d, stop-start) ready for the
    batched matrix products.
    """
    n_chunk = stop - start
    K = streams[0][0].shape[1]
    out = np.zeros((K, streams_dim(streams), n_chunk), dtype=np.complex128)
    row = 0
    for data, order, delay in streams:
        for lag in range(order):
            shift = delay + lag
            j0 = max(0, shift - start)
            src_start = start + j0 - shift
            src_stop = stop - shift
            if src_stop > src_start:
                out[:, row, j0 : j0 + (src_stop - src_start)] = data[src_start:src_stop, :].T
            row += 1
    return out


def normal_equations_all_bins(streams: list[Stream], ref_data: np.ndarray,
                              sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-bin normal equations accumulated in fixed-size frame chunks.

    Returns Z of shape (K, d, d) and q of shape (K, d).
    """
    N, K = ref_data.shape
    d = streams_dim(streams)
    Z = np.zeros((K, d, d), dtype=np.complex128)
    q = np.zeros((K, d), dtype=np.complex128)
    for start in range(0, N, CHUNK_FRAMES):
        stop = min(start + CHUNK_FRAMES, N)
        X = stack_chunk(streams, start, stop)       # (K, d, n)
        inv_sigma = (1.0 / sigma[start:stop, :]).T  # (K, n)
        Xw = X * inv_sigma[:, None, :]
        Z += Xw @ X.conj().transpose(0, 2, 1)
        q += (Xw @ ref_data[start:stop, :].conj().T[:, :, None])[..., 0]
    if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(q))):
        raise NumericalError("normal-equation accumulation produced non-finite values")
    return Z, q


def solve_all_bins(Z: np.ndarray, q: np.ndarray, ridge_scale: float,
                   prox_scale: float = 0.0,
                   prox_to: np.ndarray | None = None) -> np.ndarray:
    """Solve every bin's system with per-bin ridge ridge_scale*trace(Z)/d.

    With prox_scale > 0 the solve is proximally regularized toward prox_to:
    (Z + (ridge + lam) I) w = q + lam prox_to with lam = prox_scale*trace/d.
    Bins whose accumulation is identically zero (silent bins) get zero
    weights. Returns weights of shape (K, d).
    """
    K, d, _ = Z.shape
    weights = np.zeros((K, d), dtype=np.complex128)
    trace = np.real(np.einsum("kii->k", Z))
    live = trace > 0
    if not np.any(live):
        return weights
    ridge = ridge_scale * trace[live] / d
    rhs = q[live]
    if prox_scale > 0.0 and prox_to is not None:
        lam = prox_scale * trace[live] / d
        ridge = ridge + lam
        rhs = rhs + lam[:, None] * prox_to[live]
    A = Z[live] + ridge[:, None, None] * np.eye(d)[None, :, :]
    try:
        w = np.linalg.solve(A, rhs[:, :, None])[..., 0]
    except np.linalg.LinAlgError as exc:
        conds = np.linalg.cond(A)
        worst = int(np.argmax(conds))
        raise SolverError(
            f"singular system at bin {np.flatnonzero(live)[worst]} "
            f"(condition ~ {conds[worst]:.3e})"
        ) from exc
    residual = np.linalg.norm((A @ w[:, :, None])[..., 0] - rhs, axis=1)
    qn = np.linalg.norm(rhs, axis=1)
    bad = ~np.isfinite(w).all(axis=1) | (residual > SOLVE_RESIDUAL_TOL * np.maximum(qn, 1e-300))
    if np.any(bad):
        first = int(np.flatnonzero(live)[np.argmax(bad)])
        raise SolverError(
            f"ill-conditioned solve at bin {first}: relative residual "
            f"{float((residual / np.maximum(qn, 1e-300))[np.argmax(bad)]):.3e}"
        )
    weights[live] = w
    return weights


def predict_all_bins(ref_data: np.ndarray, streams: list[Stream],
                     weights: np.ndarray) -> np.ndarray:
    """Desired-signal estimate for all frames and bins.

    weights is (K, d) in the stream row order of `stack_chunk`.
    """
    N, _ = ref_data.shape
    late = np.zeros_like(ref_data)
    row = 0
    for data, order, delay in streams:
        for lag in range(order):
            shift = delay + lag
            w_row = weights[:, row].conj()[None, :]
            if shift < N:
                late[shift:, :] += data[: N - shift, :] * w_row
            row += 1
    return ref_data - late


def weighted_cost(desired: np.ndarray, sigma: np.ndarray) -> float:
    """Maximum-likelihood cost: sum |desired|^2/sigma + log(pi sigma)."""
    return float(np.sum(np.abs(desired) ** 2 / sigma + np.log(np.pi * sigma)))


@dataclass
class WpeTrace:
    """Per-iteration diagnostics of a dereverberation run."""

    relative_change: list[float] = field(default_factory=list)
    cost: list[float] = field(default_factory=list)
    weight_norm: list[float] = field(default_factory=list)
    min_sigma: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


@dataclass
class WpeResult:
    desired: Spectrogram
    trace: WpeTrace
    weights: np.ndarray  # (K, M*filter_order)
    psd_floor: float


def run_wpe(observations: list[Spectrogram], ref_channel: int,
            params: WpeParams) -> WpeResult:
    """Batch WPE over M observation channels.

    Alternates the PSD update with the per-bin closed-form weight solve and
    the desired-signal re-prediction until the desired spectrogram changes by
    less than convergence_tol (relative Frobenius) or max_iters is reached.
    M = 1 is the single-channel variant.
    """
    if not observations:
        raise InvalidInputError("at least one observation channel required")
    shapes = {(s.num_frames, s.num_bins) for s in observations}
    if len(shapes) != 1:
        raise InvalidInputError(f"observation shapes differ: {sorted(shapes)}")
    if not (0 <= ref_channel < len(observations)):
        raise InvalidInputError(
            f"ref_channel {ref_channel} out of range for {len(observations)} channels"
        )
    ref = observations[ref_channel]
    streams: list[Stream] = [
        (obs.data, params.filter_order, params.delay) for obs in observations
    ]
    eps = resolve_psd_floor(ref.data, params.psd_floor)
    desired = ref.data.copy()
    trace = WpeTrace()
    weights = np.zeros((ref.num_bins, streams_dim(streams)), dtype=np.complex128)
    ref_norm = float(np.linalg.norm(ref.data))
    for _ in range(params.max_iters):
        psd = update_psd(desired, eps)
        Z, q = normal_equations_all_bins(streams, ref.data, psd.values)
        weights = solve_all_bins(Z, q, params.ridge_scale)
        new_desired = predict_all_bins(ref.data, streams, weights)
        prev_norm = float(np.linalg.norm(desired))
        change = (
            float(np.linalg.norm(new_desired - desired)) / prev_norm
            if prev_norm > 0 else 0.0
        )
        desired = new_desired
        trace.iterations += 1
        trace.relative_change.append(change)
        trace.cost.append(weighted_cost(desired, psd.values))
        trace.weight_norm.append(float(np.linalg.norm(weights)))
        trace.min_sigma.append(float(psd.values.min()))
        if change < params.convergence_tol:
            trace.converged = True
            break
        if ref_norm == 0.0:
            trace.converged = True
            break
    return WpeResult(
        desired=Spectrogram(desired, ref.sample_rate, ref.window),
        trace=trace,
        weights=weights,
        psd_floor=eps,
    )
