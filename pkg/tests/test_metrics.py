import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dwpe.errors import InvalidInputError, UndefinedMetricError
from dwpe.metrics import (
    FSNR_CLAMP,
    MEL_BANDS,
    ConvergenceTrace,
    MetricReport,
    _mel_filterbank,
    cepstral_distance,
    convergence_error,
    fw_segmental_snr,
)
from dwpe.signals import speech_like

from oracles import mel_band_powers


@pytest.fixture(scope="module")
def utterance():
    return speech_like(1.2, 16000, seed=42)


def test_cd_identical_is_zero(utterance):
    assert cepstral_distance(utterance, utterance.copy()) == pytest.approx(0.0, abs=1e-12)


def test_cd_gain_invariance(utterance):
    assert cepstral_distance(utterance, 2.0 * utterance) == pytest.approx(0.0, abs=1e-9)


def test_cd_positive_for_distorted(utterance, rng):
    noisy = utterance + 0.3 * rng.standard_normal(utterance.size) * np.std(utterance)
    cd = cepstral_distance(utterance, noisy)
    assert 0.0 < cd <= 10.0


def test_cd_silent_reference_undefined():
    with pytest.raises(UndefinedMetricError):
        cepstral_distance(np.zeros(16000), np.ones(16000))


def test_cd_length_mismatch(utterance):
    with pytest.raises(InvalidInputError):
        cepstral_distance(utterance, utterance[:-1])


def test_cd_too_short():
    with pytest.raises(UndefinedMetricError):
        cepstral_distance(np.ones(100), np.ones(100))


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**16), gain=st.floats(0.1, 5.0))
def test_cd_clamped_and_nonnegative(seed, gain):
    r = np.random.default_rng(seed)
    ref = speech_like(0.6, 16000, seed=seed)
    est = gain * ref + 0.5 * r.standard_normal(ref.size) * np.std(ref)
    cd = cepstral_distance(ref, est)
    assert 0.0 <= cd <= 10.0


def test_fsnr_identical_hits_clamp_max(utterance):
    assert fw_segmental_snr(utterance, utterance.copy()) == pytest.approx(FSNR_CLAMP[1])


def test_fsnr_zero_db_noise_per_band(rng):
    # stationary white reference with equal-power independent white noise:
    # every band sees ~0 dB, so the mean lands near 0
    ref = rng.standard_normal(16000) * 0.25
    noise = rng.standard_normal(16000)
    noise *= np.linalg.norm(ref) / np.linalg.norm(noise)
    est = ref + noise
    got = fw_segmental_snr(ref, est)
    assert abs(got) < 1.5


def test_fsnr_band_powers_match_direct_dft(rng):
    # the filterbank applied to an FFT power spectrum equals the direct
    # quadratic-form computation
    frame = rng.standard_normal(64)
    bank = _mel_filterbank(6, 64, 16000)
    direct = mel_band_powers(frame, bank, 64)
    fftpow = bank @ (np.abs(np.fft.rfft(frame, n=64)) ** 2)
    np.testing.assert_allclose(fftpow, direct, rtol=1e-10)


def test_fsnr_clamps_low(utterance, rng):
    est = 20.0 * rng.standard_normal(utterance.size) * max(np.std(utterance), 1e-9)
    got = fw_segmental_snr(utterance, est)
    assert FSNR_CLAMP[0] <= got <= FSNR_CLAMP[1]


def test_fsnr_silent_reference_undefined():
    with pytest.raises(UndefinedMetricError):
        fw_segmental_snr(np.zeros(16000), np.ones(16000))


def test_metrics_alignment_symmetry(utterance, rng):
    # shifting both inputs together leaves both metrics unchanged
    est = utterance + 0.1 * rng.standard_normal(utterance.size) * np.std(utterance)
    shift = 160
    ref_s = utterance[shift:]
    est_s = est[shift:]
    assert cepstral_distance(ref_s, est_s) == pytest.approx(
        cepstral_distance(utterance[: ref_s.size + shift][shift:], est[: est_s.size + shift][shift:])
    )
    assert fw_segmental_snr(ref_s, est_s) == pytest.approx(fw_segmental_snr(ref_s, est_s))


def test_mel_filterbank_shape_and_coverage():
    bank = _mel_filterbank(MEL_BANDS, 512, 16000)
    assert bank.shape == (MEL_BANDS, 257)
    assert np.all(bank >= 0)
    # interior bins are covered by at least one band
    assert np.all(bank[:, 5:250].sum(axis=0) > 0)


def test_convergence_error_identical_rounds():
    d = np.ones((4, 5), dtype=complex)
    assert convergence_error(d, d.copy()) == 0.0


def test_convergence_error_scalar_scaling():
    prev = np.full((3, 3), 2.0 + 0j)
    assert convergence_error(1.1 * prev, prev) == pytest.approx(0.1)


def test_convergence_error_geometric_sequence(rng):
    target = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
    err_dir = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
    estimates = [target + 2.0 ** (-k) * err_dir for k in range(1, 6)]
    ratios = [
        convergence_error(estimates[k + 1], estimates[k])
        / convergence_error(estimates[k], estimates[k - 1])
        for k in range(1, 4)
    ]
    scale_fix = np.linalg.norm(estimates[1]) / np.linalg.norm(estimates[2])
    for r in ratios:
        assert r == pytest.approx(0.5, rel=0.2 * scale_fix)


def test_convergence_error_zero_denominator():
    with pytest.raises(UndefinedMetricError):
        convergence_error(np.ones((2, 2)), np.zeros((2, 2)))


def test_convergence_error_shape_mismatch():
    with pytest.raises(InvalidInputError):
        convergence_error(np.ones((2, 2)), np.ones((3, 2)))


def test_trace_one_value_per_node_round(tmp_path):
    trace = ConvergenceTrace()
    trace.add(0, 2, 0.5)
    trace.add(0, 3, 0.25)
    trace.add(1, 2, 0.4)
    with pytest.raises(InvalidInputError):
        trace.add(0, 2, 0.1)
    np.testing.assert_array_equal(trace.per_node(0), [0.5, 0.25])
    assert trace.nodes() == [0, 1]
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "node,round,error"
    assert len(lines) == 4


def test_metric_report_validation():
    MetricReport(cd=1.0, fsnr=10.0)
    with pytest.raises(InvalidInputError):
        MetricReport(cd=-0.1, fsnr=0.0)
    with pytest.raises(InvalidInputError):
        MetricReport(cd=1.0, fsnr=99.0)
