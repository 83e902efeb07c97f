import struct
import wave

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from distok.audio import (
    LOG_FLOOR,
    AudioBuffer,
    WavFormatError,
    frame_indices,
    hann_window,
    mel_filterbank,
    mel_spectrogram,
    read_wav,
    resample_linear,
    stft_magnitude,
    write_wav,
)

from oracles import log_mel_direct

STEP = 1 / 32768


def _raw_wav(path, pcm, rate=16000, channels=1, width=2):
    with wave.open(str(path), "wb") as f:
        f.setnchannels(channels)
        f.setsampwidth(width)
        f.setframerate(rate)
        f.writeframes(pcm)


def test_read_scales_int16(tmp_path):
    p = tmp_path / "a.wav"
    _raw_wav(p, struct.pack("<2h", 0, 16384))
    buf = read_wav(p)
    assert buf.sample_rate == 16000
    assert buf.samples.tolist() == [0.0, 0.5]


def test_read_empty_data_chunk(tmp_path):
    p = tmp_path / "e.wav"
    _raw_wav(p, b"")
    assert len(read_wav(p)) == 0


def test_stereo_rejected(tmp_path):
    p = tmp_path / "s.wav"
    _raw_wav(p, struct.pack("<4h", 1, 2, 3, 4), channels=2)
    with pytest.raises(WavFormatError, match="unsupported channel count"):
        read_wav(p)


def test_8bit_rejected(tmp_path):
    p = tmp_path / "b.wav"
    _raw_wav(p, bytes([128, 129]), width=1)
    with pytest.raises(WavFormatError, match="16-bit"):
        read_wav(p)


@pytest.mark.parametrize("blob", [b"", b"RIFF", b"RIFF\x10\x00\x00\x00WAVEjunk", b"not a wav file at all"])
def test_malformed_header_rejected(tmp_path, blob):
    p = tmp_path / "m.wav"
    p.write_bytes(blob)
    with pytest.raises(WavFormatError):
        read_wav(p)


def test_roundtrip_small(tmp_path):
    p = tmp_path / "r.wav"
    write_wav(AudioBuffer([0.0, 0.5, -0.25], 16000), p)
    assert np.abs(read_wav(p).samples - [0.0, 0.5, -0.25]).max() <= STEP


def test_write_clamps(tmp_path):
    p = tmp_path / "c.wav"
    write_wav(AudioBuffer([1.5, -3.0], 16000), p)
    out = read_wav(p).samples
    assert abs(out[0] - 1.0) <= STEP and out[1] == -1.0


def test_sine_roundtrip(tmp_path):
    x = 0.9 * np.sin(2 * np.pi * 440 * np.arange(16000) / 16000)
    p = tmp_path / "sine.wav"
    write_wav(AudioBuffer(x, 16000), p)
    assert np.abs(read_wav(p).samples - x).max() <= STEP


@given(arrays(np.float64, st.integers(0, 300), elements=st.floats(-1, 1)))
def test_roundtrip_property(tmp_path_factory, x):
    p = tmp_path_factory.mktemp("w") / "x.wav"
    write_wav(AudioBuffer(x, 8000), p)
    back = read_wav(p)
    assert back.sample_rate == 8000
    assert np.abs(back.samples - x).max(initial=0.0) <= STEP


def test_buffer_rejects_nonfinite_and_bad_rate():
    with pytest.raises(ValueError):
        AudioBuffer([0.0, np.nan], 16000)
    with pytest.raises(ValueError):
        AudioBuffer([0.0], 0)


def test_buffer_is_immutable():
    buf = AudioBuffer(np.zeros(4), 16000)
    with pytest.raises(ValueError):
        buf.samples[0] = 1.0


def test_resample_holds_last_sample():
    out = resample_linear(AudioBuffer([0.0, 1.0], 2), 4)
    assert out.samples.tolist() == [0.0, 0.5, 1.0, 1.0]


def test_resample_same_rate_identity():
    buf = AudioBuffer(np.random.default_rng(0).uniform(-1, 1, 50), 16000)
    assert np.array_equal(resample_linear(buf, 16000).samples, buf.samples)


@given(st.integers(1, 2000), st.sampled_from([8000, 16000, 22050, 44100, 48000]),
       st.sampled_from([8000, 16000, 24000]))
def test_resample_length(n, src, dst):
    out = resample_linear(AudioBuffer(np.zeros(n), src), dst)
    assert len(out) == round(n * dst / src)


def test_resample_keeps_spectral_peak():
    x = np.sin(2 * np.pi * 440 * np.arange(48000) / 48000)
    y = resample_linear(AudioBuffer(x, 48000), 16000)
    mag = stft_magnitude(y, 1024, 256).magnitudes.mean(axis=0)
    assert abs(int(np.argmax(mag)) - 440 * 1024 / 16000) <= 1


def test_frame_count_formula():
    for n, win, hop in [(16000, 1024, 256), (1000, 512, 128), (100, 512, 128), (513, 512, 512)]:
        padded = max(n, win) + 2 * (win // 2)
        assert len(frame_indices(n, win, hop)) == (padded - win) // hop + 1


def test_stft_zero_signal():
    spec = stft_magnitude(np.zeros(2000), 512, 128)
    assert spec.magnitudes.shape[1] == 257
    assert not spec.magnitudes.any()


def test_stft_bin_centred_sine_concentrates():
    n, k = 512, 32
    x = np.sin(2 * np.pi * k * np.arange(8192) / n)
    frames = stft_magnitude(x, n, 128).magnitudes[4:-4]
    power = frames ** 2
    assert (power[:, k - 1:k + 2].sum(axis=1) / power.sum(axis=1)).min() > 0.9
    assert (power[:, k] / power.sum(axis=1)).min() > 0.45  # Hann main lobe spans three bins


def test_stft_parseval(rng):
    x = rng.standard_normal(4096)
    n, hop = 512, 128
    mags = stft_magnitude(x, n, hop).magnitudes
    two_sided = mags[:, 0] ** 2 + mags[:, -1] ** 2 + 2 * (mags[:, 1:-1] ** 2).sum(axis=1)
    frames = np.pad(x, n // 2, mode="reflect")
    starts = np.arange(len(mags)) * hop
    energy = np.array([((frames[s:s + n] * hann_window(n)) ** 2).sum() for s in starts])
    np.testing.assert_allclose(two_sided / n, energy, rtol=1e-6)


def test_stft_one_sample_perturbation_bound(rng):
    x = rng.standard_normal(3000)
    y = x.copy()
    eps = 1e-3
    y[1234] += eps
    d = np.abs(stft_magnitude(x, 256, 64).magnitudes - stft_magnitude(y, 256, 64).magnitudes)
    assert d.max() <= eps * 256


def test_mel_zero_signal_is_floor():
    m = mel_spectrogram(AudioBuffer(np.zeros(4000), 16000), 512, 128, 40).magnitudes
    assert np.allclose(m, np.log(LOG_FLOOR))


@pytest.mark.parametrize("n_fft,n_mels", [(1024, 80), (512, 40), (256, 20), (128, 10)])
def test_filterbank_rows_positive(n_fft, n_mels):
    fb = mel_filterbank(16000, n_fft, n_mels)
    assert (fb >= 0).all()
    assert (fb.sum(axis=1) > 0).all()
    assert (fb @ np.ones(fb.shape[1]) > 0).all()


def test_filterbank_rejects_too_many_bands():
    with pytest.raises(ValueError):
        mel_filterbank(16000, 64, 33)


def test_mel_matches_direct_oracle(rng):
    x = rng.standard_normal(6000)
    ours = mel_spectrogram(AudioBuffer(x, 16000), 512, 128, 40).magnitudes
    np.testing.assert_allclose(ours, log_mel_direct(x, 512, 128, 40, 16000), atol=1e-9)


def test_white_noise_mel_tracks_bandwidth(rng):
    """Flat noise power puts more energy in the wider high-frequency triangles."""
    x = rng.standard_normal(64000)
    m = np.exp(mel_spectrogram(AudioBuffer(x, 16000), 1024, 256, 40).magnitudes).mean(axis=0)
    widths = mel_filterbank(16000, 1024, 40).sum(axis=1)
    assert np.corrcoef(m, widths)[0, 1] > 0.99
