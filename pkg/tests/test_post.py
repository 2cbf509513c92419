import numpy as np
import pytest
from scipy.signal.windows import hann

from pabeam.beamform import Method
from pabeam.errors import ConfigError, NumericalError
from pabeam.post import (
    BandpassSpec,
    axial_sampling_rate,
    band_response,
    bandpass,
    envelope,
    log_compress,
    process_image,
)


def analytic_by_dft(x):
    """逐项 DFT 构造解析信号：直流和奈奎斯特分量保留，正频率加倍，负频率置零"""
    n = len(x)
    k = np.arange(n)
    basis = np.exp(-2j * np.pi * np.outer(k, k) / n)
    spectrum = basis @ x
    h = np.zeros(n)
    h[0] = 1.0
    if n % 2 == 0:
        h[n // 2] = 1.0
        h[1:n // 2] = 2.0
    else:
        h[1:(n + 1) // 2] = 2.0
    return (np.conj(basis) @ (spectrum * h)) / n


def tone(freq, fs, n):
    t = np.arange(n) / fs
    return hann(n) * np.sin(2 * np.pi * freq * t)


@pytest.mark.parametrize("n", [64, 65])
def test_envelope_matches_direct_analytic_signal(rng, n):
    x = rng.standard_normal(n)
    np.testing.assert_allclose(envelope(x), np.abs(analytic_by_dft(x)), rtol=1e-9, atol=1e-12)


def test_envelope_of_tone_is_flat():
    fs, n = 100e6, 4000
    x = np.cos(2 * np.pi * 10e6 * np.arange(n) / fs)
    env = envelope(x)
    np.testing.assert_allclose(env[500:-500], 1.0, atol=1e-2)


def test_passband_tone_is_preserved():
    fs, n = 100e6, 2048
    spec = BandpassSpec(6e6, 15e6)
    x = tone(10e6, fs, n)
    y = bandpass(x, fs, spec)
    assert np.max(np.abs(y - x)) <= 1e-2 * np.max(np.abs(x))


def test_stopband_tone_is_suppressed():
    fs, n = 100e6, 2048
    spec = BandpassSpec(6e6, 15e6)
    x = tone(30e6, fs, n)
    y = bandpass(x, fs, spec)
    assert np.sqrt(np.mean(y ** 2)) < 1e-3 * np.sqrt(np.mean(x ** 2))


def test_bandpass_works_along_last_axis(rng):
    fs = 100e6
    spec = BandpassSpec(6e6, 15e6)
    lines = rng.standard_normal((3, 128))
    batch = bandpass(lines, fs, spec)
    for i in range(3):
        np.testing.assert_allclose(batch[i], bandpass(lines[i], fs, spec), rtol=1e-12, atol=1e-14)


def test_band_response_is_zero_outside_band():
    freqs = np.linspace(0, 50e6, 501)
    response = band_response(freqs, BandpassSpec(6e6, 15e6))
    assert np.all(response[freqs < 6e6] == 0)
    assert np.all(response[freqs > 15e6] == 0)
    assert response[np.argmin(np.abs(freqs - 10.5e6))] == pytest.approx(1.0)


def test_band_above_nyquist_is_rejected():
    with pytest.raises(ConfigError):
        bandpass(np.zeros(64), 20e6, BandpassSpec(6e6, 15e6))


def test_short_scanline_is_rejected():
    spec = BandpassSpec(6e6, 15e6)
    with pytest.raises(ConfigError):
        bandpass(np.zeros(7), 100e6, spec)
    with pytest.raises(ConfigError):
        envelope(np.zeros(7))


def test_invalid_band_is_rejected():
    with pytest.raises(ConfigError):
        BandpassSpec(15e6, 6e6)
    with pytest.raises(ConfigError):
        BandpassSpec(6e6, 15e6, alpha=1.5)


def test_scaled_band_follows_center_frequency():
    spec = BandpassSpec.scaled(8.5e6)
    assert spec.f_lo == pytest.approx(12.75e6)
    assert spec.f_hi == pytest.approx(31.875e6)
    assert spec.apply_to == {Method.DMAS, Method.EIBMV_DMAS}


def test_log_compress_normalizes_and_clips():
    image = np.array([[1.0, 0.1], [1e-5, 0.0]])
    db = log_compress(image, 60.0)
    assert db.values.max() == 0.0
    assert db.values[0, 1] == pytest.approx(-20.0)
    assert db.values[1, 0] == -60.0
    assert db.values[1, 1] == -60.0
    assert db.dynamic_range == 60.0


def test_log_compress_uses_magnitude():
    db = log_compress(np.array([-2.0, 1.0]), 40.0)
    np.testing.assert_allclose(db.values, [0.0, 20 * np.log10(0.5)])


def test_log_compress_errors():
    with pytest.raises(NumericalError):
        log_compress(np.zeros((4, 4)), 60.0)
    with pytest.raises(ConfigError):
        log_compress(np.ones(4), 0.0)


def test_axial_sampling_rate_is_one_way():
    assert axial_sampling_rate(1540.0 / 50e6, 1540.0) == pytest.approx(50e6)


def test_bandpass_is_applied_only_to_dmas_family(rng):
    fs = 100e6
    spec = BandpassSpec(6e6, 15e6)
    values = rng.standard_normal((4, 256))

    env_das, db_das = process_image(values, Method.DAS, fs, spec, 60.0)
    np.testing.assert_allclose(env_das, envelope(values), rtol=1e-12)

    env_dmas, db_dmas = process_image(values, Method.DMAS, fs, spec, 60.0)
    np.testing.assert_allclose(env_dmas, envelope(bandpass(values, fs, spec)), rtol=1e-12)

    assert db_das.values.max() == 0.0
    assert db_dmas.values.min() >= -60.0


def test_bandpass_is_linear(rng):
    fs = 100e6
    spec = BandpassSpec(6e6, 15e6)
    x, y = rng.standard_normal((2, 300))
    a, b = 2.5, -0.75
    np.testing.assert_allclose(
        bandpass(a * x + b * y, fs, spec),
        a * bandpass(x, fs, spec) + b * bandpass(y, fs, spec),
        rtol=0,
        atol=1e-10,
    )


def test_impulse_response_matches_direct_dft():
    fs, n = 100e6, 64
    spec = BandpassSpec(6e6, 15e6)
    impulse = np.zeros(n)
    impulse[0] = 1.0

    nfft = 2 * n
    half = band_response(np.fft.rfftfreq(nfft, d=1.0 / fs), spec)
    k = np.arange(nfft)
    full = half[np.minimum(k, nfft - k)]
    basis = np.exp(2j * np.pi * np.outer(np.arange(n), k) / nfft)
    expected = (basis @ full).real / nfft

    np.testing.assert_allclose(bandpass(impulse, fs, spec), expected, rtol=1e-9, atol=1e-12)


def test_log_compress_is_monotonic_and_scale_free(rng):
    image = rng.standard_normal((8, 32))
    db = log_compress(image, 80.0).values
    order = np.argsort(np.abs(image), axis=None)
    assert np.all(np.diff(db.ravel()[order]) >= 0)
    np.testing.assert_allclose(log_compress(1e-7 * image, 80.0).values, db, rtol=0, atol=1e-9)
    np.testing.assert_allclose(log_compress(-3.0 * image, 80.0).values, db, rtol=0, atol=1e-9)


def test_envelope_ignores_carrier_phase():
    fs, n = 100e6, 1024
    t = (np.arange(n) - n / 2) / fs
    gauss = np.exp(-((t / 0.3e-6) ** 2))
    carrier = 2 * np.pi * 10e6 * t
    cos_env = envelope(gauss * np.cos(carrier))
    sin_env = envelope(gauss * np.sin(carrier))
    np.testing.assert_allclose(cos_env, sin_env, atol=1e-3)
    np.testing.assert_allclose(cos_env, gauss, atol=1e-3)
