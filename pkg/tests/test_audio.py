"""SNR mixing math checked against closed-form gains and re-measurement."""

import math

import numpy as np
import pytest

from audiottc.audio import (
    AudioError,
    Waveform,
    active_rms,
    background_gain_for_snr,
    concat_with_gaps,
    measure_snr_db,
    mix_at_snr,
    peak_normalize,
    read_wav,
    resample,
    rms,
    write_wav,
)

RATE = 8000


def tone(freq=440.0, seconds=0.5, amp=0.5, rate=RATE):
    t = np.arange(int(rate * seconds)) / rate
    return Waveform((amp * np.sin(2 * np.pi * freq * t)).astype(np.float32), rate)


def noise(seconds=1.0, amp=0.3, rate=RATE, seed=0):
    rng = np.random.default_rng(seed)
    return Waveform((amp * rng.standard_normal(int(rate * seconds))).astype(np.float32), rate)


def test_infinite_snr_returns_foreground_bit_exact():
    fg, bg = tone(), noise()
    out = mix_at_snr(fg, bg, math.inf)
    assert np.array_equal(out.samples, fg.samples)


def test_zero_snr_equal_rms_layers():
    fg, bg = tone(amp=0.4), noise(amp=0.4)
    gain = background_gain_for_snr(fg, bg, 0.0)
    scaled = bg.samples[: len(fg.samples)] * gain
    assert abs(measure_snr_db(fg, scaled)) < 0.1


@pytest.mark.parametrize("snr_db", [-5.0, 0.0, 5.0, 10.0])
def test_measured_snr_matches_request(snr_db):
    fg, bg = tone(amp=0.5), noise(amp=0.2, seed=3)
    gain = background_gain_for_snr(fg, bg, snr_db)
    scaled = bg.samples[: len(fg.samples)] * gain
    assert measure_snr_db(fg, scaled) == pytest.approx(snr_db, abs=0.1)


def test_closed_form_gain_at_10db():
    # gain must equal fg_rms/bg_rms * 10^(-10/20) over the active region
    fg, bg = tone(amp=0.6), noise(amp=0.25, seed=5)
    from audiottc.audio import active_mask

    mask = active_mask(fg.samples, fg.sample_rate)
    fg_rms = active_rms(fg.samples, fg.sample_rate, mask)
    bg_rms = rms(bg.samples[: len(fg.samples)][mask])
    expected = fg_rms / bg_rms * 10 ** (-10 / 20)
    assert background_gain_for_snr(fg, bg, 10.0) == pytest.approx(expected, rel=1e-9)


def test_silent_foreground_rejected():
    silent = Waveform(np.zeros(RATE, dtype=np.float32), RATE)
    with pytest.raises(AudioError):
        mix_at_snr(silent, noise(), 0.0)


def test_short_background_is_looped():
    fg = tone(seconds=1.0)
    short = noise(seconds=0.2, seed=9)
    out = mix_at_snr(fg, short, 5.0)
    assert len(out.samples) == len(fg.samples)


def test_mix_is_hard_limited():
    fg = tone(amp=0.98)
    loud = noise(amp=0.9, seed=2)
    out = mix_at_snr(fg, loud, -20.0)
    assert np.max(np.abs(out.samples)) <= 1.0


def test_active_region_ignores_gaps():
    # a tone with long silence: active RMS should be near the tone-only RMS
    burst = tone(seconds=0.2, amp=0.5)
    padded = Waveform(
        np.concatenate([np.zeros(RATE), burst.samples, np.zeros(RATE)]).astype(np.float32), RATE
    )
    full = rms(padded.samples)
    active = active_rms(padded.samples, RATE)
    assert active > 2 * full
    assert active == pytest.approx(rms(burst.samples), rel=0.05)


def test_wav_round_trip(tmp_path):
    wav = tone(freq=301.0)
    path = tmp_path / "t.wav"
    write_wav(path, wav)
    back = read_wav(path)
    assert back.sample_rate == RATE
    assert np.allclose(back.samples, wav.samples, atol=1e-6)


def test_read_missing_wav(tmp_path):
    with pytest.raises(AudioError, match="nope.wav"):
        read_wav(tmp_path / "nope.wav")


def test_resample_halves_length():
    wav = tone(seconds=1.0)
    down = resample(wav, RATE // 2)
    assert down.sample_rate == RATE // 2
    assert abs(len(down.samples) - len(wav.samples) // 2) <= 1


def test_peak_normalize():
    wav = tone(amp=0.1)
    out = peak_normalize(wav, peak=0.9)
    assert np.max(np.abs(out.samples)) == pytest.approx(0.9, rel=1e-5)


def test_concat_with_gaps_onsets():
    a = np.ones(100)
    b = np.ones(50)
    track, onsets = concat_with_gaps([a, b], gap_samples=30)
    assert onsets == [0, 130]
    assert len(track) == 180
    assert track[129] == 0.0 and track[130] == 1.0
