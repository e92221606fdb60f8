"""Mono waveform container, WAV I/O, resampling, and SNR-controlled mixing.

SNR here is 20*log10(rms_fg / rms_bg) in dB, with both RMS values taken
over the foreground's active region (frames above -40 dBFS) so silent gaps
between digits do not distort the ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

ACTIVE_FLOOR_DBFS = -40.0
_ACTIVE_FRAME_MS = 10.0


class AudioError(ValueError):
    """Degenerate or unsupported audio input."""


@dataclass
class Waveform:
    samples: np.ndarray  # float32 mono, nominally within [-1, 1]
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1:
            raise AudioError("waveform must be mono (1-D)")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate

    def copy(self) -> "Waveform":
        return Waveform(self.samples.copy(), self.sample_rate)


def read_wav(path: str | Path) -> Waveform:
    path = Path(path)
    if not path.exists():
        raise AudioError(f"audio file not found: {path}")
    rate, data = wavfile.read(path)
    if data.ndim == 2:  # downmix to mono
        data = data.mean(axis=1)
    if data.dtype == np.int16:
        data = data.astype(np.float32) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float32) / 2147483648.0
    elif data.dtype == np.uint8:
        data = (data.astype(np.float32) - 128.0) / 128.0
    elif data.dtype in (np.float32, np.float64):
        data = data.astype(np.float32)
    else:
        raise AudioError(f"unsupported WAV encoding {data.dtype} in {path}")
    return Waveform(data, int(rate))


def write_wav(path: str | Path, wav: Waveform) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(Path(path), wav.sample_rate, wav.samples.astype(np.float32))


def resample(wav: Waveform, target_rate: int) -> Waveform:
    if wav.sample_rate == target_rate:
        return wav
    ratio = Fraction(target_rate, wav.sample_rate)
    out = resample_poly(wav.samples.astype(np.float64), ratio.numerator, ratio.denominator)
    return Waveform(out.astype(np.float32), target_rate)


def peak_normalize(wav: Waveform, peak: float = 0.9) -> Waveform:
    top = float(np.max(np.abs(wav.samples)))
    if top == 0.0:
        return wav.copy()
    return Waveform(wav.samples * (peak / top), wav.sample_rate)


def rms(samples: np.ndarray) -> float:
    if len(samples) == 0:
        return 0.0
    return float(np.sqrt(np.mean(np.square(samples, dtype=np.float64))))


def active_mask(samples: np.ndarray, sample_rate: int) -> np.ndarray:
    """Boolean per-sample mask of frames whose RMS exceeds the active floor."""
    frame = max(1, int(sample_rate * _ACTIVE_FRAME_MS / 1000.0))
    floor = 10.0 ** (ACTIVE_FLOOR_DBFS / 20.0)
    mask = np.zeros(len(samples), dtype=bool)
    for start in range(0, len(samples), frame):
        seg = samples[start : start + frame]
        if rms(seg) > floor:
            mask[start : start + len(seg)] = True
    return mask


def active_rms(samples: np.ndarray, sample_rate: int, mask: np.ndarray | None = None) -> float:
    if mask is None:
        mask = active_mask(samples, sample_rate)
    if not mask.any():
        return 0.0
    return rms(samples[mask])


def measure_snr_db(foreground: Waveform, background: np.ndarray) -> float:
    """SNR of two aligned layers, measured over the foreground's active region."""
    mask = active_mask(foreground.samples, foreground.sample_rate)
    fg = active_rms(foreground.samples, foreground.sample_rate, mask)
    bg = rms(np.asarray(background, dtype=np.float64)[: len(mask)][mask[: len(background)]])
    if fg == 0.0 or bg == 0.0:
        raise AudioError("cannot measure SNR of a silent layer")
    return 20.0 * math.log10(fg / bg)


def background_gain_for_snr(foreground: Waveform, background: Waveform, snr_db: float) -> float:
    """Linear gain for the background so the mix hits the requested SNR."""
    if foreground.sample_rate != background.sample_rate:
        raise AudioError("foreground/background sample rates differ")
    mask = active_mask(foreground.samples, foreground.sample_rate)
    fg_rms = active_rms(foreground.samples, foreground.sample_rate, mask)
    if fg_rms == 0.0:
        raise AudioError("foreground is silent; SNR is undefined")
    bg = _fit_length(background.samples, len(foreground.samples))
    bg_rms = rms(bg[mask])
    if bg_rms == 0.0:
        raise AudioError("background is silent over the foreground's active region")
    return (fg_rms / bg_rms) * 10.0 ** (-snr_db / 20.0)


def _fit_length(samples: np.ndarray, length: int) -> np.ndarray:
    if len(samples) >= length:
        return samples[:length]
    reps = int(np.ceil(length / len(samples)))
    return np.tile(samples, reps)[:length]


def mix_at_snr(foreground: Waveform, background: Waveform, snr_db: float) -> Waveform:
    """Scale the background to the requested SNR and sum, hard-limited to [-1, 1].

    ``snr_db = +inf`` is the no-noise sentinel and returns the foreground
    bit-exact. Backgrounds shorter than the foreground are looped.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return foreground.copy()
    gain = background_gain_for_snr(foreground, background, snr_db)
    bg = _fit_length(background.samples, len(foreground.samples)) * gain
    mixed = np.clip(foreground.samples.astype(np.float64) + bg, -1.0, 1.0)
    return Waveform(mixed.astype(np.float32), foreground.sample_rate)


def concat_with_gaps(
    clips: list[np.ndarray], gap_samples: int, lead_in: int = 0
) -> tuple[np.ndarray, list[int]]:
    """Concatenate clips separated by silence; returns (track, onsets)."""
    onsets = []
    cursor = lead_in
    for clip in clips:
        onsets.append(cursor)
        cursor += len(clip) + gap_samples
    total = cursor - gap_samples if clips else lead_in
    track = np.zeros(max(total, 0), dtype=np.float64)
    for onset, clip in zip(onsets, clips):
        track[onset : onset + len(clip)] += clip
    return track, onsets
