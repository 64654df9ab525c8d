"""Timbral audio features for 0.64 s clip-aligned segments.

Each 30720-sample segment (0.64 s at 48 kHz) is analysed in 28 windows of
2048 samples.  Per window the feature vector holds 20 MFCCs plus spectral
centroid, bandwidth, rolloff, flatness, contrast and time-domain ZCR and
RMS: 27 base channels.  First, second and third order window-axis
derivatives are stacked after the base block, giving a 28 x 108 tensor
(3024 values) per segment.
"""

from __future__ import annotations

import functools
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fftpack import dct

from .errors import AlignmentError, FormatError, ValidationError

SAMPLE_RATE = 48000
SEGMENT_SECONDS = 0.64
SEGMENT_SAMPLES = 30720  # 0.64 s * 48 kHz
WINDOW_SIZE = 2048
WINDOW_COUNT = 28
# 27 hops of 1062 end at 28674; the final window overruns the segment by
# 2 samples, which are zero-padded.
HOP_SIZE = 1062
MEL_FILTERS = 40
MFCC_COEFFICIENTS = 20
BASE_CHANNELS = 27
DERIVATIVE_ORDERS = 3
TOTAL_CHANNELS = BASE_CHANNELS * (1 + DERIVATIVE_ORDERS)  # 108
LOG_EPS = 1e-10

_DESCRIPTOR_NAMES = ("centroid", "bandwidth", "rolloff", "flatness", "contrast", "zcr", "rms")
BASE_CHANNEL_NAMES: tuple[str, ...] = tuple(
    [f"mfcc_{i:02d}" for i in range(MFCC_COEFFICIENTS)] + list(_DESCRIPTOR_NAMES)
)
CHANNEL_NAMES: tuple[str, ...] = BASE_CHANNEL_NAMES + tuple(
    f"d{order}_{name}" for order in (1, 2, 3) for name in BASE_CHANNEL_NAMES
)


@dataclass
class AudioSegment:
    """One clip-aligned stretch of mono audio, zero-padded if short."""

    samples: np.ndarray  # (SEGMENT_SAMPLES,) float
    sample_rate: int
    pad_count: int = 0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1:
            raise ValidationError(f"segment samples must be 1-D, got {self.samples.ndim}-D")


@dataclass
class SpectralFrame:
    """Magnitude spectrum of one analysis window."""

    magnitudes: np.ndarray  # (window_size/2 + 1,) non-negative
    bin_hz: float

    def __post_init__(self):
        self.magnitudes = np.asarray(self.magnitudes, dtype=float)


@dataclass
class SpectralDescriptors:
    centroid: float  # bin units
    bandwidth: float  # bin units
    rolloff: float  # bin units
    flatness: float
    contrast: float
    silent: bool = False


@dataclass
class TimeDescriptors:
    zcr: float  # crossings per window
    rms: float


@dataclass
class FeatureTensor:
    values: np.ndarray  # (WINDOW_COUNT, channels)
    channel_names: tuple[str, ...]

    def flattened(self) -> np.ndarray:
        return self.values.reshape(-1)


def segment_samples(sample_rate: int = SAMPLE_RATE) -> int:
    return round(SEGMENT_SECONDS * sample_rate)


def slice_audio(
    samples: np.ndarray,
    sample_rate: int = SAMPLE_RATE,
    clip_count: int | None = None,
) -> list[AudioSegment]:
    """Cut audio into consecutive 0.64 s segments, one per clip.

    The final segment may be zero-padded by up to one full segment;
    a larger shortfall means the audio does not belong to the video.
    Samples beyond clip_count segments are ignored.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1:
        raise ValidationError(f"audio must be mono 1-D, got shape {samples.shape}")
    seg = segment_samples(sample_rate)
    if clip_count is None:
        clip_count = len(samples) // seg
    if clip_count < 1:
        raise ValidationError(f"clip count must be >= 1, got {clip_count}")
    missing = clip_count * seg - len(samples)
    if missing > seg:
        raise AlignmentError(
            f"audio has {len(samples)} samples but {clip_count} clips need "
            f"{clip_count * seg}; short by {missing} (more than one segment)"
        )
    segments: list[AudioSegment] = []
    for i in range(clip_count):
        chunk = samples[i * seg : (i + 1) * seg]
        pad = seg - len(chunk)
        if pad:
            chunk = np.concatenate([chunk, np.zeros(pad)])
        segments.append(AudioSegment(chunk, sample_rate, pad_count=pad))
    return segments


def window_matrix(segment: AudioSegment) -> np.ndarray:
    """Raw (unwindowed) analysis windows, shape (WINDOW_COUNT, WINDOW_SIZE)."""
    n = len(segment.samples)
    if n != segment_samples(segment.sample_rate):
        raise ValidationError(
            f"segment has {n} samples, expected {segment_samples(segment.sample_rate)}"
        )
    overrun = (WINDOW_COUNT - 1) * HOP_SIZE + WINDOW_SIZE - n
    padded = np.concatenate([segment.samples, np.zeros(max(overrun, 0))])
    rows = [
        padded[w * HOP_SIZE : w * HOP_SIZE + WINDOW_SIZE] for w in range(WINDOW_COUNT)
    ]
    return np.stack(rows)


def stft_windows(segment: AudioSegment) -> list[SpectralFrame]:
    """Hann-windowed magnitude spectra of the 28 analysis windows."""
    raw = window_matrix(segment)
    spectra = np.abs(np.fft.rfft(raw * np.hanning(WINDOW_SIZE), axis=1))
    bin_hz = segment.sample_rate / WINDOW_SIZE
    return [SpectralFrame(row, bin_hz) for row in spectra]


@functools.lru_cache(maxsize=8)
def mel_filterbank(n_filters: int, window_size: int, sample_rate: int) -> np.ndarray:
    """Triangular mel filters from 0 Hz to Nyquist, each normalized to
    unit weight sum.  Shape (n_filters, window_size/2 + 1)."""
    n_bins = window_size // 2 + 1
    nyquist = sample_rate / 2.0
    mel_points = np.linspace(0.0, 2595.0 * np.log10(1.0 + nyquist / 700.0), n_filters + 2)
    hz_points = 700.0 * (10.0 ** (mel_points / 2595.0) - 1.0)
    freqs = np.arange(n_bins) * sample_rate / window_size
    bank = np.zeros((n_filters, n_bins))
    for m in range(n_filters):
        lo, mid, hi = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        rising = (freqs - lo) / (mid - lo)
        falling = (hi - freqs) / (hi - mid)
        weights = np.maximum(0.0, np.minimum(rising, falling))
        total = weights.sum()
        if total > 0:
            bank[m] = weights / total
    return bank


def mfcc(
    frame: SpectralFrame,
    mel_filters: int = MEL_FILTERS,
    coefficients: int = MFCC_COEFFICIENTS,
) -> np.ndarray:
    """Mel-frequency cepstral coefficients of one spectral frame.

    Power spectrum -> triangular mel filter bank -> log (floored at
    LOG_EPS) -> DCT-II (orthonormal) -> first ``coefficients`` values.
    """
    n_bins = len(frame.magnitudes)
    window_size = 2 * (n_bins - 1)
    sample_rate = round(frame.bin_hz * window_size)
    bank = mel_filterbank(mel_filters, window_size, sample_rate)
    energies = bank @ (frame.magnitudes**2)
    log_energies = np.log(np.maximum(energies, LOG_EPS))
    return dct(log_energies, type=2, norm="ortho")[:coefficients]


def spectral_descriptors(frame: SpectralFrame) -> SpectralDescriptors:
    """Centroid, bandwidth, rolloff (bin units), flatness, and contrast.

    A frame with no positive magnitude yields all-zero descriptors and
    is flagged silent.
    """
    a = frame.magnitudes
    total = a.sum()
    if total <= 0:
        return SpectralDescriptors(0.0, 0.0, 0.0, 0.0, 0.0, silent=True)
    bins = np.arange(len(a), dtype=float)
    centroid = float((bins * a).sum() / total)
    bandwidth = float(np.sqrt((a * (bins - centroid) ** 2).sum() / total))
    rolloff = float(np.searchsorted(np.cumsum(a), 0.85 * total))
    floored = np.maximum(a, LOG_EPS)
    log_a = np.log(floored)
    flatness = float(np.exp(log_a.mean()) / floored.mean())
    contrast = float(log_a.max() - log_a.min())
    return SpectralDescriptors(centroid, bandwidth, rolloff, flatness, contrast)


def time_descriptors(window_samples: np.ndarray) -> TimeDescriptors:
    """Zero-crossing count (sign(0) = +1) and root-mean-square energy."""
    x = np.asarray(window_samples, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise ValidationError(f"need >= 2 samples in one window, got shape {x.shape}")
    signs = np.where(x >= 0, 1.0, -1.0)
    zcr = float(0.5 * np.abs(np.diff(signs)).sum())
    rms = float(np.sqrt((x**2).mean()))
    return TimeDescriptors(zcr, rms)


def derivative_stack(base: np.ndarray) -> np.ndarray:
    """Append first, second and third window-axis differences channel-wise.

    Differences use replicated-edge padding, so a constant input yields
    all-zero derivative blocks.
    """
    base = np.asarray(base, dtype=float)
    if base.ndim != 2 or base.shape[0] < 2:
        raise ValidationError(f"need a (W >= 2, C) grid, got shape {base.shape}")
    blocks = [base]
    for _ in range(DERIVATIVE_ORDERS):
        blocks.append(np.diff(blocks[-1], axis=0, prepend=blocks[-1][:1]))
    return np.concatenate(blocks, axis=1)


def extract_features(segment: AudioSegment, pad_channels: int = 0) -> FeatureTensor:
    """Full 28 x 108 timbral feature tensor for one segment.

    ``pad_channels`` appends that many all-zero channels per window for
    consumers expecting a wider layout (e.g. 28 x 109).
    """
    raw = window_matrix(segment)
    frames = stft_windows(segment)
    base = np.zeros((WINDOW_COUNT, BASE_CHANNELS))
    for w, frame in enumerate(frames):
        base[w, :MFCC_COEFFICIENTS] = mfcc(frame)
        spec = spectral_descriptors(frame)
        time = time_descriptors(raw[w])
        base[w, MFCC_COEFFICIENTS:] = (
            spec.centroid,
            spec.bandwidth,
            spec.rolloff,
            spec.flatness,
            spec.contrast,
            time.zcr,
            time.rms,
        )
    values = derivative_stack(base)
    names = CHANNEL_NAMES
    if pad_channels:
        values = np.concatenate([values, np.zeros((WINDOW_COUNT, pad_channels))], axis=1)
        names = names + tuple(f"pad_{i}" for i in range(pad_channels))
    return FeatureTensor(values, names)


def extract_clip_features(
    samples: np.ndarray,
    sample_rate: int = SAMPLE_RATE,
    clip_count: int | None = None,
    pad_channels: int = 0,
) -> np.ndarray:
    """Flattened per-clip feature matrix, shape (clip_count, 28 * channels)."""
    segments = slice_audio(samples, sample_rate, clip_count)
    return np.stack([extract_features(s, pad_channels).flattened() for s in segments])


def read_wav(
    path: str | Path,
    expected_rate: int = SAMPLE_RATE,
    allow_resample: bool = False,
) -> tuple[np.ndarray, int]:
    """Read 16-bit PCM WAV as mono floats in [-1, 1).

    Stereo is downmixed by averaging.  A sample rate other than
    ``expected_rate`` is an error unless ``allow_resample`` permits
    linear resampling.
    """
    try:
        with wave.open(str(path), "rb") as wav:
            n_channels = wav.getnchannels()
            width = wav.getsampwidth()
            rate = wav.getframerate()
            raw = wav.readframes(wav.getnframes())
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: not a readable WAV file ({exc})") from None
    if width != 2:
        raise FormatError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    data = np.frombuffer(raw, dtype="<i2").astype(float) / 32768.0
    if n_channels > 1:
        data = data.reshape(-1, n_channels).mean(axis=1)
    if rate != expected_rate:
        if not allow_resample:
            raise FormatError(
                f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz "
                "(pass allow_resample to convert)"
            )
        duration = len(data) / rate
        n_out = round(duration * expected_rate)
        old_t = np.arange(len(data)) / rate
        new_t = np.arange(n_out) / expected_rate
        data = np.interp(new_t, old_t, data)
        rate = expected_rate
    return data, rate


def write_feature_csv(tensor: FeatureTensor, path: str | Path) -> None:
    """One row per window, one column per channel, for inspection."""
    header = ",".join(tensor.channel_names)
    np.savetxt(path, tensor.values, delimiter=",", header=header, comments="")
