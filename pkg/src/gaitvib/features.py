"""Spectral features of footstep segments."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

from .dynamics.forces import CONTACT_ORDER, ContactType
from .signal import ConfigurationError, Signal, ValidationError

MIN_SEGMENT = 0.25


@dataclass(frozen=True)
class Spectrum:
    """Single-sided Hann-windowed amplitude spectrum.

    ``amplitude`` has shape ``(n_channels, n_freqs)`` and is scaled so a
    sinusoid of amplitude ``A`` on a bin centre reads ``A``. ``raw`` keeps
    the unscaled ``|FFT|`` values from which :meth:`energy` is computed.
    """

    frequencies: np.ndarray
    amplitude: np.ndarray
    raw: np.ndarray
    n_fft: int
    resolution: float

    def energy(self) -> np.ndarray:
        """Energy of the windowed signal per channel, by Parseval."""
        weight = np.full(self.frequencies.size, 2.0)
        weight[0] = 1.0
        if self.n_fft % 2 == 0:
            weight[-1] = 1.0
        return (weight * self.raw ** 2).sum(axis=-1) / self.n_fft


def power_spectrum(segment: Signal, n_fft: int | None = None) -> Spectrum:
    """Hann-windowed single-sided amplitude spectrum of every channel.

    ``n_fft`` zero-pads the segment (never truncates it); the reported
    resolution is ``sample_rate / n_fft``.
    """
    if segment.duration < MIN_SEGMENT - 0.5 / segment.sample_rate:
        raise ValidationError(
            f"segment of {segment.duration:.3f} s is shorter than {MIN_SEGMENT} s")
    n = segment.n_samples
    n_fft = n if n_fft is None else int(n_fft)
    if n_fft < n:
        raise ConfigurationError("n_fft must be at least the segment length")
    window = np.hanning(n)
    raw = np.abs(np.fft.rfft(segment.data * window, n_fft, axis=-1))
    scale = np.full(raw.shape[-1], 2.0)
    scale[0] = 1.0
    if n_fft % 2 == 0:
        scale[-1] = 1.0
    amplitude = raw * scale / window.sum()
    freqs = np.fft.rfftfreq(n_fft, 1.0 / segment.sample_rate)
    return Spectrum(freqs, amplitude, raw, n_fft, segment.sample_rate / n_fft)


@dataclass(frozen=True)
class FrequencyBasis:
    frequencies: tuple
    half_bandwidth: float = 3.0
    warning: str | None = field(default=None, compare=False)

    def __post_init__(self):
        freqs = tuple(float(f) for f in self.frequencies)
        object.__setattr__(self, "frequencies", freqs)
        if not freqs:
            raise ValidationError("frequency basis is empty")
        if not self.half_bandwidth > 0:
            raise ConfigurationError("features.half_bandwidth must be > 0")
        gaps = np.diff(freqs)
        if np.any(gaps <= 0):
            raise ValidationError("basis frequencies must be strictly increasing")
        if np.any(gaps <= 2 * self.half_bandwidth):
            raise ValidationError("pooling bands of the basis overlap")

    def __len__(self):
        return len(self.frequencies)

    def to_dict(self) -> dict:
        return {"frequencies": list(self.frequencies), "half_bandwidth": self.half_bandwidth}

    @classmethod
    def from_dict(cls, data: dict) -> "FrequencyBasis":
        return cls(tuple(data["frequencies"]), float(data["half_bandwidth"]))


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    event_id: int = -1

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise ValidationError("feature vector contains non-finite values")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


def _as_signal(segment, sample_rate):
    if isinstance(segment, Signal):
        return segment
    if sample_rate is None:
        raise ConfigurationError("sample_rate is required for raw arrays")
    return Signal(sample_rate, np.atleast_2d(np.asarray(segment, dtype=float)))


def mean_spectrum(segments, sample_rate=None, n_fft: int | None = None):
    """Mean channel-averaged amplitude spectrum of segments on one grid."""
    sigs = [_as_signal(s, sample_rate) for s in segments]
    rates = {s.sample_rate for s in sigs}
    if len(rates) != 1:
        raise ValidationError("segments mix sample rates")
    longest = max(s.n_samples for s in sigs)
    n_fft = n_fft or int(2 ** np.ceil(np.log2(max(longest, rates.pop()))))
    acc = None
    for s in sigs:
        spec = power_spectrum(s, n_fft)
        amp = spec.amplitude.mean(axis=0)
        acc = amp if acc is None else acc + amp
    return spec.frequencies, acc / len(sigs)


def spectral_peaks(freqs, amplitude, band=(5.0, 250.0), min_separation: float = 2.0,
                   min_prominence_db: float = 20.0):
    """Local maxima in ``band`` that stand at least ``min_prominence_db`` above
    their surroundings, strongest first."""
    sel = (freqs >= band[0]) & (freqs <= band[1])
    level = 20.0 * np.log10(np.maximum(amplitude, 1e-300))
    floor = level[sel].min() if sel.any() else 0.0
    level = np.where(sel, level, floor)
    step = freqs[1] - freqs[0]
    idx, props = find_peaks(level, distance=max(1, int(np.ceil(min_separation / step))),
                            prominence=min_prominence_db)
    idx = idx[sel[idx]]
    return idx[np.argsort(amplitude[idx], kind="stable")[::-1]]


def _merge_close(freqs, min_separation):
    merged = []
    for f in sorted(freqs):
        if merged and f - merged[-1][-1] < min_separation:
            merged[-1].append(f)
        else:
            merged.append([f])
    return [float(np.mean(group)) for group in merged]


def select_dominant_frequencies(segments_by_type: dict, k_per_type: int = 6,
                                sample_rate=None, band=(5.0, 250.0),
                                min_separation: float = 2.0, half_bandwidth: float = 3.0,
                                min_prominence_db: float = 20.0,
                                min_segments: int = 5) -> FrequencyBasis:
    """Union of the strongest spectral peaks of every contact type.

    Peaks come from the mean spectrum of each type's segments; frequencies
    closer than ``min_separation`` are merged to their mean. When a type
    yields fewer than ``k_per_type`` peaks the basis carries a warning.
    """
    if k_per_type < 1:
        raise ConfigurationError("features.k_per_type must be >= 1")
    if not segments_by_type:
        raise ValidationError("no training segments")
    picked = []
    short = []
    for ctype in sorted(segments_by_type, key=_type_order):
        segs = segments_by_type[ctype]
        if len(segs) < min_segments:
            raise ValidationError(
                f"{_type_name(ctype)}: {len(segs)} segments, need at least {min_segments}")
        freqs, amp = mean_spectrum(segs, sample_rate)
        idx = spectral_peaks(freqs, amp, band, min_separation, min_prominence_db)[:k_per_type]
        if idx.size < k_per_type:
            short.append(f"{_type_name(ctype)} ({idx.size}/{k_per_type})")
        picked.extend(freqs[idx].tolist())
    warning = None
    if short:
        warning = "fewer dominant peaks than requested: " + ", ".join(short)
    if not picked:
        raise ValidationError(warning or "no spectral peaks found")
    freqs = _merge_close(picked, min_separation)
    # pooling bands must not overlap: fold any remaining near pairs together
    freqs = _merge_close(freqs, 2 * half_bandwidth + 1e-9)
    return FrequencyBasis(tuple(freqs), half_bandwidth, warning)


def _type_order(ctype):
    try:
        return (0, CONTACT_ORDER.index(ContactType.parse(ctype)), "")
    except Exception:
        return (1, 0, str(ctype))


def _type_name(ctype):
    return getattr(ctype, "value", str(ctype))


def extract_features(segment, basis: FrequencyBasis, sample_rate=None,
                     event_id: int = -1, concatenate: bool = False) -> FeatureVector:
    """Peak amplitude around each basis frequency, scaled to unit maximum.

    Multi-channel segments are averaged across channels unless
    ``concatenate`` asks for one block per channel.
    """
    sig = _as_signal(segment, sample_rate)
    if len(basis) == 0:
        raise ValidationError("frequency basis is empty")
    if not np.any(sig.data):
        raise ValidationError("segment is all zero: no spectral content")
    n_fft = int(2 ** np.ceil(np.log2(max(sig.n_samples, sig.sample_rate))))
    spec = power_spectrum(sig, n_fft)
    amp = spec.amplitude if concatenate else spec.amplitude.mean(axis=0, keepdims=True)
    blocks = []
    for row in amp:
        vals = []
        for f in basis.frequencies:
            sel = np.abs(spec.frequencies - f) <= basis.half_bandwidth
            vals.append(float(row[sel].max()) if sel.any() else 0.0)
        blocks.extend(vals)
    values = np.asarray(blocks)
    top = values.max()
    if not top > 0:
        raise ValidationError("segment has no energy near the basis frequencies")
    return FeatureVector(values / top, event_id)


def feature_columns(basis: FrequencyBasis, n_channels: int = 1) -> list:
    """Column names; concatenated features get one ``ch<k>_`` block per channel."""
    cols = [f"f_{f:g}" for f in basis.frequencies]
    if n_channels == 1:
        return cols
    return [f"ch{c + 1}_{name}" for c in range(n_channels) for name in cols]


def write_features_csv(rows, basis: FrequencyBasis, path, n_channels: int = 1) -> None:
    """``rows`` are ``(event_index, label, foot, FeatureVector)`` tuples."""
    cols = feature_columns(basis, n_channels)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["event_index", "label", "foot", *cols])
        for event_index, label, foot, vec in rows:
            if len(vec) != len(cols):
                raise ValidationError("feature vector length does not match the basis")
            writer.writerow([event_index, _type_name(label), foot,
                             *(repr(float(v)) for v in vec.values)])
