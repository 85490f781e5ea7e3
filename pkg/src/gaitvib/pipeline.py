"""Denoising, wavelet scalograms and footstep event/contact-time detection."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy import signal as sps

from .signal import ConfigurationError, Signal, ValidationError


class EventRejected(ValueError):
    """A detected transient does not look like a footstep.

    ``resume`` is set when later contacts in the same window may still be
    found by searching from that time on.
    """

    def __init__(self, message: str, resume: float | None = None):
        super().__init__(message)
        self.resume = resume


@dataclass(frozen=True)
class PipelineConfig:
    lowpass_cutoff: float = 250.0
    lowpass_order: int = 6
    use_wiener: bool = True
    wiener_frame: float = 0.128
    calibration: tuple = (0.0, 1.0)
    f_min: float = 5.0
    f_max: float = 250.0
    voices_per_octave: int = 12
    morlet_w0: float = 6.0
    threshold_sigma: float = 5.0
    threshold_floor: float = 0.15
    merge_gap: float = 0.15
    pad_before: float = 0.1
    pad_after: float = 1.0
    high_band: float = 80.0
    fundamental_band: tuple = (5.0, 20.0)
    onset_floor: float = 0.1
    onset_hold: float = 0.02
    min_contact: float = 0.15
    ratio_threshold: float = 0.7
    ratio_hold: float = 0.05
    foot_off_reference: str = "contact"
    reference_span: float = 0.3
    fusion_tolerance: float = 0.05

    def __post_init__(self):
        if self.foot_off_reference not in ("contact", "fundamental"):
            raise ConfigurationError(
                "pipeline.foot_off_reference must be 'contact' or 'fundamental'")
        for name in ("threshold_sigma", "merge_gap", "pad_before", "pad_after",
                     "ratio_threshold", "ratio_hold", "reference_span", "fusion_tolerance",
                     "onset_hold", "min_contact"):
            if not getattr(self, name) >= 0:
                raise ConfigurationError(f"pipeline.{name} must be >= 0")
        if not 0 <= self.threshold_floor <= 1 or not 0 <= self.onset_floor <= 1:
            raise ConfigurationError("pipeline threshold floors must lie in [0, 1]")
        lo, hi = self.fundamental_band
        if not 0 < lo < hi:
            raise ConfigurationError("pipeline.fundamental_band must satisfy 0 < lo < hi")


@dataclass(frozen=True)
class Scalogram:
    times: np.ndarray
    frequencies: np.ndarray
    magnitudes: np.ndarray
    channel: int = 0
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def band(self, lo: float, hi: float = np.inf, power: int = 1) -> np.ndarray:
        """Sum of ``magnitude ** power`` over rows with ``lo <= f <= hi``."""
        key = (lo, hi, power)
        if key not in self._cache:
            rows = (self.frequencies >= lo) & (self.frequencies <= hi)
            self._cache[key] = (self.magnitudes[rows] ** power).sum(axis=0)
        return self._cache[key]

    @property
    def aggregate(self) -> np.ndarray:
        return self.band(-np.inf)

    def index_of(self, t: float) -> int:
        dt = self.times[1] - self.times[0] if self.times.size > 1 else 1.0
        k = int(round((t - self.times[0]) / dt))
        return min(max(k, 0), self.times.size - 1)


@dataclass(frozen=True)
class EventWindow:
    start: float
    end: float
    peak_time: float
    channel: int = 0


@dataclass(frozen=True)
class ContactTiming:
    initial_contact: float
    foot_off: float

    @property
    def duration(self) -> float:
        return self.foot_off - self.initial_contact


# -- filters -----------------------------------------------------------------

def lowpass(signal: Signal, cutoff: float, order: int = 6) -> Signal:
    """Zero-phase Butterworth low-pass (forward-backward)."""
    nyq = signal.sample_rate / 2.0
    if not 0 < cutoff < nyq:
        raise ConfigurationError(f"lowpass cutoff {cutoff} Hz must lie in (0, {nyq}) Hz")
    sos = sps.butter(order, cutoff, btype="low", fs=signal.sample_rate, output="sos")
    if signal.n_samples <= 3 * (2 * sos.shape[0] + 1):
        raise ValidationError("signal too short to filter")
    return signal.replace_data(sps.sosfiltfilt(sos, signal.data, axis=1))


def noise_psd(signal: Signal, interval, frame: float = 0.128) -> np.ndarray:
    """Mean short-time power spectrum over a footstep-free interval.

    Returns an array of shape ``(n_channels, n_freqs)`` on the STFT grid
    used by :func:`wiener_denoise`.
    """
    t0, t1 = interval
    if not t1 > t0:
        raise ConfigurationError("noise interval is empty")
    if t1 - t0 < 0.5:
        raise ConfigurationError("noise interval must be at least 0.5 s long")
    seg = signal.slice_time(t0, t1)
    nper = _frame_len(signal, frame)
    if seg.n_samples < nper:
        raise ConfigurationError("noise interval shorter than one STFT frame")
    _, _, Z = sps.stft(seg.data, fs=signal.sample_rate, window="hann", nperseg=nper,
                       noverlap=nper // 2, boundary=None, padded=False, axis=-1)
    return np.mean(np.abs(Z) ** 2, axis=-1)


def _frame_len(signal, frame):
    n = int(round(frame * signal.sample_rate))
    return max(16, n + (n % 2))


def wiener_denoise(signal: Signal, noise_power: np.ndarray, frame: float = 0.128) -> Signal:
    """Short-time Wiener gain ``max(0, 1 - N/X)`` applied frame by frame."""
    noise_power = np.atleast_2d(noise_power)
    if noise_power.size == 0:
        raise ConfigurationError("noise spectrum is empty")
    nper = _frame_len(signal, frame)
    _, _, Z = sps.stft(signal.data, fs=signal.sample_rate, window="hann", nperseg=nper,
                       noverlap=nper // 2, axis=-1)
    if noise_power.shape[-1] != Z.shape[1]:
        raise ConfigurationError("noise spectrum does not match the STFT frame length")
    power = np.abs(Z) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(power > 0, 1.0 - noise_power[:, :, None] / power, 0.0)
    gain = np.clip(gain, 0.0, 1.0)
    _, out = sps.istft(Z * gain, fs=signal.sample_rate, window="hann", nperseg=nper,
                       noverlap=nper // 2, time_axis=-1, freq_axis=-2)
    return signal.replace_data(out[:, :signal.n_samples])


# -- wavelet transform ---------------------------------------------------------

def cwt_frequencies(f_min: float, f_max: float, voices_per_octave: int) -> np.ndarray:
    n = int(np.floor(np.log2(f_max / f_min) * voices_per_octave + 1e-9)) + 1
    return f_min * 2.0 ** (np.arange(n) / voices_per_octave)


def cwt(signal: Signal, f_min: float = 5.0, f_max: float = 250.0,
        voices_per_octave: int = 12, channel: int = 0, w0: float = 6.0) -> Scalogram:
    """Morlet magnitude scalogram of one channel.

    Computed in the frequency domain with an analytic Morlet whose peak
    response at scale ``w0 / (2 pi f)`` is 2, so a sinusoid of amplitude
    ``A`` shows magnitude ``A`` on its own frequency row.
    """
    nyq = signal.sample_rate / 2.0
    if not 0 < f_min < f_max < nyq:
        raise ConfigurationError(f"cwt band must satisfy 0 < f_min < f_max < {nyq} Hz")
    if voices_per_octave < 1:
        raise ConfigurationError("voices_per_octave must be >= 1")
    x = signal.data[channel]
    n = x.size
    freqs = cwt_frequencies(f_min, f_max, voices_per_octave)
    pad = int(np.ceil(4 * w0 / (2 * np.pi * f_min) * signal.sample_rate))
    nfft = int(2 ** np.ceil(np.log2(n + 2 * pad)))
    X = sfft.fft(x, nfft)
    # the analytic wavelet vanishes on negative frequencies
    half = (nfft + 1) // 2
    omega = 2 * np.pi * np.arange(half) * signal.sample_rate / nfft
    scales = w0 / (2 * np.pi * freqs)
    spec = np.zeros((freqs.size, nfft), dtype=complex)
    for row, a in enumerate(scales):
        # the Gaussian is below 1e-16 outside |a*omega - w0| < 8.6
        k = np.flatnonzero(np.abs(a * omega - w0) < 8.6)
        k = k[k > 0]
        spec[row, k] = X[k] * (2.0 * np.exp(-0.5 * (a * omega[k] - w0) ** 2))
    coeffs = sfft.ifft(spec, axis=1, workers=-1)[:, :n]
    return Scalogram(signal.times, freqs, np.abs(coeffs), channel)


# -- detection -----------------------------------------------------------------

def _calibration_stats(curve, times, calibration):
    t0, t1 = calibration
    if t1 - t0 < 0.5:
        raise ConfigurationError("calibration window must be at least 0.5 s long")
    sel = (times >= t0) & (times <= t1)
    if sel.sum() < 2:
        raise ConfigurationError("calibration window holds no samples")
    return float(curve[sel].mean()), float(curve[sel].std())


def _runs(mask):
    edges = np.diff(np.concatenate([[0], mask.astype(np.int8), [0]]))
    return list(zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1) - 1))


def detect_footsteps(scalogram: Scalogram, calibration=(0.0, 1.0),
                     config: PipelineConfig = PipelineConfig()) -> list:
    """Threshold the aggregate wavelet magnitude into event windows.

    The threshold is ``mean + k*std`` of the aggregate over the calibration
    window, but never below ``threshold_floor`` of the way from that mean
    to the curve maximum (which matters for noise-free input). Crossings
    closer than ``merge_gap`` are merged, padded, clipped to the recording,
    and windows that then overlap are merged as well, so one window may hold
    several footsteps when the floor rings between them.
    """
    a = scalogram.aggregate
    times = scalogram.times
    mu, sigma = _calibration_stats(a, times, calibration)
    peak = float(a.max()) if a.size else 0.0
    if peak <= 0.0:
        return []
    thr = max(mu + config.threshold_sigma * sigma, mu + config.threshold_floor * (peak - mu))
    runs = _runs(a > thr)
    merged = []
    for i0, i1 in runs:
        if merged and times[i0] - times[merged[-1][1]] < config.merge_gap:
            merged[-1][1] = i1
        else:
            merged.append([i0, i1])
    spans = []
    for i0, i1 in merged:
        start = max(times[0], times[i0] - config.pad_before)
        end = min(times[-1], times[i1] + config.pad_after)
        if spans and start <= spans[-1][1]:
            spans[-1][1] = end
            spans[-1][3] = i1
        else:
            spans.append([start, end, i0, i1])
    windows = []
    for start, end, i0, i1 in spans:
        ipk = i0 + int(np.argmax(a[i0:i1 + 1]))
        windows.append(EventWindow(float(start), float(end), float(times[ipk]),
                                   scalogram.channel))
    return windows


def _rate(times):
    return 1.0 / (times[1] - times[0])


def _high_threshold(high, times, i0, i1, calibration, config):
    mu, sigma = _calibration_stats(high, times, calibration)
    top = float(high[i0:i1 + 1].max())
    return top, max(mu + config.threshold_sigma * sigma, mu + config.onset_floor * (top - mu))


def detect_contact_times(window: EventWindow, scalogram: Scalogram, calibration=(0.0, 1.0),
                         config: PipelineConfig = PipelineConfig(),
                         after: float | None = None) -> ContactTiming:
    """Initial contact and foot-off inside one event window.

    Initial contact is the first time the high band (``>= high_band``)
    crosses its noise threshold. Foot-off is the first time after the event
    peak that the high-band energy ratio stays below ``ratio_threshold``
    for ``ratio_hold`` seconds.

    With ``foot_off_reference="contact"`` the ratio divides high-band energy
    by its median over the first ``reference_span`` seconds of contact, so
    it measures how much of the forced high-frequency content is left. With
    ``"fundamental"`` the denominator is the fundamental-band energy at the
    same instant.

    ``after`` restricts the search to contacts that begin with an upward
    threshold crossing after that time, which is how a window holding
    several footsteps is walked through.
    """
    times = scalogram.times
    high = scalogram.band(config.high_band)
    i0, i1 = scalogram.index_of(window.start), scalogram.index_of(window.end)
    if i1 <= i0:
        raise EventRejected("empty event window")
    top, thr = _high_threshold(high, times, i0, i1, calibration, config)
    active = high[i0:i1 + 1] > thr
    if after is not None:
        # re-arm only after the high band has been quiet for merge_gap
        k = max(scalogram.index_of(after) - i0, 0)
        need = max(1, int(round(config.merge_gap * _rate(times))))
        rest = [r for r in _runs(~active[k:]) if r[1] - r[0] + 1 >= need]
        if not rest:
            raise EventRejected(f"no further contact after {after:.3f} s")
        active[:k + int(rest[0][1]) + 1] = False
    need = max(1, int(round(config.onset_hold * _rate(times))))
    # activity already present at the first sample is not an observed onset
    starts = [r0 for r0, r1 in _runs(active) if r1 - r0 + 1 >= need and i0 + r0 > 0]
    if top <= 0 or not starts:
        raise EventRejected(f"no high-band activation in window at {window.peak_time:.3f} s")
    ic = i0 + int(starts[0])

    energy = scalogram.band(config.high_band, power=2)
    span = max(1, int(round(config.reference_span * _rate(times))))
    if config.foot_off_reference == "contact":
        ref = np.full(energy.shape, float(np.median(energy[ic:min(ic + span, i1 + 1)])))
    else:
        ref = scalogram.band(*config.fundamental_band, power=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(ref > 0, energy / ref, np.inf)

    # the event peak of this contact: the aggregate maximum early in contact
    agg = scalogram.aggregate
    ipk = ic + int(np.argmax(agg[ic:min(ic + span, i1 + 1)]))
    hold = max(1, int(round(config.ratio_hold * _rate(times))))
    below = ratio[ipk:i1 + 1] < config.ratio_threshold
    fo = None
    for r0, r1 in _runs(below):
        if r1 - r0 + 1 >= hold:
            fo = ipk + int(r0)
            break
    if fo is None:
        raise EventRejected(f"no foot-off found for the contact at {times[ic]:.3f} s",
                            resume=float(times[ic]))
    if times[fo] - times[ic] < config.min_contact:
        raise EventRejected(f"contact at {times[ic]:.3f} s is shorter than min_contact",
                            resume=float(times[fo]))
    return ContactTiming(float(times[ic]), float(times[fo]))


def detect_contacts(window: EventWindow, scalogram: Scalogram, calibration=(0.0, 1.0),
                    config: PipelineConfig = PipelineConfig()) -> list:
    """Every contact inside a window, in time order."""
    found = []
    after = None
    while after is None or after < window.end:
        try:
            timing = detect_contact_times(window, scalogram, calibration, config, after)
        except EventRejected as exc:
            if exc.resume is None:
                break
            after = exc.resume
            continue
        found.append(timing)
        after = timing.foot_off
    return found


# -- whole recordings -----------------------------------------------------------

@dataclass(frozen=True)
class FootstepEvent:
    """One fused footstep: window and timing on its anchor channel.

    ``features``, ``contact_type`` and ``probabilities`` stay empty until the
    event has been through feature extraction and classification.
    """

    event_index: int
    window: EventWindow
    timing: ContactTiming
    channel: int
    amplitude: float
    features: np.ndarray | None = None
    contact_type: object = None
    probabilities: dict = field(default_factory=dict)

    @property
    def duration(self) -> float:
        return self.timing.duration


def denoise(signal: Signal, config: PipelineConfig = PipelineConfig()) -> Signal:
    """Low-pass, then Wiener-filter against the calibration interval."""
    out = signal
    if config.lowpass_cutoff < signal.sample_rate / 2.0:
        out = lowpass(out, config.lowpass_cutoff, config.lowpass_order)
    if config.use_wiener:
        psd = noise_psd(out, config.calibration, config.wiener_frame)
        out = wiener_denoise(out, psd, config.wiener_frame)
    return out


def scalograms(signal: Signal, config: PipelineConfig = PipelineConfig()) -> list:
    return [cwt(signal, config.f_min, config.f_max, config.voices_per_octave, ch,
                config.morlet_w0) for ch in range(signal.n_channels)]


def fuse_events(candidates: list, tolerance: float = 0.05) -> list:
    """Union of per-channel detections by time proximity.

    ``candidates`` holds ``(timing, window)`` pairs from every channel. A
    pair joins the current group when its initial contact lies within
    ``tolerance`` of the group's first member, or when the two contact
    intervals overlap by more than half of the shorter one. A group keeps
    at most one pair per channel. Groups are returned in time order.
    """
    flat = sorted(candidates, key=lambda c: (c[0].initial_contact, c[1].channel))
    groups = []
    for timing, window in flat:
        if groups and all(w.channel != window.channel for _, w in groups[-1]) \
                and _same_step(groups[-1][0][0], timing, tolerance):
            groups[-1].append((timing, window))
        else:
            groups.append([(timing, window)])
    return groups


def _same_step(a: ContactTiming, b: ContactTiming, tolerance: float) -> bool:
    if abs(a.initial_contact - b.initial_contact) <= tolerance:
        return True
    overlap = min(a.foot_off, b.foot_off) - max(a.initial_contact, b.initial_contact)
    return overlap > 0.5 * min(a.duration, b.duration)


def process_recording(signal: Signal, config: PipelineConfig = PipelineConfig(),
                      denoised: bool = False) -> list:
    """Detect and time every footstep in a multi-channel recording.

    Each channel is segmented and timed separately. Detections are fused
    across channels and each fused event keeps the timing from the channel
    where it is strongest.
    """
    clean = signal if denoised else denoise(signal, config)
    grams = scalograms(clean, config)
    candidates = []
    for gram in grams:
        for w in detect_footsteps(gram, config.calibration, config):
            for timing in detect_contacts(w, gram, config.calibration, config):
                candidates.append((timing, w))
    events = []
    for group in fuse_events(candidates, config.fusion_tolerance):
        peaks = [_contact_peak(grams[w.channel], t) for t, w in group]
        k = int(np.argmax(peaks))
        timing, w = group[k]
        events.append(FootstepEvent(len(events), w, timing, w.channel, peaks[k]))
    return events


def _contact_peak(gram: Scalogram, timing: ContactTiming) -> float:
    i0, i1 = gram.index_of(timing.initial_contact), gram.index_of(timing.foot_off)
    return float(gram.aggregate[i0:i1 + 1].max())


EVENT_COLUMNS = ("event_index", "t_contact_s", "t_off_s", "contact_type", "foot",
                 "abnormality_tags")


def write_events_csv(events, path, threshold: float = 0.5) -> None:
    """Events in the label-file schema so predictions diff against ground truth.

    Feet follow the alternating assumption starting with the left; tags are
    the abnormalities whose probability exceeds ``threshold``.
    """
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVENT_COLUMNS)
        for k, ev in enumerate(events):
            ctype = getattr(ev.contact_type, "value", ev.contact_type) or ""
            tags = [name for name, p in ev.probabilities.items() if p > threshold]
            writer.writerow([ev.event_index, repr(ev.timing.initial_contact),
                             repr(ev.timing.foot_off), ctype,
                             "left" if k % 2 == 0 else "right", ";".join(tags)])
