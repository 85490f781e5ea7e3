"""Glue between detection, features and learning for whole recordings."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dynamics.forces import CONTACT_ORDER
from .features import MIN_SEGMENT, FeatureVector, FrequencyBasis, extract_features
from .learning import TrainingSample, duration_contrast
from .pipeline import FootstepEvent, PipelineConfig, denoise, process_recording
from .signal import ConfigurationError, Signal, ValidationError

CHANNEL_MODES = ("nearest", "mean", "concatenate")


def event_segment(signal: Signal, event: FootstepEvent, channels: str = "nearest") -> Signal:
    """The ``[initial contact, foot off]`` stretch of one event.

    Short contacts are extended at the end to the minimum spectral length.
    ``"nearest"`` keeps the channel where the event is strongest.
    """
    if channels not in CHANNEL_MODES:
        raise ConfigurationError(f"features.channels must be one of {CHANNEL_MODES}")
    t0 = event.timing.initial_contact
    t1 = max(event.timing.foot_off, t0 + MIN_SEGMENT)
    seg = signal.slice_time(t0, t1)
    if channels == "nearest":
        seg = seg.channel(event.channel)
    return seg


def event_features(signal: Signal, event: FootstepEvent, basis: FrequencyBasis,
                   channels: str = "nearest") -> FeatureVector:
    seg = event_segment(signal, event, channels)
    return extract_features(seg, basis, event_id=event.event_index,
                            concatenate=channels == "concatenate")


@dataclass(frozen=True)
class RecordingAnalysis:
    clean: Signal
    events: list


def analyze_recording(signal: Signal, config: PipelineConfig = PipelineConfig(),
                      basis: FrequencyBasis | None = None,
                      channels: str = "nearest") -> RecordingAnalysis:
    """Denoise, detect and time footsteps, then attach features if a basis is given.

    Events whose segment has no spectral content keep ``features=None``.
    """
    clean = denoise(signal, config)
    events = process_recording(clean, config, denoised=True)
    if basis is not None:
        out = []
        for ev in events:
            try:
                vec = event_features(clean, ev, basis, channels).values
            except ValidationError:
                vec = None
            out.append(replace(ev, features=vec))
        events = out
    return RecordingAnalysis(clean, events)


def match_labels(events, labels, tolerance: float = 0.1) -> list:
    """Pair detected events with ground-truth labels by initial contact.

    Greedy in time order; returns ``(event, label)`` pairs. Each event and
    each label is used at most once.
    """
    pairs = []
    used = set()
    for lab in labels:
        best, best_err = None, tolerance
        for ev in events:
            if ev.event_index in used:
                continue
            err = abs(ev.timing.initial_contact - lab.t_contact_s)
            if err <= best_err:
                best, best_err = ev, err
        if best is not None:
            used.add(best.event_index)
            pairs.append((best, lab))
    return pairs


def labelled_segments(recordings, config: PipelineConfig = PipelineConfig(),
                      channels: str = "nearest", tolerance: float = 0.1) -> dict:
    """Detected-event segments grouped by their true contact type.

    ``recordings`` yields ``(signal, labels)`` pairs.
    """
    groups = {c: [] for c in CONTACT_ORDER}
    for signal, labels in recordings:
        res = analyze_recording(signal, config)
        for ev, lab in match_labels(res.events, labels, tolerance):
            seg = event_segment(res.clean, ev, channels)
            if channels != "nearest":
                seg = seg.replace_data(seg.data.mean(axis=0, keepdims=True))
            groups[lab.contact_type].append(seg)
    return {c: segs for c, segs in groups.items() if segs}


def training_samples(recordings, basis: FrequencyBasis,
                     config: PipelineConfig = PipelineConfig(),
                     channels: str = "nearest", tolerance: float = 0.1) -> list:
    """One :class:`TrainingSample` per detected, label-matched footstep.

    Durations come from the detector, as they will at inference time.
    """
    samples = []
    for signal, labels in recordings:
        res = analyze_recording(signal, config, basis, channels)
        events = [e for e in res.events if e.features is not None]
        contrast = duration_contrast([e.duration for e in events])
        pos = {e.event_index: k for k, e in enumerate(events)}
        for ev, lab in match_labels(events, labels, tolerance):
            samples.append(TrainingSample(np.asarray(ev.features), ev.duration,
                                          float(contrast[pos[ev.event_index]]),
                                          lab.contact_type, tuple(lab.abnormality_tags)))
    return samples
