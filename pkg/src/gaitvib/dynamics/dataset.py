"""Synthetic walks: superposed footsteps, ground-truth labels, label CSV."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..signal import Signal, Units, ValidationError
from .beam import BeamModel
from .forces import (GRAVITY, ContactForceProfile, ContactType, _ripple,
                     load_shape, template_params)
from .simulate import simulate_response

ABNORMALITIES = ("midfoot_strike", "toe_walking", "dragging", "asymmetry")
FEET = ("left", "right")


@dataclass(frozen=True)
class GaitSequenceSpec:
    """Recipe for one synthetic walk across the beam.

    Steps alternate feet starting with the left. Durations of ``None`` use
    the template default for the foot's contact type. ``noise_snr_db`` of
    ``None`` gives a clean recording.

    A dragging foot keeps a light load (``drag_level`` of body weight) for
    ``drag_duration`` seconds after the normal contact; its force ripple
    continues through the drag at ``drag_variation`` times the contact's
    ripple amplitude.
    """

    step_count: int = 10
    cadence: float = 0.5
    left_type: ContactType = ContactType.Heel
    right_type: ContactType = ContactType.Heel
    left_duration: float | None = None
    right_duration: float | None = None
    left_dragging: bool = False
    right_dragging: bool = False
    noise_snr_db: float | None = None
    random_seed: int = 0
    body_weight: float = 700.0
    start_position: float = 0.9
    step_length: float = 0.6
    path: str = "pacing"
    lead_in: float = 1.5
    tail: float = 2.0
    sample_rate: float = 1000.0
    velocity: bool = True
    duration_jitter: float = 0.0
    peak_jitter: float = 0.0
    drag_duration: float = 0.3
    drag_level: float = 0.1
    drag_variation: float = 1.0
    asymmetry_threshold: float = 0.15
    template_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.step_count) != self.step_count or self.step_count < 1:
            raise ValidationError("gait.step_count must be >= 1")
        if not self.cadence > 0:
            raise ValidationError("gait.cadence must be > 0")
        if self.path not in ("pacing", "straight"):
            raise ValidationError("gait.path must be 'pacing' or 'straight'")
        object.__setattr__(self, "left_type", ContactType.parse(self.left_type))
        object.__setattr__(self, "right_type", ContactType.parse(self.right_type))
        for name in ("left_duration", "right_duration"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValidationError(f"gait.{name} must be > 0")
        if self.lead_in < 0.5:
            raise ValidationError("gait.lead_in must be >= 0.5 s (noise calibration)")

    def foot_type(self, foot: str) -> ContactType:
        return self.left_type if foot == "left" else self.right_type

    def foot_duration(self, foot: str) -> float:
        value = self.left_duration if foot == "left" else self.right_duration
        if value is None:
            return self.params_for(self.foot_type(foot)).duration
        return value

    def foot_dragging(self, foot: str) -> bool:
        return self.left_dragging if foot == "left" else self.right_dragging

    def params_for(self, ctype: ContactType):
        return template_params(ctype, **self.template_overrides.get(ctype.value, {}))

    @property
    def asymmetric(self) -> bool:
        a, b = self.foot_duration("left"), self.foot_duration("right")
        return abs(a - b) / (0.5 * (a + b)) > self.asymmetry_threshold


@dataclass(frozen=True)
class FootstepLabel:
    event_index: int
    t_contact_s: float
    t_off_s: float
    contact_type: ContactType
    foot: str
    abnormality_tags: tuple = ()
    position: float = float("nan")

    @property
    def duration(self) -> float:
        return self.t_off_s - self.t_contact_s


def footstep_positions(beam: BeamModel, spec: GaitSequenceSpec, margin: float = 0.2):
    lo, hi = margin, beam.length - margin
    raw = spec.start_position + spec.step_length * np.arange(spec.step_count)
    if spec.path == "straight":
        if raw.min() < lo or raw.max() > hi:
            raise ValidationError(
                f"footprint sequence spans [{raw.min():.2f}, {raw.max():.2f}] m, "
                f"outside the walkable part of the beam [{lo}, {hi}]")
        return raw
    if not lo <= spec.start_position <= hi:
        raise ValidationError("gait.start_position is outside the walkable beam")
    span = hi - lo
    rel = np.mod(raw - lo, 2 * span)
    return lo + np.where(rel > span, 2 * span - rel, rel)


def step_profile(spec: GaitSequenceSpec, ctype: ContactType, duration: float,
                 position: float, dragging: bool, rng: np.random.Generator | None = None):
    """Force profile of one step (including any drag phase)."""
    params = replace(spec.params_for(ctype), duration=duration)
    scale = 1.0
    if rng is not None and spec.duration_jitter > 0:
        params = replace(params, duration=duration * (1 + rng.uniform(-1, 1) * spec.duration_jitter))
    if rng is not None and spec.peak_jitter > 0:
        scale = 1 + rng.uniform(-1, 1) * spec.peak_jitter
    fs = spec.sample_rate
    if not dragging:
        shape = load_shape(ctype, params, fs) * scale
        total = params.duration
    else:
        # the drag phase continues the contact: one ripple runs through both
        base = load_shape(ctype, params, fs, ripple=False) * scale
        n_drag = int(round(spec.drag_duration * fs))
        t_drag = np.arange(1, n_drag + 1) / fs
        env = np.clip(np.minimum(t_drag, spec.drag_duration - t_drag) / 0.02, 0, 1)
        shape = np.concatenate([base, spec.drag_level * 0.5 * (1 - np.cos(np.pi * env))])
        total = params.duration + n_drag / fs
        t = np.arange(shape.size) / fs
        level = params.variation * np.where(t <= params.duration, 1.0, spec.drag_variation)
        shape = shape + scale * level * _ripple(t, total, params.ripple_hz)
        shape[0] = shape[-1] = 0.0
    return ContactForceProfile(
        contact_type=ctype, body_weight=spec.body_weight, footprint_center=position,
        footprint_halfwidth=params.halfwidth, foot_acceleration=GRAVITY * shape,
        sample_rate=fs, vertical_fraction=1.0 - params.horizontal_fraction,
        horizontal_fraction=params.horizontal_fraction, contact_duration=total)


def step_tags(spec: GaitSequenceSpec, ctype: ContactType, dragging: bool) -> tuple:
    tags = []
    if ctype is ContactType.Midfoot:
        tags.append("midfoot_strike")
    elif ctype is ContactType.Toe:
        tags.append("toe_walking")
    if dragging:
        tags.append("dragging")
    if spec.asymmetric:
        tags.append("asymmetry")
    return tuple(tags)


def synth_gait_dataset(beam: BeamModel, spec: GaitSequenceSpec):
    """Simulate a whole walk; returns ``(signal, labels)``.

    The signal is displacement unless ``spec.velocity`` asks for the
    geophone-like velocity output.
    """
    fs = spec.sample_rate
    rng = np.random.default_rng(spec.random_seed)
    positions = footstep_positions(beam, spec)
    steps = []
    for k in range(spec.step_count):
        foot = FEET[k % 2]
        ctype = spec.foot_type(foot)
        dragging = spec.foot_dragging(foot)
        onset = round((spec.lead_in + k / spec.cadence) * fs) / fs
        profile = step_profile(spec, ctype, spec.foot_duration(foot), positions[k],
                               dragging, rng)
        steps.append((onset, profile, foot, dragging))
    end = max(onset + p.contact_duration for onset, p, _, _ in steps) + spec.tail
    n = int(round(end * fs)) + 1
    duration = (n - 1) / fs

    total = np.zeros((len(beam.sensor_positions), n))
    labels = []
    for k, (onset, profile, foot, dragging) in enumerate(steps):
        i0 = int(round(onset * fs))
        resp = simulate_response(beam, profile, duration - onset, fs)
        total[:, i0:] += resp.data[:, :n - i0]
        labels.append(FootstepLabel(
            event_index=k, t_contact_s=onset,
            t_off_s=round((onset + profile.contact_duration) * fs) / fs,
            contact_type=profile.contact_type, foot=foot,
            abnormality_tags=step_tags(spec, profile.contact_type, dragging),
            position=float(positions[k])))

    signal = Signal(fs, total, Units.Displacement_m)
    if spec.velocity:
        signal = signal.to_velocity()
    if spec.noise_snr_db is not None:
        signal = add_noise(signal, labels, spec.noise_snr_db, rng)
    return signal, labels


def add_noise(signal: Signal, labels, snr_db: float, rng: np.random.Generator) -> Signal:
    """White Gaussian noise; SNR measured on the footstep windows per channel."""
    mask = np.zeros(signal.n_samples, dtype=bool)
    for lab in labels:
        mask[signal.index_of(lab.t_contact_s):signal.index_of(lab.t_off_s) + 1] = True
    if not mask.any():
        raise ValidationError("no footstep samples to define the SNR")
    rms = np.sqrt(np.mean(signal.data[:, mask] ** 2, axis=1))
    sigma = rms / 10 ** (snr_db / 20.0)
    noise = rng.standard_normal(signal.data.shape) * sigma[:, None]
    return signal.replace_data(signal.data + noise)


LABEL_COLUMNS = ("event_index", "t_contact_s", "t_off_s", "contact_type", "foot",
                 "abnormality_tags")


def write_labels_csv(labels, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LABEL_COLUMNS)
        for lab in labels:
            writer.writerow([lab.event_index, repr(float(lab.t_contact_s)),
                             repr(float(lab.t_off_s)), ContactType.parse(lab.contact_type).value,
                             lab.foot, ";".join(lab.abnormality_tags)])


def read_labels_csv(path) -> list:
    labels = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(LABEL_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"{path}: missing label columns {sorted(missing)}")
        for row in reader:
            tags = tuple(t for t in row["abnormality_tags"].split(";") if t)
            unknown = set(tags) - set(ABNORMALITIES)
            if unknown:
                raise ValidationError(f"{path}: unknown abnormality tag(s) {sorted(unknown)}")
            labels.append(FootstepLabel(
                event_index=int(row["event_index"]),
                t_contact_s=float(row["t_contact_s"]), t_off_s=float(row["t_off_s"]),
                contact_type=ContactType.parse(row["contact_type"]),
                foot=row["foot"], abnormality_tags=tags))
    return labels
