"""Footstep contact forces: profiles, default templates, modal participation."""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields, replace

import numpy as np

from ..signal import ValidationError
from .beam import BeamModel, _check_mode

GRAVITY = 9.81
RIPPLE_HZ = (80.0, 112.0, 165.0, 200.0)


class ContactType(str, enum.Enum):
    Heel = "Heel"
    Midfoot = "Midfoot"
    Toe = "Toe"

    @classmethod
    def parse(cls, value) -> "ContactType":
        if isinstance(value, cls):
            return value
        for member in cls:
            if member.value.lower() == str(value).strip().lower():
                return member
        raise ValidationError(f"unknown contact_type {value!r}")


CONTACT_ORDER = (ContactType.Heel, ContactType.Midfoot, ContactType.Toe)


@dataclass(frozen=True)
class ContactForceProfile:
    """One footstep load.

    The vertical load is spread uniformly over
    ``[footprint_center - footprint_halfwidth, footprint_center + footprint_halfwidth]``
    and equals ``body_mass * foot_acceleration(t)``, positive downward.
    ``foot_acceleration`` is sampled at ``sample_rate`` starting at contact
    onset and is zero after ``contact_duration``.
    """

    contact_type: ContactType
    body_weight: float
    footprint_center: float
    footprint_halfwidth: float
    foot_acceleration: np.ndarray
    sample_rate: float
    vertical_fraction: float
    horizontal_fraction: float
    contact_duration: float

    def __post_init__(self):
        acc = np.asarray(self.foot_acceleration, dtype=float).ravel()
        if not np.all(np.isfinite(acc)):
            raise ValidationError("foot_acceleration contains non-finite samples")
        object.__setattr__(self, "foot_acceleration", acc)
        object.__setattr__(self, "contact_type", ContactType.parse(self.contact_type))
        if self.body_weight < 0:
            raise ValidationError("body_weight must be >= 0")
        if self.footprint_halfwidth < 0:
            raise ValidationError("footprint_halfwidth must be >= 0")
        if not self.contact_duration > 0:
            raise ValidationError("contact_duration must be > 0")
        if not self.sample_rate > 0:
            raise ValidationError("profile sample_rate must be > 0")
        for name in ("vertical_fraction", "horizontal_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")
        if abs(self.vertical_fraction + self.horizontal_fraction - 1.0) > 1e-9:
            raise ValidationError("vertical_fraction + horizontal_fraction must be 1")
        t = np.arange(acc.size) / self.sample_rate
        if np.any(acc[t > self.contact_duration + 0.5 / self.sample_rate] != 0):
            raise ValidationError("foot_acceleration must vanish after contact_duration")

    @property
    def body_mass(self) -> float:
        return self.body_weight / GRAVITY

    @property
    def force(self) -> np.ndarray:
        """Total contact force history (N)."""
        return self.body_mass * self.foot_acceleration

    def check_on(self, beam: BeamModel) -> None:
        lo = self.footprint_center - self.footprint_halfwidth
        hi = self.footprint_center + self.footprint_halfwidth
        if not (0 < lo and hi < beam.length):
            raise ValidationError(
                f"footprint [{lo:.3f}, {hi:.3f}] m is not inside the beam (0, {beam.length})")

    def scaled(self, factor: float) -> "ContactForceProfile":
        return replace(self, body_weight=self.body_weight * factor)


def modal_participation(beam: BeamModel, i: int, profile: ContactForceProfile) -> float:
    """Participation of mode ``i`` in the footprint load.

    ``(body_mass / m*) * mean of phi_i over the footprint``; the mean
    collapses to ``phi_i(center)`` for a point load.
    """
    _check_mode(beam, i)
    if profile.footprint_halfwidth < 0:
        raise ValidationError("footprint_halfwidth must be >= 0")
    profile.check_on(beam)
    return float(profile.body_mass / beam.modal_mass
                 * _footprint_mean(beam, np.array([i]), profile)[0])


def participation_vector(beam: BeamModel, profile: ContactForceProfile) -> np.ndarray:
    profile.check_on(beam)
    idx = np.arange(1, beam.mode_count + 1)
    return profile.body_mass / beam.modal_mass * _footprint_mean(beam, idx, profile)


def _footprint_mean(beam, idx, profile):
    c, h, L = profile.footprint_center, profile.footprint_halfwidth, beam.length
    k = idx * np.pi / L
    if h == 0:
        return np.sin(k * c)
    return (np.cos(k * (c - h)) - np.cos(k * (c + h))) / (2.0 * h * k)


@dataclass(frozen=True)
class TemplateParams:
    """Shape parameters of a default footstep template.

    Peaks are multiples of body weight. ``variation`` is the RMS of the
    force ripple carried through the contact, also in body weights; the
    ripple is a sum of tones at ``ripple_hz`` (the walkway modes at or above
    80 Hz by default), which keeps the high modes driven at a steady level
    until the foot leaves the floor.
    """

    duration: float
    halfwidth: float
    horizontal_fraction: float
    peaks: tuple
    ramp: float = 0.05
    rise: float = 0.03
    strike_amplitude: float = 0.0
    strike_decay: float = 0.004
    strike_length: float = 0.02
    variation: float = 0.0
    ripple_hz: tuple = RIPPLE_HZ


DEFAULT_TEMPLATES = {
    ContactType.Heel: TemplateParams(duration=0.7, halfwidth=0.04, horizontal_fraction=0.2,
                                     peaks=(1.1, 1.05), strike_amplitude=0.3,
                                     variation=0.15),
    ContactType.Midfoot: TemplateParams(duration=0.9, halfwidth=0.12, horizontal_fraction=0.05,
                                        peaks=(1.0,), ramp=0.05, variation=0.0005,
                                        ripple_hz=(53.0,) + RIPPLE_HZ),
    ContactType.Toe: TemplateParams(duration=0.5, halfwidth=0.03, horizontal_fraction=0.1,
                                    peaks=(1.5, 0.9), rise=0.008, variation=0.15),
}

_RIPPLE_SEED = 20230917
_RIPPLE_FADE = 0.02


def template_params(contact_type, **overrides) -> TemplateParams:
    params = DEFAULT_TEMPLATES[ContactType.parse(contact_type)]
    names = {f.name for f in fields(TemplateParams)}
    bad = set(overrides) - names
    if bad:
        raise ValidationError(f"unknown template parameter(s): {sorted(bad)}")
    return replace(params, **overrides)


def load_shape(contact_type, params: TemplateParams, sample_rate: float,
               ripple: bool = True) -> np.ndarray:
    """Vertical load history in body weights, sampled from onset to foot-off."""
    ctype = ContactType.parse(contact_type)
    T = params.duration
    n = int(round(T * sample_rate)) + 1
    t = np.arange(n) / sample_rate
    if ctype is ContactType.Heel:
        width = 0.7 * T
        first = params.peaks[0] * _half_sine(t, 0.0, width)
        second = params.peaks[-1] * _half_sine(t, T - width, width)
        shape = np.maximum(first, second)
        strike = t <= params.strike_length
        shape[strike] += params.strike_amplitude * np.exp(-t[strike] / params.strike_decay)
    elif ctype is ContactType.Midfoot:
        shape = params.peaks[0] * _plateau(t, T, params.ramp)
    else:
        # raised-cosine strike impulse riding on a single support bump
        width = params.rise
        impulse = np.where(t <= width, 0.5 * (1 - np.cos(2 * np.pi * t / width)), 0.0)
        support = params.peaks[-1] * _half_sine(t, 0.0, T)
        shape = np.maximum(params.peaks[0] * impulse, support)
    if ripple and params.variation > 0:
        shape = shape + params.variation * _ripple(t, T, params.ripple_hz)
    # the load rises from and returns to zero within the contact
    shape[0] = 0.0
    shape[-1] = 0.0
    return shape


def _half_sine(t, start, width):
    s = (t - start) / width
    return np.where((s >= 0) & (s <= 1), np.sin(np.pi * np.clip(s, 0, 1)), 0.0)


def _plateau(t, T, ramp):
    up = np.clip(t / ramp, 0, 1)
    down = np.clip((T - t) / ramp, 0, 1)
    return 0.5 * (1 - np.cos(np.pi * np.minimum(up, down)))


def _ripple(t, T, freqs=RIPPLE_HZ):
    """Unit-RMS multitone with raised-cosine fades at both ends.

    Phases come from a fixed generator so the ripple is identical between
    runs.
    """
    freqs = np.asarray(freqs, dtype=float)
    if freqs.size == 0:
        return np.zeros_like(t)
    phases = np.random.default_rng(_RIPPLE_SEED).uniform(0, 2 * np.pi, freqs.size)
    wave = np.sin(2 * np.pi * np.outer(t, freqs) + phases).sum(axis=1)
    wave *= np.sqrt(2.0 / freqs.size)
    env = np.clip(np.minimum(t, T - t) / _RIPPLE_FADE, 0, 1)
    return wave * 0.5 * (1 - np.cos(np.pi * env))


def force_template(contact_type, body_weight: float, footprint_center: float,
                   sample_rate: float = 1000.0, params: TemplateParams | None = None,
                   peak_scale: float = 1.0, **overrides) -> ContactForceProfile:
    """Default footstep profile for a contact type, with optional overrides."""
    ctype = ContactType.parse(contact_type)
    params = params or template_params(ctype, **overrides)
    shape = load_shape(ctype, params, sample_rate) * peak_scale
    return ContactForceProfile(
        contact_type=ctype,
        body_weight=body_weight,
        footprint_center=footprint_center,
        footprint_halfwidth=params.halfwidth,
        foot_acceleration=GRAVITY * shape,
        sample_rate=sample_rate,
        vertical_fraction=1.0 - params.horizontal_fraction,
        horizontal_fraction=params.horizontal_fraction,
        contact_duration=params.duration,
    )
