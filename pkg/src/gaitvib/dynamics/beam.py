"""Simply supported beam in modal form."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..signal import ConfigurationError, ValidationError

#: Floor modes observed under heel/toe contacts on the wooden walkway (Hz).
WALKWAY_MODES_HZ = (11.0, 53.0, 80.0, 112.0, 165.0, 200.0)


@dataclass(frozen=True)
class BeamModel:
    """Uniform simply supported beam, described through its modes.

    Mode ``i`` (1-based) has shape ``sin(i*pi*x/length)`` and modal mass
    ``mass_per_length * length / 2``. ``frequency_overrides`` pins modal
    frequencies to measured values instead of the Euler-Bernoulli formula.

    ``horizontal_coupling`` and ``horizontal_cutoff_hz`` describe how the
    horizontal part of a footstep load reaches the vertical response: it
    drives only modes at or above the cutoff, scaled by the coupling.
    """

    length: float = 6.0
    mass_per_length: float = 150.0
    flexural_rigidity: float = 9.5e6
    mode_count: int = 6
    damping_ratios: tuple = (0.03,)
    sensor_positions: tuple = (0.86, 2.57, 3.43, 5.14)
    frequency_overrides: tuple | None = WALKWAY_MODES_HZ
    horizontal_coupling: float = 0.5
    horizontal_cutoff_hz: float = 100.0
    _freqs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.length > 0:
            raise ValidationError("beam.length must be > 0")
        if not self.mass_per_length > 0:
            raise ValidationError("beam.mass_per_length must be > 0")
        if not self.flexural_rigidity > 0:
            raise ValidationError("beam.flexural_rigidity must be > 0")
        if int(self.mode_count) != self.mode_count or self.mode_count < 1:
            raise ValidationError("beam.mode_count must be a positive integer")
        object.__setattr__(self, "mode_count", int(self.mode_count))
        zeta = np.atleast_1d(np.asarray(self.damping_ratios, dtype=float))
        if zeta.size == 1:
            zeta = np.full(self.mode_count, zeta[0])
        if zeta.size != self.mode_count:
            raise ValidationError("beam.damping_ratios needs one value or one per mode")
        if np.any(zeta <= 0) or np.any(zeta >= 1):
            raise ValidationError("beam.damping_ratios must lie in (0, 1)")
        object.__setattr__(self, "damping_ratios", tuple(float(z) for z in zeta))
        sensors = tuple(float(s) for s in np.atleast_1d(self.sensor_positions))
        if not sensors:
            raise ValidationError("beam.sensor_positions must not be empty")
        if any(not 0 < s < self.length for s in sensors):
            raise ValidationError("beam.sensor_positions must lie inside (0, length)")
        object.__setattr__(self, "sensor_positions", sensors)
        if self.horizontal_coupling < 0:
            raise ValidationError("beam.horizontal_coupling must be >= 0")

        idx = np.arange(1, self.mode_count + 1)
        if self.frequency_overrides is not None:
            over = np.asarray(self.frequency_overrides, dtype=float)
            if over.size < self.mode_count:
                raise ValidationError(
                    "beam.frequency_overrides must give at least mode_count values")
            freqs = over[:self.mode_count]
            object.__setattr__(self, "frequency_overrides", tuple(float(f) for f in over))
        else:
            freqs = (idx ** 2 * np.pi / (2.0 * self.length ** 2)
                     * np.sqrt(self.flexural_rigidity / self.mass_per_length))
        if np.any(freqs <= 0) or np.any(np.diff(freqs) <= 0):
            raise ValidationError("modal frequencies must be positive and increasing")
        object.__setattr__(self, "_freqs", freqs)

    @property
    def frequencies(self) -> np.ndarray:
        """Natural frequencies of all configured modes (Hz)."""
        return self._freqs.copy()

    @property
    def omegas(self) -> np.ndarray:
        return 2.0 * np.pi * self._freqs

    @property
    def modal_mass(self) -> float:
        return self.mass_per_length * self.length / 2.0

    def mode_shape(self, i: int, x) -> np.ndarray:
        _check_mode(self, i)
        return np.sin(i * np.pi * np.asarray(x, dtype=float) / self.length)

    def shape_matrix(self, x) -> np.ndarray:
        """``phi[j, i-1]`` = mode ``i`` evaluated at ``x[j]``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.arange(1, self.mode_count + 1)
        return np.sin(np.outer(x, idx) * np.pi / self.length)

    def with_modes(self, mode_count: int) -> "BeamModel":
        """Same beam with ``mode_count`` modes (uniform damping only)."""
        if len(set(self.damping_ratios)) != 1:
            raise ValidationError("with_modes needs a uniform damping ratio")
        return replace(self, mode_count=mode_count,
                       damping_ratios=(self.damping_ratios[0],))


def _check_mode(beam: BeamModel, i: int) -> None:
    if int(i) != i or not 1 <= i <= beam.mode_count:
        raise IndexError(f"mode index {i} outside 1..{beam.mode_count}")


def natural_frequency(beam: BeamModel, i: int) -> float:
    """Natural frequency of mode ``i`` in Hz (override wins when present)."""
    _check_mode(beam, i)
    return float(beam._freqs[i - 1])


def modal_mass(beam: BeamModel, i: int) -> float:
    """Generalized mass of mode ``i``; identical for every mode of a uniform beam."""
    _check_mode(beam, i)
    return beam.modal_mass


def check_sample_rate(beam: BeamModel, sample_rate: float) -> None:
    top = float(beam._freqs[-1])
    if not sample_rate >= 2.5 * top:
        raise ConfigurationError(
            f"sample_rate {sample_rate} Hz is below 2.5x the top modal "
            f"frequency ({top} Hz)")
