"""Uniformly sampled multi-channel signals and their CSV form."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ValidationError(ValueError):
    """Input data violates a documented precondition."""


class ConfigurationError(ValueError):
    """A parameter combination cannot be honoured."""


class Units(str, enum.Enum):
    Displacement_m = "Displacement_m"
    Velocity_mps = "Velocity_mps"
    Acceleration_mps2 = "Acceleration_mps2"
    Dimensionless = "Dimensionless"


@dataclass(frozen=True)
class Signal:
    """Multi-channel time series.

    ``data`` has shape ``(n_channels, n_samples)``.
    """

    sample_rate: float
    data: np.ndarray
    units: Units = Units.Dimensionless
    start_time: float = 0.0
    channel_names: tuple = field(default=())

    def __post_init__(self):
        data = np.atleast_2d(np.asarray(self.data, dtype=float))
        if data.ndim != 2:
            raise ValidationError("signal data must be 1-D or 2-D")
        if not self.sample_rate > 0:
            raise ValidationError("sample_rate must be > 0")
        if not np.all(np.isfinite(data)):
            raise ValidationError("signal contains non-finite samples")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "units", Units(self.units))
        names = tuple(self.channel_names) or tuple(
            f"ch{i + 1}" for i in range(data.shape[0]))
        if len(names) != data.shape[0]:
            raise ValidationError("channel_names length must match channels")
        object.__setattr__(self, "channel_names", names)

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.n_samples) / self.sample_rate

    @property
    def channels(self) -> list:
        return [row for row in self.data]

    def channel(self, index: int) -> "Signal":
        return Signal(self.sample_rate, self.data[index:index + 1], self.units,
                      self.start_time, (self.channel_names[index],))

    def replace_data(self, data, units=None) -> "Signal":
        """Same timing with new samples; channel names survive if the count does."""
        data = np.atleast_2d(np.asarray(data, dtype=float))
        names = self.channel_names if data.shape[0] == self.n_channels else ()
        return Signal(self.sample_rate, data, self.units if units is None else units,
                      self.start_time, names)

    def index_of(self, t: float) -> int:
        """Nearest sample index for absolute time ``t``, clipped to range."""
        k = int(round((t - self.start_time) * self.sample_rate))
        return min(max(k, 0), self.n_samples - 1)

    def slice_time(self, t0: float, t1: float) -> "Signal":
        """Samples with times in ``[t0, t1]``."""
        i0 = self.index_of(t0)
        i1 = self.index_of(t1) + 1
        return Signal(self.sample_rate, self.data[:, i0:i1], self.units,
                      self.start_time + i0 / self.sample_rate, self.channel_names)

    def to_velocity(self) -> "Signal":
        """Central-difference derivative of a displacement signal."""
        if self.units is not Units.Displacement_m:
            raise ValidationError("to_velocity expects a displacement signal")
        vel = np.gradient(self.data, self.dt, axis=1) if self.n_samples > 1 \
            else np.zeros_like(self.data)
        return self.replace_data(vel, Units.Velocity_mps)

    def __add__(self, other: "Signal") -> "Signal":
        if (other.sample_rate != self.sample_rate or other.data.shape != self.data.shape
                or other.units is not self.units):
            raise ValidationError("signals are not compatible for addition")
        return self.replace_data(self.data + other.data)


def write_signal_csv(signal: Signal, path) -> None:
    """Write ``# sample_rate_hz``/``# units`` header then ``t,ch1..chN`` rows."""
    path = Path(path)
    cols = np.vstack([signal.times, signal.data]).T
    header = ",".join(["t"] + [f"ch{i + 1}" for i in range(signal.n_channels)])
    with path.open("w", newline="") as fh:
        fh.write(f"# sample_rate_hz={signal.sample_rate!r}\n")
        fh.write(f"# units={signal.units.value}\n")
        fh.write(header + "\n")
        for row in cols:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_signal_csv(path) -> Signal:
    path = Path(path)
    meta = {}
    with path.open() as fh:
        lines = fh.read().splitlines()
    body_start = 0
    for k, line in enumerate(lines):
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
            continue
        body_start = k
        break
    if "sample_rate_hz" not in meta:
        raise ValidationError(f"{path}: missing '# sample_rate_hz=' header")
    try:
        rate = float(meta["sample_rate_hz"])
        units = Units(meta.get("units", Units.Dimensionless.value))
    except ValueError as exc:
        raise ValidationError(f"{path}: bad header: {exc}") from None
    header = lines[body_start].split(",")
    if not header or header[0] != "t":
        raise ValidationError(f"{path}: first column must be 't'")
    rows = [line for line in lines[body_start + 1:] if line.strip()]
    if not rows:
        raise ValidationError(f"{path}: no samples")
    table = np.array([[float(v) for v in r.split(",")] for r in rows])
    start = float(table[0, 0])
    return Signal(rate, table[:, 1:].T.copy(), units, start)
