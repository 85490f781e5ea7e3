"""Beam response to footstep loads: modal recurrence and Newmark oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .. import kernels
from ..signal import ConfigurationError, Signal, Units, ValidationError
from .beam import BeamModel, check_sample_rate
from .forces import ContactForceProfile, participation_vector


@dataclass(frozen=True)
class ModalStates:
    """Generalized displacements/velocities, shape ``(mode_count, n)``.

    Physical modal coordinates are ``q_i = P_i * D_i``.
    """

    times: np.ndarray
    displacement: np.ndarray
    velocity: np.ndarray
    participation: np.ndarray

    def energy(self, beam: BeamModel) -> np.ndarray:
        """Total mechanical energy of the beam over time (J)."""
        q = self.participation[:, None] * self.displacement
        qd = self.participation[:, None] * self.velocity
        w2 = beam.omegas[:, None] ** 2
        return 0.5 * beam.modal_mass * np.sum(qd ** 2 + w2 * q ** 2, axis=0)


def _check(beam, profile, duration, sample_rate, onset):
    check_sample_rate(beam, sample_rate)
    profile.check_on(beam)
    if onset < 0:
        raise ValidationError("onset must be >= 0")
    if duration + 1e-12 < onset + profile.contact_duration:
        raise ConfigurationError("duration is shorter than the contact")


def excitation(profile: ContactForceProfile, n: int, sample_rate: float,
               onset: float = 0.0) -> np.ndarray:
    """Foot acceleration resampled on the simulation grid (zero outside contact)."""
    t = np.arange(n) / sample_rate - onset
    src = profile.foot_acceleration
    t_src = np.arange(src.size) / profile.sample_rate
    return np.interp(t, t_src, src, left=0.0, right=0.0)


def mode_load_factors(beam: BeamModel, profile: ContactForceProfile) -> np.ndarray:
    """Per-mode multiplier combining vertical and horizontal load paths."""
    high = beam.frequencies >= beam.horizontal_cutoff_hz
    return profile.vertical_fraction + beam.horizontal_coupling * profile.horizontal_fraction * high


def _step_matrices(omega: float, zeta: float, dt: float):
    """Exact one-step propagators of ``D'' + 2 zeta w D' + w^2 D = p(t)``
    for ``p`` linear over the step."""
    aug = np.zeros((4, 4))
    aug[0, 1] = 1.0
    aug[1, 0] = -omega * omega
    aug[1, 1] = -2.0 * zeta * omega
    aug[1, 2] = 1.0
    aug[2, 3] = 1.0
    e = expm(aug * dt)
    return (np.ascontiguousarray(e[:2, :2]), np.ascontiguousarray(e[:2, 2]),
            np.ascontiguousarray(e[:2, 3]))


def modal_states(beam: BeamModel, profile: ContactForceProfile, duration: float,
                 sample_rate: float, onset: float = 0.0) -> ModalStates:
    _check(beam, profile, duration, sample_rate, onset)
    n = int(round(duration * sample_rate)) + 1
    dt = 1.0 / sample_rate
    drive = excitation(profile, n, sample_rate, onset)
    factors = mode_load_factors(beam, profile)
    disp = np.zeros((beam.mode_count, n))
    vel = np.zeros((beam.mode_count, n))
    for m, (omega, zeta) in enumerate(zip(beam.omegas, beam.damping_ratios)):
        if factors[m] == 0:
            continue
        trans, g0, g1 = _step_matrices(omega, zeta, dt)
        d, v = kernels.modal_recurrence(trans, g0, g1,
                                        np.ascontiguousarray(factors[m] * drive), dt)
        disp[m] = d
        vel[m] = v
    return ModalStates(np.arange(n) * dt, disp, vel, participation_vector(beam, profile))


def simulate_response(beam: BeamModel, profile: ContactForceProfile, duration: float,
                      sample_rate: float = 1000.0, onset: float = 0.0) -> Signal:
    """Displacement at every sensor by modal superposition.

    Each mode is advanced with the exact recurrence for a load that is
    linear between samples. One output channel per sensor position.
    """
    states = modal_states(beam, profile, duration, sample_rate, onset)
    shapes = beam.shape_matrix(beam.sensor_positions)
    disp = shapes @ (states.participation[:, None] * states.displacement)
    return Signal(sample_rate, disp, Units.Displacement_m)


def simulate_velocity(beam, profile, duration, sample_rate=1000.0, onset=0.0) -> Signal:
    """Geophone-like output: velocity at every sensor."""
    return simulate_response(beam, profile, duration, sample_rate, onset).to_velocity()


def simulate_direct(beam: BeamModel, profile: ContactForceProfile, duration: float,
                    sample_rate: float = 1000.0, onset: float = 0.0,
                    substeps: int | None = None, gamma: float = 0.5,
                    beta: float = 0.25) -> Signal:
    """Brute-force counterpart of :func:`simulate_response`.

    Assembles mass, damping and stiffness matrices in nodal coordinates
    (one node per mode, so the system is fully coupled) and integrates them
    with Newmark-beta on a sub-sampled grid.
    """
    _check(beam, profile, duration, sample_rate, onset)
    n = int(round(duration * sample_rate)) + 1
    dt_out = 1.0 / sample_rate
    if substeps is None:
        substeps = max(1, math.ceil(beam.omegas[-1] * dt_out / 0.01))
    dt = dt_out / substeps

    nodes = beam.length * np.arange(1, beam.mode_count + 1) / (beam.mode_count + 1)
    shapes = beam.shape_matrix(nodes)
    inv = np.linalg.inv(shapes)
    m_star = beam.modal_mass
    omega = beam.omegas
    zeta = np.asarray(beam.damping_ratios)
    mass = inv.T @ (m_star * np.eye(beam.mode_count)) @ inv
    damping = inv.T @ np.diag(2.0 * zeta * omega * m_star) @ inv
    stiffness = inv.T @ np.diag(omega ** 2 * m_star) @ inv

    drive = excitation(profile, n, sample_rate, onset)
    modal_force = m_star * participation_vector(beam, profile) * mode_load_factors(beam, profile)
    load = np.ascontiguousarray(np.outer(drive, modal_force) @ inv)

    eff = stiffness + gamma / (beta * dt) * damping + mass / (beta * dt * dt)
    eff_inv = np.ascontiguousarray(np.linalg.inv(eff))
    accel0 = np.linalg.solve(mass, load[0])
    u_nodes = kernels.newmark_integrate(np.ascontiguousarray(mass), np.ascontiguousarray(damping),
                                        eff_inv, accel0, load, substeps, dt, gamma, beta)
    q = u_nodes @ inv.T
    disp = beam.shape_matrix(beam.sensor_positions) @ q.T
    return Signal(sample_rate, disp, Units.Displacement_m)
