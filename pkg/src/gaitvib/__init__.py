"""Floor-vibration footstep simulation and abnormal-gait assessment."""

__version__ = "0.1.0"
