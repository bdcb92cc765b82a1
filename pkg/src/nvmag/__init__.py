"""Vector magnetometry with an NV-diamond ensemble: spin model, calibration,
signal synthesis, lock-in demodulation, reconstruction and sensitivity."""

__version__ = "0.1.0"
