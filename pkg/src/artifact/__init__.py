"""Adversarial instances and experiment tooling for noisy black-box optimization."""

__version__ = "0.1.0"
