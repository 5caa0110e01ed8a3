"""Hyperspherical graph autoencoder toolkit for connectome anomaly detection and completion."""

__version__ = "0.1.0"
