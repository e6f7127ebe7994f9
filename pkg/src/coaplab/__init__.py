"""Synthetic CoAP DoS traffic, windowed labeling, feature extraction and detectors."""

__version__ = "0.1.0"
