"""Downlink coverage of PPP multi-antenna networks with additive hardware impairments."""

__version__ = "0.1.0"
