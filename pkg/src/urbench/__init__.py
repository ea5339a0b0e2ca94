"""Unitarity randomized benchmarking (m-URB and native-gate URB) on simulated noise."""

__version__ = "0.1.0"
