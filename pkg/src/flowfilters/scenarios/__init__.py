"""Benchmark scenarios."""

from . import acoustic, sensor_network

__all__ = ["acoustic", "sensor_network"]
