"""Barrier construction and numerical evolution of five-parameter ancient
solutions to the rescaled Yamabe flow in cylindrical gauge."""

__version__ = "0.1.0"
