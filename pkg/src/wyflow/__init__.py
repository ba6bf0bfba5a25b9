"""Simulator and verification harness for the normalized conformal curvature flow
on smooth metric measure spaces with Neumann boundary."""

__version__ = "0.1.0"
