"""Deterministic multi-agent simulator of cooperative driving at
non-signalized intersections: slot reservation, consensus longitudinal
control, delay/loss-aware motion estimation, AR slot projection, and a
telemetry server for a human-in-the-loop browser client.
"""

__version__ = "0.1.0"
