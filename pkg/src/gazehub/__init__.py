"""Group gaze-sharing hub for projected tabletops.

Ingests gaze and marker telemetry from many participants, unifies it on
one table plane via fiducial-marker homographies, and maintains shared
attention grids, gaze trails, and physical-object highlights broadcast to
renderers in real time.
"""

__version__ = "0.1.0"
