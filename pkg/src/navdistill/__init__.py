"""Teacher/student distillation of narrated navigation into an RGB-only waypoint policy."""

__version__ = "0.1.0"
