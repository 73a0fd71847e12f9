"""Stereographic-projection LiDAR-inertial bundle adjustment and its observability analysis."""

__version__ = "0.1.0"
