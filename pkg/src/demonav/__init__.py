"""Demonstration-boosted DDPG for mapless robot navigation in a 2D lidar simulator."""

__version__ = "0.1.0"
