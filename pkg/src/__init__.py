"""
SpiralSense - Source Package
----------------------------
Pipeline stages: circuit_params → network_sim → sensing, with dataio for
files and cli for the command line. Import the stage modules directly,
e.g. ``from src.sensing import invert_permittivity``.
"""

__version__ = "1.0.0"
