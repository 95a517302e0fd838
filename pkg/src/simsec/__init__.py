"""Multi-layer metasurface beamforming simulator with secrecy-rate optimization."""

__version__ = "0.1.0"
