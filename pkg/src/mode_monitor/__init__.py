"""Structural health monitoring with modal-projection graph convolutions"""

__version__ = '0.1.0'
