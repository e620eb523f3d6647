"""Finite elements for anisotropic, nearly and fully incompressible solids."""

__version__ = "0.1.0"
