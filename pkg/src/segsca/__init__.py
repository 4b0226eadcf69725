"""Spatial segregation indices on population grids and specification curve analysis."""

__version__ = "0.1.0"
