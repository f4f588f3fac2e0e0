"""Protograph-based batched network codes: design, lifting, coding and simulation."""

__version__ = "1.0.0"
