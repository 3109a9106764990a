"""Galton-Watson grid fractals and the Favard length of their approximations."""

__version__ = "0.1.0"
