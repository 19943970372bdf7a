"""Driven collective spin systems coupled to a broadband squeezed vacuum."""

__version__ = "0.1.0"
