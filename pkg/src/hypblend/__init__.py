"""Constructive tools for hyperbolic horseshoes, central IFS blenders,
shadowing and symbolic entropy extraction."""

__version__ = "0.1.0"
