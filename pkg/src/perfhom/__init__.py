"""Periodic homogenization of linear elasticity on perforated domains.

Pipeline: cell correctors -> effective model -> homogenized macro solve,
checked against direct solves of the oscillating problem over an eps sweep.
"""

__version__ = "0.1.0"
