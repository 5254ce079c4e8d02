"""Shooting solver for radial solutions of -|u'|^alpha F(D^2 u) = |u|^(p-1) u on annuli."""

__version__ = "0.1.0"
