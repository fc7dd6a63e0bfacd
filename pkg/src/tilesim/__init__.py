"""Desk-scale emulation of Tile's offline-finding protocol and the attacks against it."""

__version__ = "0.1.0"
