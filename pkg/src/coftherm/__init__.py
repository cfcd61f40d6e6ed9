"""Thermal-transport analysis toolkit for covalent organic frameworks."""

__version__ = "0.1.0"
