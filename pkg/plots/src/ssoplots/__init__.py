"""Offline figures from solver run directories; file formats are the only API."""

__version__ = "0.1.0"

from .figures import KINDS, FigureSpec, render
