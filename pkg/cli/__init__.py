"""
Command line entry points.
"""

from cli.main import main

__all__ = ["main"]
