# tdlab/__init__.py
"""TD, averaged TD and TDC policy-evaluation laboratory."""

__version__ = "1.0.0"
