"""
MPRD L-SPECT simulator and reconstruction toolkit
"""

__version__ = "0.1.0"
