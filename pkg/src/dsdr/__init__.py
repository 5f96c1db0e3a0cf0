"""Sufficient dimension reduction (SIR, SAVE, DR) on pooled or partitioned data."""

from .core import Dataset, Method, Mode, SdrEstimate, SliceSpec, Slicing, fit_global
from .metrics import r_squared, trace_correlation

__all__ = ["Dataset", "Method", "Mode", "SdrEstimate", "SliceSpec", "Slicing", "fit_global", "r_squared", "trace_correlation"]
__version__ = "0.1.0"
