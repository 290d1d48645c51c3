"""Filter-bank task-related component analysis for pre-movement EEG decoding."""

__version__ = "0.1.0"
