"""Seizure-onset-zone classification from CCEP trials."""
__version__ = "0.1.0"
