"""Trace files, fit reports and tables on disk."""
