"""Noisy spectrum-analyzer trace synthesis."""
