"""Squeezed-vacuum ring cavity probing: models, synthetic traces and parameter fits."""
