"""Shared pytest scaffolding; oracles.py in this directory is importable."""
