"""Loewner Toolkit Package."""
