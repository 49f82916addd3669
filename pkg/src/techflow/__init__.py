"""Technique-controllable singing feature synthesis via rectified flow
matching, validated against a deterministic oracle singer."""

__version__ = "0.1.0"
