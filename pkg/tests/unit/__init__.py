"""Unit tests for fkcorr."""
