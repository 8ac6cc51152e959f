"""Test suite for fkcorr."""
