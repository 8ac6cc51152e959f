"""Integration tests driving the fkcorr command line."""
