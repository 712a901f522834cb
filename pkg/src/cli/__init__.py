"""Command-line interface and built-in self-tests."""
