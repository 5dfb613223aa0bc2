"""Init file for scenario tests."""
