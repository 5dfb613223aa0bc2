"""Unit tests for speckle-viscometry package."""
