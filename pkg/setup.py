"""Setup configuration for speckle-viscometry package."""

from setuptools import setup

if __name__ == "__main__":
    setup()
