"""Wind power simulation from reanalysis winds and validation against observed generation."""

__version__ = "0.1.0"
