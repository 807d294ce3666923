"""Small-signal stability workbench for power networks with grid-following inverters."""

__version__ = "0.1.0"
