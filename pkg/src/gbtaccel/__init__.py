"""Gradient-boosted tree engine and a cycle-approximate model of a
sea-of-small-SRAMs training accelerator."""

__version__ = "0.1.0"
