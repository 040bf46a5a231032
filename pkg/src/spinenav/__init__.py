"""Navigation numerics and a desk-scale simulator for steerable-drill spinal fixation."""

__version__ = "0.1.0"
