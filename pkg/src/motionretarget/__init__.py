"""Shape-aware motion retargeting with hybrid 2D/3D constraints."""
__version__ = "0.1.0"
