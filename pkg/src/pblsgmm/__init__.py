"""Growth mixture models with a parallel bilinear-spline within-class model."""
__version__ = "0.1.0"
