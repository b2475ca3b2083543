"""fairbarycenter - Fair post-processing of multi-dimensional model outputs by optimal transport."""

__version__ = "0.1.0"
