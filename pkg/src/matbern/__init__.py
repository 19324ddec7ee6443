"""Matrix Bernstein tail bounds with intrinsic dimension, plus simulation tools to check them."""

__version__ = "0.1.0"
