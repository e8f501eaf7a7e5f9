"""Generation-based random linear network coding: analytics and simulation."""
__version__ = "0.1.0"
