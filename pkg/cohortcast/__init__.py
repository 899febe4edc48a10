"""Two-dimensional ARIMAX forecasting of cohort revenue matrices."""

__version__ = "1.0.0"
