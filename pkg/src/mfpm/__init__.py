"""Multi-feature budgeted profit maximization on social networks."""

__version__ = "0.1.0"
