"""Two-measurement quantum work statistics for sudden quenches of spin chains."""

__version__ = "0.1.0"
