"""Energy-aware VM placement and flow routing on layered data-center trees."""

__version__ = "0.1.0"
