"""Most-likely paths and Pontryagin-optimal control for a continuously monitored oscillator."""

__version__ = "0.1.0"
