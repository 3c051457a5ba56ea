"""Online adaptation-space reduction for a simulated multi-hop IoT network."""

__version__ = "0.1.0"
