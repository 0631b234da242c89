"""Semi-quantum cryptographic stack over simulated consumable tokens."""

__version__ = "0.1.0"
