"""Federated NeRF training with channel-aware partial client selection."""

__version__ = "0.1.0"
