"""Agent-based retail department simulator with a replication and statistics toolkit."""

__version__ = "0.1.0"
