"""Classical stat-mech mappings and numerics for decohered toric codes."""

__version__ = "0.1.0"
