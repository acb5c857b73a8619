"""DIMY contact tracing: device protocol, ledger back-end and simulator."""

__version__ = "0.1.0"
