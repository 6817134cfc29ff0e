"""Port-agnostic protocol detection and compliance auditing for IoT packet traces."""

__version__ = "0.1.0"
