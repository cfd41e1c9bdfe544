"""EUR/USD Twitter analytics: stance classification, announcement event studies and deletion forensics."""

__version__ = "1.0.0"
