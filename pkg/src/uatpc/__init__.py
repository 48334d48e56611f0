"""User-aware WLAN transmit power control toolkit."""
__version__ = "0.1.0"
