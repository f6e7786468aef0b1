"""Ethereum address clustering and mixer anonymity auditing."""

__version__ = "0.1.0"
