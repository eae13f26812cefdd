"""Shared exception hierarchy.

Every domain error raised by this package derives from SliceVpnError so the
CLI can map them to a single-line message and exit status 1.
"""


class SliceVpnError(Exception):
    """Base class for all domain errors."""


class AuthorizationError(SliceVpnError):
    """Actor is not permitted to perform the requested operation."""
