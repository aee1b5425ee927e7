"""Shared exception types for contract violations with a named meaning."""


class CapacityError(Exception):
    """Instance too large for an exact-enumeration path."""


class InfiniteCouplingError(Exception):
    """An effective edge probability hit 0 or 1, so a log-odds coupling diverges."""


class UnrealizableSyndromeError(Exception):
    """No error configuration produces the requested syndrome."""


class UnbracketedThresholdError(Exception):
    """A threshold scan found no (crossing, no-crossing) verdict pair."""
