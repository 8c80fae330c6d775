"""Exception types shared across the solver stack."""
from __future__ import annotations


class InvalidInput(ValueError):
    """Malformed or inconsistent input: bad shapes, masses, indices, files."""


class CapacityError(RuntimeError):
    """A resource guard tripped: dense work above the cap, or the support
    recovery ladder was exhausted."""


class SupportEmpty(RuntimeError):
    """Support extraction produced no entries at the given tolerance."""


class Diverged(RuntimeError):
    """Solver state became non-finite."""
