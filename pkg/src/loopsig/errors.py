"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class CapacityError(ValueError):
    """A request exceeds a configured size budget (enumeration or signature cap)."""
