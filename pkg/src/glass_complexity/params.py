"""Parameter containers shared by all modules."""
from __future__ import annotations

from dataclasses import dataclass, asdict


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of a formula."""


@dataclass(frozen=True)
class ModelParams:
    """Exponents (p, q) of the two sphere factors and the aspect ratio gamma."""

    p: int
    q: int
    gamma: float

    def __post_init__(self):
        if int(self.p) != self.p or int(self.q) != self.q:
            raise DomainError(f"p and q must be integers, got {self.p}, {self.q}")
        if self.p < 2 or self.q < 2:
            raise DomainError(f"p, q must be >= 2, got p={self.p}, q={self.q}")
        if not (0.0 < self.gamma < 1.0):
            raise DomainError(f"gamma must lie in (0,1), got {self.gamma}")
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "q", int(self.q))
        object.__setattr__(self, "gamma", float(self.gamma))

    def swapped(self) -> "ModelParams":
        """Relabel the two factors: (p, q, gamma) -> (q, p, 1 - gamma)."""
        return ModelParams(self.q, self.p, 1.0 - self.gamma)

    @property
    def variance_profile(self):
        """Block coefficients (a, b, c, d) of the two-block self-energy.

        Row 0 reads a*m0 + b*m1, row 1 reads c*m0 + d*m1.
        """
        g = self.gamma
        return (
            g * (self.p - 1) / self.p,
            1.0 - g,
            g,
            (1.0 - g) * (self.q - 1) / self.q,
        )

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class OverlapPoint:
    r: float
    t: float

    def __post_init__(self):
        if not (abs(self.r) < 1 and abs(self.t) < 1):
            raise DomainError(f"overlaps must satisfy |r|,|t| < 1, got ({self.r}, {self.t})")
