"""Regularity descriptors shared by dimension selection and budget formulas."""

from dataclasses import dataclass

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class Holder:
    """Holder regularity with exponent alpha in (0, 1]."""

    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise InvalidArgumentError(f"alpha must be in (0, 1], got {self.alpha}")


@dataclass(frozen=True)
class Smooth:
    """C^k smoothness with order k >= 1."""

    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InvalidArgumentError(f"k must be a positive integer, got {self.k}")
        object.__setattr__(self, "k", int(self.k))
