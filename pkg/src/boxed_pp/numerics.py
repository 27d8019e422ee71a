"""Scalar special functions shared by the rest of the package.

Everything here is pure.  Large products go through :class:`LogSignedValue`
so that factors such as ``q**(x*(2N+T-1))`` never overflow a double.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Iterable

import numpy as np

THETA_TAIL = 1e-17
THETA_MAX_TERMS = 10_000


class DomainError(ValueError):
    """Raised when a special function is evaluated outside its domain."""


@dataclass(frozen=True)
class LogSignedValue:
    """A real number stored as ``sign * exp(log_abs)``."""

    log_abs: float
    sign: int

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or 1, got {self.sign}")
        if self.sign == 0 and self.log_abs != -math.inf:
            object.__setattr__(self, "log_abs", -math.inf)

    @classmethod
    def from_value(cls, value: float) -> "LogSignedValue":
        value = float(value)
        if value == 0.0:
            return cls(-math.inf, 0)
        return cls(math.log(abs(value)), 1 if value > 0 else -1)

    @classmethod
    def one(cls) -> "LogSignedValue":
        return cls(0.0, 1)

    @classmethod
    def product(cls, factors: Iterable) -> "LogSignedValue":
        out = cls.one()
        for f in factors:
            out = out * f
        return out

    def _coerce(self, other) -> "LogSignedValue":
        return other if isinstance(other, LogSignedValue) else LogSignedValue.from_value(other)

    def __mul__(self, other) -> "LogSignedValue":
        other = self._coerce(other)
        if self.sign == 0 or other.sign == 0:
            return LogSignedValue(-math.inf, 0)
        return LogSignedValue(self.log_abs + other.log_abs, self.sign * other.sign)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "LogSignedValue":
        other = self._coerce(other)
        if other.sign == 0:
            raise ZeroDivisionError("division by a zero LogSignedValue")
        if self.sign == 0:
            return self
        return LogSignedValue(self.log_abs - other.log_abs, self.sign * other.sign)

    def __pow__(self, k: int) -> "LogSignedValue":
        if self.sign == 0:
            return self if k > 0 else LogSignedValue.one()
        return LogSignedValue(self.log_abs * k, self.sign if k % 2 else 1)

    def inverse(self) -> "LogSignedValue":
        return LogSignedValue.one() / self

    def value(self) -> float:
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(self.log_abs)


def normalize_log_weights(logs) -> np.ndarray:
    """Turn an array of (possibly complex) log-weights into probabilities.

    Complex logs carry the phase of the weight; the common phase cancels in
    the normalization and the imaginary remainder is discarded after a check.
    """
    logs = np.asarray(logs)
    finite = np.isfinite(logs.real)
    if not finite.any():
        raise ValueError("all weights vanish")
    shift = logs.real[finite].max()
    vals = np.where(finite, np.exp(np.where(finite, logs - shift, 0)), 0)
    total = vals.sum()
    probs = vals / total
    if np.iscomplexobj(probs):
        scale = np.abs(probs).max()
        if np.abs(probs.imag).max() > 1e-8 * max(scale, 1.0):
            raise ValueError("weights do not share a common phase")
        probs = probs.real
    return probs


def q_pochhammer(a, q, n: int):
    """``(a; q)_n = prod_{i<n} (1 - a q^i)``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    out = 1.0
    term = a
    for _ in range(n):
        out *= 1 - term
        term *= q
    return out


def log_q_pochhammer(a, q, n: int) -> LogSignedValue:
    """Log-domain ``(a; q)_n`` for real arguments."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    acc = LogSignedValue.one()
    term = a
    for _ in range(n):
        acc = acc * (1 - term)
        term *= q
    return acc


def _check_nome(p) -> None:
    if not (0 <= abs(p) < 1):
        raise DomainError(f"elliptic nome must satisfy |p| < 1, got {p}")


def theta_p(x, p):
    """Multiplicative theta function ``prod_{i>=0} (1 - p^i x)(1 - p^{i+1}/x)``.

    The product is cut once ``p^k * max(|x|, 1/|x|)`` drops below 1e-17.
    """
    if x == 0:
        raise DomainError("theta_p is undefined at x = 0")
    _check_nome(p)
    out = 1 - x
    if p == 0:
        return out
    big = max(abs(x), 1 / abs(x))
    pk = p
    for _ in range(THETA_MAX_TERMS):
        if abs(pk) * big < THETA_TAIL:
            break
        out *= (1 - pk * x) * (1 - pk / x)
        pk *= p
    return out


def theta_multi(p, *xs):
    """``theta_p(a, b, c, ...)`` shorthand for the product of theta values."""
    return reduce(lambda acc, x: acc * theta_p(x, p), xs, 1.0)


def theta_pochhammer(x, p, q, k: int):
    """Elliptic shifted factorial ``prod_{0<=i<k} theta_p(q^i x)``."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    out = 1.0
    arg = x
    for _ in range(k):
        out *= theta_p(arg, p)
        arg *= q
    return out
