"""Additive shares over Z_delta and degree-1 Shamir shares over F_p."""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

SHAMIR_DEGREE = 1
SHAMIR_SERVERS = 3
ADDITIVE_SERVERS = 2


class RandomStream:
    """Seeded source of uniform residues; the only randomness roles consume."""

    def __init__(self, seed):
        self._gen = np.random.default_rng(seed)

    def below(self, bound: int, size: int | None = None):
        """Uniform integers in ``[0, bound)``; an array when ``size`` is given."""
        if bound < 1:
            raise ParameterError(f"bound must be >= 1, got {bound}")
        if bound <= (1 << 62):
            if size is None:
                return int(self._gen.integers(0, bound))
            return self._gen.integers(0, bound, size=size, dtype=np.int64)
        # wide moduli: draw 64 extra bits then reduce, bias < 2^-64
        words = (bound.bit_length() + 63) // 64 + 1
        n = 1 if size is None else size
        raw = self._gen.integers(0, 1 << 63, size=(n, words), dtype=np.int64)
        vals = np.empty(n, dtype=object)
        for i in range(n):
            acc = 0
            for w in raw[i]:
                acc = (acc << 63) | int(w)
            vals[i] = acc % bound
        return int(vals[0]) if size is None else vals


class ScriptedStream:
    """Replays fixed values; for reproducing worked examples exactly."""

    def __init__(self, values: Sequence[int], fallback: RandomStream | None = None):
        self._values = list(values)
        self._pos = 0
        self._fallback = fallback

    def below(self, bound: int, size: int | None = None):
        n = 1 if size is None else size
        out = []
        for _ in range(n):
            if self._pos < len(self._values):
                v = self._values[self._pos] % bound
                self._pos += 1
            elif self._fallback is not None:
                v = self._fallback.below(bound)
            else:
                raise ParameterError("scripted randomness exhausted")
            out.append(v)
        if size is None:
            return out[0]
        if bound <= (1 << 62):
            return np.array(out, dtype=np.int64)
        return np.array(out, dtype=object)


@dataclass(frozen=True)
class AdditiveShare:
    value: int
    modulus: int
    server_index: int

    def __post_init__(self):
        if not 0 <= self.value < self.modulus:
            raise ParameterError(f"share {self.value} outside [0, {self.modulus})")


@dataclass(frozen=True)
class ShamirShare:
    x: int
    y: int
    p: int

    def __post_init__(self):
        if self.x < 1:
            raise ParameterError(f"evaluation point must be >= 1, got {self.x}")
        if not 0 <= self.y < self.p:
            raise ParameterError(f"share value {self.y} outside [0, {self.p})")


def additive_share(secret: int, modulus: int, count: int, rng) -> list[AdditiveShare]:
    if count < 2:
        raise ParameterError("need at least two additive shares")
    if not 0 <= secret < modulus:
        raise ParameterError(f"secret {secret} outside [0, {modulus})")
    parts = [int(rng.below(modulus)) for _ in range(count - 1)]
    parts.append((secret - sum(parts)) % modulus)
    return [AdditiveShare(v, modulus, i + 1) for i, v in enumerate(parts)]


def additive_reconstruct(shares: Sequence[AdditiveShare]) -> int:
    if not shares:
        raise ParameterError("no shares to reconstruct")
    modulus = shares[0].modulus
    if any(s.modulus != modulus for s in shares):
        raise ParameterError("shares use different moduli")
    indices = [s.server_index for s in shares]
    if len(set(indices)) != len(indices):
        raise ParameterError("duplicate server index among shares")
    return sum(s.value for s in shares) % modulus


def additive_share_vector(secrets, modulus: int, rng, count: int = ADDITIVE_SERVERS) -> list[np.ndarray]:
    """Share every cell of ``secrets``; returns one vector per server."""
    secrets = np.asarray(secrets)
    n = secrets.shape[0]
    wide = modulus > (1 << 62)
    parts = [rng.below(modulus, n) for _ in range(count - 1)]
    if wide:
        total = np.zeros(n, dtype=object)
        for p in parts:
            total = total + np.asarray(p, dtype=object)
        last = (np.asarray(secrets, dtype=object) - total) % modulus
    else:
        total = np.zeros(n, dtype=np.int64)
        for p in parts:
            total = (total + p) % modulus
        last = (secrets.astype(np.int64) - total) % modulus
    return [*parts, last]


def reconstruct_vector(vectors: Sequence[np.ndarray], modulus: int) -> np.ndarray:
    if modulus > (1 << 62):
        total = np.zeros(len(vectors[0]), dtype=object)
        for v in vectors:
            total = (total + np.asarray(v, dtype=object)) % modulus
        return total
    total = np.zeros(len(vectors[0]), dtype=np.int64)
    for v in vectors:
        total = (total + np.asarray(v, dtype=np.int64)) % modulus
    return total


def _poly_eval(coeffs: Sequence[int], x: int, p: int) -> int:
    acc = 0
    for c in reversed(coeffs):
        acc = (acc * x + c) % p
    return acc


def shamir_share(secret: int, p: int, degree: int, n: int, rng) -> list[ShamirShare]:
    if n <= degree:
        raise ParameterError(f"{n} shares cannot recover a degree-{degree} polynomial")
    if not 0 <= secret < p:
        raise ParameterError(f"secret {secret} outside [0, {p})")
    coeffs = [secret] + [int(rng.below(p)) for _ in range(degree)]
    return [ShamirShare(x, _poly_eval(coeffs, x, p), p) for x in range(1, n + 1)]


def shamir_share_vector(secrets, p: int, rng, degree: int = SHAMIR_DEGREE,
                        n: int = SHAMIR_SERVERS) -> list[np.ndarray]:
    """Shamir-share every cell; element ``k`` of the result is the vector for x = k+1."""
    if n <= degree:
        raise ParameterError(f"{n} shares cannot recover a degree-{degree} polynomial")
    secrets = np.asarray([int(s) for s in np.asarray(secrets).ravel()], dtype=object)
    size = secrets.shape[0]
    coeffs = [secrets % p] + [np.asarray(rng.below(p, size), dtype=object) for _ in range(degree)]
    out = []
    for x in range(1, n + 1):
        acc = np.zeros(size, dtype=object)
        for c in reversed(coeffs):
            acc = (acc * x + c) % p
        out.append(acc)
    return out


def lagrange_coefficients(xs: Sequence[int], p: int, at: int = 0) -> list[int]:
    if len(set(xs)) != len(xs):
        raise ParameterError(f"duplicate evaluation points {list(xs)}")
    coeffs = []
    for i, xi in enumerate(xs):
        num, den = 1, 1
        for j, xj in enumerate(xs):
            if i != j:
                num = num * (at - xj) % p
                den = den * (xi - xj) % p
        coeffs.append(num * pow(den, -1, p) % p)
    return coeffs


def lagrange_interpolate(shares: Sequence[ShamirShare], at: int = 0) -> int:
    if not shares:
        raise ParameterError("no shares to interpolate")
    p = shares[0].p
    if any(s.p != p for s in shares):
        raise ParameterError("shares use different fields")
    lam = lagrange_coefficients([s.x for s in shares], p, at)
    return sum(c * s.y for c, s in zip(lam, shares)) % p


def lagrange_vector(xs: Sequence[int], vectors: Sequence[np.ndarray], p: int, at: int = 0) -> np.ndarray:
    """Interpolate cell by cell; ``vectors[k]`` holds the shares evaluated at ``xs[k]``."""
    lam = lagrange_coefficients(list(xs), p, at)
    acc = np.zeros(len(vectors[0]), dtype=object)
    for c, v in zip(lam, vectors):
        acc = (acc + c * np.asarray(v, dtype=object)) % p
    return acc
