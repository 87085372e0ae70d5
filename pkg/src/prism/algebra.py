"""Modular arithmetic, subgroup generators, permutations and the PSU PRG.

Vector routines operate on numpy arrays.  When a modulus is small enough that
a product of two residues fits in 64 bits they stay on ``uint64``; otherwise
they fall back to Python integers held in ``object`` arrays.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import gmpy2
import numpy as np

from .errors import ParameterError

MILLER_RABIN_ROUNDS = 40
_FAST_LIMIT = 1 << 32


def is_prime(n: int) -> bool:
    return n >= 2 and bool(gmpy2.is_prime(n, MILLER_RABIN_ROUNDS))


def next_prime(n: int) -> int:
    """Smallest prime strictly greater than ``n``."""
    return int(gmpy2.next_prime(n))


def mod_pow(base: int, exp: int, modulus: int) -> int:
    if modulus < 2:
        raise ParameterError(f"modulus must be >= 2, got {modulus}")
    if exp < 0:
        raise ParameterError(f"exponent must be non-negative, got {exp}")
    return pow(base, exp, modulus)


class OpCounter:
    """Tallies per-cell modular multiplications done by :func:`pow_vector`."""

    def __init__(self):
        self.multiplications = 0

    def add(self, n: int) -> None:
        self.multiplications += n


def pow_vector(base: int, exps: np.ndarray, modulus: int, exp_bits: int,
               counter: OpCounter | None = None) -> np.ndarray:
    """``base ** exps[i] mod modulus`` for every cell.

    Right-to-left square-and-multiply with a fixed ladder of ``exp_bits``
    steps: every cell performs exactly ``exp_bits`` multiplications whatever
    its exponent, so the work done is independent of the data.
    """
    if modulus < 2:
        raise ParameterError(f"modulus must be >= 2, got {modulus}")
    exps = np.asarray(exps)
    if modulus < _FAST_LIMIT:
        e = exps.astype(np.uint64)
        result = np.ones(e.shape, dtype=np.uint64)
        mod = np.uint64(modulus)
        one = np.uint64(1)
        square = base % modulus
        for bit in range(exp_bits):
            take = (e >> np.uint64(bit)) & one
            product = (result * np.uint64(square)) % mod
            result = np.where(take == one, product, result)
            square = square * square % modulus
    else:
        e = [int(x) for x in exps.ravel()]
        result = np.ones(len(e), dtype=object)
        square = base % modulus
        for bit in range(exp_bits):
            for i, x in enumerate(e):
                product = result[i] * square % modulus
                if (x >> bit) & 1:
                    result[i] = product
            square = square * square % modulus
        result = result.reshape(exps.shape)
    if counter is not None:
        counter.add(exp_bits * int(exps.size))
    return result


def mul_vector(a: np.ndarray, b: np.ndarray, modulus: int) -> np.ndarray:
    """Elementwise ``a * b mod modulus``."""
    if modulus < _FAST_LIMIT:
        return (np.asarray(a).astype(np.uint64) * np.asarray(b).astype(np.uint64)) % np.uint64(modulus)
    a = np.asarray(a, dtype=object)
    b = np.asarray(b, dtype=object)
    return (a * b) % modulus


@dataclass(frozen=True)
class GroupParams:
    """Moduli for the additive group Z_delta and the order-delta subgroup mod eta."""

    delta: int
    eta: int
    eta_prime: int
    g: int

    @property
    def alpha(self) -> int:
        return self.eta_prime // self.eta

    def validate(self, m: int | None = None) -> None:
        if not is_prime(self.delta):
            raise ParameterError(f"delta={self.delta} is not prime")
        if not is_prime(self.eta):
            raise ParameterError(f"eta={self.eta} is not prime")
        if (self.eta - 1) % self.delta:
            raise ParameterError(f"delta={self.delta} does not divide eta-1={self.eta - 1}")
        if m is not None and self.delta <= m:
            raise ParameterError(f"delta={self.delta} must exceed the owner count {m}")
        if self.eta_prime % self.eta or self.eta_prime // self.eta < 2:
            raise ParameterError(f"eta'={self.eta_prime} is not alpha*eta with alpha >= 2")
        if not has_order(self.g, self.delta, self.eta):
            raise ParameterError(f"g={self.g} does not have order {self.delta} mod {self.eta}")


def has_order(g: int, order: int, modulus: int) -> bool:
    """True iff ``g`` has multiplicative order exactly ``order`` (``order`` prime)."""
    g %= modulus
    return g != 1 and pow(g, order, modulus) == 1


def find_subgroup_generator(eta: int, delta: int, seed: int = 0) -> int:
    """Return an element of order ``delta`` modulo the prime ``eta``.

    Candidates ``h`` are walked deterministically starting from a point fixed
    by ``seed``; ``h ** ((eta - 1) / delta)`` is taken and the trivial result 1
    is skipped.
    """
    if eta < 3 or delta < 2 or (eta - 1) % delta:
        raise ParameterError(f"delta={delta} must divide eta-1={eta - 1}")
    cofactor = (eta - 1) // delta
    span = eta - 2  # candidates 2 .. eta-1
    start = seed % span
    for step in range(span):
        h = 2 + (start + step) % span
        g = pow(h, cofactor, eta)
        if g != 1:
            return g
    raise ParameterError(f"no element of order {delta} modulo {eta}")  # unreachable for prime eta


@dataclass(frozen=True, eq=False)
class Permutation:
    """A bijection on ``{0..n-1}``.

    ``apply`` moves the element at position ``i`` to position ``mapping[i]``,
    so ``compose(p, q).apply(v) == p.apply(q.apply(v))``.
    """

    mapping: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.mapping, dtype=np.int64)
        n = arr.size
        if arr.ndim != 1 or n == 0:
            raise ParameterError("permutation must be a non-empty 1-D index array")
        seen = np.zeros(n, dtype=bool)
        if arr.min() < 0 or arr.max() >= n:
            raise ParameterError("permutation indices out of range")
        seen[arr] = True
        if not seen.all():
            raise ParameterError("mapping is not a bijection")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "mapping", arr)

    @property
    def n(self) -> int:
        return int(self.mapping.size)

    @classmethod
    def identity(cls, n: int) -> Permutation:
        return cls(np.arange(n))

    def __call__(self, i: int) -> int:
        return int(self.mapping[i])

    def __eq__(self, other) -> bool:
        return isinstance(other, Permutation) and np.array_equal(self.mapping, other.mapping)

    def __hash__(self) -> int:
        return hash(self.mapping.tobytes())

    def __repr__(self) -> str:
        return f"Permutation({self.mapping.tolist()})"

    def inverse(self) -> Permutation:
        inv = np.empty(self.n, dtype=np.int64)
        inv[self.mapping] = np.arange(self.n)
        return Permutation(inv)

    def apply(self, values):
        values = np.asarray(values)
        if values.shape[0] != self.n:
            raise ParameterError(f"vector of length {values.shape[0]} cannot take a permutation of {self.n}")
        out = np.empty_like(values)
        out[self.mapping] = values
        return out

    def unapply(self, values):
        return self.inverse().apply(values)


def gen_permutation(seed: int, n: int) -> Permutation:
    if n < 1:
        raise ParameterError("permutation length must be >= 1")
    # Generator.permutation is a Fisher-Yates shuffle driven by PCG64
    return Permutation(np.random.default_rng(seed).permutation(n))


def compose_permutations(p: Permutation, q: Permutation) -> Permutation:
    """``r(i) = p(q(i))``."""
    if p.n != q.n:
        raise ParameterError(f"cannot compose permutations of length {p.n} and {q.n}")
    return Permutation(p.mapping[q.mapping])


def prg_sequence(seed: int, count: int, delta: int) -> np.ndarray:
    """Deterministic values in ``[1, delta-1]``.

    Counter-mode BLAKE2b keyed by ``seed``; 64-bit words are masked to the bit
    length of ``delta - 2`` and rejected when out of range, so there is no
    modulo bias.
    """
    if count < 1:
        raise ParameterError("count must be >= 1")
    if delta < 3:
        raise ParameterError("delta must be >= 3")
    key = int(seed).to_bytes(32, "little", signed=False) if seed >= 0 else hashlib.blake2b(
        str(seed).encode(), digest_size=32).digest()
    span = delta - 1
    mask = np.uint64((1 << (span - 1).bit_length()) - 1) if span > 1 else np.uint64(0)
    out = []
    have = 0
    counter = 0
    while have < count:
        # acceptance rate is > 1/2, so ask for a bit more than twice the shortfall
        blocks = max(1, (2 * (count - have) + 16) // 8)
        raw = b"".join(
            hashlib.blake2b(c.to_bytes(8, "little"), key=key, digest_size=64).digest()
            for c in range(counter, counter + blocks))
        counter += blocks
        words = np.frombuffer(raw, dtype="<u8") & mask
        accepted = words[words < np.uint64(span)]
        out.append(accepted)
        have += accepted.size
    values = np.concatenate(out)[:count].astype(np.int64) + 1
    return values
