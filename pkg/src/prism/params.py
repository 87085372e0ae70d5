"""Initiator: parameter generation, per-role views and parameter files."""
from __future__ import annotations

import hashlib
import io
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .algebra import (GroupParams, Permutation, compose_permutations, find_subgroup_generator,
                      gen_permutation, is_prime, next_prime)
from .errors import ParameterError, VisibilityError
from .sharing import RandomStream, additive_share

FORMAT_MAGIC = b"PRSMPARM"
FORMAT_VERSION = 1
ROLES = ("owner", "server1", "server2", "server3", "announcer")
ENV_PARAMS_DIR = "PRISM_PARAMS_DIR"

# 32-bit cap keeps every product of two residues inside uint64 on the servers
_ETA_PRIME_LIMIT = (1 << 32) - 1


def poly_eval(coeffs, x: int) -> int:
    """Evaluate ``a_0 + a_1 x + ...`` exactly (coefficients low order first)."""
    acc = 0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


@dataclass(frozen=True)
class PublicParams:
    """Everything the initiator knows.  Never hand this to a role directly."""

    group: GroupParams
    m: int
    b: int
    domain_max: int
    F_coeffs: tuple
    pf_i: Permutation
    pf_s1: Permutation
    pf_s2: Permutation
    pf_db1: Permutation
    pf_db2: Permutation
    pf_shared: Permutation
    prg_seed: int
    shamir_p: int
    max_modulus: int
    m_shares: tuple

    def F(self, x: int) -> int:
        return poly_eval(self.F_coeffs, x)

    def validate(self) -> None:
        if self.m < 2:
            raise ParameterError("need at least two owners")
        if self.b < 1:
            raise ParameterError("domain size must be >= 1")
        self.group.validate(self.m)
        if len(self.F_coeffs) != self.m + 2 or any(a <= 0 for a in self.F_coeffs):
            raise ParameterError("F needs m+2 positive coefficients (degree m+1)")
        for name in ("pf_i", "pf_s1", "pf_s2", "pf_db1", "pf_db2"):
            if getattr(self, name).n != self.b:
                raise ParameterError(f"{name} must permute {self.b} cells")
        if self.pf_shared.n != self.m:
            raise ParameterError("pf_shared must permute the m owners")
        if compose_permutations(self.pf_s1, self.pf_db1) != self.pf_i:
            raise ParameterError("pf_s1 . pf_db1 != pf_i")
        if compose_permutations(self.pf_s2, self.pf_db2) != self.pf_i:
            raise ParameterError("pf_s2 . pf_db2 != pf_i")
        if len(self.m_shares) != 2 or sum(self.m_shares) % self.group.delta != self.m % self.group.delta:
            raise ParameterError("m_shares do not reconstruct m")
        if not is_prime(self.shamir_p):
            raise ParameterError("shamir_p is not prime")
        if not is_prime(self.max_modulus):
            raise ParameterError("max_modulus is not prime")


def noise_cap(F_coeffs, M: int, m: int) -> int:
    """Largest noise r keeping ``F(M) + r < F(M+1)``, also capped at ``M ** m``."""
    gap = poly_eval(F_coeffs, M + 1) - poly_eval(F_coeffs, M) - 1
    return max(0, min(M ** m, gap))


def generate_params(m: int, b: int, domain_max: int = 1000, seed: int = 0, **overrides) -> PublicParams:
    """Generate a complete, validated parameter set.

    Any field of :class:`PublicParams` (plus ``delta``, ``eta``, ``eta_prime``
    and ``g``) may be forced through ``overrides``; the rest is derived
    deterministically from ``seed``.
    """
    if m < 2:
        raise ParameterError("need at least two owners")
    if b < 1:
        raise ParameterError("domain size must be >= 1")
    if domain_max < 1:
        raise ParameterError("domain_max must be >= 1")
    unknown = set(overrides) - set(PublicParams.__dataclass_fields__) - {"delta", "eta", "eta_prime", "g"}
    if unknown:
        raise ParameterError(f"unknown overrides: {sorted(unknown)}")
    rng = np.random.default_rng(seed)

    def draw(hi: int) -> int:
        return int(rng.integers(0, hi))

    delta = overrides.get("delta")
    if delta is None:
        delta = next_prime(max(m, (1 << 15) + draw(1 << 14)))
    eta = overrides.get("eta")
    if eta is None:
        k = 2 * (1 + draw(16))
        while not is_prime(k * delta + 1):
            k += 2
        eta = k * delta + 1
    eta_prime = overrides.get("eta_prime")
    if eta_prime is None:
        hi = max(2, _ETA_PRIME_LIMIT // eta)
        eta_prime = eta * (2 + draw(hi - 1))
    g = overrides.get("g")
    if g is None:
        g = find_subgroup_generator(eta, delta, draw(1 << 30))
    group = GroupParams(delta=delta, eta=eta, eta_prime=eta_prime, g=g)

    F_coeffs = tuple(int(a) for a in overrides.get("F_coeffs", rng.integers(1, 101, size=m + 2)))

    pf_i = overrides.get("pf_i") or gen_permutation(draw(1 << 62), b)
    pf_db1 = overrides.get("pf_db1") or gen_permutation(draw(1 << 62), b)
    pf_db2 = overrides.get("pf_db2") or gen_permutation(draw(1 << 62), b)
    pf_s1 = overrides.get("pf_s1") or compose_permutations(pf_i, pf_db1.inverse())
    pf_s2 = overrides.get("pf_s2") or compose_permutations(pf_i, pf_db2.inverse())
    pf_shared = overrides.get("pf_shared") or gen_permutation(draw(1 << 62), m)

    prg_seed = overrides.get("prg_seed", draw(1 << 62))
    shamir_p = overrides.get("shamir_p")
    if shamir_p is None:
        shamir_p = next_prime(max((1 << 60) + draw(1 << 59), m * domain_max ** 2 + 1))
    max_modulus = overrides.get("max_modulus")
    if max_modulus is None:
        max_modulus = next_prime(2 * poly_eval(F_coeffs, domain_max + 1) + draw(1 << 20))
    m_shares = overrides.get("m_shares")
    if m_shares is None:
        shares = additive_share(m % delta, delta, 2, RandomStream(draw(1 << 62)))
        m_shares = tuple(s.value for s in shares)

    params = PublicParams(group=group, m=m, b=b, domain_max=domain_max, F_coeffs=F_coeffs,
                          pf_i=pf_i, pf_s1=pf_s1, pf_s2=pf_s2, pf_db1=pf_db1, pf_db2=pf_db2,
                          pf_shared=pf_shared, prg_seed=int(prg_seed), shamir_p=int(shamir_p),
                          max_modulus=int(max_modulus), m_shares=tuple(int(v) for v in m_shares))
    params.validate()
    return params


_OWNER_FIELDS = ("m", "b", "delta", "eta", "domain_max", "F_coeffs", "pf_db1", "pf_db2",
                 "pf_shared", "shamir_p", "max_modulus")
_SERVER_FIELDS = ("m", "b", "delta", "g", "eta_prime", "prg_seed", "pf_s1", "pf_s2",
                  "pf_shared", "shamir_p")
_ANNOUNCER_FIELDS = ("delta", "max_modulus")


@dataclass(frozen=True)
class RoleView:
    """The subset of parameters one role is allowed to know.

    Attribute access to anything outside the subset raises
    :class:`VisibilityError`.
    """

    role: str
    fields: dict = field(default_factory=dict)

    def __getattr__(self, name):
        if name.startswith("__"):
            raise AttributeError(name)
        try:
            return self.__dict__["fields"][name]
        except KeyError:
            raise VisibilityError(f"{self.__dict__['role']} cannot see {name!r}") from None

    def __contains__(self, name) -> bool:
        return name in self.fields

    def F(self, x: int) -> int:
        return poly_eval(self.F_coeffs, x)

    def __eq__(self, other) -> bool:
        return (isinstance(other, RoleView) and self.role == other.role
                and self.fields.keys() == other.fields.keys()
                and all(self.fields[k] == other.fields[k] for k in self.fields))


def _lookup(params: PublicParams, name: str):
    if name in ("delta", "eta", "eta_prime", "g"):
        return getattr(params.group, name)
    return getattr(params, name)


def view_for(params: PublicParams, role: str) -> RoleView:
    if role == "owner":
        names = _OWNER_FIELDS
    elif role in ("server1", "server2", "server3"):
        names = _SERVER_FIELDS
    elif role == "announcer":
        names = _ANNOUNCER_FIELDS
    else:
        raise ParameterError(f"unknown role {role!r}")
    fields = {n: _lookup(params, n) for n in names}
    if role in ("server1", "server2"):
        fields["m_share"] = params.m_shares[int(role[-1]) - 1]
    return RoleView(role, fields)


# -- parameter files -------------------------------------------------------

_T_INT, _T_INTS, _T_PERM = 0, 1, 2


def _u64(v: int) -> bytes:
    return struct.pack("<Q", v)


def _bigint(v: int) -> bytes:
    if v < 0:
        raise ParameterError("parameter files hold non-negative integers only")
    limbs = []
    while True:
        limbs.append(v & 0xFFFFFFFFFFFFFFFF)
        v >>= 64
        if not v:
            break
    return _u64(len(limbs)) + b"".join(_u64(x) for x in limbs)


def _bytes_field(raw: bytes) -> bytes:
    return _u64(len(raw)) + raw


def encode_view(view: RoleView) -> bytes:
    """Canonical encoding: length-prefixed fields in sorted order, LE 64-bit words."""
    body = io.BytesIO()
    body.write(FORMAT_MAGIC)
    body.write(_u64(FORMAT_VERSION))
    body.write(_bytes_field(view.role.encode()))
    body.write(_u64(len(view.fields)))
    for name in sorted(view.fields):
        value = view.fields[name]
        body.write(_bytes_field(name.encode()))
        if isinstance(value, Permutation):
            body.write(_u64(_T_PERM))
            body.write(_u64(value.n))
            body.write(value.mapping.astype("<u8").tobytes())
        elif isinstance(value, tuple):
            body.write(_u64(_T_INTS))
            body.write(_u64(len(value)))
            for v in value:
                body.write(_bigint(int(v)))
        else:
            body.write(_u64(_T_INT))
            body.write(_bigint(int(value)))
    raw = body.getvalue()
    return raw + hashlib.sha256(raw).digest()


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise ParameterError("truncated parameter file")
        chunk = self.raw[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def bigint(self) -> int:
        n = self.u64()
        v = 0
        for i in range(n):
            v |= self.u64() << (64 * i)
        return v

    def blob(self) -> bytes:
        return self.take(self.u64())


def decode_view(raw: bytes) -> RoleView:
    if len(raw) < 32 or hashlib.sha256(raw[:-32]).digest() != raw[-32:]:
        raise ParameterError("parameter file digest mismatch")
    r = _Reader(raw[:-32])
    if r.take(len(FORMAT_MAGIC)) != FORMAT_MAGIC:
        raise ParameterError("not a parameter file")
    version = r.u64()
    if version != FORMAT_VERSION:
        raise ParameterError(f"unsupported parameter file version {version}")
    role = r.blob().decode()
    fields = {}
    for _ in range(r.u64()):
        name = r.blob().decode()
        tag = r.u64()
        if tag == _T_PERM:
            n = r.u64()
            fields[name] = Permutation(np.frombuffer(r.take(8 * n), dtype="<u8").astype(np.int64))
        elif tag == _T_INTS:
            fields[name] = tuple(r.bigint() for _ in range(r.u64()))
        elif tag == _T_INT:
            fields[name] = r.bigint()
        else:
            raise ParameterError(f"unknown field tag {tag}")
    if r.pos != len(r.raw):
        raise ParameterError("trailing bytes in parameter file")
    return RoleView(role, fields)


def params_dir(path=None) -> Path:
    if path is not None:
        return Path(path)
    return Path(os.environ.get(ENV_PARAMS_DIR, "."))


def write_param_files(params: PublicParams, directory) -> dict:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = {}
    for role in ROLES:
        path = directory / f"params.{role}"
        path.write_bytes(encode_view(view_for(params, role)))
        written[role] = path
    return written


def load_view(role: str, directory=None) -> RoleView:
    """Load the view for ``role``; owner roles ``ownerN`` all read ``params.owner``."""
    base = "owner" if role.startswith("owner") else role
    view = decode_view((params_dir(directory) / f"params.{base}").read_bytes())
    if view.role != base:
        raise ParameterError(f"params.{base} holds a {view.role} view")
    return view
