"""Shared fixtures data: the three-hospital tables and random instance generation."""
import numpy as np

from prism.algebra import Permutation
from prism.params import generate_params
from prism.query import OwnerRelation, QuerySpec

DISEASES = ["Cancer", "Fever", "Heart"]
HOSPITALS = [
    [("John", 4, "Cancer", 100), ("Adam", 6, "Cancer", 200), ("Mike", 2, "Heart", 300)],
    [("John", 8, "Cancer", 100), ("Adam", 5, "Fever", 70), ("Bob", 4, "Fever", 50)],
    [("Carl", 8, "Cancer", 300), ("John", 4, "Cancer", 700), ("Lisa", 5, "Heart", 500)],
]


def hospitals():
    dom = {"disease": list(DISEASES)}
    return [OwnerRelation(rows=[{"name": n, "age": a, "disease": d, "cost": c} for n, a, d, c in h],
                          domains=dom) for h in HOSPITALS]


def hospital_params(seed=0):
    return generate_params(3, 3, domain_max=2000, seed=seed)


def tiny_group_params(**extra):
    """delta=5, eta=11, eta'=143, g=3 with m=3 and m shared as 1 + 2."""
    ident = Permutation.identity(3)
    base = dict(delta=5, eta=11, eta_prime=143, g=3, m_shares=(1, 2), pf_db1=ident, pf_db2=ident, pf_i=ident)
    base.update(extra)
    return generate_params(3, 3, domain_max=8, seed=0, **base)


def max_example_params():
    return tiny_group_params(F_coeffs=(1, 1, 1, 1, 1), max_modulus=5003, pf_shared=Permutation([2, 0, 1]))


def random_instance(rng, m=None, b=None, presence=0.75, max_rows=3, payload_max=100):
    """Owners over a single set attribute ``k`` with aggregate columns ``x`` and ``y``."""
    m = m if m is not None else int(rng.integers(2, 7))
    b = b if b is not None else int(rng.integers(4, 65))
    labels = [f"c{i}" for i in range(b)]
    owners = []
    most = 1
    for _ in range(m):
        rows = []
        for i in range(b):
            if rng.random() < presence:
                k = int(rng.integers(1, max_rows + 1))
                most = max(most, k)
                for _ in range(k):
                    rows.append({"k": labels[i], "x": int(rng.integers(1, payload_max + 1)),
                                 "y": int(rng.integers(1, payload_max + 1))})
        rng.shuffle(rows)
        owners.append(OwnerRelation(rows=rows, domains={"k": labels}))
    return owners, m, b, most * payload_max


def random_spec(rng, op):
    agg = ("x",) if rng.random() < 0.6 else ("x", "y")
    over = "psi" if op == "median" or rng.random() < 0.6 else "psu"
    if op in ("psi", "psu"):
        return QuerySpec(op=op, set_attr="k", verify=op == "psi" and rng.random() < 0.5)
    if op == "count":
        return QuerySpec(op=op, set_attr="k", over=over)
    return QuerySpec(op=op, set_attr="k", agg_attrs=agg, over=over,
                     reveal_max_identity=op == "max" and rng.random() < 0.5)


def rng_for(seed):
    return np.random.default_rng(seed)
