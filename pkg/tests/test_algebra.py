import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prism.algebra import (GroupParams, OpCounter, Permutation, compose_permutations,
                           find_subgroup_generator, gen_permutation, has_order, is_prime,
                           mod_pow, mul_vector, next_prime, pow_vector, prg_sequence)
from prism.errors import ParameterError

# elements of order exactly 5 modulo 11, enumerated by hand: k^5 = 1 and k != 1
ORDER5_MOD11 = {3, 4, 5, 9}


def test_mod_pow_worked_values():
    assert mod_pow(3, 3, 143) == 27
    assert mod_pow(3, 4, 143) == 81
    assert mod_pow(3, 0, 11) == 1


def test_mod_pow_rejects_small_modulus():
    with pytest.raises(ParameterError):
        mod_pow(3, 2, 1)
    with pytest.raises(ParameterError):
        mod_pow(3, -1, 11)


def test_primes():
    assert is_prime(5003) and is_prime(227) and is_prime(113)
    assert not is_prime(143) and not is_prime(1)
    assert next_prime(5000) == 5003


@pytest.mark.parametrize("seed", range(12))
def test_generator_mod_11_has_order_5(seed):
    g = find_subgroup_generator(11, 5, seed)
    assert g in ORDER5_MOD11
    assert pow(g, 5, 11) == 1
    assert all(pow(g, k, 11) != 1 for k in range(1, 5))


def test_generator_is_deterministic():
    assert find_subgroup_generator(11, 5, 7) == find_subgroup_generator(11, 5, 7)
    assert find_subgroup_generator(227, 113, 3) == find_subgroup_generator(227, 113, 3)


def test_generator_order_by_enumeration():
    g = 3
    powers = [pow(g, k, 11) for k in range(1, 6)]
    assert powers[-1] == 1 and 1 not in powers[:-1]
    assert sorted(powers) == [1, 3, 4, 5, 9]


def test_generator_rejects_non_divisor():
    with pytest.raises(ParameterError):
        find_subgroup_generator(11, 3, 0)


def test_group_params_validate():
    GroupParams(delta=5, eta=11, eta_prime=143, g=3).validate(m=3)
    GroupParams(delta=113, eta=227, eta_prime=227 * 5, g=find_subgroup_generator(227, 113)).validate(m=10)
    with pytest.raises(ParameterError):
        GroupParams(delta=5, eta=11, eta_prime=143, g=2).validate()  # 2 has order 10
    with pytest.raises(ParameterError):
        GroupParams(delta=5, eta=11, eta_prime=144, g=3).validate()
    with pytest.raises(ParameterError):
        GroupParams(delta=5, eta=11, eta_prime=143, g=3).validate(m=5)
    assert GroupParams(5, 11, 143, 3).alpha == 13


def test_has_order():
    assert has_order(3, 5, 11)
    assert not has_order(1, 5, 11)


def test_permutation_basics():
    assert gen_permutation(9, 1) == Permutation.identity(1)
    p = gen_permutation(4, 5)
    v = np.arange(10, 15)
    assert np.array_equal(p.unapply(p.apply(v)), v)
    assert compose_permutations(p, p.inverse()) == Permutation.identity(5)
    assert compose_permutations(Permutation.identity(5), p) == p
    with pytest.raises(ParameterError):
        gen_permutation(0, 0)
    with pytest.raises(ParameterError):
        Permutation([0, 0, 1])
    with pytest.raises(ParameterError):
        compose_permutations(p, Permutation.identity(4))


def test_seed_changes_permutation():
    draws = {tuple(gen_permutation(s, 8).mapping) for s in range(20)}
    assert len(draws) > 15


def test_apply_moves_element_to_mapped_slot():
    p = Permutation([2, 0, 1])
    assert p.apply(np.array([10, 20, 30])).tolist() == [20, 30, 10]
    assert p.inverse().mapping.tolist() == [1, 2, 0]


def test_permutation_is_read_only():
    p = gen_permutation(1, 4)
    with pytest.raises(ValueError):
        p.mapping[0] = 3


def test_prg_range_and_determinism():
    a = prg_sequence(42, 5000, 113)
    assert a.min() >= 1 and a.max() <= 112
    assert np.array_equal(a, prg_sequence(42, 5000, 113))
    assert not np.array_equal(a, prg_sequence(43, 5000, 113))


def test_prg_rejects_bad_arguments():
    with pytest.raises(ParameterError):
        prg_sequence(1, 0, 113)
    with pytest.raises(ParameterError):
        prg_sequence(1, 10, 2)


def test_prg_uniform_within_5_sigma():
    n, delta = 10_000, 113
    counts = np.bincount(prg_sequence(7, n, delta), minlength=delta)[1:]
    expected = n / (delta - 1)
    sigma = np.sqrt(expected * (1 - 1 / (delta - 1)))
    assert np.all(np.abs(counts - expected) < 5 * sigma)
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    # 111 degrees of freedom; mean 111, sd ~14.9
    assert chi2 < 111 + 5 * 14.9


def test_pow_vector_matches_builtin_both_paths():
    rng = np.random.default_rng(0)
    exps = rng.integers(0, 1 << 16, size=200)
    small = pow_vector(5, exps, 4_294_967_291, 16)
    assert [int(x) for x in small] == [pow(5, int(e), 4_294_967_291) for e in exps]
    big_mod = (1 << 61) - 1
    big = pow_vector(5, exps, big_mod, 16)
    assert [int(x) for x in big] == [pow(5, int(e), big_mod) for e in exps]


def test_pow_vector_work_independent_of_exponents():
    zeros, ones = OpCounter(), OpCounter()
    pow_vector(3, np.zeros(64, dtype=np.int64), 143, 3, zeros)
    pow_vector(3, np.full(64, 7), 143, 3, ones)
    assert zeros.multiplications == ones.multiplications == 64 * 3


def test_mul_vector():
    assert mul_vector(np.array([27, 81]), np.array([9, 27]), 11).tolist() == [1, 9]
    big = (1 << 61) - 1
    assert list(mul_vector(np.array([big - 1], dtype=object), np.array([2], dtype=object), big)) == [big - 2]


@given(st.integers(0, 112), st.integers(0, 112))
def test_subgroup_exponent_law(x, y):
    g, eta, delta = find_subgroup_generator(227, 113), 227, 113
    assert pow(g, x, eta) * pow(g, y, eta) % eta == pow(g, (x + y) % delta, eta)


@given(st.integers(0, 10**12), st.integers(2, 50))
def test_reduction_through_multiple(v, alpha):
    eta = 227
    assert (v % (alpha * eta)) % eta == v % eta


@settings(max_examples=50)
@given(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 10**6), st.integers(1, 30))
def test_composition_laws(s1, s2, s3, n):
    p, q, r = gen_permutation(s1, n), gen_permutation(s2, n), gen_permutation(s3, n)
    assert compose_permutations(compose_permutations(p, q), r) == compose_permutations(p, compose_permutations(q, r))
    assert compose_permutations(p, q).inverse() == compose_permutations(q.inverse(), p.inverse())
    v = np.arange(n)
    assert np.array_equal(compose_permutations(p, q).apply(v), p.apply(q.apply(v)))
