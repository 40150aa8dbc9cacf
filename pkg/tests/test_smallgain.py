import itertools
import math

import numpy as np
import pytest

from impulsive_iss.errors import DomainError
from impulsive_iss.ncs import NcsParams, derive_gains
from impulsive_iss.smallgain import (GainMatrix, apply_gain, brute_force_max_cycle_mean,
                                     check_smallgain, cycle_condition, cycle_product,
                                     find_scaling_vector, max_cycle_mean, read_gain_matrix,
                                     worst_cycle, write_gain_matrix)

G_NCS = derive_gains(NcsParams())[0]


def test_matrix_validation():
    with pytest.raises(DomainError):
        GainMatrix([[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(DomainError):
        GainMatrix([[0.0, -1.0], [0.0, 0.0]])
    with pytest.raises(DomainError):
        GainMatrix([[0.0, 1.0]])


def test_apply_gain_examples():
    np.testing.assert_allclose(apply_gain(G_NCS, [1, 1, 1]), [0.8333, 1.1053, 1.1250], atol=5e-5)
    np.testing.assert_array_equal(apply_gain(np.zeros((3, 3)), [1, 2, 3]), [0, 0, 0])
    np.testing.assert_array_equal(apply_gain([[0, 0.5], [0.5, 0]], [2, 4]), [2.0, 1.0])
    with pytest.raises(DomainError):
        apply_gain(G_NCS, [1, 1])


def test_max_cycle_mean_examples():
    assert max_cycle_mean(G_NCS) == pytest.approx(0.98721, abs=1e-4)
    cyc, prod, mean = worst_cycle(G_NCS)
    assert cyc == (0, 1, 2)
    assert prod == pytest.approx(0.96212, abs=1e-4)
    assert max_cycle_mean(np.zeros((1, 1))) == 0.0
    assert max_cycle_mean([[0, 2], [2, 0]]) == pytest.approx(2.0, rel=1e-15)


def test_cycle_orientation():
    # cycle (0, 1, 2) uses g[0,1] g[1,2] g[2,0]; the reverse cycle is different
    g = np.array([[0, 2.0, 0], [0, 0, 3.0], [5.0, 0, 0]])
    assert cycle_product(g, (0, 1, 2)) == 30.0
    assert cycle_product(g, (0, 2, 1)) == 0.0
    assert worst_cycle(g)[0] == (0, 1, 2)


def test_cycle_condition_examples():
    rep = cycle_condition(G_NCS, 1.0)
    assert rep.ok and rep.worst_value == pytest.approx(0.96212, abs=1e-4)
    assert rep.worst_value == pytest.approx(cycle_product(G_NCS, rep.worst_cycle), rel=1e-12)
    assert not cycle_condition(G_NCS.scaled(1.05), 1.0).ok
    upper = np.triu(np.ones((4, 4)), 1)
    rep = cycle_condition(upper, 1.0)
    assert rep.ok and rep.rho == 0.0 and rep.worst_cycle == ()


def test_scaling_vector_examples():
    s = find_scaling_vector([[0, 0.5], [0.5, 0]], 1.0)
    assert np.all(apply_gain([[0, 0.5], [0.5, 0]], s) < s)
    s = find_scaling_vector(G_NCS, 1.0)
    assert s is not None and np.all(s > 0) and np.all(apply_gain(G_NCS, s) < s)
    assert find_scaling_vector(G_NCS, 0.9) is None
    # any positive multiple works as well
    for kappa in (1e-3, 1.0, 1e3):
        assert np.all(apply_gain(G_NCS, kappa * s) < kappa * s)


def test_check_smallgain_examples():
    assert check_smallgain(G_NCS)
    assert not check_smallgain([[0, 1], [1, 0]])
    assert not check_smallgain([[0, 0.9], [1.2, 0]])


def _own_enumeration(g):
    """Independent max cycle mean: every node sequence without repeats."""
    n = g.shape[0]
    best = 0.0
    for k in range(2, n + 1):
        for seq in itertools.permutations(range(n), k):
            prod = 1.0
            for a, b in zip(seq, seq[1:] + seq[:1]):
                prod *= g[a, b]
            if prod > 0:
                best = max(best, prod ** (1.0 / k))
    return best


def test_random_matrices_against_enumeration():
    rng = np.random.default_rng(2)
    for _ in range(150):
        n = int(rng.integers(1, 6))
        g = np.exp(rng.uniform(-3, 1, (n, n))) * (rng.random((n, n)) < 0.7)
        np.fill_diagonal(g, 0)
        assert max_cycle_mean(g) == pytest.approx(_own_enumeration(g), rel=1e-9, abs=0)
        assert max_cycle_mean(g) == pytest.approx(brute_force_max_cycle_mean(g), rel=1e-9, abs=0)


def test_matrix_file_roundtrip(tmp_path):
    path = tmp_path / "g.mat"
    write_gain_matrix(G_NCS, path)
    assert np.array_equal(read_gain_matrix(path).entries, G_NCS.entries)
    write_gain_matrix(G_NCS, path, digits=4)
    assert path.read_text().splitlines()[2] == "1.1053 0.0000 1.0263"
    bad = tmp_path / "bad.mat"
    bad.write_text("2\n0 1\n")
    with pytest.raises(DomainError):
        read_gain_matrix(bad)
