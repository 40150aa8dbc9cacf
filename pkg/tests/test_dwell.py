import math

import numpy as np
import pytest

from impulsive_iss.core import RateCoeffs
from impulsive_iss.dwell import (MAX_IMPULSES, DwellParams, ImpulseSequence, adt_supremum,
                                 adt_supremum_bruteforce, adt_supremum_grid, adt_supremum_pairs,
                                 adt_worst_pair, count_impulses, generate_sequence, in_class,
                                 parse_impulse_spec, periodic_rate_ok, read_sequence_file)
from impulsive_iss.errors import DomainError, ResourceError

SEQ3 = ImpulseSequence((0.1, 0.2, 0.3), 0.0, 1.0)


@pytest.mark.parametrize("s,t,mode,n", [(0.1, 0.3, "semiopen", 2), (0.1, 0.3, "closed", 3),
                                        (0.1, 0.1, "semiopen", 0), (0.1, 0.1, "closed", 1)])
def test_count_examples(s, t, mode, n):
    assert count_impulses(SEQ3, s, t, mode) == n


def test_count_rejects_reversed_interval():
    with pytest.raises(DomainError):
        count_impulses(SEQ3, 0.3, 0.1)


def test_sequence_validation():
    with pytest.raises(DomainError):
        ImpulseSequence((0.2, 0.1), 0.0, 1.0)
    with pytest.raises(DomainError):
        ImpulseSequence((0.0,), 0.0, 1.0)
    with pytest.raises(DomainError):
        ImpulseSequence((2.0,), 0.0, 1.0)


def test_dwell_params_positive():
    with pytest.raises(DomainError):
        DwellParams(0.0, 1.0)


def test_sup_ncs_sequence_is_zero():
    seq = generate_sequence("periodic", 0.0, 10.0, period=0.1)
    assert adt_supremum(seq, 0.1, 0.0, 0.05) == 0.0


def test_sup_empty_sequence():
    assert adt_supremum(ImpulseSequence((), 0.0, 5.0), 1.0, -1.0, 0.5) == 0.0


def test_sup_period_ten_pair():
    seq = generate_sequence("periodic", 0.0, 100.0, period=10.0)
    sup = adt_supremum(seq, 0.534, -2.0, 0.334)
    assert sup == pytest.approx(2.0, abs=1e-9)
    assert adt_supremum_bruteforce(seq, 0.534, -2.0, 0.334) == pytest.approx(2.0, abs=1e-9)
    best, s, t, s_left, t_left = adt_worst_pair(seq, 0.534, -2.0, 0.334)
    # the worst pair opens just before an impulse and closes on it
    assert s == t and s_left and not t_left


def test_in_class_examples():
    ncs = generate_sequence("periodic", 0.0, 10.0, period=0.1)
    assert in_class(ncs, DwellParams(0.01, 0.05), RateCoeffs(0.1, 0.0))
    p10 = generate_sequence("periodic", 0.0, 100.0, period=10.0)
    assert in_class(p10, DwellParams(2.1, 0.334), RateCoeffs(0.534, -2.0))
    assert not in_class(p10, DwellParams(1.9, 0.334), RateCoeffs(0.534, -2.0))


def test_periodic_rate_test():
    assert periodic_rate_ok(10.0, 0.534, -2.0, 0.334)
    assert not periodic_rate_ok(0.5, 0.534, -2.0, 0.334)
    # a short horizon hides the growth, the per-period test does not
    short = generate_sequence("periodic", 0.0, 0.6, period=0.5)
    assert adt_supremum(short, 0.534, -2.0, 0.334) < 2.1
    assert not in_class(short, DwellParams(2.1, 0.334), RateCoeffs(0.534, -2.0))


def test_generation():
    seq = generate_sequence("periodic", 0.0, 0.35, period=0.1)
    assert seq.times == pytest.approx((0.1, 0.2, 0.3))
    assert generate_sequence("explicit", 0.0, 1.0, times=[0.5]).times == (0.5,)
    a = generate_sequence("poisson", 0.0, 10.0, rate=2.0, seed=7)
    b = generate_sequence("poisson", 0.0, 10.0, rate=2.0, seed=7)
    assert a == b and len(a) > 0
    assert all(0.0 < t <= 10.0 for t in a.times)
    with pytest.raises(DomainError):
        generate_sequence("periodic", 0.0, 1.0, period=0.0)
    with pytest.raises(DomainError):
        generate_sequence("poisson", 0.0, 1.0, rate=-1.0)


def test_spec_parsing(tmp_path):
    f = tmp_path / "times.txt"
    f.write_text("# impulses\n0.25\n0.5  # mid\n\n2.0\n")
    assert read_sequence_file(f) == [0.25, 0.5, 2.0]
    seq = parse_impulse_spec(f"file:{f}", 0.0, 1.0)
    assert seq.times == (0.25, 0.5)
    assert parse_impulse_spec("poisson:2.0:seed7", 0, 5) == parse_impulse_spec("poisson:2.0", 0, 5,
                                                                               seed=7)
    assert len(parse_impulse_spec("none", 0, 5)) == 0
    with pytest.raises(DomainError):
        parse_impulse_spec("weekly:1", 0, 5)
    with pytest.raises(DomainError):
        parse_impulse_spec("periodic:abc", 0, 5)


def test_resource_cap():
    big = ImpulseSequence(tuple(np.arange(1, MAX_IMPULSES + 2) * 1e-3), 0.0, 1000.0)
    with pytest.raises(ResourceError):
        adt_supremum(big, 1.0, 0.0, 0.5)


def test_sweep_matches_pairs_and_bruteforce():
    rng = np.random.default_rng(11)
    for _ in range(200):
        k = int(rng.integers(0, 8))
        times = np.sort(rng.uniform(0.01, 5.0, k))
        times = times[np.concatenate([[True], np.diff(times) > 1e-6])] if k else times
        seq = ImpulseSequence(tuple(times), 0.0, 5.0)
        c, d, lam = rng.uniform(-1, 1), rng.uniform(-2, 2), rng.uniform(0.01, 1)
        sweep = adt_supremum(seq, c, d, lam)
        assert sweep == pytest.approx(adt_supremum_pairs(seq, c, d, lam), abs=1e-12)
        assert sweep == pytest.approx(adt_supremum_bruteforce(seq, c, d, lam), abs=1e-7)


def test_grid_lower_bound_within_resolution():
    rng = np.random.default_rng(5)
    for _ in range(50):
        seq = ImpulseSequence(tuple(np.sort(rng.uniform(0.1, 3.0, 4))), 0.0, 3.0)
        c, d, lam = rng.uniform(-1, 1), rng.uniform(-2, 2), 0.3
        exact = adt_supremum(seq, c, d, lam)
        grid = adt_supremum_grid(seq, c, d, lam, m=3001)
        assert grid <= exact + 1e-12
        # a grid point lands within one cell of every candidate; counts can differ by a jump
        assert exact - grid <= 2 * 3.0 / 3000 * abs(c - lam) + abs(d) + 1e-12


def test_mu_monotone():
    seq = generate_sequence("poisson", 0.0, 20.0, rate=1.5, seed=3)
    rates = RateCoeffs(0.5, -0.3)
    verdicts = [in_class(seq, DwellParams(mu, 0.2), rates) for mu in np.linspace(0.01, 5, 60)]
    assert verdicts == sorted(verdicts)


def test_closed_count_right_limit_candidate():
    # stabilizing jumps: closed counting reaches the sup through s = t_k + 0
    seq = ImpulseSequence((0.25,), 0.0, 1.0)
    for mode in ("semiopen", "closed"):
        assert adt_supremum_pairs(seq, 0.0, 1.0, 1.0, mode) == pytest.approx(0.75, abs=1e-12)
        assert adt_supremum_bruteforce(seq, 0.0, 1.0, 1.0, mode) == pytest.approx(0.75, abs=1e-8)
