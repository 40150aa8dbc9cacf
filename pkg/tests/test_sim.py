import math
import warnings

import numpy as np
import pytest

from impulsive_iss.catalog import quadratic_pair_model
from impulsive_iss.core import HistorySegment, sup_norm
from impulsive_iss.dsl import parse_model
from impulsive_iss.dwell import ImpulseSequence, generate_sequence
from impulsive_iss.errors import DivergedError, EvalError, SimError
from impulsive_iss.sim import InputSignal, SimConfig, apply_jump, simulate, step_flow

DECAY = parse_model("model m { sub s[1] { flow x1' = -x1; jump point x1 = 0.5*x1; } }")
DELAY = parse_model("model d { sub s[1] { flow x1' = -x1@0.5; } }")


def none(h):
    return ImpulseSequence((), 0.0, h)


def test_step_flow_linear():
    seg = HistorySegment.constant([1.0], 0.0)
    assert step_flow(DECAY, seg, [], 0.0, 0.1)[0] == pytest.approx(0.9048375, abs=5e-8)


def test_step_flow_delay_first_segment():
    seg = HistorySegment.constant([1.0], 0.5)
    x = seg
    t = 0.0
    # 0.25 in steps of 0.05; every stage reads the constant history
    val = None
    for _ in range(5):
        val = step_flow(DELAY, x, [], t, 0.05)
        t += 0.05
        x = HistorySegment(np.append(x.t, t), np.vstack([x.x, val]), np.vstack([x.dx, [-1.0]]),
                           0.5, t)
    assert val[0] == pytest.approx(0.75, abs=1e-12)


def test_step_flow_zero_field():
    m = parse_model("model z { sub s[2] { flow x1' = 0; flow x2' = 0; } }")
    seg = HistorySegment.constant([1.5, -2.0], 0.0)
    np.testing.assert_array_equal(step_flow(m, seg, [], 0.0, 0.3), [1.5, -2.0])


def test_apply_jump_examples():
    m = parse_model("model e { sub s[1] { flow x1' = -x1; jump point x1 = exp(1)*x1; } }")
    seg = HistorySegment.constant([1.0], 0.0)
    assert apply_jump(m, "point", seg, [])[0] == pytest.approx(2.7182818, abs=1e-7)
    ident = parse_model("model i { sub s[1] { flow x1' = -x1; } }")
    assert apply_jump(ident, "point", HistorySegment.constant([0.3], 0.0), [])[0] == 0.3
    h = parse_model("model h { theta 0.5; sub s[1] { flow x1' = -x1@0.5; jump hist x1 = 0.5*x1; } }")
    out = apply_jump(h, "hist", HistorySegment.constant([2.0], 0.5), [])
    assert isinstance(out, HistorySegment)
    np.testing.assert_array_equal(out.x, np.ones_like(out.x))


def test_linear_impulsive_closed_form():
    seq = generate_sequence("periodic", 0.0, 1.0, period=0.1)
    tr = simulate(DECAY, seq, [1.0], SimConfig(dt=1e-3, horizon=1.0))
    assert tr.x[-1, 0] == pytest.approx(0.5 ** 10 * math.exp(-1), abs=1e-8)
    assert len(tr.events) == 10


def test_no_impulses_decay():
    tr = simulate(DECAY, none(1.0), [1.0], SimConfig(dt=1e-3, horizon=1.0))
    assert tr.x[-1, 0] == pytest.approx(math.exp(-1), abs=1e-6)


def test_rk4_order():
    seq = generate_sequence("periodic", 0.0, 1.0, period=0.1)
    grid_err = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        tr = simulate(DECAY, seq, [1.0], SimConfig(dt=dt, horizon=1.0))
        n = np.searchsorted(seq.as_array(), tr.t, side="right")
        n = n - tr.is_left  # a left row has not seen its own impulse yet
        exact = 0.5 ** n * np.exp(-tr.t)
        grid_err.append(np.max(np.abs(tr.x[:, 0] - exact)))
    assert grid_err[0] / grid_err[1] >= 12
    assert grid_err[1] / grid_err[2] >= 12


def test_delay_first_segment_simulation():
    tr = simulate(DELAY, none(0.5), [1.0], SimConfig(dt=1e-3, horizon=0.5))
    np.testing.assert_allclose(tr.x[:, 0], 1.0 - tr.t, atol=1e-9)


def test_delay_second_segment_closed_form():
    tr = simulate(DELAY, none(1.0), [1.0], SimConfig(dt=1e-3, horizon=1.0))
    # on [0.5, 1]: x = 1 - t + (t - 0.5)^2 / 2
    assert tr.value(0.8)[0] == pytest.approx(1 - 0.8 + 0.3 ** 2 / 2, abs=1e-9)


def test_pair_bounded_under_dwell_condition():
    seq = generate_sequence("periodic", 0.0, 100.0, period=10.0)
    tr = simulate(quadratic_pair_model(), seq, [1.0, 1.0], SimConfig(dt=1e-2, horizon=100.0))
    assert math.isfinite(sup_norm(tr, (0.0, 100.0)))
    assert sup_norm(tr, (0.0, 100.0)) < 10.0


def test_blowup_detected():
    m = parse_model("model b { sub s[1] { flow x1' = x1^2; } }")
    with pytest.raises(DivergedError) as exc:
        simulate(m, none(2.0), [1.0], SimConfig(dt=1e-3, horizon=2.0))
    assert 0.9 < exc.value.last_time < 1.1  # exact blow-up at t = 1


def test_dt_larger_than_gap_rejected():
    seq = ImpulseSequence((0.1, 0.105), 0.0, 1.0)
    with pytest.raises(SimError):
        simulate(DECAY, seq, [1.0], SimConfig(dt=1e-2, horizon=1.0))
    tr = simulate(DECAY, seq, [1.0], SimConfig(dt=1e-2, horizon=1.0, allow_short_gaps=True))
    assert len(tr.events) == 2


def test_dt_clamped_to_delay():
    m = parse_model("model d { sub s[1] { flow x1' = -x1@0.01; } }")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        tr = simulate(m, none(0.1), [1.0], SimConfig(dt=0.05, horizon=0.1))
    assert any("clamped" in str(w.message) for w in caught)
    assert np.max(np.diff(tr.t)) <= 0.01 + 1e-15


def test_right_continuity_and_left_limits():
    seq = generate_sequence("periodic", 0.0, 1.0, period=0.25)
    tr = simulate(DECAY, seq, [1.0], SimConfig(dt=1e-3, horizon=1.0))
    for ev in tr.events:
        k = int(np.nonzero((tr.t == ev.time) & ~tr.is_left)[0][0])
        assert tr.x[k, 0] == ev.post[0] == 0.5 * ev.pre[0]
        assert tr.x[k - 1, 0] == ev.pre[0] and tr.is_left[k - 1]


def test_determinism():
    seq = generate_sequence("poisson", 0.0, 2.0, rate=3.0, seed=1)
    a = simulate(DECAY, seq, [1.0], SimConfig(dt=1e-3, horizon=2.0, allow_short_gaps=True))
    b = simulate(DECAY, seq, [1.0], SimConfig(dt=1e-3, horizon=2.0, allow_short_gaps=True))
    assert np.array_equal(a.x, b.x) and np.array_equal(a.t, b.t)


def test_history_identity_jump_equals_no_jump():
    m_id = parse_model("model h { theta 0.2; sub s[1] { flow x1' = -x1@0.2; jump hist x1 = x1; } }")
    m_no = parse_model("model h { theta 0.2; sub s[1] { flow x1' = -x1@0.2; } }")
    seq = generate_sequence("periodic", 0.0, 1.0, period=0.3)
    a = simulate(m_id, seq, [1.0], SimConfig(dt=1e-3, horizon=1.0))
    b = simulate(m_no, seq, [1.0], SimConfig(dt=1e-3, horizon=1.0))
    np.testing.assert_allclose(a.value(1.0), b.value(1.0), atol=1e-12)


def test_history_jump_rewrites_window():
    m = parse_model("model h { theta 0.2; sub s[1] { flow x1' = -x1@0.2; jump hist x1 = 0.5*x1; } }")
    seq = ImpulseSequence((0.5,), 0.0, 1.0)
    tr = simulate(m, seq, [1.0], SimConfig(dt=1e-3, horizon=1.0))
    left = tr.window(0.5, left=True)
    right = tr.window(0.5)
    for q in (0.35, 0.42, 0.5):
        assert right.value_at(q)[0] == pytest.approx(0.5 * left.value_at(q)[0], abs=1e-9)


def test_table_input_left_limit():
    sig = InputSignal([(0.0, 1.0), (0.5, 3.0)], 1)
    assert sig.at(0.5)[0] == 3.0
    assert sig.at(0.5, left=True)[0] == 1.0
    m = parse_model("model u { input w[1]; sub s[1] { flow x1' = 0; jump point x1 = w; } }")
    seq = ImpulseSequence((0.5,), 0.0, 1.0)
    tr = simulate(m, seq, [0.0], SimConfig(dt=0.1, horizon=1.0,
                                            inputs={"w": [(0.0, 1.0), (0.5, 3.0)]}))
    assert tr.events[0].post[0] == 1.0


def test_eval_error_carries_time():
    m = parse_model("model e { sub s[1] { flow x1' = sqrt(x1); } }")
    with pytest.raises(EvalError) as exc:
        simulate(m, none(1.0), [-1.0], SimConfig(dt=0.1, horizon=1.0))
    assert exc.value.subexpression == "sqrt(x1)"
    assert exc.value.time == 0.0


def test_custom_jump_hook():
    seq = ImpulseSequence((0.5,), 0.0, 1.0)
    tr = simulate(DECAY, seq, [1.0], SimConfig(dt=1e-3, horizon=1.0),
                  jump=lambda t, x, u: np.array([7.0]))
    assert tr.events[0].post[0] == 7.0
