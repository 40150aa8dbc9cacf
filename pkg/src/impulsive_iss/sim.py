"""Fixed-step integration of impulsive systems with and without delays.

Between impulses the flow is integrated with classical RK4; the last step
before each impulse is shortened so that the grid lands on the impulse
time.  Delayed references read a Hermite-interpolated history buffer.
With delays present the step never exceeds the smallest delay, so every
stage reads only stored history (method of steps).

Jumps are either pointwise (only ``x(t_k)`` changes) or whole-window (the
jump map is applied to every sample of the history window, which then
replaces the stored past).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import kernels
from .bytecode import compile_flow, compile_jump
from .core import HistorySegment, JumpEvent, Trajectory, as_vector
from .dsl import ModelAst, validate_model
from .dwell import ImpulseSequence
from .errors import DivergedError, DomainError, SimError


# ----------------------------------------------------------------- inputs


class InputSignal:
    """A vector signal of time.

    ``spec`` is a constant (scalar or vector), a piecewise-constant table
    ``[(t_i, value_i), ...]`` (value ``value_i`` on ``[t_i, t_{i+1})``) or a
    callable ``f(t)``.
    """

    def __init__(self, spec, dim):
        self.dim = int(dim)
        self.kind = "const"
        self.table_t = None
        if callable(spec):
            self.kind = "func"
            self.func = spec
        elif isinstance(spec, (list, tuple)) and spec and isinstance(spec[0], (list, tuple)) \
                and len(spec[0]) == 2:
            self.kind = "table"
            rows = sorted(spec, key=lambda r: float(r[0]))
            self.table_t = np.array([float(r[0]) for r in rows])
            self.table_v = np.array([self._vec(r[1]) for r in rows])
        else:
            self.value = self._vec(spec)

    def _vec(self, v):
        v = np.atleast_1d(np.asarray(v, dtype=float)).reshape(-1)
        if v.size == 1 and self.dim > 1:
            v = np.full(self.dim, float(v[0]))
        if v.size != self.dim:
            raise DomainError(f"input value of size {v.size}, expected {self.dim}")
        return v

    def at(self, t, left=False):
        if self.kind == "const":
            return self.value
        if self.kind == "func":
            return self._vec(self.func(t))
        # left limit: value of the piece that ends at t
        side = "left" if left else "right"
        i = int(np.searchsorted(self.table_t, t, side=side)) - 1
        return self.table_v[max(i, 0)]


class InputBundle:
    """All declared inputs of a model, flattened in declaration order."""

    def __init__(self, model: ModelAst, inputs: Mapping | None):
        inputs = dict(inputs or {})
        unknown = set(inputs) - {name for name, _ in model.inputs}
        if unknown:
            raise SimError(f"inputs {sorted(unknown)} are not declared by the model")
        self.signals = [InputSignal(inputs.get(name, 0.0), dim) for name, dim in model.inputs]
        self.dim = model.input_dim
        self.constant = all(s.kind == "const" for s in self.signals)
        self._const = self._stack(0.0, False) if self.constant else None

    def _stack(self, t, left):
        if not self.signals:
            return np.zeros(0)
        return np.concatenate([s.at(t, left) for s in self.signals])

    def at(self, t, left=False):
        if self.constant:
            return self._const
        return self._stack(t, left)


# ----------------------------------------------------------------- config


@dataclass
class SimConfig:
    dt: float = 1e-3
    horizon: float = 1.0
    blowup_cap: float = 1e9
    inputs: Mapping = field(default_factory=dict)
    allow_short_gaps: bool = False
    t0: float = 0.0

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise DomainError("dt must be positive")
        if not self.horizon >= self.t0:
            raise DomainError("horizon must not precede t0")
        if not self.blowup_cap > 0:
            raise DomainError("blowup cap must be positive")


def effective_dt(model: ModelAst, dt: float) -> float:
    """Step clamped to the smallest positive delay."""
    delays = model.delays
    if delays and dt > delays[0]:
        warnings.warn(f"dt={dt!r} exceeds the smallest delay {delays[0]!r}; clamped",
                      RuntimeWarning, stacklevel=3)
        return delays[0]
    return dt


# ----------------------------------------------------------------- runtime


class _Runtime:
    """Compiled model plus a growable history buffer."""

    def __init__(self, model, inputs, capacity):
        self.model = model
        self.flow = compile_flow(model)
        self.jump = compile_jump(model) if model.has_jumps else None
        self.inputs = inputs
        self.N = model.dim
        self.T = np.zeros(capacity)
        self.X = np.zeros((capacity, self.N))
        self.DX = np.zeros((capacity, self.N))
        self.n = 0

    def ensure(self, extra):
        if self.n + extra <= self.T.size:
            return
        cap = max(2 * self.T.size, self.n + extra + 16)
        for name in ("T", "X", "DX"):
            old = getattr(self, name)
            new = np.zeros((cap,) + old.shape[1:])
            new[:self.n] = old[:self.n]
            setattr(self, name, new)

    def push(self, t, x, dx=None):
        self.ensure(1)
        self.T[self.n] = t
        self.X[self.n] = x
        self.DX[self.n] = 0.0 if dx is None else dx
        self.n += 1

    def rhs(self, t, x, u):
        out = np.empty(self.N)
        status, pc = kernels.eval_system(self.flow.program, self.T, self.X, self.DX, self.n,
                                         t, x, u, out)
        if status:
            raise self.flow.error(status, pc, time=t)
        return out


def step_flow(model: ModelAst, history: HistorySegment, u, t: float, dt: float) -> np.ndarray:
    """One RK4 step of the flow from the end of ``history``.

    ``u`` is a constant input vector or a callable of time.  With delays the
    step must not exceed the smallest delay.
    """
    delays = model.delays
    if delays and dt > delays[0] * (1 + 1e-12):
        raise SimError(f"dt={dt!r} exceeds the smallest delay {delays[0]!r}")
    N = model.dim
    if history.dim != N:
        raise DomainError(f"history of dimension {history.dim} for a model of dimension {N}")
    uf = u if callable(u) else (lambda s, _u=np.atleast_1d(np.asarray(u, float)): _u)
    U3 = np.ascontiguousarray([as_vector(uf(s)) if model.input_dim else np.zeros(0)
                               for s in (t, t + 0.5 * dt, t + dt)]).reshape(3, model.input_dim)
    prog = compile_flow(model)
    # duplicate the last row as in simulate: the kernel overwrites its slope
    # and the stored history keeps its own
    T = np.append(history.t, history.t[-1])
    X = np.vstack([history.x, history.x[-1:]])
    DX = np.vstack([history.dx, np.zeros((1, N))])
    out = np.empty(N)
    status, pc = kernels.rk4_step(prog.program, T, X, DX, T.size, t, dt, U3, out)
    if status:
        raise prog.error(status, pc, time=t)
    return out


def apply_jump(model: ModelAst, kind: str, left_history: HistorySegment, u_left,
               t: float | None = None):
    """Post-jump state (``point``) or rewritten window (``hist``).

    With no ``jump`` lines the left value (or window) is returned unchanged.
    """
    N = model.dim
    t = left_history.t_end if t is None else t
    u = np.atleast_1d(np.asarray(u_left, dtype=float)) if model.input_dim else np.zeros(0)
    x_left = left_history.x[-1]
    if not model.has_jumps:
        return x_left.copy() if kind == "point" else left_history
    jump = compile_jump(model)
    T = np.array(left_history.t)  # writable copies for the kernels
    X = np.array(left_history.x)
    DX = np.array(left_history.dx)
    if kind == "point":
        out = np.empty(N)
        status, pc = kernels.eval_system(jump.program, T, X, DX, T.size, t, x_left, u, out)
        if status:
            raise jump.error(status, pc, time=t)
        return out
    if kind != "hist":
        raise DomainError(f"unknown jump kind {kind!r}")
    nt, nx, ndx = _map_window(jump, T, X, DX, u, t)
    return HistorySegment(nt, nx, ndx, left_history.theta, left_history.t_end)


def _map_window(jump, T, X, DX, u, t):
    """Apply a pointwise jump map to every row of a window.

    Slopes of the mapped rows are directional derivatives of the map along
    the stored slopes, by central differences.
    """
    N = X.shape[1]
    nx = np.empty_like(X)
    ndx = np.empty_like(DX)
    out = np.empty(N)
    plus = np.empty(N)
    minus = np.empty(N)
    for r in range(T.size):
        status, pc = kernels.eval_system(jump.program, T, X, DX, T.size, t, X[r], u, out)
        if status:
            raise jump.error(status, pc, time=t)
        nx[r] = out
        scale = float(np.max(np.abs(DX[r]))) if np.any(DX[r]) else 0.0
        if scale == 0.0:
            ndx[r] = 0.0
            continue
        eps = 1e-6 * max(1.0, float(np.max(np.abs(X[r])))) / scale
        kernels.eval_system(jump.program, T, X, DX, T.size, t, X[r] + eps * DX[r], u, plus)
        kernels.eval_system(jump.program, T, X, DX, T.size, t, X[r] - eps * DX[r], u, minus)
        ndx[r] = (plus - minus) / (2 * eps)
    return T.copy(), nx, ndx


# ----------------------------------------------------------------- driver


def _initial_history(model, init, theta, t0):
    N = model.dim
    if isinstance(init, HistorySegment):
        if init.dim != N:
            raise DomainError(f"initial history of dimension {init.dim}, expected {N}")
        seg = init
        if abs(seg.t_end - t0) > 1e-12 * max(1.0, abs(t0)) or seg.theta + 1e-12 < theta:
            raise DomainError("initial history must end at t0 and span theta")
        return HistorySegment(seg.t, seg.x, seg.dx, theta, t0)
    if callable(init):
        return HistorySegment.from_function(init, theta, t_end=t0)
    x0 = as_vector(init)
    if x0.size != N:
        raise DomainError(f"initial state of dimension {x0.size}, expected {N}")
    return HistorySegment.constant(x0, theta, t_end=t0)


def simulate(model: ModelAst, seq: ImpulseSequence, init, cfg: SimConfig,
             jump: Callable | None = None) -> Trajectory:
    """Integrate ``model`` from ``init`` under the impulse sequence ``seq``.

    ``init`` is a state vector (constant initial history), a
    :class:`HistorySegment` ending at ``t0`` or a function ``xi(s)`` on
    ``[-theta, 0]``.  ``jump``, when given, replaces the model's pointwise
    jump map: ``jump(t, x_left, u_left) -> x_post``.
    """
    diags = validate_model(model)
    if diags:
        raise SimError("invalid model: " + "; ".join(diags))
    kind = model.jump_kind
    theta = model.theta
    t0, horizon = cfg.t0, cfg.horizon
    if abs(seq.t0 - t0) > 1e-12 * max(1.0, abs(t0)):
        raise SimError(f"impulse sequence starts at {seq.t0!r}, simulation at {t0!r}")
    times = [tk for tk in seq.times if tk <= horizon]
    dt = effective_dt(model, cfg.dt)
    gaps = np.diff([t0] + times) if times else np.array([])
    if gaps.size and dt > float(np.min(gaps)) * (1 + 1e-9) and not cfg.allow_short_gaps:
        raise SimError(f"dt={dt!r} exceeds the smallest impulse gap {float(np.min(gaps))!r}")
    if jump is not None and kind == "hist":
        raise SimError("a custom jump function needs pointwise jumps")

    inputs = InputBundle(model, cfg.inputs)
    hist0 = _initial_history(model, init, theta, t0)
    est = int((horizon - t0) / dt) + 2 * len(times) + hist0.t.size + 8
    rt = _Runtime(model, inputs, est)
    for r in range(hist0.t.size):
        rt.push(hist0.t[r], hist0.x[r], hist0.dx[r])
    x0 = hist0.x[-1].copy()
    # the first record row duplicates the end of the initial history; its
    # slope becomes the flow slope of the first step
    rt.push(t0, x0)
    rec_start = rt.n - 1

    chunks = []  # (t, x, dx, is_left) blocks of record rows
    versions = [(t0, hist0)]
    events = []
    cap = cfg.blowup_cap
    N = model.dim
    U3 = np.zeros((3, inputs.dim))
    out = np.empty(N)
    prog = rt.flow.program
    left_rows = set()

    def flush(upto):
        chunks.append((rt.T[rec_start:upto].copy(), rt.X[rec_start:upto].copy(),
                       rt.DX[rec_start:upto].copy(),
                       np.array([i in left_rows for i in range(rec_start, upto)], dtype=bool)))

    t = t0
    ends = [(tk, True) for tk in times]
    if not times or horizon > times[-1]:
        ends.append((horizon, False))
    for seg_end, is_impulse in ends:
        span = seg_end - t
        m = int(math.ceil(span / dt - 1e-9)) if span > 0 else 0
        start = t
        for i in range(m):
            tn = seg_end if i == m - 1 else start + (i + 1) * dt
            h = tn - t
            if inputs.dim:
                U3[0] = inputs.at(t)
                U3[1] = inputs.at(t + 0.5 * h)
                U3[2] = inputs.at(tn, left=(i == m - 1))
            rt.ensure(1)
            status, pc = kernels.rk4_step(prog, rt.T, rt.X, rt.DX, rt.n, t, h, U3, out)
            if status:
                raise rt.flow.error(status, pc, time=t)
            if not np.all(np.isfinite(out)) or float(np.linalg.norm(out)) > cap:
                raise DivergedError(f"state norm exceeded {cap!r} after t={t!r}", last_time=t)
            rt.push(tn, out)
            t = tn
        # left slope of the landing row
        u_left = inputs.at(t, left=True)
        rt.DX[rt.n - 1] = rt.rhs(t, rt.X[rt.n - 1], u_left)
        if not is_impulse:
            break
        x_left = rt.X[rt.n - 1].copy()
        left_rows.add(rt.n - 1)
        if kind == "hist" and jump is None and model.has_jumps:
            lo = max(0, int(np.searchsorted(rt.T[:rt.n], t - theta, side="right")) - 1)
            wt, wx, wdx = _map_window(rt.jump, rt.T[lo:rt.n], rt.X[lo:rt.n], rt.DX[lo:rt.n],
                                      u_left, t)
            x_post = wx[-1].copy()
            _check_finite(x_post, cap, t)
            flush(rt.n)
            versions.append((t, HistorySegment(wt, wx, wdx, theta, t)))
            # the rewritten window becomes the stored past; its last row
            # is the post-jump record row
            rt.n = 0
            left_rows = set()
            for r in range(wt.size):
                rt.push(wt[r], wx[r], wdx[r])
            rec_start = rt.n - 1
        else:
            if jump is not None:
                x_post = as_vector(jump(t, x_left, u_left))
            elif rt.jump is not None:
                x_post = np.empty(N)
                status, pc = kernels.eval_system(rt.jump.program, rt.T, rt.X, rt.DX, rt.n, t,
                                                 x_left, u_left, x_post)
                if status:
                    raise rt.jump.error(status, pc, time=t)
            else:
                x_post = x_left.copy()
            _check_finite(x_post, cap, t)
            rt.push(t, x_post)
        events.append(JumpEvent(t, x_left, x_post.copy()))
        if t >= horizon:
            rt.DX[rt.n - 1] = rt.rhs(t, rt.X[rt.n - 1], inputs.at(t))
    flush(rt.n)

    T = np.concatenate([c[0] for c in chunks])
    X = np.vstack([c[1] for c in chunks])
    DX = np.vstack([c[2] for c in chunks])
    is_left = np.concatenate([c[3] for c in chunks])
    if inputs.dim:
        U = np.array([inputs.at(tt, left=bool(lf)) for tt, lf in zip(T, is_left)])
    else:
        U = np.zeros((T.size, 0))
    return Trajectory(T, X, DX, is_left, U, events, t0, theta, model.state_names,
                      model.input_names, model.block_dims, versions,
                      kind if model.has_jumps else "point")


def _check_finite(x, cap, t):
    if not np.all(np.isfinite(x)) or float(np.linalg.norm(x)) > cap:
        raise DivergedError(f"state norm exceeded {cap!r} at the impulse t={t!r}", last_time=t)
