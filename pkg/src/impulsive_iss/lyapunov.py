"""Exponential ISS-Lyapunov certificates and their numerical verification.

Certificates are checked along simulated trajectories: the decay
implication with a one-sided forward difference for ``D+V``, the jump
inequality at every recorded impulse, Razumikhin premises against the
supremum of ``V`` over the delay window, and Krasovskii functionals on
whole history windows.  Composite certificates for networks follow the
max-type construction ``V = max_i V_i / s_i``.
"""
from __future__ import annotations

import math
import re
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .core import HistorySegment, KFunction, Trajectory, parse_kfunction
from .dsl import eval_expr, iter_refs, parse_expr, to_text
from .dwell import DwellParams, ImpulseSequence, adt_supremum, in_class, periodic_rate_ok
from .errors import CompositionError, DomainError, DslError
from .smallgain import as_gain_matrix, cycle_condition, find_scaling_vector

TIE_BAND = 1e-9
ZERO_STATE = 1e-12


# ------------------------------------------------------------ data model


@dataclass(frozen=True)
class SubsystemCert:
    """Lyapunov data of one subsystem.

    ``gains`` maps other subsystem names to linear gain coefficients; a
    gain naming the subsystem itself is the Razumikhin self gain of a
    single delay system.  ``inputs`` lists the input components forming
    ``u_i`` (all model inputs when ``None``).
    """

    name: str
    V: object
    c: float
    d: float
    gains: tuple = ()
    gain_u: KFunction = field(default_factory=KFunction.zero)
    psi1: KFunction = field(default_factory=KFunction.identity)
    psi2: KFunction = field(default_factory=KFunction.identity)
    inputs: tuple | None = None

    def __post_init__(self):
        if isinstance(self.V, str):
            object.__setattr__(self, "V", parse_expr(self.V))
        if isinstance(self.gains, dict):
            object.__setattr__(self, "gains", tuple(self.gains.items()))
        for _, g in self.gains:
            if not (g >= 0 and math.isfinite(g)):
                raise DomainError(f"gain of {self.name!r} must be finite and nonnegative")
        if not (math.isfinite(self.c) and math.isfinite(self.d)):
            raise DomainError("rate coefficients must be finite")

    @property
    def gain_map(self):
        return dict(self.gains)


@dataclass(frozen=True)
class ExpLyapCertificate:
    subs: tuple

    def __post_init__(self):
        subs = tuple(self.subs)
        if not subs:
            raise DomainError("a certificate needs at least one subsystem")
        names = [s.name for s in subs]
        if len(set(names)) != len(names):
            raise DomainError("duplicate subsystem names in certificate")
        for s in subs:
            for other in s.gain_map:
                if other not in names:
                    raise DomainError(f"gain of {s.name!r} refers to unknown {other!r}")
        object.__setattr__(self, "subs", subs)

    @property
    def names(self):
        return tuple(s.name for s in self.subs)

    @property
    def n(self):
        return len(self.subs)

    def gain_matrix(self):
        """Off-diagonal gains as a matrix (self gains are left out)."""
        n = self.n
        g = np.zeros((n, n))
        idx = {nm: i for i, nm in enumerate(self.names)}
        for i, s in enumerate(self.subs):
            for other, val in s.gains:
                j = idx[other]
                if j != i:
                    g[i, j] = val
        return as_gain_matrix(g)

    def self_gain(self, i=0):
        s = self.subs[i]
        return s.gain_map.get(s.name, 0.0)

    def scaled_rates(self, c_factor=1.0, d_shift=0.0):
        """Copy with every ``c_i`` multiplied (used for falsification)."""
        return ExpLyapCertificate(tuple(replace(s, c=s.c * c_factor, d=s.d + d_shift)
                                        for s in self.subs))


@dataclass(frozen=True)
class CompositeCertificate:
    s: np.ndarray
    base: ExpLyapCertificate
    c: float
    d: float
    gamma_u: KFunction
    gamma_t: float | None
    flavor: str
    psi1: KFunction
    psi2: KFunction
    provenance: str = ""


@dataclass(frozen=True)
class Violation:
    time: float
    kind: str  # flow, jump, premise, sandwich
    lhs: float
    rhs: float
    margin: float
    sub: str = ""


@dataclass
class ViolationReport:
    violations: list
    tol: float
    checked: int = 0
    gate_ok: bool | None = None
    note: str = ""

    @property
    def ok(self):
        return not self.violations and self.gate_ok is not False

    def merge(self, other):
        self.violations.extend(other.violations)
        self.checked += other.checked
        if other.gate_ok is not None:
            self.gate_ok = other.gate_ok if self.gate_ok is None else (self.gate_ok and other.gate_ok)
        return self

    def worst(self):
        return min(self.violations, key=lambda v: v.margin) if self.violations else None

    def summary(self):
        w = self.worst()
        head = f"{len(self.violations)} violations in {self.checked} checks (tol {self.tol!r})"
        if w is not None:
            head += f"; worst {w.kind} at t={w.time!r} margin {w.margin!r}"
        return head


# ------------------------------------------------------------ evaluation


def _env(traj_names, x, input_names=(), u=None):
    env = {name: x[:, k] for k, name in enumerate(traj_names)}
    if u is not None:
        for k, name in enumerate(input_names):
            env[name] = u[:, k]
        # one dimensional inputs may be used by their bare names
        bases = {}
        for name in input_names:
            base = name.rstrip("0123456789")
            bases.setdefault(base, []).append(name)
        for base, members in bases.items():
            if len(members) == 1 and base not in env:
                env[base] = env[members[0]]
    return env


def eval_on_rows(expr, x, state_names, u=None, input_names=()):
    """Vectorized evaluation of a state expression on sample rows."""
    x = np.atleast_2d(x)
    val = eval_expr(expr, _env(state_names, x, input_names, u))
    return np.broadcast_to(np.asarray(val, dtype=float), (x.shape[0],)).copy()


class _Values:
    """``V_i`` and ``|u_i|`` evaluated on every trajectory row."""

    def __init__(self, cert: ExpLyapCertificate, traj: Trajectory):
        self.cert = cert
        self.traj = traj
        names = traj.state_names
        for s in cert.subs:
            for r in iter_refs(s.V):
                if r.delay > 0 or r.name not in names:
                    raise DomainError(f"V of {s.name!r} refers to {to_text(r)!r}, "
                                      "not a current state of the trajectory")
        self.V = np.column_stack([eval_on_rows(s.V, traj.x, names) for s in cert.subs])
        self.unorm = np.column_stack([self._unorm(s, traj.u) for s in cert.subs])

    def _unorm(self, sub, u):
        if u.shape[1] == 0:
            return np.zeros(u.shape[0])
        if sub.inputs is None:
            return np.linalg.norm(u, axis=1)
        cols = [self.traj.input_names.index(nm) for nm in sub.inputs]
        return np.linalg.norm(u[:, cols], axis=1) if cols else np.zeros(u.shape[0])

    def of_state(self, x):
        return np.array([eval_on_rows(s.V, x[None, :], self.traj.state_names)[0]
                         for s in self.cert.subs])


def _flow_rows(traj: Trajectory):
    """Row indices ``k`` with a flow interval ``[t_k, t_{k+1}]`` after them."""
    t = traj.t
    k = np.nonzero(t[1:] > t[:-1])[0]
    return k[~traj.is_left[k]]


def _gain_row(cert, i):
    idx = {nm: j for j, nm in enumerate(cert.names)}
    row = np.zeros(cert.n)
    for other, val in cert.subs[i].gains:
        row[idx[other]] = val
    return row


def _flow_check(traj, V, rhs_premise, c, tol, sub, kinds="flow"):
    """Forward-difference test on rows where the premise holds."""
    rows = _flow_rows(traj)
    t = traj.t
    report = ViolationReport([], tol)
    for k in rows:
        v = V[k]
        if v < ZERO_STATE or not rhs_premise[k]:
            continue
        h = t[k + 1] - t[k]
        lhs = (V[k + 1] - v) / h
        rhs = -c * v
        margin = rhs + tol * (1.0 + v) - lhs
        report.checked += 1
        if margin < 0:
            report.violations.append(Violation(float(t[k]), kinds, float(lhs), float(rhs),
                                               float(margin), sub))
    return report


def _event_rows(traj):
    """``(left_row, post_row)`` pairs of every recorded impulse."""
    left = np.nonzero(traj.is_left)[0]
    return [(int(k), int(k) + 1) for k in left]


# --------------------------------------------------------- plain checks


def _subsystem_values(cert_or_comp, traj):
    if isinstance(cert_or_comp, CompositeCertificate):
        return _Values(cert_or_comp.base, traj)
    return _Values(cert_or_comp, traj)


def _composite_series(comp: CompositeCertificate, vals: _Values):
    scaled = vals.V / comp.s[None, :]
    V = scaled.max(axis=1)
    if scaled.shape[1] > 1:
        top2 = np.sort(scaled, axis=1)[:, -2:]
        tie = (top2[:, 1] - top2[:, 0]) <= TIE_BAND * np.maximum(top2[:, 1], 1e-300)
    else:
        tie = np.zeros(V.size, dtype=bool)
    unorm = np.linalg.norm(vals.traj.u, axis=1) if vals.traj.u.shape[1] else np.zeros(V.size)
    return V, tie, unorm


def check_flow(cert, traj: Trajectory, tol: float = 1e-3) -> ViolationReport:
    """Decay implication ``premise => D+V <= -c V`` at every flow sample.

    For a network certificate each subsystem uses the premise
    ``V_i >= max(max_j gamma_ij V_j, gamma_i^u(|u_i|))``; for a composite
    the premise is ``V >= gamma_u(|u|)`` and block-argmax ties are skipped.
    """
    vals = _subsystem_values(cert, traj)
    if isinstance(cert, CompositeCertificate):
        V, tie, unorm = _composite_series(cert, vals)
        premise = (V >= np.asarray(cert.gamma_u(unorm))) & ~tie
        return _flow_check(traj, V, premise, cert.c, tol, "composite")
    report = ViolationReport([], tol)
    for i, sub in enumerate(cert.subs):
        row = _gain_row(cert, i)
        other = np.max(vals.V * row[None, :], axis=1)
        premise = vals.V[:, i] >= np.maximum(other, np.asarray(sub.gain_u(vals.unorm[:, i])))
        report.merge(_flow_check(traj, vals.V[:, i], premise, sub.c, tol, sub.name))
    return report


def check_jump(cert, traj: Trajectory, form: str = "exp", tol: float = 1e-3) -> ViolationReport:
    """Jump inequality at every recorded impulse.

    ``exp``: ``V(post) <= e^{-d} V(pre)`` wherever the premise holds at the
    left limit.  ``maxform``: ``V_i(post) <= max(e^{-d_i} V_i(pre),
    max_j gamma_ij V_j(pre), gamma_i^u(|u_i|))`` unconditionally.
    """
    if form not in ("exp", "maxform"):
        raise DomainError(f"unknown jump form {form!r}")
    vals = _subsystem_values(cert, traj)
    report = ViolationReport([], tol)
    events = _event_rows(traj)
    if isinstance(cert, CompositeCertificate):
        V, tie, unorm = _composite_series(cert, vals)
        for kl, kp in events:
            pre, post = V[kl], V[kp]
            bound = math.exp(-cert.d) * pre
            g = float(cert.gamma_u(unorm[kl]))
            if form == "exp":
                if pre < g:
                    continue
            else:
                bound = max(bound, g)
            _jump_entry(report, traj.t[kl], post, bound, tol, "composite")
        return report
    for i, sub in enumerate(cert.subs):
        row = _gain_row(cert, i)
        for kl, kp in events:
            pre = vals.V[kl, i]
            post = vals.V[kp, i]
            other = float(np.max(vals.V[kl] * row))
            g = float(sub.gain_u(vals.unorm[kl, i]))
            bound = math.exp(-sub.d) * pre
            if form == "exp":
                if pre < max(other, g):
                    continue
            else:
                bound = max(bound, other, g)
            _jump_entry(report, traj.t[kl], post, bound, tol, sub.name)
    return report


def _jump_entry(report, t, lhs, rhs, tol, sub, kind="jump"):
    margin = rhs + tol * (1.0 + abs(rhs)) - lhs
    report.checked += 1
    if margin < 0:
        report.violations.append(Violation(float(t), kind, float(lhs), float(rhs),
                                           float(margin), sub))


# ----------------------------------------------------------- Razumikhin


def _timeline(traj: Trajectory):
    """Initial-history rows before ``t0`` followed by the record rows."""
    h = traj.initial_history
    keep = h.t < traj.t0
    t = np.concatenate([h.t[keep], traj.t])
    x = np.vstack([h.x[keep], traj.x]) if np.any(keep) else traj.x
    return t, x, int(np.count_nonzero(keep))


def window_sup(values_full, t_full, offset, traj: Trajectory, theta: float):
    """Running ``max`` of a sample series over ``[t - theta, t]``.

    Returns ``(right, left)``: the supremum up to and including each record
    row, and for left rows the same excluding the post-jump row.
    """
    n = traj.t.size
    out = np.empty(n)
    dq = deque()
    lo = 0
    for k in range(n):
        j = k + offset
        while dq and values_full[dq[-1]] <= values_full[j]:
            dq.pop()
        dq.append(j)
        start = t_full[j] - theta
        while t_full[lo] < start - 1e-12 * max(1.0, abs(start)):
            lo += 1
        while dq[0] < lo:
            dq.popleft()
        out[k] = values_full[dq[0]]
    return out


def _window_sups(cert, traj, theta):
    if traj.jump_kind == "hist" and len(traj.versions) > 1:
        # windows are rewritten at impulses; rebuild each one
        out = np.empty((traj.t.size, cert.n))
        for k in range(traj.t.size):
            seg = traj.window(traj.t[k], left=bool(traj.is_left[k]))
            _, x = _window_samples(seg, traj.t[k] - theta)
            for i, sub in enumerate(cert.subs):
                out[k, i] = float(np.max(eval_on_rows(sub.V, x, traj.state_names)))
        return out
    t_full, x_full, offset = _timeline(traj)
    cols = []
    for sub in cert.subs:
        v = eval_on_rows(sub.V, x_full, traj.state_names)
        cols.append(window_sup(v, t_full, offset, traj, theta))
    return np.column_stack(cols)


def razumikhin_gain_gate(gamma_t: float, mu: float) -> bool:
    """``gamma_t(r) < e^{-mu} r`` for a linear coefficient."""
    return gamma_t < math.exp(-mu)


def check_razumikhin(cert, traj: Trajectory, mu: float | None = None,
                     tol: float = 1e-3) -> ViolationReport:
    """Razumikhin flow and jump conditions along a delay trajectory.

    Premise for subsystem ``i``: ``V_i(x_i(t)) >= max(max_j gamma_ij
    sup_window V_j, gamma_i^u(|u_i|))`` with the supremum over
    ``[t - theta, t]``; where it holds ``D+V_i <= -c_i V_i`` is required.
    At impulses the max-form bound ``V_i(post) <= max(e^{-d_i} V_i(pre),
    max_j gamma_ij sup_window V_j, gamma_i^u(|u_i|))`` is checked.  With
    ``mu`` the gain gate ``gamma_t < e^{-mu}`` is evaluated as well: the
    self gain for a single system, the composite ``gamma_t`` for networks.
    """
    if isinstance(cert, CompositeCertificate):
        raise DomainError("check_razumikhin takes the subsystem certificate")
    theta = traj.theta
    if theta <= 0 or not traj.versions:
        raise DomainError("Razumikhin checks need a delay trajectory with stored history")
    vals = _Values(cert, traj)
    sups = _window_sups(cert, traj, theta)
    report = ViolationReport([], tol)
    idx = {nm: j for j, nm in enumerate(cert.names)}
    for i, sub in enumerate(cert.subs):
        row = np.zeros(cert.n)
        for other, val in sub.gains:
            row[idx[other]] = val  # a self gain acts on the own window supremum
        other = np.max(sups * row[None, :], axis=1)
        g = np.asarray(sub.gain_u(vals.unorm[:, i]), dtype=float)
        premise = vals.V[:, i] >= np.maximum(other, g)
        report.merge(_flow_check(traj, vals.V[:, i], premise, sub.c, tol, sub.name))
        for kl, kp in _event_rows(traj):
            bound = max(math.exp(-sub.d) * vals.V[kl, i], float(other[kl]), float(g[kl]))
            _jump_entry(report, traj.t[kl], vals.V[kp, i], bound, tol, sub.name)
    if mu is not None:
        if cert.n == 1:
            report.gate_ok = razumikhin_gain_gate(cert.self_gain(0), mu)
        else:
            try:
                comp = compose(cert, flavor="razumikhin", mu=mu)
                report.gate_ok = razumikhin_gain_gate(comp.gamma_t, mu)
            except CompositionError as exc:
                report.gate_ok = False
                report.note = str(exc)
    return report


# ----------------------------------------------------------- Krasovskii


@dataclass(frozen=True)
class WindowFunctional:
    """Functional on history windows built from a pointwise expression.

    ``sup``: supremum of ``W`` over the window; ``integral``: trapezoidal
    integral of ``W`` over the window; ``point``: ``W`` at the right end.
    """

    kind: str
    W: object

    def __post_init__(self):
        if self.kind not in ("sup", "integral", "point"):
            raise DomainError(f"unsupported functional form {self.kind!r}")
        if isinstance(self.W, str):
            object.__setattr__(self, "W", parse_expr(self.W))

    def __call__(self, seg: HistorySegment, state_names):
        start = seg.t_end - seg.theta
        if self.kind == "point" or seg.theta == 0:
            x = seg.x[-1:]
            return float(eval_on_rows(self.W, x, state_names)[0])
        t, x = _window_samples(seg, start)
        w = eval_on_rows(self.W, x, state_names)
        if self.kind == "sup":
            return float(np.max(w))
        return float(_trapezoid(w, t))


_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def _window_samples(seg, start):
    x0 = seg.value_at(start)
    inside = seg.t > start
    t = np.concatenate([[start], seg.t[inside]])
    x = np.vstack([x0[None, :], seg.x[inside]])
    return t, x


def check_krasovskii(functional: WindowFunctional, c: float, d: float, traj: Trajectory,
                     tol: float = 1e-3, gamma_u: KFunction | None = None,
                     psi1: KFunction | None = None, psi2: KFunction | None = None,
                     stride: int = 1) -> ViolationReport:
    """Krasovskii decay, sandwich and jump conditions on whole windows.

    ``|phi|_a`` is the sup norm of the window (constants ``b = c~ = 1``).
    ``stride`` thins the flow samples for long trajectories.
    """
    if not isinstance(functional, WindowFunctional):
        raise DomainError("unsupported functional form")
    gamma_u = gamma_u or KFunction.zero()
    psi1 = psi1 or KFunction.identity()
    psi2 = psi2 or KFunction.identity()
    names = traj.state_names
    report = ViolationReport([], tol)
    unorm = np.linalg.norm(traj.u, axis=1) if traj.u.shape[1] else np.zeros(traj.t.size)
    cache = {}

    def F(k, left=False):
        key = (k, left)
        if key not in cache:
            seg = traj.window(traj.t[k], left=left)
            cache[key] = (functional(seg, names), seg)
        return cache[key]

    rows = _flow_rows(traj)[::stride]
    t = traj.t
    for k in rows:
        v, seg = F(k)
        # sandwich with the sup norm of the window
        _, xw = _window_samples(seg, seg.t_end - seg.theta) if seg.theta > 0 else (None, seg.x[-1:])
        sup = float(np.max(np.linalg.norm(xw, axis=1)))
        lo = float(psi1(float(np.linalg.norm(traj.x[k]))))
        hi = float(psi2(sup))
        if v < lo - tol * (1 + v) or v > hi + tol * (1 + v):
            report.violations.append(Violation(float(t[k]), "sandwich", v, lo if v < lo else hi,
                                               -abs(v - (lo if v < lo else hi)), "functional"))
        if v < ZERO_STATE or v < float(gamma_u(unorm[k])):
            continue
        v1, _ = F(k + 1, left=bool(traj.is_left[k + 1]))
        h = t[k + 1] - t[k]
        lhs = (v1 - v) / h
        rhs = -c * v
        margin = rhs + tol * (1.0 + v) - lhs
        report.checked += 1
        if margin < 0:
            report.violations.append(Violation(float(t[k]), "flow", lhs, rhs, margin, "functional"))
    for kl, kp in _event_rows(traj):
        pre, _ = F(kl, left=True)
        post, _ = F(kp)
        if pre < float(gamma_u(unorm[kl])):
            continue
        _jump_entry(report, t[kl], post, math.exp(-d) * pre, tol, "functional")
    return report


# ---------------------------------------------------------- composition


def _composite_psi(cert, s):
    n = cert.n
    root_n = math.sqrt(n)
    p1 = [sub.psi1 for sub in cert.subs]
    p2 = [sub.psi2 for sub in cert.subs]
    if all(p.kind == "linear" for p in p1 + p2):
        lo = min(p.params[0] / si for p, si in zip(p1, s)) / root_n
        hi = max(p.params[0] / si for p, si in zip(p2, s))
        return KFunction.linear(lo), KFunction.linear(hi)
    # mixed families: tabulate on a log grid and extend linearly
    grid = np.concatenate([[0.0], np.logspace(-6, 6, 241)])
    lo = np.min([np.asarray(p(grid / root_n)) / si for p, si in zip(p1, s)], axis=0)
    hi = np.max([np.asarray(p(grid)) / si for p, si in zip(p2, s)], axis=0)
    lo = np.maximum.accumulate(lo)
    hi = np.maximum.accumulate(hi)
    lo = lo + grid * 1e-15  # keep the knots strictly increasing
    hi = hi + grid * 1e-15
    return KFunction.tabulated(grid, lo, extend=True), KFunction.tabulated(grid, hi, extend=True)


def _max_gain_u(cert, s, factor):
    gains = [sub.gain_u for sub in cert.subs]
    if all(g.kind == "linear" for g in gains):
        return KFunction.linear(factor * max(g.params[0] / si for g, si in zip(gains, s)))
    grid = np.concatenate([[0.0], np.logspace(-6, 6, 241)])
    vals = factor * np.max([np.asarray(g(grid)) / si for g, si in zip(gains, s)], axis=0)
    vals = np.maximum.accumulate(vals) + grid * 1e-15
    return KFunction.tabulated(grid, vals, extend=True)


def razumikhin_alpha(mu: float, d: float) -> float:
    """``min(e^{-mu}, e^{-d-mu})`` for the scaled small-gain condition."""
    return min(math.exp(-mu), math.exp(-d - mu))


def compose(cert: ExpLyapCertificate, gamma=None, flavor: str = "delayfree",
            mu: float | None = None) -> CompositeCertificate:
    """Composite certificate ``V = max_i V_i / s_i`` for a network.

    ``delayfree`` and ``krasovskii``: ``s`` solves ``Gamma(s) < s`` and
    ``d = min({d_i} U {-ln(s_j gamma_ij / s_i)})``.  ``razumikhin``: ``s``
    solves ``Gamma(s) < min(e^{-mu}, e^{-d-mu}) s`` with ``d = min_i d_i``,
    and ``gamma_t = max(e^d, 1) max_kj s_j gamma_kj / s_k``.  Always
    ``c = min_i c_i`` and ``gamma_u = max(e^d, 1) max_i gamma_i^u / s_i``.
    """
    if flavor not in ("delayfree", "razumikhin", "krasovskii"):
        raise DomainError(f"unknown flavor {flavor!r}")
    gamma = cert.gain_matrix() if gamma is None else as_gain_matrix(gamma)
    if gamma.n != cert.n:
        raise DomainError(f"gain matrix of size {gamma.n} for {cert.n} subsystems")
    g = gamma.entries
    c = min(sub.c for sub in cert.subs)
    d_min = min(sub.d for sub in cert.subs)
    if flavor == "razumikhin":
        if mu is None:
            raise DomainError("the Razumikhin composition needs mu")
        alpha = razumikhin_alpha(mu, d_min)
    else:
        alpha = 1.0
    s = find_scaling_vector(gamma, alpha)
    if s is None:
        rep = cycle_condition(gamma, alpha)
        cyc = "->".join(cert.names[k] for k in rep.worst_cycle + rep.worst_cycle[:1])
        raise CompositionError(f"small-gain condition fails at threshold {alpha!r}: cycle "
                               f"{cyc} has mean gain {float(rep.rho)!r}", worst_cycle=rep.worst_cycle)
    if flavor == "razumikhin":
        d = d_min
        prov = "d = min_i d_i"
    else:
        cand = [sub.d for sub in cert.subs]
        n = cert.n
        cand += [-math.log(s[j] / s[i] * g[i, j]) for i in range(n) for j in range(n)
                 if i != j and g[i, j] > 0]
        d = min(cand)
        prov = "d = min over d_i and -ln(s_j gamma_ij / s_i)"
    factor = max(math.exp(d), 1.0)
    gamma_t = None
    if flavor == "razumikhin":
        gamma_t = factor * float(np.max(g * s[None, :] / s[:, None])) if cert.n > 1 else 0.0
    psi1, psi2 = _composite_psi(cert, s)
    return CompositeCertificate(s, cert, c, d, _max_gain_u(cert, s, factor), gamma_t, flavor,
                                psi1, psi2, prov)


def composite_value(comp: CompositeCertificate, x, state_names):
    """``V(x) = max_i V_i(x_i) / s_i`` on one state or a batch of rows."""
    x = np.atleast_2d(x)
    v = np.column_stack([eval_on_rows(sub.V, x, state_names) for sub in comp.base.subs])
    return np.max(v / comp.s[None, :], axis=1)


# ------------------------------------------------------------- envelope


@dataclass
class EnvelopeResult:
    ok: bool
    worst_margin: float
    worst_time: float
    bound: np.ndarray
    norm: np.ndarray


def _envelope_data(cert):
    if isinstance(cert, CompositeCertificate):
        return cert.psi1, cert.psi2, cert.gamma_u, cert.d
    if cert.n != 1:
        raise DomainError("envelope needs a single-system or composite certificate")
    sub = cert.subs[0]
    return sub.psi1, sub.psi2, sub.gain_u, sub.d


def iss_envelope(cert, mu: float, lam: float, traj: Trajectory) -> EnvelopeResult:
    """Pointwise ``|x(t)| <= max(beta(|xi|, t - t0), gamma(|u|_[t0,t]))``.

    ``beta(r, t) = psi1^{-1}(e^{mu - lam t} psi2(r))`` and ``gamma(r) =
    psi1^{-1}(e^{mu + |d|} gamma_u(r))``; ``|xi|`` is the sup norm of the
    initial history.
    """
    psi1, psi2, gamma_u, d = _envelope_data(cert)
    xi = float(np.max(np.linalg.norm(traj.initial_history.x, axis=1)))
    t = traj.t - traj.t0
    with np.errstate(over="ignore"):
        beta = psi1.inverse_many(np.exp(mu - lam * t) * float(psi2(xi)))
    if traj.u.shape[1]:
        unorm = np.maximum.accumulate(np.linalg.norm(traj.u, axis=1))
    else:
        unorm = np.zeros(t.size)
    with np.errstate(over="ignore"):
        gam = psi1.inverse_many(math.exp(mu + abs(d)) * np.asarray(gamma_u(unorm), dtype=float))
    bound = np.maximum(beta, gam)
    norm = np.linalg.norm(traj.x, axis=1)
    slack = bound * 1e-12 + 1e-300
    margin = bound + slack - norm
    k = int(np.argmin(margin))
    return EnvelopeResult(bool(margin[k] >= 0), float(bound[k] - norm[k]), float(traj.t[k]),
                          bound, norm)


# --------------------------------------------------------------- gate


@dataclass
class GateVerdict:
    iss: bool
    flavor: str
    checks: list  # (name, ok, detail)
    composite: CompositeCertificate | None = None
    adt_sup: float | None = None

    def lines(self):
        out = [f"ISS: {str(self.iss).lower()}", f"flavor: {self.flavor}"]
        for name, ok, detail in self.checks:
            out.append(f"{name}: {'pass' if ok else 'fail'}" + (f" ({detail})" if detail else ""))
        if self.composite is not None:
            comp = self.composite
            out.append(f"c: {comp.c!r}")
            out.append(f"d: {comp.d!r}")
            out.append("s: " + ", ".join(repr(float(v)) for v in comp.s))
            if comp.gamma_t is not None:
                out.append(f"gamma_t: {comp.gamma_t!r}")
        if self.adt_sup is not None:
            out.append(f"adt_sup: {self.adt_sup!r}")
        return out


def theorem_gate(cert: ExpLyapCertificate, gamma, seq: ImpulseSequence, flavor: str,
                 mu: float, lam: float) -> GateVerdict:
    """Composition, small-gain, dwell-time and flavor gates in one verdict.

    ``d = 0`` is flagged: jumps then do not destabilize and the decision
    rests on ``c > 0`` together with the dwell-time check.
    """
    checks = []
    params = DwellParams(mu, lam)
    gamma = cert.gain_matrix() if gamma is None else as_gain_matrix(gamma)
    d_min = min(sub.d for sub in cert.subs)
    alpha = razumikhin_alpha(mu, d_min) if flavor == "razumikhin" else 1.0
    rep = cycle_condition(gamma, alpha)
    checks.append(("smallgain", rep.ok, f"rho {rep.rho:.6g} vs threshold {alpha:.6g}"
                   + (f", worst cycle {_cycle_text(cert, rep.worst_cycle)}"
                      if rep.worst_cycle else "")))
    try:
        comp = compose(cert, gamma, flavor, mu)
    except CompositionError as exc:
        checks.append(("compose", False, str(exc)))
        return GateVerdict(False, flavor, checks)
    checks.append(("compose", True, comp.provenance))
    if comp.d == 0:
        checks.append(("rates", comp.c > 0, "d = 0: jumps do not destabilize, requires c > 0"))
    else:
        checks.append(("rates", True, f"d = {comp.d:.6g}"))
    sup = adt_supremum(seq, comp.c, comp.d, lam)
    member = in_class(seq, params, _rates(comp))
    detail = f"sup {sup:.6g} vs mu {mu:.6g}"
    if seq.period is not None:
        detail += f", per-period rate {'ok' if periodic_rate_ok(seq.period, comp.c, comp.d, lam) else 'fails'}"
    checks.append(("dwell", member, detail))
    if flavor == "razumikhin":
        ok = razumikhin_gain_gate(comp.gamma_t, mu)
        checks.append(("gamma_t", ok, f"{comp.gamma_t:.6g} < e^-mu = {math.exp(-mu):.6g}"))
    iss = all(ok for _, ok, _ in checks)
    return GateVerdict(iss, flavor, checks, comp, sup)


def _rates(comp):
    from .core import RateCoeffs
    return RateCoeffs(comp.c, comp.d)


def _cycle_text(cert, cycle):
    names = cert.names
    return "->".join(names[k] for k in tuple(cycle) + tuple(cycle[:1]))


# ---------------------------------------------------------- cert files

_CERT_BLOCK = re.compile(r"cert\s+([A-Za-z_][A-Za-z0-9_]*)\s*\{(.*?)\}", re.S)


def parse_certificate(text: str) -> ExpLyapCertificate:
    """Parse ``cert NAME { V = ...; c = ...; d = ...; gain OTHER = ...;
    gainU = SPEC; psi1 = SPEC; psi2 = SPEC; inputs = a, b; }`` blocks."""
    text = re.sub(r"#[^\n]*", "", text)
    subs = []
    pos = 0
    for m in _CERT_BLOCK.finditer(text):
        if text[pos:m.start()].strip():
            raise DslError(f"unexpected text before certificate {m.group(1)!r}")
        pos = m.end()
        fields = {"gains": {}}
        for stmt in m.group(2).split(";"):
            stmt = stmt.strip()
            if not stmt:
                continue
            key, eq, value = stmt.partition("=")
            if not eq:
                raise DslError(f"certificate {m.group(1)!r}: malformed statement {stmt!r}")
            key, value = key.strip(), value.strip()
            try:
                if key == "V":
                    fields["V"] = parse_expr(value)
                elif key in ("c", "d"):
                    fields[key] = float(value)
                elif key.startswith("gain ") or key.startswith("gain\t"):
                    fields["gains"][key[5:].strip()] = float(value)
                elif key == "gainU":
                    fields["gain_u"] = parse_kfunction(value)
                elif key in ("psi1", "psi2"):
                    fields[key] = parse_kfunction(value)
                elif key == "inputs":
                    fields["inputs"] = tuple(v.strip() for v in value.split(",") if v.strip())
                else:
                    raise DslError(f"certificate {m.group(1)!r}: unknown field {key!r}")
            except ValueError as exc:
                raise DslError(f"certificate {m.group(1)!r}: {exc}") from None
        for req in ("V", "c", "d"):
            if req not in fields:
                raise DslError(f"certificate {m.group(1)!r} lacks {req!r}")
        subs.append(SubsystemCert(m.group(1), fields["V"], fields["c"], fields["d"],
                                  tuple(fields["gains"].items()),
                                  fields.get("gain_u", KFunction.zero()),
                                  fields.get("psi1", KFunction.identity()),
                                  fields.get("psi2", KFunction.identity()),
                                  fields.get("inputs")))
    if text[pos:].strip() or not subs:
        raise DslError("certificate file must consist of cert blocks")
    return ExpLyapCertificate(tuple(subs))


def load_certificate(path) -> ExpLyapCertificate:
    with open(path, encoding="utf-8") as fh:
        return parse_certificate(fh.read())


def format_certificate(cert: ExpLyapCertificate) -> str:
    out = []
    for sub in cert.subs:
        parts = [f"V = {to_text(sub.V)}", f"c = {sub.c!r}", f"d = {sub.d!r}"]
        parts += [f"gain {other} = {val!r}" for other, val in sub.gains]
        parts += [f"gainU = {sub.gain_u.spec()}", f"psi1 = {sub.psi1.spec()}",
                  f"psi2 = {sub.psi2.spec()}"]
        if sub.inputs is not None:
            parts.append("inputs = " + ", ".join(sub.inputs))
        out.append(f"cert {sub.name} {{\n  " + ";\n  ".join(parts) + ";\n}")
    return "\n".join(out) + "\n"


def vector_blocks(cert: ExpLyapCertificate, model):
    """Check that each certificate matches a model subsystem by name."""
    names = [sub.name for sub in model.subsystems]
    if list(cert.names) != names:
        raise DomainError(f"certificate subsystems {list(cert.names)} do not match "
                          f"model subsystems {names}")
    return True

