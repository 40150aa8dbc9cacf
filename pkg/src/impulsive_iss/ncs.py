"""Estimation-error system of a networked control loop with delays.

``n`` scalar nodes ``x_i' = -a_i x_i + sum_j a_ij x_j(t - tau_ij) + b_i nu_i``
share a network that transmits one measurement ``y_i = x_i + mu_i`` per
impulse.  The estimation error ``e = xhat - x`` flows with the same delayed
dynamics driven by ``-b nu`` and, at an impulse, the served node's error
resets to the measurement noise while every other node keeps its value.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .core import KFunction, RateCoeffs, sup_norm
from .dsl import parse_model
from .dwell import generate_sequence
from .errors import DomainError
from .lyapunov import (ExpLyapCertificate, SubsystemCert, iss_envelope, razumikhin_alpha,
                       theorem_gate)
from .sim import SimConfig, simulate
from .smallgain import GainMatrix, cycle_condition, write_gain_matrix
from .svg import emit_svg

DEFAULT_A = ((0.0, 0.25, 0.25), (0.7, 0.0, 0.65), (0.15, 0.1, 0.0))


def default_noise(i, phase=0.0, amplitude=0.05):
    """Measurement noise ``amplitude * sin(13 i t + phase)`` of node ``i`` (1-based)."""
    return lambda t: amplitude * math.sin(13.0 * i * t + phase)


@dataclass
class NcsParams:
    n: int = 3
    a: tuple = (1.0, 2.0, 0.5)
    A: tuple = DEFAULT_A
    b: tuple = (1.0, 1.0, 1.0)
    tau: object = 0.03  # scalar or n x n matrix
    theta: float = 0.03
    eps: tuple = (0.1, 0.1, 0.1)
    protocol: str = "tod"
    send_period: float = 0.1
    nu: object = 2.0  # constant, vector or callable per node
    noise: object = None  # list of callables, constants, or None for the default
    xi: tuple = (0.9, 0.3, 0.6)
    horizon: float = 6.0
    dt: float = 1e-3
    mu: float = 0.01
    lam: float | None = None  # defaults to c / 2
    noise_seed: int | None = None

    def __post_init__(self):
        n = self.n
        self.a = tuple(float(v) for v in np.broadcast_to(self.a, (n,)))
        self.b = tuple(float(v) for v in np.broadcast_to(self.b, (n,)))
        self.eps = tuple(float(v) for v in np.broadcast_to(self.eps, (n,)))
        self.xi = tuple(float(v) for v in np.broadcast_to(self.xi, (n,)))
        A = np.array(self.A, dtype=float)
        if A.shape != (n, n):
            raise DomainError(f"coupling matrix must be {n}x{n}")
        if np.any(np.diag(A) != 0):
            raise DomainError("coupling matrix must have a zero diagonal")
        self.A = tuple(tuple(float(v) for v in r) for r in A)
        if any(ai <= 0 for ai in self.a):
            raise DomainError("self rates a_i must be positive")
        for ai, ei in zip(self.a, self.eps):
            if not (0 <= ei < ai):
                raise DomainError(f"margin eps={ei!r} must lie in [0, a_i={ai!r})")
        if np.any(self.tau_matrix() < 0) or np.any(self.tau_matrix() > self.theta + 1e-15):
            raise DomainError("delays must lie in [0, theta]")
        if not self.send_period > 0:
            raise DomainError("send period must be positive")
        if self.protocol not in ("tod", "roundrobin"):
            raise DomainError(f"unknown protocol {self.protocol!r}")

    def tau_matrix(self):
        tau = np.array(self.tau, dtype=float)
        if tau.ndim == 0:
            tau = np.full((self.n, self.n), float(tau))
        np.fill_diagonal(tau, 0.0)
        return tau

    @property
    def c(self):
        return min(self.eps)

    @property
    def lam_value(self):
        return self.c / 2 if self.lam is None else self.lam


def derive_gains(p: NcsParams):
    """``(Gamma, [gamma_i^u], [RateCoeffs])`` of the node certificates ``V_i = |e_i|``.

    ``gamma_ij = n |a_ij| / (a_i - eps_i)``, ``gamma_i^u(r) = max(1, n |b_i| /
    (a_i - eps_i)) r``, ``c_i = eps_i`` and ``d_i = 0``.
    """
    n = p.n
    A = np.abs(np.array(p.A))
    denom = np.array(p.a) - np.array(p.eps)
    if np.any(denom <= 0):
        raise DomainError("a_i - eps_i must be positive")
    gamma = GainMatrix(n * A / denom[:, None])
    gu = [KFunction.linear(max(1.0, n * abs(bi) / di)) for bi, di in zip(p.b, denom)]
    rates = [RateCoeffs(ei, 0.0) for ei in p.eps]
    return gamma, gu, rates


def ncs_certificate(p: NcsParams) -> ExpLyapCertificate:
    gamma, gu, rates = derive_gains(p)
    subs = []
    for i in range(p.n):
        gains = tuple((f"node{j + 1}", float(gamma[i, j])) for j in range(p.n)
                      if j != i and gamma[i, j] > 0)
        subs.append(SubsystemCert(f"node{i + 1}", f"abs(e{i + 1})", rates[i].c, rates[i].d,
                                  gains, gu[i], inputs=(f"mu{i + 1}", f"nu{i + 1}")))
    return ExpLyapCertificate(tuple(subs))


def model_text(p: NcsParams) -> str:
    tau = p.tau_matrix()
    lines = [f"model ncs{p.n} {{", f"  theta {p.theta!r};",
             f"  input nu[{p.n}];", f"  input mu[{p.n}];"]
    for i in range(p.n):
        terms = [f"-{p.a[i]!r}*e{i + 1}"]  # floats: repr gives exact round-trip text
        for j in range(p.n):
            aij = float(p.A[i][j])
            if j == i or aij == 0:
                continue
            tij = float(tau[i, j])
            ref = f"e{j + 1}@{tij!r}" if tij > 0 else f"e{j + 1}"
            terms.append(f"({aij!r})*{ref}")
        if p.b[i] != 0:
            terms.append(f"({-p.b[i]!r})*nu{i + 1}")
        lines += [f"  sub node{i + 1}[1] {{", f"    flow e{i + 1}' = " + " + ".join(terms) + ";",
                  "  }"]
    lines.append("}")
    return "\n".join(lines) + "\n"


def build_model(p: NcsParams):
    return parse_model(model_text(p))


# ------------------------------------------------------------- protocol


@dataclass
class ProtocolState:
    last: int = -1  # 0-based index of the last served node, -1 before any


def protocol_select(p: NcsParams, state: ProtocolState, e_left) -> int:
    """0-based node served at an impulse.

    ``tod`` serves the largest ``|e_i^-|`` (lowest index on ties);
    ``roundrobin`` serves the cyclic successor of the last served node.
    """
    e_left = np.asarray(e_left, dtype=float)
    if e_left.shape != (p.n,):
        raise DomainError(f"error vector of size {e_left.size}, expected {p.n}")
    if p.protocol == "tod":
        k = int(np.argmax(np.abs(e_left)))  # argmax keeps the first maximum
    else:
        k = (state.last + 1) % p.n
    state.last = k
    return k


# ------------------------------------------------------------ simulation


def _signals(p: NcsParams):
    """Input dictionary ``{"nu": ..., "mu": ...}`` for the simulator."""
    if callable(p.nu):
        nu = p.nu
    else:
        nu = np.broadcast_to(np.asarray(p.nu, dtype=float), (p.n,)).copy()
    if p.noise is None:
        rng = np.random.default_rng(p.noise_seed) if p.noise_seed is not None else None
        phases = rng.uniform(0, 2 * math.pi, p.n) if rng is not None else np.zeros(p.n)
        fns = [default_noise(i + 1, phases[i]) for i in range(p.n)]
        mu = lambda t: np.array([f(t) for f in fns])  # noqa: E731
    elif callable(p.noise):
        mu = p.noise
    elif isinstance(p.noise, (list, tuple)) and p.noise and callable(p.noise[0]):
        fns = list(p.noise)
        mu = lambda t: np.array([f(t) for f in fns])  # noqa: E731
    else:
        mu = np.broadcast_to(np.asarray(p.noise, dtype=float), (p.n,)).copy()
    return {"nu": nu, "mu": mu}


@dataclass
class NcsRun:
    traj: object
    norm_t: np.ndarray
    norm: np.ndarray
    served: list = field(default_factory=list)  # (time, node) pairs, node 0-based


def simulate_error_system(p: NcsParams, cfg: SimConfig | None = None) -> NcsRun:
    """Simulate the error system under the protocol on ``t_k = k * send_period``."""
    cfg = cfg or SimConfig(dt=p.dt, horizon=p.horizon)
    cfg = replace(cfg, inputs=_signals(p))
    model = build_model(p)
    seq = generate_sequence("periodic", cfg.t0, cfg.horizon, period=p.send_period)
    state = ProtocolState()
    served = []
    n = p.n

    def jump(t, x_left, u_left):
        k = protocol_select(p, state, x_left)
        served.append((t, k))
        out = np.array(x_left, dtype=float)
        out[k] = u_left[n + k]  # mu_k at the left limit
        return out

    traj = simulate(model, seq, np.array(p.xi), cfg, jump=jump)
    return NcsRun(traj, traj.t.copy(), traj.norms(), served)


# ------------------------------------------------------------- pipeline


@dataclass
class NcsReport:
    gamma: GainMatrix
    cycles: object
    verdict: object
    envelope: object
    run: NcsRun

    @property
    def iss(self):
        return bool(self.verdict.iss)


def analyze(p: NcsParams, simulate_run: bool = True) -> NcsReport:
    gamma, _, _ = derive_gains(p)
    cert = ncs_certificate(p)
    seq = generate_sequence("periodic", 0.0, p.horizon, period=p.send_period)
    lam = p.lam_value
    d = min(sub.d for sub in cert.subs)
    cycles = cycle_condition(gamma, razumikhin_alpha(p.mu, d))
    verdict = theorem_gate(cert, gamma, seq, "razumikhin", p.mu, lam)
    run = envelope = None
    if simulate_run:
        run = simulate_error_system(p)
        if verdict.composite is not None:
            envelope = iss_envelope(verdict.composite, p.mu, lam, run.traj)
    return NcsReport(gamma, cycles, verdict, envelope, run)


def format_gains(gamma: GainMatrix) -> str:
    return "\n".join(" ".join(f"{v:.4f}" for v in row) for row in gamma.entries) + "\n"


def reproduce(out_dir, p: NcsParams | None = None) -> NcsReport:
    """Run the full pipeline and write ``gains.txt``, ``verdict.txt``,
    ``traj.csv``, ``norm.csv`` and ``norm.svg`` into ``out_dir``."""
    p = p or NcsParams()
    os.makedirs(out_dir, exist_ok=True)
    rep = analyze(p)
    with open(os.path.join(out_dir, "gains.txt"), "w", encoding="utf-8") as fh:
        fh.write(format_gains(rep.gamma))
    write_gain_matrix(rep.gamma, os.path.join(out_dir, "gains.mat"), digits=4)
    with open(os.path.join(out_dir, "verdict.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(report_lines(rep, p)) + "\n")
    rep.run.traj.to_csv(os.path.join(out_dir, "traj.csv"))
    with open(os.path.join(out_dir, "norm.csv"), "w", encoding="utf-8") as fh:
        fh.write("t,norm\n")
        for t, v in zip(rep.run.norm_t, rep.run.norm):
            fh.write(f"{float(t)!r},{float(v)!r}\n")
    emit_svg(zip(rep.run.norm_t, rep.run.norm), os.path.join(out_dir, "norm.svg"),
             title="Euclidean norm of the estimation error", ylabel="|e(t)|")
    return rep


def report_lines(rep: NcsReport, p: NcsParams):
    cyc = rep.cycles
    names = [f"node{k + 1}" for k in cyc.worst_cycle]
    lines = [f"iss: {str(rep.iss).lower()}",
             f"rho: {cyc.rho:.5f}",
             f"threshold: {cyc.threshold:.5f}",
             f"worst_cycle: {'->'.join(names + names[:1])}",
             f"worst_cycle_product: {cyc.worst_value:.5f}",
             f"protocol: {p.protocol}",
             f"mu: {p.mu!r}",
             f"lambda: {p.lam_value!r}"]
    lines += [ln for ln in rep.verdict.lines() if not ln.startswith("ISS:")]
    if rep.envelope is not None:
        lines.append(f"envelope: {'pass' if rep.envelope.ok else 'fail'}")
        lines.append(f"envelope_margin: {rep.envelope.worst_margin!r}")
    if rep.run is not None:
        tr = rep.run.traj
        lines.append(f"initial_norm: {float(rep.run.norm[0])!r}")
        lines.append(f"final_norm: {float(rep.run.norm[-1])!r}")
        lines.append(f"sup_norm: {sup_norm(tr, (tr.t0, tr.t_end))!r}")
        lines.append(f"impulses: {len(rep.run.served)}")
    return lines
