"""Model description language.

A model file looks like::

    model pair {
      theta 0.03;
      param a = 1;
      input nu[1];
      sub s1[1] {
        flow x1' = -a*x1 + 0.5*x2@0.03 - nu;
        jump point x1 = 2.718281828459045*x1;
      }
      sub s2[1] { flow x2' = -x2; }
    }

States are named by their ``flow`` lines; a state with no ``jump`` line
keeps its value at impulses.  ``x@tau`` reads the state ``tau`` time units
in the past.  Input ``nu[3]`` provides components ``nu1, nu2, nu3``; a one
dimensional input may also be referred to by its bare name.  ``#`` starts
a comment.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .core import HistorySegment, eval_history
from .errors import DslError, DslSyntaxError, EvalError

FUNCTIONS = {
    "sqrt": 1, "abs": 1, "sign": 1, "exp": 1, "ln": 1, "sin": 1, "cos": 1,
    "min": -2, "max": -2, "pow": 2,
}  # negative arity means "at least"

KEYWORDS = {"model", "theta", "param", "input", "sub", "flow", "jump", "point", "hist"}


# ------------------------------------------------------------------ AST


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Ref:
    name: str
    delay: float = 0.0
    pos: tuple = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Unary:
    op: str
    arg: object


@dataclass(frozen=True)
class Binary:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple
    pos: tuple = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Subsystem:
    name: str
    dim: int
    states: tuple
    flow: tuple
    jumps: tuple = ()  # (state name, expr) pairs
    jump_kinds: tuple = ()
    pos: tuple = field(default=(0, 0), compare=False, repr=False)

    def jump_map(self):
        return dict(self.jumps)

    def jump_exprs(self):
        """One jump expression per state (identity where none given)."""
        jm = self.jump_map()
        return tuple(jm.get(s, Ref(s)) for s in self.states)


@dataclass(frozen=True)
class ModelAst:
    name: str
    subsystems: tuple
    declared_theta: float | None = None
    params: tuple = ()  # (name, value)
    inputs: tuple = ()  # (name, dim)

    @property
    def state_names(self):
        return tuple(s for sub in self.subsystems for s in sub.states)

    @property
    def block_dims(self):
        return tuple(sub.dim for sub in self.subsystems)

    @property
    def dim(self):
        return len(self.state_names)

    @property
    def param_map(self):
        return dict(self.params)

    @property
    def input_names(self):
        out = []
        for name, dim in self.inputs:
            out.extend(f"{name}{k + 1}" for k in range(dim))
        return tuple(out)

    @property
    def input_dim(self):
        return sum(d for _, d in self.inputs)

    def input_index(self, name):
        """Flat index of an input component name, or None."""
        start = 0
        for base, dim in self.inputs:
            if dim == 1 and name == base:
                return start
            if name.startswith(base) and name[len(base):].isdigit():
                k = int(name[len(base):])
                if 1 <= k <= dim:
                    return start + k - 1
            start += dim
        return None

    @property
    def delays(self):
        out = set()
        for sub in self.subsystems:
            for e in sub.flow + tuple(x for _, x in sub.jumps):
                out.update(r.delay for r in iter_refs(e) if r.delay > 0)
        return sorted(out)

    @property
    def max_delay(self):
        d = self.delays
        return d[-1] if d else 0.0

    @property
    def theta(self):
        """Declared window length, or the largest delay when undeclared."""
        return self.max_delay if self.declared_theta is None else self.declared_theta

    @property
    def jump_kind(self):
        kinds = {k for sub in self.subsystems for k in sub.jump_kinds}
        if not kinds:
            return "point"
        return kinds.pop() if len(kinds) == 1 else "mixed"

    @property
    def has_jumps(self):
        return any(sub.jumps for sub in self.subsystems)

    def flow_exprs(self):
        return tuple(e for sub in self.subsystems for e in sub.flow)

    def jump_exprs(self):
        return tuple(e for sub in self.subsystems for e in sub.jump_exprs())

    def block_slices(self):
        out = []
        start = 0
        for d in self.block_dims:
            out.append(slice(start, start + d))
            start += d
        return out


def iter_nodes(e):
    yield e
    if isinstance(e, Unary):
        yield from iter_nodes(e.arg)
    elif isinstance(e, Binary):
        yield from iter_nodes(e.left)
        yield from iter_nodes(e.right)
    elif isinstance(e, Call):
        for a in e.args:
            yield from iter_nodes(a)


def iter_refs(e):
    return (n for n in iter_nodes(e) if isinstance(n, Ref))


# ---------------------------------------------------------------- printer


def _num(v):
    return repr(float(v))


def to_text(e) -> str:
    """Canonical fully parenthesized text of an expression."""
    if isinstance(e, Const):
        if e.value < 0 or math.copysign(1.0, e.value) < 0:
            return f"(-{_num(-e.value)})"
        return _num(e.value)
    if isinstance(e, Ref):
        return f"{e.name}@{_num(e.delay)}" if e.delay > 0 else e.name
    if isinstance(e, Unary):
        return f"(-{to_text(e.arg)})"
    if isinstance(e, Binary):
        return f"({to_text(e.left)} {e.op} {to_text(e.right)})"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(to_text(a) for a in e.args)})"
    raise TypeError(f"not an expression node: {e!r}")


def print_model(m: ModelAst) -> str:
    lines = [f"model {m.name} {{"]
    if m.declared_theta is not None:
        lines.append(f"  theta {_num(m.declared_theta)};")
    for name, value in m.params:
        lines.append(f"  param {name} = {_num(value)};" if value >= 0
                     else f"  param {name} = -{_num(-value)};")
    for name, dim in m.inputs:
        lines.append(f"  input {name}[{dim}];")
    for sub in m.subsystems:
        lines.append(f"  sub {sub.name}[{sub.dim}] {{")
        for s, e in zip(sub.states, sub.flow):
            lines.append(f"    flow {s}' = {to_text(e)};")
        for (s, e), kind in zip(sub.jumps, sub.jump_kinds):
            lines.append(f"    jump {kind} {s} = {to_text(e)};")
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------- lexer and parser

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),;{}\[\]=@'])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str  # number, ident, op, eol, eof
    text: str
    line: int
    col: int


def tokenize(text):
    tokens = []
    line, col_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            col = pos - col_start + 1
            raise DslSyntaxError(f"{line}:{col}: unexpected character {text[pos]!r}",
                                 line=line, column=col)
        kind = m.lastgroup
        if kind == "nl":
            tokens.append(Token("eol", "", line, pos - col_start + 1))
            line += 1
            col_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, pos - col_start + 1))
        pos = m.end()
    tokens.append(Token("eol", "", line, pos - col_start + 1))
    tokens.append(Token("eof", "", line, pos - col_start + 1))
    return tokens


class _Parser:
    def __init__(self, text):
        self.toks = tokenize(text)
        self.i = 0
        self.depth = 0
        self._skip_eol()

    # token helpers; newlines are insignificant except for error reporting
    def _skip_eol(self):
        while self.toks[self.i].kind == "eol":
            self.i += 1

    def peek(self):
        return self.toks[self.i]

    def advance(self):
        tok = self.toks[self.i]
        self.i += 1
        self._skip_eol()
        return tok

    def error(self, expected):
        # report an end-of-line position if the line ended before the token
        # (inside an unfinished expression)
        j = self.i - 1
        tok = self.toks[self.i]
        if self.depth and j >= 0 and self.toks[j].kind == "eol":
            while j > 0 and self.toks[j - 1].kind == "eol":
                j -= 1
            eol = self.toks[j]
            what, line, col = "end of line", eol.line, eol.col
        elif tok.kind == "eof":
            what, line, col = "end of input", tok.line, tok.col
        else:
            what, line, col = repr(tok.text), tok.line, tok.col
        raise DslSyntaxError(f"{line}:{col}: expected {expected}, found {what}",
                             line=line, column=col)

    def at(self, text):
        tok = self.peek()
        return tok.kind in ("op", "ident") and tok.text == text

    def expect(self, text):
        if not self.at(text):
            self.error(repr(text))
        return self.advance()

    def ident(self, what="identifier"):
        tok = self.peek()
        if tok.kind != "ident" or tok.text in KEYWORDS:
            self.error(what)
        return self.advance()

    def number(self):
        tok = self.peek()
        if tok.kind != "number":
            self.error("number")
        return float(self.advance().text)

    def signed_number(self):
        neg = False
        if self.at("-"):
            self.advance()
            neg = True
        v = self.number()
        return -v if neg else v

    def integer(self):
        tok = self.peek()
        if tok.kind != "number" or not tok.text.isdigit():
            self.error("integer")
        return int(self.advance().text)

    # grammar
    def model(self):
        self.expect("model")
        name = self.ident("model name").text
        self.expect("{")
        theta = None
        if self.at("theta"):
            self.advance()
            theta = self.number()
            self.expect(";")
        params, inputs = [], []
        while self.at("param"):
            self.advance()
            pname = self.ident("parameter name").text
            self.expect("=")
            params.append((pname, self.signed_number()))
            self.expect(";")
        while self.at("input"):
            self.advance()
            iname = self.ident("input name").text
            self.expect("[")
            dim = self.integer()
            self.expect("]")
            self.expect(";")
            inputs.append((iname, dim))
        subs = [self.sub()]
        while self.at("sub"):
            subs.append(self.sub())
        self.expect("}")
        if self.peek().kind != "eof":
            self.error("end of input")
        return ModelAst(name, tuple(subs), theta, tuple(params), tuple(inputs))

    def sub(self):
        tok = self.expect("sub")
        name = self.ident("subsystem name").text
        self.expect("[")
        dim = self.integer()
        self.expect("]")
        self.expect("{")
        states, flows = [], []
        self.expect("flow")
        while True:
            s = self.ident("state name").text
            self.expect("'")
            self.expect("=")
            flows.append(self.expr())
            self.expect(";")
            states.append(s)
            if not self.at("flow"):
                break
            self.advance()
        jumps, kinds = [], []
        while self.at("jump"):
            self.advance()
            if self.at("point") or self.at("hist"):
                kinds.append(self.advance().text)
            else:
                self.error("'point' or 'hist'")
            s = self.ident("state name").text
            self.expect("=")
            jumps.append((s, self.expr()))
            self.expect(";")
        self.expect("}")
        return Subsystem(name, dim, tuple(states), tuple(flows), tuple(jumps),
                         tuple(kinds), pos=(tok.line, tok.col))

    def expr(self):
        self.depth += 1
        node = self.term()
        while self.at("+") or self.at("-"):
            op = self.advance().text
            node = Binary(op, node, self.term())
        self.depth -= 1
        return node

    def term(self):
        node = self.factor()
        while self.at("*") or self.at("/"):
            op = self.advance().text
            node = Binary(op, node, self.factor())
        return node

    def factor(self):
        if self.at("-"):
            self.advance()
            return Unary("-", self.power())
        return self.power()

    def power(self):
        base = self.atom()
        if self.at("^"):
            self.advance()
            return Binary("^", base, self.factor())
        return base

    def atom(self):
        tok = self.peek()
        if tok.kind == "number":
            return Const(self.number())
        if self.at("("):
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if tok.kind == "ident" and tok.text not in KEYWORDS:
            self.advance()
            if self.at("("):
                self.advance()
                args = [self.expr()]
                while self.at(","):
                    self.advance()
                    args.append(self.expr())
                self.expect(")")
                return Call(tok.text, tuple(args), pos=(tok.line, tok.col))
            delay = 0.0
            if self.at("@"):
                self.advance()
                delay = self.number()
            return Ref(tok.text, delay, pos=(tok.line, tok.col))
        self.error("expression")


def parse_expr(text: str):
    """Parse a single expression."""
    p = _Parser(text)
    node = p.expr()
    if p.peek().kind != "eof":
        p.error("end of input")
    return node


def parse_model(text: str, check: bool = True) -> ModelAst:
    """Parse model text; with ``check`` also raise on validation diagnostics."""
    m = _Parser(text).model()
    if check:
        diags = validate_model(m)
        if diags:
            raise DslError(diags[0], diagnostics=diags)
    return m


def load_model(path, check=True) -> ModelAst:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read(), check=check)


# ------------------------------------------------------------- validation


def _where(node):
    pos = getattr(node, "pos", (0, 0))
    return f"{pos[0]}:{pos[1]}: " if pos[0] else ""


def validate_model(m: ModelAst) -> list:
    """Diagnostics for a parsed model; an empty list means well formed."""
    diags = []
    states = m.state_names
    seen = set()
    for s in states:
        if s in seen:
            diags.append(f"state {s!r} declared twice")
        seen.add(s)
    params = m.param_map
    for sub in m.subsystems:
        where = _where(sub)
        if sub.dim <= 0:
            diags.append(f"{where}subsystem {sub.name!r} has nonpositive dimension")
        if len(sub.flow) != sub.dim:
            diags.append(f"{where}subsystem {sub.name!r}: {len(sub.flow)} flow expressions "
                         f"for dimension {sub.dim} (arity mismatch)")
        own = set(sub.states)
        jumped = set()
        for s, e in sub.jumps:
            if s not in own:
                diags.append(f"{where}jump target {s!r} is not a state of {sub.name!r}")
            if s in jumped:
                diags.append(f"{where}state {s!r} has two jump expressions")
            jumped.add(s)
        exprs = [(e, False) for e in sub.flow]
        exprs += [(e, kind == "hist") for (_, e), kind in zip(sub.jumps, sub.jump_kinds)]
        for e, is_hist in exprs:
            for node in iter_nodes(e):
                if isinstance(node, Call):
                    arity = FUNCTIONS.get(node.func)
                    if arity is None:
                        diags.append(f"{_where(node)}unknown function {node.func!r}")
                    elif (arity > 0 and len(node.args) != arity) or \
                            (arity < 0 and len(node.args) < -arity):
                        diags.append(f"{_where(node)}{node.func} called with "
                                     f"{len(node.args)} arguments (arity mismatch)")
                elif isinstance(node, Ref):
                    if node.name in states:
                        if node.delay > 0 and is_hist:
                            diags.append(f"{_where(node)}delayed reference {node.name}@"
                                         f"{node.delay!r} in a whole-window jump")
                    elif node.name in params or m.input_index(node.name) is not None:
                        if node.delay > 0:
                            diags.append(f"{_where(node)}only states may be delayed, "
                                         f"not {node.name!r}")
                    else:
                        diags.append(f"{_where(node)}unknown identifier {node.name!r}")
                    if node.delay > m.theta:
                        diags.append(f"{_where(node)}delay exceeds horizon: "
                                     f"{node.delay!r} > theta {m.theta!r}")
    if m.jump_kind == "mixed":
        diags.append("jump kind must be uniform across subsystems (point or hist)")
    for name, _ in m.params:
        if name in states:
            diags.append(f"parameter {name!r} shadows a state")
    return diags


# ------------------------------------------------------------- evaluation


def _check(cond, msg, node, time):
    if np.any(cond):
        raise EvalError(msg, subexpression=to_text(node), time=time)


def eval_expr(e, env: Mapping, history: HistorySegment | None = None,
              state_names=(), time=None):
    """Evaluate an expression tree.

    ``env`` maps names to values (floats or equally shaped arrays for
    vectorized evaluation).  Delayed references ``x@tau`` read from
    ``history`` through Hermite interpolation, ``state_names`` giving the
    column of each state; an undelayed state missing from ``env`` is read
    from the rightmost history sample.
    """
    def ev(node):
        if isinstance(node, Const):
            return node.value
        if isinstance(node, Ref):
            if node.delay == 0 and node.name in env:
                return env[node.name]
            if history is None or node.name not in state_names:
                raise EvalError(f"no value for {node.name!r}", subexpression=to_text(node),
                                time=time)
            col = list(state_names).index(node.name)
            return float(eval_history(history, -node.delay)[col])
        if isinstance(node, Unary):
            return -ev(node.arg)
        if isinstance(node, Binary):
            a = ev(node.left)
            b = ev(node.right)
            if node.op == "+":
                return a + b
            if node.op == "-":
                return a - b
            if node.op == "*":
                return a * b
            if node.op == "/":
                _check(np.asarray(b) == 0, "division by zero", node, time)
                return np.divide(a, b) if isinstance(a + b, np.ndarray) else a / b
            return _pow(a, b, node, time)
        if isinstance(node, Call):
            args = [ev(a) for a in node.args]
            f = node.func
            x = args[0]
            vec = any(isinstance(a, np.ndarray) for a in args)
            if f == "sqrt":
                _check(np.asarray(x) < 0, "sqrt of a negative number", node, time)
                return np.sqrt(x) if vec else math.sqrt(x)
            if f == "abs":
                return np.abs(x) if vec else abs(x)
            if f == "sign":
                return np.sign(x) if vec else (1.0 if x > 0 else (-1.0 if x < 0 else 0.0))
            if f == "exp":
                with np.errstate(over="ignore"):
                    return np.exp(x) if vec else float(np.exp(x))
            if f == "ln":
                _check(np.asarray(x) <= 0, "ln of a nonpositive number", node, time)
                return np.log(x) if vec else math.log(x)
            if f == "sin":
                return np.sin(x) if vec else math.sin(x)
            if f == "cos":
                return np.cos(x) if vec else math.cos(x)
            if f in ("min", "max"):
                out = args[0]
                for a in args[1:]:
                    out = (np.minimum if f == "min" else np.maximum)(out, a) if vec else \
                        (min(out, a) if f == "min" else max(out, a))
                return out
            if f == "pow":
                return _pow(args[0], args[1], node, time)
            raise EvalError(f"unknown function {f!r}", subexpression=to_text(node), time=time)
        raise TypeError(f"not an expression node: {node!r}")

    return ev(e)


def _pow(a, b, node, time):
    aa = np.asarray(a, dtype=float)
    bb = np.asarray(b, dtype=float)
    _check((aa == 0) & (bb < 0), "zero raised to a negative power", node, time)
    _check((aa < 0) & (bb != np.floor(bb)), "negative base with fractional exponent",
           node, time)
    with np.errstate(over="ignore"):
        out = np.power(aa, bb)
    return out if out.ndim else float(out)


def substitute_params(e, params: Mapping):
    """Replace parameter references by constants."""
    if isinstance(e, Ref) and e.delay == 0 and e.name in params:
        return Const(float(params[e.name]))
    if isinstance(e, Unary):
        return Unary(e.op, substitute_params(e.arg, params))
    if isinstance(e, Binary):
        return Binary(e.op, substitute_params(e.left, params), substitute_params(e.right, params))
    if isinstance(e, Call):
        return Call(e.func, tuple(substitute_params(a, params) for a in e.args), pos=e.pos)
    return e
