"""OpenQASM 2 subset reader and writer.

Supported statements: ``OPENQASM 2.0;``, ``include "...";``, one ``qreg`` and
at most one ``creg``, and the gates ``x``, ``sx``, ``rz(expr)``, ``cx``,
``delay(int[dt])``, ``barrier`` and ``measure``. Anything else is rejected.
"""
from __future__ import annotations

import ast
import math
import operator
import re

from .errors import CircuitError, QasmSyntaxError
from .ir import Gate, GateKind, QuantumCircuit, barrier, cx, delay, measure, rz, sx, x

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*)
  | (?P<string>"[^"\n]*")
  | (?P<arrow>->)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[\[\]();,+\-*/^])
""", re.VERBOSE)

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}


def _tokenize(text: str):
    pos, line, col = 0, 1, 1
    tokens = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise QasmSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind, value = m.lastgroup, m.group()
        if kind not in ("ws", "comment"):
            tokens.append((kind, value, line, col))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            col = len(value) - value.rfind("\n")
        else:
            col += len(value)
        pos = m.end()
    return tokens


def _statements(tokens):
    stmt = []
    for tok in tokens:
        if tok[1] == ";":
            if not stmt:
                raise QasmSyntaxError("empty statement", tok[2], tok[3])
            yield stmt, tok
            stmt = []
        else:
            stmt.append(tok)
    if stmt:
        raise QasmSyntaxError("missing ';'", stmt[-1][2], stmt[-1][3])


def eval_angle(expr: str, line: int = 0, column: int = 0) -> float:
    """Evaluate a constant angle expression over numbers, ``pi``, + - * / and parentheses."""
    try:
        tree = ast.parse(expr.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise QasmSyntaxError(f"bad expression {expr!r}", line, column) from exc

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            try:
                return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
            except ZeroDivisionError as exc:
                raise QasmSyntaxError("division by zero", line, column) from exc
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](ev(node.operand))
        raise QasmSyntaxError(f"unsupported expression {expr!r}", line, column)

    return ev(tree)


class _Parser:
    def __init__(self):
        self.qreg: tuple[str, int] | None = None
        self.creg: tuple[str, int] | None = None
        self.gates: list[Gate] = []

    def parse(self, text: str) -> QuantumCircuit:
        for stmt, _ in _statements(_tokenize(text)):
            try:
                self.statement(stmt)
            except CircuitError as exc:
                if isinstance(exc, QasmSyntaxError):
                    raise
                raise QasmSyntaxError(exc.args[0], stmt[0][2], stmt[0][3]) from exc
        if self.qreg is None:
            raise QasmSyntaxError("no qreg declared", 1, 1)
        n_clbits = self.creg[1] if self.creg else None
        return QuantumCircuit(self.qreg[1], tuple(self.gates), n_clbits)

    def statement(self, toks):
        head = toks[0]
        self.line, self.column = head[2], head[3]
        name = head[1]
        if name == "OPENQASM" or name == "include":
            return
        if name in ("qreg", "creg"):
            return self.declare(toks)
        if name == "x":
            self.gates.append(x(*self.qubits(toks[1:], 1)))
        elif name == "sx":
            self.gates.append(sx(*self.qubits(toks[1:], 1)))
        elif name == "cx":
            self.gates.append(cx(*self.qubits(toks[1:], 2)))
        elif name == "rz":
            arg, rest = self.argument(toks)
            angle = eval_angle(" ".join(t[1] for t in arg), head[2], head[3])
            self.gates.append(rz(angle, *self.qubits(rest, 1)))
        elif name == "delay":
            arg, rest = self.argument(toks)
            values = [t[1] for t in arg]
            if values and values[-1] == "dt":
                values = values[:-1]
            if len(values) != 1 or not values[0].isdigit():
                raise QasmSyntaxError("delay takes an integer duration in dt", head[2], head[3])
            self.gates.append(delay(int(values[0]), *self.qubits(rest, 1)))
        elif name == "barrier":
            self.gates.append(barrier(*self.qubits(toks[1:], None)))
        elif name == "measure":
            self.measure(toks)
        else:
            raise QasmSyntaxError(f"unsupported gate or statement '{name}'", head[2], head[3])

    def declare(self, toks):
        kind, line, col = toks[0][1], toks[0][2], toks[0][3]
        if len(toks) != 5 or toks[2][1] != "[" or not toks[3][1].isdigit() or toks[4][1] != "]":
            raise QasmSyntaxError(f"malformed {kind} declaration", line, col)
        decl = (toks[1][1], int(toks[3][1]))
        if kind == "qreg":
            if self.qreg is not None:
                raise QasmSyntaxError("only one qreg is supported", line, col)
            self.qreg = decl
        else:
            if self.creg is not None:
                raise QasmSyntaxError("only one creg is supported", line, col)
            self.creg = decl

    def argument(self, toks):
        if len(toks) < 2 or toks[1][1] != "(":
            raise QasmSyntaxError(f"'{toks[0][1]}' needs a parenthesised argument", toks[0][2], toks[0][3])
        depth = 0
        for i, t in enumerate(toks[1:], start=1):
            if t[1] == "(":
                depth += 1
            elif t[1] == ")":
                depth -= 1
                if depth == 0:
                    return toks[2:i], toks[i + 1:]
        raise QasmSyntaxError("unbalanced parentheses", toks[0][2], toks[0][3])

    def refs(self, toks, register):
        """Split ``a[i], a[j]`` or ``a`` into index lists; ``register`` is (name, size)."""
        if not toks:
            raise QasmSyntaxError("missing operand", self.line, self.column)
        out, i = [], 0
        while i < len(toks):
            t = toks[i]
            if register is None:
                raise QasmSyntaxError("register used before declaration", t[2], t[3])
            if t[0] != "ident" or t[1] != register[0]:
                raise QasmSyntaxError(f"unknown register '{t[1]}'", t[2], t[3])
            if i + 1 < len(toks) and toks[i + 1][1] == "[":
                if i + 3 >= len(toks) or not toks[i + 2][1].isdigit() or toks[i + 3][1] != "]":
                    raise QasmSyntaxError("malformed index", t[2], t[3])
                idx = int(toks[i + 2][1])
                if idx >= register[1]:
                    raise QasmSyntaxError(
                        f"index {idx} out of range for {register[0]}[{register[1]}]", toks[i + 2][2], toks[i + 2][3])
                out.append([idx])
                i += 4
            else:
                out.append(list(range(register[1])))
                i += 1
            if i < len(toks):
                if toks[i][1] != ",":
                    raise QasmSyntaxError(f"expected ',' got {toks[i][1]!r}", toks[i][2], toks[i][3])
                i += 1
        return out

    def qubits(self, toks, arity):
        groups = self.refs(toks, self.qreg)
        if arity is None:
            return sorted({q for g in groups for q in g})
        if len(groups) != arity or any(len(g) != 1 for g in groups):
            raise QasmSyntaxError(f"expected {arity} indexed qubit operand(s)", self.line, self.column)
        return [g[0] for g in groups]

    def measure(self, toks):
        head = toks[0]
        arrows = [i for i, t in enumerate(toks) if t[0] == "arrow"]
        if len(arrows) != 1:
            raise QasmSyntaxError("measure needs 'qubit -> bit'", head[2], head[3])
        qgroups = self.refs(toks[1:arrows[0]], self.qreg)
        cgroups = self.refs(toks[arrows[0] + 1:], self.creg)
        if len(qgroups) != 1 or len(cgroups) != 1:
            raise QasmSyntaxError("measure takes one source and one target", head[2], head[3])
        qs, cs = qgroups[0], cgroups[0]
        if len(qs) != len(cs):
            raise QasmSyntaxError("measure register sizes differ", head[2], head[3])
        self.gates.extend(measure(q, c) for q, c in zip(qs, cs))


def parse_qasm(text: str) -> QuantumCircuit:
    return _Parser().parse(text)


def _fmt_angle(theta: float) -> str:
    return repr(float(theta))


def emit_qasm(circuit: QuantumCircuit) -> str:
    """Serialize ``circuit``; gate origins are intentionally not written out."""
    lines = ["OPENQASM 2.0;", 'include "qelib1.inc";', f"qreg q[{circuit.n_qubits}];"]
    if circuit.measured_qubits or circuit.n_clbits:
        lines.append(f"creg c[{circuit.n_clbits}];")
    for g in circuit.gates:
        qs = ",".join(f"q[{q}]" for q in g.qubits)
        if g.kind is GateKind.RZ:
            lines.append(f"rz({_fmt_angle(g.angle)}) {qs};")
        elif g.kind is GateKind.DELAY:
            lines.append(f"delay({g.duration}dt) {qs};")
        elif g.kind is GateKind.MEASURE:
            lines.append(f"measure {qs} -> c[{g.clbit}];")
        elif g.kind in (GateKind.X, GateKind.SX, GateKind.CX, GateKind.BARRIER):
            lines.append(f"{g.kind.value} {qs};")
        else:
            raise ValueError(f"{g.kind.value} has no QASM form in the supported subset")
    return "\n".join(lines) + "\n"
