"""A tiny arithmetic language over the single variable ``t``.

Grammar (``^`` is right associative and binds tighter than unary minus)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | 't' | FUNC '(' expr ')' | '(' expr ')'
    FUNC   := 'exp' | 'sin' | 'cos'

Expressions evaluate on numpy arrays and also compile to a postfix program
that the integration kernels run without calling back into Python.
"""
import math
import re

import numpy as np

from .errors import SpecError

# postfix opcodes, shared with the kernels
OP_CONST = 0
OP_T = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_DIV = 5
OP_POW = 6
OP_NEG = 7
OP_EXP = 8
OP_SIN = 9
OP_COS = 10

MAX_STACK = 64

_BINARY = {"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV, "^": OP_POW}
_FUNCS = {"exp": OP_EXP, "sin": OP_SIN, "cos": OP_COS}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            col = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise SpecError(f"unexpected character {text[col]!r} at column {col + 1} in {text!r}",
                            column=col + 1)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start + 1))
        pos = m.end()
    tokens.append(("end", "", len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, msg, tok):
        raise SpecError(f"{msg} at column {tok[2]} in {self.text!r}", column=tok[2])

    def expect(self, value):
        tok = self.take()
        if tok[1] != value:
            self.fail(f"expected {value!r}, found {tok[1] or 'end of input'!r}", tok)

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            self.fail(f"unexpected {tok[1]!r}", tok)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            node = (op, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok[1] == "-":
            self.take()
            return ("neg", self.unary())
        if tok[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            return ("^", base, self.unary())
        return base

    def atom(self):
        tok = self.take()
        kind, value = tok[0], tok[1]
        if kind == "num":
            return ("num", float(value))
        if kind == "name":
            if value == "t":
                return ("t",)
            if value in _FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return (value, arg)
            self.fail(f"unknown name {value!r}", tok)
        if value == "(":
            node = self.expr()
            self.expect(")")
            return node
        self.fail(f"unexpected {value or 'end of input'!r}", tok)


def _fold(node):
    """Constant-fold a parsed tree."""
    tag = node[0]
    if tag in ("num", "t"):
        return node
    if tag in ("neg",) + tuple(_FUNCS):
        arg = _fold(node[1])
        if arg[0] == "num":
            with np.errstate(all="ignore"):
                return ("num", float(_apply_unary(tag, np.float64(arg[1]))))
        return (tag, arg)
    lhs, rhs = _fold(node[1]), _fold(node[2])
    if lhs[0] == "num" and rhs[0] == "num":
        with np.errstate(all="ignore"):
            return ("num", float(_apply_binary(tag, np.float64(lhs[1]), np.float64(rhs[1]))))
    return (tag, lhs, rhs)


def _apply_unary(tag, x):
    if tag == "neg":
        return -x
    return {"exp": np.exp, "sin": np.sin, "cos": np.cos}[tag](x)


def _apply_binary(tag, x, y):
    if tag == "+":
        return x + y
    if tag == "-":
        return x - y
    if tag == "*":
        return x * y
    if tag == "/":
        return x / y
    return np.power(x, y)


def _eval(node, t):
    tag = node[0]
    if tag == "num":
        return np.full_like(t, node[1])
    if tag == "t":
        return t
    if len(node) == 2:
        return _apply_unary(tag, _eval(node[1], t))
    return _apply_binary(tag, _eval(node[1], t), _eval(node[2], t))


def _emit(node, ops, consts):
    tag = node[0]
    if tag == "num":
        ops.append(OP_CONST)
        consts.append(node[1])
    elif tag == "t":
        ops.append(OP_T)
    elif tag == "neg":
        _emit(node[1], ops, consts)
        ops.append(OP_NEG)
    elif tag in _FUNCS:
        _emit(node[1], ops, consts)
        ops.append(_FUNCS[tag])
    else:
        _emit(node[1], ops, consts)
        _emit(node[2], ops, consts)
        ops.append(_BINARY[tag])


def stack_depth(ops):
    depth = peak = 0
    for op in ops:
        if op in (OP_CONST, OP_T):
            depth += 1
        elif op in (OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_POW):
            depth -= 1
        peak = max(peak, depth)
    return peak


def run_program(ops, consts, t):
    """Scalar reference interpreter for a postfix program."""
    stack = []
    ci = 0
    for op in ops:
        if op == OP_CONST:
            stack.append(consts[ci])
            ci += 1
        elif op == OP_T:
            stack.append(t)
        elif op == OP_NEG:
            stack[-1] = -stack[-1]
        elif op >= OP_EXP:
            x = stack[-1]
            try:
                stack[-1] = (math.exp, math.sin, math.cos)[op - OP_EXP](x)
            except (OverflowError, ValueError):
                stack[-1] = math.inf if op == OP_EXP else math.nan
        else:
            y = stack.pop()
            x = stack[-1]
            if op == OP_ADD:
                r = x + y
            elif op == OP_SUB:
                r = x - y
            elif op == OP_MUL:
                r = x * y
            elif op == OP_DIV:
                r = x / y if y != 0.0 else math.copysign(math.inf, x) if x != 0.0 else math.nan
            else:
                try:
                    r = math.pow(x, y)
                except (OverflowError, ValueError, ZeroDivisionError):
                    r = math.nan
            stack[-1] = r
    return stack[-1]


class Expression:
    """A parsed expression in ``t``; call it with scalars or arrays."""

    def __init__(self, source):
        if isinstance(source, (int, float)) and not isinstance(source, bool):
            source = repr(float(source))
        self.source = str(source)
        self.tree = _fold(_Parser(self.source).parse())
        ops, consts = [], []
        _emit(self.tree, ops, consts)
        if stack_depth(ops) > MAX_STACK:
            raise SpecError(f"expression too deeply nested: {self.source!r}")
        self.ops = np.asarray(ops, dtype=np.int64)
        self.consts = np.asarray(consts, dtype=np.float64)

    @property
    def is_constant(self):
        return self.tree[0] == "num"

    @property
    def value(self):
        """The constant value; only meaningful when :attr:`is_constant`."""
        return self.tree[1] if self.is_constant else None

    def __call__(self, t):
        arr = np.asarray(t, dtype=float)
        with np.errstate(all="ignore"):
            out = _eval(self.tree, arr)
        return float(out) if out.ndim == 0 else out

    def __repr__(self):
        return f"Expression({self.source!r})"

    def __eq__(self, other):
        return isinstance(other, Expression) and other.tree == self.tree

    def __hash__(self):
        return hash(self.tree)

    def __getstate__(self):
        return {"source": self.source}

    def __setstate__(self, state):
        self.__init__(state["source"])


def as_expression(value):
    """Coerce numbers and strings to :class:`Expression`; pass others through."""
    if isinstance(value, Expression):
        return value
    if isinstance(value, (int, float, str)) and not isinstance(value, bool):
        return Expression(value)
    return value
