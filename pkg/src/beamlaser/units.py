"""Quantity parsing with explicit unit checking.

Values in configuration and design files are written as ``<expr> [unit]``,
e.g. ``0.31 mm``, ``6.1e14 /s`` or ``2pi x 400 Hz``.  Every field declares a
physical *kind*; a unit belonging to another kind is rejected, and so is a
plain ``Hz`` where an angular frequency is expected (write ``2pi x 400 Hz``
or ``2513 rad/s``).  A bare number is taken in SI units of the field's kind.
"""

import ast
import math
import operator
import re

__all__ = ["UnitError", "evaluate", "parse_quantity", "KINDS"]


class UnitError(ValueError):
    """Raised when a quantity cannot be parsed or carries the wrong unit."""


_OPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
    ast.USub: operator.neg,
    ast.UAdd: operator.pos,
}
_NAMES = {"pi": math.pi, "e": math.e}


def evaluate(expr):
    """Evaluate a small arithmetic expression such as ``0.2*pi`` safely."""
    expr = expr.strip().replace("π", "pi").replace("^", "**")
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise UnitError(f"cannot parse number {expr!r}") from exc

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise UnitError(f"unsupported expression {expr!r}")

    return ev(tree)


_FREQ = {"mHz": 1e-3, "Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9}

# kind -> {unit: factor to SI}; "" is the bare-number unit
KINDS = {
    "angular_rate": {"": 1.0, "rad/s": 1.0, "1/s": 1.0, "/s": 1.0},
    "rate": {"": 1.0, "1/s": 1.0, "/s": 1.0, "atoms/s": 1.0},
    "time": {"": 1.0, "s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9},
    "length": {"": 1.0, "m": 1.0, "cm": 1e-2, "mm": 1e-3, "um": 1e-6,
               "µm": 1e-6, "nm": 1e-9},
    "velocity": {"": 1.0, "m/s": 1.0, "cm/s": 1e-2, "mm/s": 1e-3},
    "dimensionless": {"": 1.0},
    "per_acceleration": {"": 1.0, "1/(m/s^2)": 1.0, "/(m/s^2)": 1.0, "s^2/m": 1.0},
    "per_temperature": {"": 1.0, "1/K": 1.0, "/K": 1.0},
}

_ANGULAR_PREFIX = re.compile(r"^\s*(?:2\s*\*?\s*(?:pi|π))\s*[x×*]\s*", re.IGNORECASE)
_ALL_UNITS = sorted({u for table in KINDS.values() for u in table if u} | set(_FREQ),
                    key=len, reverse=True)


def _split(s):
    """Split ``s`` into (number expression, unit), longest known unit first."""
    try:
        return evaluate(s), ""
    except UnitError:
        pass
    for unit in _ALL_UNITS:
        if s.endswith(unit):
            head = s[: -len(unit)].strip()
            if head:
                try:
                    return evaluate(head), unit
                except UnitError:
                    continue
    return None, None


def parse_quantity(text, kind):
    """Parse ``text`` into a float in SI units of ``kind``.

    Parameters
    ----------
    text : str or float
        Quantity specification.  Numbers pass straight through.
    kind : str
        One of :data:`KINDS`.

    Returns
    -------
    float
    """
    if kind not in KINDS:
        raise KeyError(kind)
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip()
    angular = False
    m = _ANGULAR_PREFIX.match(s)
    if m:
        angular = True
        s = s[m.end():]
    s = s.strip()
    if s.startswith("(") and ")" in s and s.index(")") == len(s) - 1:
        s = s[1:-1]
    value, unit = _split(s)
    if value is None:
        raise UnitError(f"cannot parse quantity {text!r} (unknown unit or bad number)")

    if unit in _FREQ:
        if kind != "angular_rate":
            raise UnitError(f"{text!r}: frequency unit not valid for a {kind} quantity")
        if not angular:
            raise UnitError(
                f"{text!r}: plain {unit} is ambiguous for an angular frequency; "
                f"write '2pi x <value> {unit}' or give rad/s")
        return 2.0 * math.pi * value * _FREQ[unit]
    if angular:
        raise UnitError(f"{text!r}: '2pi x' prefix requires a Hz-family unit")
    table = KINDS[kind]
    if unit not in table:
        raise UnitError(f"{text!r}: unit {unit!r} is not a {kind} unit "
                        f"(allowed: {', '.join(u for u in table if u) or 'none'})")
    return value * table[unit]
