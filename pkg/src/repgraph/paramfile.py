"""Plain-text parameter blocks.

A block is either a scalar::

    eps = 1e-5

or an array whose shape is given in brackets, with values on the same line
and/or the following lines until the next block::

    W1[2,8,4] =
    0 0 0 0
    ...

Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

import re

import numpy as np

from .errors import ParseError

_KEY = re.compile(r"^\s*([A-Za-z_]\w*)\s*(\[\s*[\d\s,]*\])?\s*=\s*(.*)$")


def read_param_blocks(path) -> dict[str, float | np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_param_blocks(fh.read())


def parse_param_blocks(text: str) -> dict[str, float | np.ndarray]:
    out: dict[str, float | np.ndarray] = {}
    current: tuple[str, tuple[int, ...], int] | None = None
    values: list[float] = []

    def close():
        if current is None:
            return
        name, shape, line = current
        expected = int(np.prod(shape)) if shape else 1
        if len(values) != expected:
            raise ParseError(f"block {name!r} needs {expected} values, found {len(values)}", line)
        out[name] = np.array(values, dtype=float).reshape(shape)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        match = _KEY.match(line)
        if match:
            close()
            current, values = None, []
            name, shape_txt, rest = match.groups()
            if name in out:
                raise ParseError(f"duplicate block {name!r}", lineno)
            if shape_txt is None:
                try:
                    out[name] = float(rest)
                except ValueError:
                    raise ParseError(f"scalar {name!r} has non-numeric value {rest!r}", lineno) from None
                continue
            dims = [d for d in shape_txt.strip("[] ").replace(" ", "").split(",") if d]
            current = (name, tuple(int(d) for d in dims), lineno)
            line = rest
            if not line:
                continue
        if current is None:
            raise ParseError(f"values outside any block: {raw!r}", lineno)
        try:
            values.extend(float(tok) for tok in line.split())
        except ValueError:
            raise ParseError(f"non-numeric value in block {current[0]!r}", lineno) from None
    close()
    return out


def format_param_blocks(blocks: dict[str, float | np.ndarray]) -> str:
    lines = []
    for name, value in blocks.items():
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 0 and not isinstance(value, np.ndarray):
            lines.append(f"{name} = {float(arr)!r}")
            continue
        shape = ",".join(str(s) for s in arr.shape)
        lines.append(f"{name}[{shape}] =")
        rows = arr.reshape(-1, arr.shape[-1]) if arr.ndim >= 1 and arr.size else arr.reshape(1, -1)
        for row in rows:
            lines.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"
