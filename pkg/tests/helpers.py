"""Builders shared by several test modules."""

from __future__ import annotations

import random

from nlverify.extractor import FunctionRecord


def make_function(statements: str, name: str = "f", file_path: str = "t.c") -> FunctionRecord:
    body = f"int {name}(int x)\n{{\n{statements}}}"
    return FunctionRecord(
        name, f"int {name}(int x)", (("x", "int"),), file_path, (1, body.count("\n") + 1), body
    )


def filler(n: int, indent: str = "        ") -> str:
    out, i = "", 0
    while len(out) < n:
        out += f"{indent}x = x + {i};\n"
        i += 1
    return out


_SHAPES = (
    "    x = x + {k};\n",
    "    if (x > {k}) {{\n        x -= {k};\n    }} else {{\n        x += {k};\n    }}\n",
    "    while (x > {k}) {{\n        x = x / 2;\n    }}\n",
    "    for (int i{k} = 0; i{k} < {k}; i{k}++) {{\n        x += i{k};\n    }}\n",
    "    switch (x) {{\n    case {k}:\n        x = {k};\n        break;\n    default:\n        x = 0;\n    }}\n",
)


def random_large_function(rng: random.Random, index: int, min_chars: int) -> FunctionRecord:
    """A syntactically valid function whose body exceeds `min_chars`."""
    parts, size = [], 0
    while size < min_chars:
        part = rng.choice(_SHAPES).format(k=rng.randint(1, 999))
        parts.append(part)
        size += len(part)
    return make_function("".join(parts), name=f"big{index}")
