"""JSON helpers: complex numbers as [re, im] pairs of decimal strings."""
from __future__ import annotations

import numpy as np


def num_to_json(x: float) -> str:
    return repr(float(x))


def num_from_json(s) -> float:
    return float(s)


def complex_to_json(z: complex) -> list[str]:
    z = complex(z)
    return [num_to_json(z.real), num_to_json(z.imag)]


def complex_from_json(pair) -> complex:
    if isinstance(pair, (list, tuple)):
        re, im = pair
        return complex(float(re), float(im))
    return complex(float(pair))


def matrix_to_json(m: np.ndarray) -> list:
    m = np.asarray(m)
    return [[complex_to_json(v) for v in row] for row in m]


def matrix_from_json(rows) -> np.ndarray:
    return np.array([[complex_from_json(v) for v in row] for row in rows], dtype=complex)


def vector_to_json(v: np.ndarray) -> list:
    return [complex_to_json(x) for x in np.asarray(v).ravel()]


def element_to_json(a) -> list:
    """Block-major, row-major within block."""
    return [matrix_to_json(b) for b in a.blocks]


def real_or_inf(x: float):
    x = float(x)
    if np.isinf(x):
        return "inf"
    return num_to_json(x)
