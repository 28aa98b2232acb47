"""Dense linear algebra for small real matrices.

Eigenvalues are computed by closed form for orders 1 and 2 and by
Hessenberg reduction followed by Wilkinson-shifted QR iteration (complex
arithmetic, Givens rotations) for order >= 3. Linear systems go through
partially pivoted elimination. Spectra are compared as multisets via a
matching distance, never element-wise by index.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from itertools import permutations

import numpy as np

__all__ = [
    "Spectrum", "SingularMatrixError", "EigenConvergenceError",
    "eigenvalues", "solve_linear", "spectrum_distance", "min_pivot",
    "is_degenerate",
]

_EPS = float(np.finfo(float).eps)


class SingularMatrixError(ValueError):
    def __init__(self, pivot: float, threshold: float):
        super().__init__(f"singular matrix: pivot magnitude {pivot:.3e} below {threshold:.3e}")
        self.pivot = pivot


class EigenConvergenceError(RuntimeError):
    def __init__(self, matrix: np.ndarray, iterations: int):
        super().__init__(f"QR iteration did not converge after {iterations} sweeps "
                         f"on a {matrix.shape[0]}x{matrix.shape[0]} matrix")
        self.matrix = matrix
        self.iterations = iterations


def _as_square(m) -> np.ndarray:
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return a


# ---------------------------------------------------------------------------
# Spectra

@dataclass(frozen=True)
class Spectrum:
    """Multiset of eigenvalues, sorted by (re, im)."""

    values: tuple[complex, ...]

    @classmethod
    def of(cls, vals) -> "Spectrum":
        vals = [complex(v) for v in vals]
        scale = max([abs(v) for v in vals] + [1.0])
        # drop iteration noise in imaginary parts so real spectra stay real
        cleaned = [v if abs(v.imag) > 1e-12 * scale else complex(v.real, 0.0)
                   for v in vals]
        return cls(tuple(sorted(cleaned, key=lambda z: (z.real, z.imag))))

    @property
    def order(self) -> int:
        return len(self.values)

    def moduli_scale(self) -> float:
        return max([abs(v) for v in self.values] + [1.0])


def spectrum_distance(a: Spectrum, b: Spectrum) -> float:
    """Minimum over matchings of the maximum pairwise modulus distance.

    Exhaustive assignment for order <= 8, greedy nearest-pair above.
    """
    if a.order != b.order:
        raise ValueError(f"spectrum orders differ: {a.order} vs {b.order}")
    xs, ys = a.values, b.values
    n = len(xs)
    if n <= 8:
        best = math.inf
        for perm in permutations(range(n)):
            worst = 0.0
            for i, j in enumerate(perm):
                d = abs(xs[i] - ys[j])
                if d > worst:
                    worst = d
                    if worst >= best:
                        break
            if worst < best:
                best = worst
        return best
    remaining = list(ys)
    worst = 0.0
    for x in xs:
        j = min(range(len(remaining)), key=lambda k: abs(x - remaining[k]))
        worst = max(worst, abs(x - remaining[j]))
        remaining.pop(j)
    return worst


# ---------------------------------------------------------------------------
# Linear solve

def _eliminate(a: np.ndarray, b: np.ndarray | None):
    """In-place partially pivoted elimination; returns pivot magnitudes."""
    n = a.shape[0]
    pivots = np.empty(n)
    for col in range(n):
        p = col + int(np.argmax(np.abs(a[col:, col])))
        pivots[col] = abs(a[p, col])
        if p != col:
            a[[col, p]] = a[[p, col]]
            if b is not None:
                b[[col, p]] = b[[p, col]]
        if a[col, col] == 0.0:
            continue
        for row in range(col + 1, n):
            factor = a[row, col] / a[col, col]
            if factor != 0.0:
                a[row, col:] -= factor * a[col, col:]
                if b is not None:
                    b[row] -= factor * b[col]
    return pivots


def min_pivot(m) -> float:
    """Smallest pivot magnitude met during pivoted elimination."""
    a = _as_square(m).copy()
    return float(np.min(_eliminate(a, None)))


def is_degenerate(m, tol: float = 1e-10) -> bool:
    """Singularity test used for degeneracy flags: smallest pivot below
    ``tol`` relative to max(1, ||m||_inf)."""
    a = _as_square(m)
    scale = max(1.0, float(np.linalg.norm(a, np.inf)))
    return min_pivot(a) < tol * scale


def solve_linear(m, rhs) -> np.ndarray:
    """Solve m @ x = rhs by partially pivoted Gaussian elimination."""
    a = _as_square(m).copy()
    n = a.shape[0]
    b = np.array(rhs, dtype=float).reshape(n).copy()
    if n == 1:
        if a[0, 0] == 0.0:
            raise SingularMatrixError(0.0, 0.0)
        return np.array([float(b[0]) / float(a[0, 0])])
    if n == 2:
        return _solve_2x2(a, b)
    if n == 3:
        return _solve_3x3(a, b)
    norm = float(np.linalg.norm(a, np.inf))
    threshold = 1e-13 * norm
    pivots = _eliminate(a, b)
    worst = float(np.min(pivots))
    if worst <= threshold or worst == 0.0:
        raise SingularMatrixError(worst, threshold)
    x = np.empty(n)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - a[row, row + 1:] @ x[row + 1:]) / a[row, row]
    return x


def _solve_2x2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a00, a01 = float(a[0, 0]), float(a[0, 1])
    a10, a11 = float(a[1, 0]), float(a[1, 1])
    b0, b1 = float(b[0]), float(b[1])
    norm = max(abs(a00) + abs(a01), abs(a10) + abs(a11))
    threshold = 1e-13 * norm
    if abs(a10) > abs(a00):
        a00, a01, b0, a10, a11, b1 = a10, a11, b1, a00, a01, b0
    pivot0 = abs(a00)
    if pivot0 <= threshold or pivot0 == 0.0:
        raise SingularMatrixError(pivot0, threshold)
    factor = a10 / a00
    a11 -= factor * a01
    b1 -= factor * b0
    pivot1 = abs(a11)
    if pivot1 <= threshold or pivot1 == 0.0:
        raise SingularMatrixError(pivot1, threshold)
    x1 = b1 / a11
    return np.array([(b0 - a01 * x1) / a00, x1])


# ---------------------------------------------------------------------------
# Eigenvalues

def _solve_3x3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    rows = [[float(a[i, 0]), float(a[i, 1]), float(a[i, 2]), float(b[i])]
            for i in range(3)]
    norm = max(abs(r[0]) + abs(r[1]) + abs(r[2]) for r in rows)
    threshold = 1e-13 * norm
    for col in range(2):
        p = max(range(col, 3), key=lambda i: abs(rows[i][col]))
        if p != col:
            rows[col], rows[p] = rows[p], rows[col]
        pivot = rows[col][col]
        if abs(pivot) <= threshold or pivot == 0.0:
            raise SingularMatrixError(abs(pivot), threshold)
        for i in range(col + 1, 3):
            factor = rows[i][col] / pivot
            if factor != 0.0:
                for j in range(col + 1, 4):
                    rows[i][j] -= factor * rows[col][j]
    pivot = rows[2][2]
    if abs(pivot) <= threshold or pivot == 0.0:
        raise SingularMatrixError(abs(pivot), threshold)
    x2 = rows[2][3] / rows[2][2]
    x1 = (rows[1][3] - rows[1][2] * x2) / rows[1][1]
    x0 = (rows[0][3] - rows[0][1] * x1 - rows[0][2] * x2) / rows[0][0]
    return np.array([x0, x1, x2])


def _eig2(a: float, b: float, c: float, d: float) -> list[complex]:
    mid = 0.5 * (a + d)
    disc = 0.25 * (a - d) ** 2 + b * c
    if disc >= 0.0:
        s = math.sqrt(disc)
        return [complex(mid - s), complex(mid + s)]
    s = math.sqrt(-disc)
    return [complex(mid, -s), complex(mid, s)]


def _eig2_complex(block: np.ndarray) -> list[complex]:
    a, b = block[0, 0], block[0, 1]
    c, d = block[1, 0], block[1, 1]
    mid = 0.5 * (a + d)
    s = cmath.sqrt(0.25 * (a - d) ** 2 + b * c)
    return [mid - s, mid + s]


def _wilkinson_shift(block: np.ndarray) -> complex:
    lam1, lam2 = _eig2_complex(block)
    corner = block[1, 1]
    return lam1 if abs(lam1 - corner) <= abs(lam2 - corner) else lam2


def _hessenberg(a: np.ndarray) -> np.ndarray:
    h = a.copy()
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1:, k]
        normx = float(np.linalg.norm(x))
        if normx == 0.0:
            continue
        v = x.copy()
        v[0] += math.copysign(normx, x[0]) if x[0] != 0.0 else normx
        vnorm = float(np.linalg.norm(v))
        if vnorm == 0.0:
            continue
        v /= vnorm
        h[k + 1:, k:] -= 2.0 * np.outer(v, v @ h[k + 1:, k:])
        h[:, k + 1:] -= 2.0 * np.outer(h[:, k + 1:] @ v, v)
        h[k + 2:, k] = 0.0
    return h


def _qr_step(block: np.ndarray, shift: complex) -> None:
    """One explicit shifted QR sweep, in place, on an unreduced
    Hessenberg block (complex)."""
    m = block.shape[0]
    block[np.diag_indices(m)] -= shift
    rotations = []
    for k in range(m - 1):
        x, y = block[k, k], block[k + 1, k]
        d = math.hypot(abs(x), abs(y))
        if d == 0.0:
            c, s = complex(1.0), complex(0.0)
        else:
            c, s = x.conjugate() / d, y.conjugate() / d
        rotations.append((c, s))
        top = c * block[k, k:] + s * block[k + 1, k:]
        bot = -s.conjugate() * block[k, k:] + c.conjugate() * block[k + 1, k:]
        block[k, k:] = top
        block[k + 1, k:] = bot
        block[k + 1, k] = 0.0
    for k, (c, s) in enumerate(rotations):
        hi = min(k + 2, m)
        col = c.conjugate() * block[:hi, k] + s.conjugate() * block[:hi, k + 1]
        nxt = -s * block[:hi, k] + c * block[:hi, k + 1]
        block[:hi, k] = col
        block[:hi, k + 1] = nxt
    block[np.diag_indices(m)] += shift


def eigenvalues(m, _sweep_cap: int | None = None) -> Spectrum:
    """All eigenvalues of a small dense real matrix.

    Raises :class:`EigenConvergenceError` if the QR iteration exceeds its
    30n sweep cap (the offending matrix and count travel on the error).
    """
    a = _as_square(m)
    n = a.shape[0]
    if n == 1:
        return Spectrum.of([a[0, 0]])
    if n == 2:
        return Spectrum.of(_eig2(a[0, 0], a[0, 1], a[1, 0], a[1, 1]))

    h = _hessenberg(a).astype(complex)
    hnorm = float(np.linalg.norm(a))
    eigs: list[complex] = []
    sweeps = 0
    cap = 30 * n if _sweep_cap is None else _sweep_cap
    stall = 0
    hi = n - 1
    while hi >= 0:
        for k in range(1, hi + 1):
            thresh = _EPS * (abs(h[k - 1, k - 1]) + abs(h[k, k]))
            if thresh == 0.0:
                thresh = _EPS * hnorm
            if abs(h[k, k - 1]) <= thresh:
                h[k, k - 1] = 0.0
        lo = hi
        while lo > 0 and h[lo, lo - 1] != 0.0:
            lo -= 1
        if lo == hi:
            eigs.append(h[hi, hi])
            hi -= 1
            stall = 0
            continue
        if lo == hi - 1:
            eigs.extend(_eig2_complex(h[lo:hi + 1, lo:hi + 1]))
            hi -= 2
            stall = 0
            continue
        sweeps += 1
        stall += 1
        if sweeps > cap:
            raise EigenConvergenceError(a, sweeps)
        if stall % 12 == 0:
            shift = h[hi, hi] + 0.75 * abs(h[hi, hi - 1])  # break rare stalls
        else:
            shift = _wilkinson_shift(h[hi - 1:hi + 1, hi - 1:hi + 1])
        block = h[lo:hi + 1, lo:hi + 1]
        _qr_step(block, shift)
    return Spectrum.of(eigs)
