"""Structure of the reference-dependent Q-function matrix H.

The augmented vector is laid out as ``z = [x; u; r_0; r_1; ...; r_N]`` with
``r_i`` the reference ``i`` steps ahead. Free entries of the symmetric matrix
H are enumerated row-major over its upper triangle, skipping structural
zeros; this order is the public weight-vector order.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DimensionError, NonIntegralCount, StructureViolation
from .lti_system import tracked_coordinates

TOL_STRUCT = 1e-8


@dataclass(frozen=True)
class Layout:
    """Block boundaries of z for dimensions (n, m, N)."""

    n: int
    m: int
    N: int

    @property
    def dim(self) -> int:
        return (self.N + 2) * self.n + self.m

    @property
    def x(self) -> slice:
        return slice(0, self.n)

    @property
    def u(self) -> slice:
        return slice(self.n, self.n + self.m)

    def r(self, i: int) -> slice:
        start = self.n + self.m + i * self.n
        return slice(start, start + self.n)

    @property
    def refs(self) -> slice:
        return slice(self.n + self.m, self.dim)

    def block_of(self, idx: int) -> tuple[str, int, int]:
        """Return (kind, block index, coordinate) of a position in z."""
        if idx < self.n:
            return "x", 0, idx
        if idx < self.n + self.m:
            return "u", 0, idx - self.n
        off = idx - self.n - self.m
        return "r", off // self.n, off % self.n

    def augment(self, x, u, refs) -> np.ndarray:
        """Stack x, u and the (N+1, n) reference window into z."""
        refs = np.asarray(refs, dtype=float).reshape(self.N + 1, self.n)
        return np.concatenate([np.ravel(x), np.ravel(u), refs.ravel()])


@dataclass(frozen=True)
class SparsityPattern:
    """Ordered free entries (rows[l], cols[l]) with rows[l] <= cols[l]."""

    dim: int
    rows: np.ndarray
    cols: np.ndarray
    layout: Layout | None = None
    tracked: tuple[int, ...] = ()

    def __post_init__(self):
        for name in ("rows", "cols"):
            a = np.asarray(getattr(self, name), dtype=np.intp).copy()
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def q(self) -> int:
        return self.layout.n - len(self.tracked)

    @property
    def free_entries(self) -> list[tuple[int, int]]:
        return list(zip(self.rows.tolist(), self.cols.tolist()))

    def entry_names(self) -> list[str]:
        return [f"H[{i},{j}]" for i, j in self.free_entries]

    def mask(self) -> np.ndarray:
        """Boolean matrix marking free entries and their mirrors."""
        mk = np.zeros((self.dim, self.dim), dtype=bool)
        mk[self.rows, self.cols] = True
        mk[self.cols, self.rows] = True
        return mk


def count_weights_naive(n: int, m: int, N: int) -> int:
    d = (N + 2) * n + m
    return d * (d + 1) // 2


def count_weights_full(n: int, m: int, N: int) -> int:
    """Weights of a symmetric H with only the Q-independent zero blocks removed."""
    d = (N + 2) * n + m
    return d * (d + 1) // 2 - (n * n * (2 * N - 1) + m * n)


def count_weights_sparse(n: int, m: int, N: int, q: int) -> int:
    """Reduced weight count when q rows/columns of Q vanish."""
    if not 0 <= q <= n:
        raise ValueError(f"q must lie in [0, {n}], got {q}")
    p = n - q
    val = (
        Fraction(p * (p + 1)) * (Fraction(N, 2) + 1)
        + Fraction(n * (n + 1), 2)
        + (m + N * p) * (m + n)
        + Fraction((N - 2) * (N - 1) * p * p, 2)
    )
    if val.denominator != 1:
        raise NonIntegralCount(f"count for (n={n}, m={m}, N={N}, q={q}) is {val}")
    return int(val)


def count_weights_pattern(n: int, m: int, N: int, q: int) -> int:
    """Exact size of the pattern enumerated by build_pattern.

    Agrees with count_weights_sparse whenever n - q == m and with
    count_weights_full whenever q == 0.
    """
    if not 0 <= q <= n:
        raise ValueError(f"q must lie in [0, {n}], got {q}")
    p = n - q
    return (
        n * (n + 1) // 2  # x-x
        + m * n + m * (m + 1) // 2  # x-u, u-u
        + p * p + N * n * p  # x-r0 (tracked rows only), x-r1..rN
        + N * m * p  # u-r1..rN
        + 2 * (p * (p + 1) // 2)  # r0-r0, r1-r1
        + (N - 1) * p * p * (N - 2) // 2 + (N - 1) * (p * (p + 1) // 2)  # r2..rN among themselves
    )


def _is_free(layout: Layout, tracked: frozenset, i: int, j: int) -> bool:
    ki, bi, ci = layout.block_of(i)
    kj, bj, cj = layout.block_of(j)
    if ki == "r" and kj != "r":
        ki, bi, ci, kj, bj, cj = kj, bj, cj, ki, bi, ci
    if kj != "r":
        return True  # x/u blocks
    if cj not in tracked:
        return False
    if ki == "x":
        # h_{x r0} equals -Q, so untracked state rows vanish as well
        return bj > 0 or ci in tracked
    if ki == "u":
        return bj > 0
    if ci not in tracked:
        return False
    lo, hi = sorted((bi, bj))
    if lo == 0:
        return hi == 0
    if lo == 1:
        return hi == 1
    return True


def build_pattern(n: int, m: int, N: int, Q) -> SparsityPattern:
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (n, n):
        raise DimensionError(f"Q must be {n}x{n}")
    layout = Layout(n, m, N)
    tracked = tracked_coordinates(Q)
    tset = frozenset(tracked)
    rows, cols = [], []
    for i in range(layout.dim):
        for j in range(i, layout.dim):
            if _is_free(layout, tset, i, j):
                rows.append(i)
                cols.append(j)
    return SparsityPattern(layout.dim, np.array(rows), np.array(cols), layout, tracked)


def full_pattern(dim: int) -> SparsityPattern:
    """Unstructured symmetric pattern over a vector of length ``dim``."""
    rows, cols = np.triu_indices(dim)
    return SparsityPattern(dim, rows, cols)


def phi(z, pattern: SparsityPattern) -> np.ndarray:
    """Quadratic features; accepts a single z or a stack of rows.

    Extended-precision input stays extended.
    """
    z = np.asarray(z)
    if not np.issubdtype(z.dtype, np.floating):
        z = z.astype(float)
    if z.shape[-1] != pattern.dim:
        raise DimensionError(f"z has length {z.shape[-1]}, pattern expects {pattern.dim}")
    scale = np.where(pattern.rows == pattern.cols, 0.5, 1.0)
    return z[..., pattern.rows] * z[..., pattern.cols] * scale


def weights_to_H(w, pattern: SparsityPattern) -> np.ndarray:
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.shape[0] != len(pattern):
        raise DimensionError(f"w has length {w.shape[0]}, pattern has {len(pattern)} entries")
    H = np.zeros((pattern.dim, pattern.dim))
    H[pattern.rows, pattern.cols] = w
    H[pattern.cols, pattern.rows] = w
    return H


def H_to_weights(H, pattern: SparsityPattern, tol: float = TOL_STRUCT) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    if H.shape != (pattern.dim, pattern.dim):
        raise DimensionError(f"H must be {pattern.dim}x{pattern.dim}")
    scale = np.abs(H).max()
    outside = np.abs(np.where(pattern.mask(), 0.0, H)).max()
    if outside > tol * scale:
        raise StructureViolation(f"structural zero of magnitude {outside:.3g} (|H|max={scale:.3g})")
    return 0.5 * (H[pattern.rows, pattern.cols] + H[pattern.cols, pattern.rows])


def structural_residual(H, pattern: SparsityPattern) -> float:
    """Largest |H_ij| outside the pattern, relative to |H|max."""
    H = np.asarray(H, dtype=float)
    scale = np.abs(H).max()
    if scale == 0:
        return 0.0
    return float(np.abs(np.where(pattern.mask(), 0.0, H)).max() / scale)
