"""Reference trajectories and zero-padded moving-horizon windows."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Training exo-system: rotation by ~0.2 rad per step, modulus ~1.00004.
F_REF = np.array([[0.9801, 0.1987], [-0.1987, 0.9801]])
C_REF = np.array([1.0, 0.0])

KINDS = ("exo_sine", "step", "ramp", "chirp", "piecewise", "tabulated")

# separate RNG streams for reference noise and control exploration
NOISE_STREAM = 1
EXPLORATION_STREAM = 2


@dataclass(frozen=True)
class ExoSystem:
    F_ref: np.ndarray = field(default_factory=lambda: F_REF.copy())
    C_ref: np.ndarray = field(default_factory=lambda: C_REF.copy())
    state: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0]))

    def output(self) -> float:
        return float(np.asarray(self.C_ref) @ np.asarray(self.state))


def exo_step(e: ExoSystem) -> tuple[float, ExoSystem]:
    """Return the current output and the advanced exo-system."""
    y = e.output()
    nxt = ExoSystem(e.F_ref, e.C_ref, np.asarray(e.F_ref) @ np.asarray(e.state))
    return y, nxt


def lift(value: float, n: int, coords) -> np.ndarray:
    """Place a scalar reference into the tracked state coordinates."""
    r = np.zeros(n)
    r[list(coords)] = value
    return r


@dataclass(frozen=True)
class ReferenceSource:
    """Deterministic description of a reference r_0, r_1, ...

    Scalar kinds are lifted into ``coords``; ``tabulated`` carries full
    n-vectors. ``length`` bounds the support (None means unbounded); beyond
    it the reference is zero. ``noise_std`` is only applied when a window is
    requested with ``noisy=True``.
    """

    kind: str
    n: int
    coords: tuple[int, ...]
    params: dict = field(default_factory=dict)
    length: int | None = None
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown reference kind {self.kind!r}; expected one of {KINDS}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))
        if self.kind == "tabulated":
            table = np.asarray(self.params["values"], dtype=float).reshape(-1, self.n)
            table.setflags(write=False)
            self.params["values"] = table
            if self.length is None:
                object.__setattr__(self, "length", len(table))

    def scalar(self, k: int) -> float:
        p = self.params
        if self.kind == "exo_sine":
            F = np.asarray(p.get("F_ref", F_REF), dtype=float)
            r0 = np.asarray(p.get("r0", [1.0, 0.0]), dtype=float)
            scale = p.get("amplitude", 1.0)
            return scale * float(C_REF @ np.linalg.matrix_power(F, k) @ r0)
        if self.kind == "step":
            return p.get("after", 1.0) if k >= p.get("k_step", 0) else p.get("before", 0.0)
        if self.kind == "ramp":
            k0 = p.get("k_start", 0)
            return p.get("offset", 0.0) + p.get("slope", 0.01) * max(k - k0, 0)
        if self.kind == "chirp":
            f0, f1 = p.get("f0", 0.01), p.get("f1", 0.05)
            span = p.get("span", 200)
            phase = 2 * np.pi * (f0 * k + 0.5 * (f1 - f0) * k * k / span)
            return p.get("amplitude", 1.0) * float(np.sin(phase))
        if self.kind == "piecewise":
            # list of [k, value] knots, linear interpolation, held at the ends
            knots = np.asarray(p["knots"], dtype=float)
            return float(np.interp(k, knots[:, 0], knots[:, 1]))
        raise ValueError(f"{self.kind} has no scalar form")

    def value(self, k: int) -> np.ndarray:
        """Noiseless r_k, zero outside the support."""
        if k < 0 or (self.length is not None and k >= self.length):
            return np.zeros(self.n)
        if self.kind == "tabulated":
            return np.array(self.params["values"][k])
        return lift(self.scalar(k), self.n, self.coords)

    def noise(self, k: int) -> np.ndarray:
        """Noise sample for absolute index k; independent of query order."""
        if self.noise_std == 0:
            return np.zeros(self.n)
        rng = np.random.default_rng([self.seed, NOISE_STREAM, k])
        xi = rng.standard_normal(len(self.coords)) * self.noise_std
        r = np.zeros(self.n)
        r[list(self.coords)] = xi
        return r

    def values(self, start: int, count: int, noisy: bool = False) -> np.ndarray:
        out = np.array([self.value(k) for k in range(start, start + count)]).reshape(count, self.n)
        if noisy:
            out += np.array([self.noise(k) for k in range(start, start + count)]).reshape(count, self.n)
        return out


@dataclass(frozen=True)
class ReferenceWindow:
    """r_k, ..., r_{k+N}; anything beyond the horizon reads as zero."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.array(self.entries, dtype=float, ndmin=2)
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def N(self) -> int:
        return self.entries.shape[0] - 1

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    def at(self, i: int) -> np.ndarray:
        if 0 <= i <= self.N:
            return self.entries[i].copy()
        return np.zeros(self.n)

    def future(self) -> np.ndarray:
        """r_{k+1}, ..., r_{k+N} flattened (the part the gain acts on)."""
        return self.entries[1:].ravel()


def window_at(src: ReferenceSource, k: int, N: int, noisy: bool = False) -> ReferenceWindow:
    if k < 0 or N < 1:
        raise ValueError("require k >= 0 and N >= 1")
    return ReferenceWindow(src.values(k, N + 1, noisy=noisy))


def shift(w: ReferenceWindow, next=None) -> ReferenceWindow:
    """Drop r_k and append ``next`` (zero when omitted)."""
    tail = np.zeros((1, w.n)) if next is None else np.asarray(next, dtype=float).reshape(1, w.n)
    return ReferenceWindow(np.vstack([w.entries[1:], tail]))


def exo_source(n: int, coords, amplitude: float = 1.0, length=None, noise_std=0.0, seed=0):
    return ReferenceSource("exo_sine", n, tuple(coords), {"amplitude": amplitude}, length, noise_std, seed)


def default_suite(n: int, coords, length: int = 300) -> dict[str, ReferenceSource]:
    """Test references used for tracking metrics (none of them is exo-generated
    except ``exo_sine``)."""
    c = tuple(coords)
    return {
        "exo_sine": ReferenceSource("exo_sine", n, c, {}, length),
        "step": ReferenceSource("step", n, c, {"k_step": 100, "before": 0.0, "after": 1.0}, length),
        "ramp": ReferenceSource("ramp", n, c, {"k_start": 50, "slope": 0.01}, length),
        "slow_sine": ReferenceSource(
            "chirp", n, c, {"f0": 0.01, "f1": 0.01, "span": length, "amplitude": 1.0}, length
        ),
        "chirp": ReferenceSource("chirp", n, c, {"f0": 0.005, "f1": 0.05, "span": length}, length),
        "piecewise": ReferenceSource(
            "piecewise", n, c, {"knots": [[0, 0.0], [60, 0.0], [120, 1.5], [180, 1.5], [240, -0.5]]}, length
        ),
    }


def read_reference_csv(path, coords=None) -> ReferenceSource:
    """Tabulated reference from CSV with header r1..rn, one row per step."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    expected = [f"r{i + 1}" for i in range(len(header))]
    if header != expected:
        raise ValueError(f"{path}: header must be {','.join(expected)}")
    n = len(header)
    values = np.array(rows, dtype=float).reshape(-1, n)
    if coords is None:
        coords = tuple(int(i) for i in np.flatnonzero(np.any(values != 0, axis=0)))
    return ReferenceSource("tabulated", n, tuple(coords), {"values": values})


def write_reference_csv(path, values) -> None:
    values = np.atleast_2d(np.asarray(values, dtype=float))
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"r{i + 1}" for i in range(values.shape[1])])
        w.writerows(values.tolist())
