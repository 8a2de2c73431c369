"""Discrete-time LTI plant, quadratic tracking cost and trajectory containers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DivergedState, InvalidCostError, UncontrollableError

TOL_PSD = 1e-10
TOL_CTRB = 1e-10
DIVERGENCE_NORM = 1e8


def _frozen(a, ndim=2) -> np.ndarray:
    a = np.array(a, dtype=float, ndmin=ndim)
    a.setflags(write=False)
    return a


def controllability_matrix(A, B) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def is_controllable(A, B, tol: float = TOL_CTRB) -> bool:
    s = np.linalg.svd(controllability_matrix(A, B), compute_uv=False)
    if s[0] == 0.0:
        return False
    return int(np.sum(s > tol * s[0])) == np.asarray(A).shape[0]


@dataclass(frozen=True)
class PlantModel:
    """Ground-truth pair (A, B). Only the simulator gets to see it."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = _frozen(self.A)
        B = _frozen(self.B)
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise DimensionError(f"B must have {A.shape[0]} rows, got {B.shape}")
        if not is_controllable(A, B):
            raise UncontrollableError("(A, B) is not controllable")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


def _check_psd(M, name, strict):
    if not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise InvalidCostError(f"{name} must be symmetric")
    eig = np.linalg.eigvalsh(M)
    scale = max(np.abs(eig).max(), 1.0) if eig.size else 1.0
    if strict and eig.min() <= TOL_PSD * scale:
        raise InvalidCostError(f"{name} must be positive definite")
    if not strict and eig.min() < -TOL_PSD * scale:
        raise InvalidCostError(f"{name} must be positive semidefinite")


@dataclass(frozen=True)
class CostParams:
    Q: np.ndarray
    R: np.ndarray
    gamma: float

    def __post_init__(self):
        Q = _frozen(self.Q)
        R = _frozen(self.R)
        _check_psd(Q, "Q", strict=False)
        _check_psd(R, "R", strict=True)
        if not 0.0 <= self.gamma < 1.0:
            raise InvalidCostError(f"gamma must lie in [0, 1), got {self.gamma}")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def tracked(self) -> tuple[int, ...]:
        """State coordinates whose row or column of Q is nonzero."""
        return tracked_coordinates(self.Q)


def tracked_coordinates(Q) -> tuple[int, ...]:
    Q = np.asarray(Q)
    return tuple(int(l) for l in range(Q.shape[0]) if np.any(Q[l, :] != 0) or np.any(Q[:, l] != 0))


@dataclass
class Trajectory:
    """states has one more entry than inputs and costs."""

    states: np.ndarray
    inputs: np.ndarray
    costs: np.ndarray
    references: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.inputs = np.asarray(self.inputs, dtype=float).reshape(len(self.inputs), -1)
        self.costs = np.asarray(self.costs, dtype=float).reshape(-1)
        if not len(self.states) == len(self.inputs) + 1 == len(self.costs) + 1:
            raise DimensionError(
                f"inconsistent lengths: {len(self.states)} states, "
                f"{len(self.inputs)} inputs, {len(self.costs)} costs"
            )

    def __len__(self):
        return len(self.inputs)


def step(model: PlantModel, x, u) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if x.shape[0] != model.n or u.shape[0] != model.m:
        raise DimensionError(f"expected x in R^{model.n}, u in R^{model.m}")
    return model.A @ x + model.B @ u


def one_step_cost(cp: CostParams, x, u, r) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    r = np.asarray(r, dtype=float).reshape(-1)
    n = cp.Q.shape[0]
    if x.shape[0] != n or r.shape[0] != n or u.shape[0] != cp.R.shape[0]:
        raise DimensionError("dimension mismatch in one_step_cost")
    e = x - r
    return 0.5 * float(e @ cp.Q @ e + u @ cp.R @ u)


def discounted_cost(cp: CostParams, traj: Trajectory) -> float:
    c = traj.costs
    return float(np.sum(cp.gamma ** np.arange(len(c)) * c))


class Plant:
    """Stateful simulator. The learner interacts only through ``state`` and ``apply``."""

    def __init__(self, model: PlantModel, x0=None):
        self._model = model
        self.n = model.n
        self.m = model.m
        self.reset(x0)

    def reset(self, x0=None):
        self._x = np.zeros(self.n) if x0 is None else np.array(x0, dtype=float).reshape(self.n)

    @property
    def state(self) -> np.ndarray:
        return self._x.copy()

    def apply(self, u) -> np.ndarray:
        x = step(self._model, self._x, u)
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_NORM:
            raise DivergedState(f"|x| = {np.linalg.norm(x):.3g} exceeds {DIVERGENCE_NORM:g}")
        self._x = x
        return x.copy()


# Rotatory mass-spring-damper (second order), tracked coordinate: angle.
SYSTEM1_A = [[0.99, 0.9], [-0.02, 0.8]]
SYSTEM1_B = [[0.01], [0.02]]
SYSTEM1_Q = np.diag([100.0, 0.0])

# Single-track steering model (sixth order), tracked coordinate: lateral position.
SYSTEM2_A = [
    [-0.741, -0.033, 0, 0, -2.0e-4, -6.4e-3],
    [4.146, -0.914, 0, 0, 4.7e-3, 0.151],
    [2.073, 0.043, 1, 0, 2.4e-3, 0.076],
    [23.326, 0.106, 20, 1, 0.022, 0.693],
    [23.499, -2.593, 0, 0, -0.939, -2.053],
    [11.749, -1.297, 0, 0, 0.031, -0.027],
]
SYSTEM2_B = [[-3.8e-4], [0.0091], [0.0046], [0.041], [0.117], [0.059]]
SYSTEM2_Q = np.diag([0.0, 0.0, 0.0, 100.0, 0.0, 0.0])


def system1(gamma: float = 0.9) -> tuple[PlantModel, CostParams]:
    return PlantModel(SYSTEM1_A, SYSTEM1_B), CostParams(SYSTEM1_Q, [[1.0]], gamma)


def system2(gamma: float = 0.9) -> tuple[PlantModel, CostParams]:
    return PlantModel(SYSTEM2_A, SYSTEM2_B), CostParams(SYSTEM2_Q, [[1.0]], gamma)
