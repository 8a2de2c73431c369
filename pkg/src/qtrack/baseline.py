"""Comparison method: Q-learning on the exo-system-augmented state.

The controller sees x_aug = [x; s] where s is the exo-system state, and
learns an unstructured quadratic Q(x_aug, u) with the same least-squares
value iteration as the proposed method. It is optimal only while the
reference really is generated by the exo-system it was trained on.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import MaxIterationsExceeded, NotPositiveDefinite
from .learner import LearnerConfig, explore_control, lstsq_rank_checked
from .lti_system import CostParams, Plant, PlantModel, Trajectory, one_step_cost
from .oracle import riccati_gain
from .qstructure import full_pattern, phi, weights_to_H
from .reference import EXPLORATION_STREAM, ExoSystem, ReferenceSource, ReferenceWindow

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AugmentedState:
    """[x; s] with s the exo state."""

    x: np.ndarray
    s: np.ndarray

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([np.ravel(self.x), np.ravel(self.s)])


@dataclass
class BaselineBatch:
    Z: np.ndarray  # rows [x; s; u]
    c: np.ndarray
    Y_next: np.ndarray  # rows [x'; s']


@dataclass
class BaselineResult:
    w: np.ndarray
    gain: np.ndarray
    iterations: int
    dw: list[float] = field(default_factory=list)
    pd_failures: int = 0


def lifting(n: int, coords, C_ref) -> np.ndarray:
    """n x ns matrix mapping the exo state to the lifted reference r_k."""
    C_ref = np.asarray(C_ref, dtype=float).reshape(1, -1)
    E = np.zeros((n, C_ref.shape[1]))
    E[list(coords), :] = C_ref
    return E


def augmented_cost(cost: CostParams, E) -> np.ndarray:
    """Q on [x; s] for the error x - E s."""
    D = np.hstack([np.eye(E.shape[0]), -E])
    return D.T @ cost.Q @ D


def _augmented_model(model: PlantModel, exo: ExoSystem, cost: CostParams):
    n, m = model.n, model.m
    ns = len(exo.state)
    E = lifting(n, cost.tracked, exo.C_ref)
    A = np.block([[model.A, np.zeros((n, ns))], [np.zeros((ns, n)), exo.F_ref]])
    B = np.vstack([model.B, np.zeros((ns, m))])
    return A, B, augmented_cost(cost, E)


def augmented_optimal_gain(model: PlantModel, exo: ExoSystem, cost: CostParams) -> np.ndarray:
    """Model-based optimum of the augmented problem (u = K [x; s])."""
    A, B, Qa = _augmented_model(model, exo, cost)
    K, _, _ = riccati_gain(A, B, Qa, cost.R, cost.gamma)
    return K


def augmented_optimal_H(model: PlantModel, exo: ExoSystem, cost: CostParams) -> np.ndarray:
    """Q-function matrix over [x; s; u] of the augmented optimum."""
    A, B, Qa = _augmented_model(model, exo, cost)
    _, P, _ = riccati_gain(A, B, Qa, cost.R, cost.gamma)
    g = cost.gamma
    H = np.block([[Qa + g * A.T @ P @ A, g * A.T @ P @ B], [g * B.T @ P @ A, cost.R + g * B.T @ P @ B]])
    return 0.5 * (H + H.T)


def _gain(w, pattern, nx: int, m: int) -> np.ndarray:
    H = weights_to_H(w, pattern)
    try:
        cf = linalg.cho_factor(H[nx:, nx:])
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite("baseline h_uu is not positive definite") from exc
    return -linalg.cho_solve(cf, H[nx:, :nx])


def collect_baseline_batch(plant: Plant, exo: ExoSystem, cost: CostParams, K, cfg: LearnerConfig, M: int, rng=None) -> BaselineBatch:
    """Explore around gain K while the exo system drives the reference."""
    if rng is None:
        rng = np.random.default_rng([cfg.seed, EXPLORATION_STREAM, 1])
    E = lifting(plant.n, cost.tracked, exo.C_ref)
    F = np.asarray(exo.F_ref, dtype=float)
    s = np.asarray(exo.state, dtype=float)
    Sigma = cfg.covariance(plant.m)
    empty = ReferenceWindow(np.zeros((1, 0)))
    Z, c, Y = [], [], []
    for _ in range(M):
        x = plant.state
        xa = np.concatenate([x, s])
        u = explore_control(K, xa, empty, Sigma, rng)
        c.append(one_step_cost(cost, x, u, E @ s))
        x_next = plant.apply(u)
        s = F @ s
        Z.append(np.concatenate([xa, u]))
        Y.append(np.concatenate([x_next, s]))
    return BaselineBatch(np.array(Z), np.array(c), np.array(Y))


def baseline_value_iterate(batch: BaselineBatch, cfg: LearnerConfig, nx: int, m: int) -> BaselineResult:
    pattern = full_pattern(nx + m)
    Phi = phi(batch.Z.astype(np.longdouble), pattern)
    w = np.zeros(len(pattern), dtype=np.longdouble)
    K = np.zeros((m, nx))
    res = BaselineResult(np.zeros(len(pattern)), K, 0)
    for i in range(1, cfg.max_vi_iters + 1):
        z_next = np.hstack([batch.Y_next, batch.Y_next @ K.T]).astype(np.longdouble)
        target = batch.c.astype(np.longdouble) + np.longdouble(cfg.gamma) * (phi(z_next, pattern) @ w)
        w_new = lstsq_rank_checked(Phi, target)
        try:
            K = _gain(np.asarray(w_new, dtype=float), pattern, nx, m)
        except NotPositiveDefinite:
            res.pd_failures += 1
            log.warning("baseline iteration %d: h_uu not positive definite, keeping previous gain", i)
        dw = float(np.linalg.norm(w_new - w))
        w = w_new
        res.dw.append(dw)
        if dw <= cfg.e_w:
            res.w, res.gain, res.iterations = np.asarray(w, dtype=float), K, i
            return res
    raise MaxIterationsExceeded(f"baseline value iteration: |dw| = {res.dw[-1]:.3g} after {cfg.max_vi_iters} iterations")


def train_baseline(plant: Plant, exo: ExoSystem, cost: CostParams, cfg: LearnerConfig, M=None) -> BaselineResult:
    """Learn u = K [x; s] from exploration data on the exo-generated reference.

    The sample budget defaults to ceil(M_factor * L_b) with L_b the number
    of free entries of the unstructured H over [x; s; u].
    """
    nx = plant.n + len(exo.state)
    pattern = full_pattern(nx + plant.m)
    if M is None:
        M = cfg.sample_budget(len(pattern))
    batch = collect_baseline_batch(plant, exo, cost, np.zeros((plant.m, nx)), cfg, M)
    return baseline_value_iterate(batch, cfg, nx, plant.m)


def exo_feed(src: ReferenceSource, k: int, prev, exo: ExoSystem) -> np.ndarray:
    """Exo state handed to the baseline at step k.

    The output component is overwritten with the current reference sample
    and the other components follow the exo dynamics from the previous feed.
    """
    F = np.asarray(exo.F_ref, dtype=float)
    C = np.asarray(exo.C_ref, dtype=float)
    s = F @ prev if prev is not None else np.asarray(exo.state, dtype=float).copy()
    out = int(np.argmax(np.abs(C)))
    r = src.value(k)[src.coords[0]] if src.coords else 0.0
    s[out] = (r - (C @ s - C[out] * s[out])) / C[out]
    return s


def evaluate_baseline(gain, model: PlantModel, src: ReferenceSource, n_steps: int, exo: ExoSystem | None = None, cost: CostParams | None = None, x0=None) -> Trajectory:
    """Closed loop u = K [x; s] with s fed from ``src``."""
    exo = ExoSystem() if exo is None else exo
    plant = Plant(model, x0)
    gain = np.atleast_2d(gain)
    states, inputs, costs, refs = [plant.state], [], [], []
    s = None
    for k in range(n_steps):
        x = plant.state
        s = exo_feed(src, k, s, exo)
        u = gain @ np.concatenate([x, s])
        r = src.value(k)
        costs.append(one_step_cost(cost, x, u, r) if cost is not None else np.nan)
        inputs.append(u)
        refs.append(r)
        states.append(plant.apply(u))
    return Trajectory(np.array(states), np.array(inputs), np.array(costs), np.array(refs), {"method": "baseline"})
