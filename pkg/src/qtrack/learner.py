"""Model-free value iteration on the reference-dependent Q-function.

The plant is only touched through :class:`qtrack.lti_system.Plant`; the
learner knows the cost weights (Q, R, gamma) but never A or B.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ExcitationDeficient, MaxIterationsExceeded, NotPositiveDefinite
from .lti_system import CostParams, Plant, one_step_cost
from .oracle import gain_from_H
from .qstructure import SparsityPattern, build_pattern, phi, weights_to_H
from .reference import EXPLORATION_STREAM, ReferenceSource, ReferenceWindow, shift, window_at

log = logging.getLogger(__name__)

RANK_RTOL = 1e-10


@dataclass
class LearnerConfig:
    gamma: float = 0.9
    N: int = 10
    M_factor: float = 1.2
    e_w: float = 1e-6
    Sigma: float | np.ndarray = 0.1  # exploration covariance (scalar means Sigma * I)
    sigma_ref: float = 0.1  # variance of the reference excitation noise
    seed: int = 0
    max_vi_iters: int = 1000
    stop_after_first_vi: bool = True
    noise_in_cost: bool = True  # cost uses the same (noisy) r_k the learner sees

    def __post_init__(self):
        if self.M_factor < 1:
            raise ValueError("M_factor must be >= 1")
        if self.e_w <= 0:
            raise ValueError("e_w must be > 0")
        if self.sigma_ref < 0:
            raise ValueError("sigma_ref must be >= 0")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")

    def covariance(self, m: int) -> np.ndarray:
        S = np.asarray(self.Sigma, dtype=float)
        return S * np.eye(m) if S.ndim == 0 else S.reshape(m, m)

    def sample_budget(self, L: int) -> int:
        return math.ceil(round(self.M_factor * L, 9))


@dataclass
class Sample:
    z: np.ndarray
    c: float
    x_next: np.ndarray
    window_next: ReferenceWindow


@dataclass
class Batch:
    samples: list[Sample]

    @property
    def M(self) -> int:
        return len(self.samples)

    @cached_property
    def Z(self) -> np.ndarray:
        return np.array([s.z for s in self.samples])

    @cached_property
    def c(self) -> np.ndarray:
        return np.array([s.c for s in self.samples])

    @cached_property
    def X_next(self) -> np.ndarray:
        return np.array([s.x_next for s in self.samples])

    @cached_property
    def R_next(self) -> np.ndarray:
        """Shifted windows, shape (M, N+1, n)."""
        return np.array([s.window_next.entries for s in self.samples])


@dataclass
class VIResult:
    w: np.ndarray
    gain: np.ndarray
    iterations: int
    dw: list[float] = field(default_factory=list)
    e_I: list[float] = field(default_factory=list)
    e_II: list[float] = field(default_factory=list)
    pd_failures: int = 0
    weights: list[np.ndarray] = field(default_factory=list)


def _sqrtm_psd(S: np.ndarray) -> np.ndarray:
    lam, V = np.linalg.eigh(S)
    return V @ np.diag(np.sqrt(np.clip(lam, 0, None))) @ V.T


def explore_control(L, x, window: ReferenceWindow, Sigma, rng) -> np.ndarray:
    """u = L [x; r_{k+1}; ...; r_{k+N}] + xi with xi ~ N(0, Sigma)."""
    L = np.atleast_2d(np.asarray(L, dtype=float))
    u = L @ np.concatenate([np.ravel(x), window.future()])
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    if np.any(Sigma != 0):
        u = u + _sqrtm_psd(Sigma) @ rng.standard_normal(u.shape[0])
    return u


def next_augmented(batch: Batch, gain, pattern: SparsityPattern) -> np.ndarray:
    """Rows z*_{j+1}: next state, greedy control under ``gain``, shifted window."""
    lay = pattern.layout
    refs = batch.R_next.reshape(batch.M, -1)
    y = np.hstack([batch.X_next, refs[:, lay.n :]])
    u = y @ np.asarray(gain).T
    return np.hstack([batch.X_next, u, refs])


def lstsq_rank_checked(Phi: np.ndarray, target, rtol: float = RANK_RTOL, refine: int = 2) -> np.ndarray:
    """Least squares via SVD of the column-equilibrated regressor.

    Raises ExcitationDeficient unless Phi has full column rank. The solution
    is returned in extended precision after ``refine`` rounds of iterative
    refinement.
    """
    M, L = Phi.shape
    if M < L:
        raise ExcitationDeficient(f"{M} samples for {L} weights")
    norms = np.sqrt(np.sum(Phi * Phi, axis=0))
    if np.any(norms == 0):
        raise ExcitationDeficient(f"{int(np.sum(norms == 0))} features never excited")
    U, s, Vt = np.linalg.svd(np.asarray(Phi / norms, dtype=float), full_matrices=False)
    rank = int(np.sum(s > rtol * s[0]))
    if rank < L:
        raise ExcitationDeficient(f"rank {rank} < {L}")

    # factors from float64 SVD, applied and refined in extended precision
    ext = np.longdouble
    Ue, se, Vte, ne = U.astype(ext), s.astype(ext), Vt.astype(ext), norms.astype(ext)

    def solve(y):
        return (Vte.T @ ((Ue.T @ y) / se)) / ne

    target = np.asarray(target, dtype=ext)
    w = solve(target)
    Phi_ext = np.asarray(Phi, dtype=ext)
    for _ in range(refine):
        w = w + solve(target - Phi_ext @ w)
    return w


def policy_improvement(w, pattern: SparsityPattern) -> np.ndarray:
    lay = pattern.layout
    return gain_from_H(weights_to_H(w, pattern), lay.n, lay.m, lay.N)


def td_targets(batch: Batch, w, gamma: float, pattern: SparsityPattern, gain=None) -> np.ndarray:
    """c_j + gamma * w^T phi(z*_{j+1}), accumulated in extended precision.

    Large state excursions make the two terms differ by many decades; the
    rounding of a float64 sum sets a floor on |dw| well above e_w.
    With w = 0 and no gain given the initial gain L = 0 is used.
    """
    if gain is None:
        if not np.any(w):
            lay = pattern.layout
            gain = np.zeros((lay.m, lay.n * (lay.N + 1)))
        else:
            gain = policy_improvement(np.asarray(w, dtype=float), pattern)
    z_next = next_augmented(batch, gain, pattern).astype(np.longdouble)
    w = np.asarray(w, dtype=np.longdouble)
    return batch.c.astype(np.longdouble) + np.longdouble(gamma) * (phi(z_next, pattern) @ w)


def policy_evaluation(batch: Batch, w, gamma: float, pattern: SparsityPattern, gain=None) -> np.ndarray:
    """One least-squares TD backup. ``gain`` defaults to the greedy gain of w.

    The result keeps extended precision; rounding w to float64 between
    backups perturbs the targets enough to stall |dw| above e_w on
    poorly scaled data.
    """
    Phi = phi(batch.Z.astype(np.longdouble), pattern)
    return lstsq_rank_checked(Phi, td_targets(batch, w, gamma, pattern, gain))


def value_iterate(batch: Batch, cfg: LearnerConfig, pattern: SparsityPattern, w0=None, gain0=None, w_star=None):
    """Alternate policy evaluation and improvement until |dw|_2 <= e_w."""
    from .evaluation import weight_errors

    lay = pattern.layout
    w = np.zeros(len(pattern), dtype=np.longdouble) if w0 is None else np.asarray(w0, dtype=np.longdouble)
    gain = np.zeros((lay.m, lay.n * (lay.N + 1))) if gain0 is None else np.asarray(gain0, dtype=float)
    res = VIResult(np.asarray(w, dtype=float), gain, 0)
    for i in range(1, cfg.max_vi_iters + 1):
        w_new = policy_evaluation(batch, w, cfg.gamma, pattern, gain)
        try:
            gain = policy_improvement(np.asarray(w_new, dtype=float), pattern)
        except NotPositiveDefinite:
            res.pd_failures += 1
            log.warning("iteration %d: estimated h_uu not positive definite, keeping previous gain", i)
        dw = float(np.linalg.norm(w_new - w))
        w = w_new
        w64 = np.asarray(w, dtype=float)
        res.dw.append(dw)
        res.weights.append(w64)
        if w_star is not None:
            eI, eII = weight_errors(w64, w_star)
            res.e_I.append(eI)
            res.e_II.append(eII)
        if dw <= cfg.e_w:
            res.w, res.gain, res.iterations = w64, gain, i
            return res
    raise MaxIterationsExceeded(f"value iteration: |dw| = {res.dw[-1]:.3g} after {cfg.max_vi_iters} iterations")


def learning_source(src: ReferenceSource, cfg: LearnerConfig) -> ReferenceSource:
    return dataclasses.replace(src, noise_std=math.sqrt(cfg.sigma_ref), seed=cfg.seed)


def _act(plant: Plant, cost: CostParams, src: ReferenceSource, gain, k: int, N: int, Sigma, rng, noisy: bool, noise_in_cost=True):
    x = plant.state
    window = window_at(src, k, N, noisy=noisy)
    u = explore_control(gain, x, window, Sigma, rng)
    r_cost = window.at(0) if noise_in_cost else src.value(k)
    c = one_step_cost(cost, x, u, r_cost)
    x_next = plant.apply(u)
    z = np.concatenate([x, u, window.entries.ravel()])
    return Sample(z, c, x_next, shift(window)), x, u, r_cost


def collect_batch(plant: Plant, cost: CostParams, src: ReferenceSource, L, cfg: LearnerConfig, k0: int = 0, rng=None, M=None) -> Batch:
    """Apply the exploratory policy for M steps starting at time index k0.

    ``src`` is used with reference noise of variance ``cfg.sigma_ref``.
    """
    if M is None:
        pattern = build_pattern(plant.n, plant.m, cfg.N, cost.Q)
        M = cfg.sample_budget(len(pattern))
    if rng is None:
        rng = np.random.default_rng([cfg.seed, EXPLORATION_STREAM])
    noisy_src = learning_source(src, cfg)
    Sigma = cfg.covariance(plant.m)
    samples = []
    for k in range(k0, k0 + M):
        s, *_ = _act(plant, cost, noisy_src, L, k, cfg.N, Sigma, rng, cfg.sigma_ref > 0, cfg.noise_in_cost)
        samples.append(s)
    return Batch(samples)


@dataclass
class OnlineResult:
    w: np.ndarray
    gain: np.ndarray
    trajectory: object
    step_log: list[dict]
    vi_log: list[dict]
    vi_results: list[VIResult]
    learning_steps: int
    pattern: SparsityPattern


def run_online(plant: Plant, cost: CostParams, src: ReferenceSource, cfg: LearnerConfig, n_steps=None, w_star=None, eval_src=None):
    """Online loop: act, every M steps run value iteration on the last M samples.

    With ``stop_after_first_vi`` the weights freeze after the first update and
    the remaining steps run without exploration on ``eval_src`` (defaults to
    ``src``) without reference noise.
    """
    from .lti_system import Trajectory

    n, m = plant.n, plant.m
    pattern = build_pattern(n, m, cfg.N, cost.Q)
    M = cfg.sample_budget(len(pattern))
    if n_steps is None:
        n_steps = 3 * M
    eval_src = src if eval_src is None else eval_src
    noisy_src = learning_source(src, cfg)
    rng = np.random.default_rng([cfg.seed, EXPLORATION_STREAM])
    Sigma = cfg.covariance(m)
    zero = np.zeros((m, m))

    w = np.zeros(len(pattern))
    gain = np.zeros((m, n * (cfg.N + 1)))
    learning = True
    learning_steps = 0
    recent: list[Sample] = []
    states, inputs, costs, refs, step_log, vi_log, vi_results = [plant.state], [], [], [], [], [], []
    for k in range(n_steps):
        if learning:
            s, x, u, r = _act(plant, cost, noisy_src, gain, k, cfg.N, Sigma, rng, cfg.sigma_ref > 0, cfg.noise_in_cost)
            recent.append(s)
            recent = recent[-M:]
        else:
            s, x, u, r = _act(plant, cost, eval_src, gain, k, cfg.N, zero, rng, False)
        states.append(s.x_next)
        inputs.append(u)
        costs.append(s.c)
        refs.append(r)
        step_log.append({"k": k, "x": x, "u": u, "r": r, "c": s.c, "learning": learning})
        if learning and (k + 1) % M == 0:
            res = value_iterate(Batch(list(recent)), cfg, pattern, w0=w, gain0=gain, w_star=w_star)
            w, gain = res.w, res.gain
            vi_results.append(res)
            for i, dw in enumerate(res.dw):
                row = {"round": len(vi_results), "k": k + 1, "i": i + 1, "dw": dw}
                if w_star is not None:
                    row["e_I"], row["e_II"] = res.e_I[i], res.e_II[i]
                vi_log.append(row)
            log.info("k=%d: value iteration converged in %d iterations", k + 1, res.iterations)
            if cfg.stop_after_first_vi:
                learning = False
                learning_steps = k + 1
    if learning:
        learning_steps = n_steps
    traj = Trajectory(np.array(states), np.array(inputs), np.array(costs), np.array(refs), {"seed": cfg.seed})
    return OnlineResult(w, gain, traj, step_log, vi_log, vi_results, learning_steps, pattern)
