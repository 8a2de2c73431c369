"""Tracking and weight-error metrics."""
from __future__ import annotations

import numpy as np

from .errors import DimensionError, ZeroOracle
from .lti_system import CostParams, Plant, PlantModel, Trajectory, one_step_cost
from .qstructure import SparsityPattern, phi
from .reference import ReferenceSource, window_at


def rms_error(traj_a: Trajectory, traj_b: Trajectory, coord: int) -> float:
    """RMS of the difference of one state coordinate between two runs."""
    a = np.asarray(traj_a.states)[:, coord]
    b = np.asarray(traj_b.states)[:, coord]
    if a.shape != b.shape:
        raise DimensionError(f"trajectory lengths differ: {len(a)} vs {len(b)}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def weight_errors(w, w_star) -> tuple[float, float]:
    """(mean, max) absolute weight error normalised by max |w*|."""
    w = np.asarray(w, dtype=float)
    w_star = np.asarray(w_star, dtype=float)
    if w.shape != w_star.shape:
        raise DimensionError(f"weight vectors differ in length: {w.shape} vs {w_star.shape}")
    scale = np.abs(w_star).max() if w_star.size else 0.0
    if scale == 0:
        raise ZeroOracle("max |w*| is zero")
    err = np.abs(w - w_star) / scale
    return float(err.mean()), float(err.max())


def td_errors(w, batch, gamma: float, pattern: SparsityPattern, gain=None) -> np.ndarray:
    from .learner import td_targets

    return td_targets(batch, w, gamma, pattern, gain) - phi(batch.Z, pattern) @ np.asarray(w)


def bellman_residual(w, batch, gamma: float, pattern: SparsityPattern, gain=None) -> float:
    """RMS of the TD error of w over the batch (greedy gain of w by default).

    For w = 0 the gain is zero and the residual reduces to the RMS cost.
    """
    eps = td_errors(w, batch, gamma, pattern, gain)
    return float(np.sqrt(np.mean(eps**2)))


def simulate_tracking(model: PlantModel, cost: CostParams, gain, src: ReferenceSource, N: int, n_steps: int, x0=None) -> Trajectory:
    """Closed loop u_k = L [x_k; r_{k+1}; ...; r_{k+N}] on the noiseless reference."""
    plant = Plant(model, x0)
    gain = np.atleast_2d(gain)
    states, inputs, costs, refs = [plant.state], [], [], []
    for k in range(n_steps):
        x = plant.state
        win = window_at(src, k, N)
        u = gain @ np.concatenate([x, win.future()])
        costs.append(one_step_cost(cost, x, u, win.at(0)))
        inputs.append(u)
        refs.append(win.at(0))
        states.append(plant.apply(u))
    return Trajectory(np.array(states), np.array(inputs), np.array(costs), np.array(refs))


def tracking_rms(traj: Trajectory, coord: int) -> float:
    """RMS of x - r on one coordinate (deviation from the reference itself)."""
    x = traj.states[:-1, coord]
    r = traj.references[:, coord]
    return float(np.sqrt(np.mean((x - r) ** 2)))
