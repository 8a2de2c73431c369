"""Command-line experiment runner.

    qtrack oracle|learn|compare|eval --config <path> --out <dir> [--seed <u64>] [--stop-after-first-vi]

Exit codes: 0 success, 2 insufficient excitation, 3 divergence.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from dataclasses import dataclass, field
from importlib import metadata, resources
from pathlib import Path

import numpy as np

from . import plotting
from .baseline import augmented_optimal_H, evaluate_baseline, train_baseline
from .errors import DivergedState, ExcitationDeficient, NonIntegralCount
from .evaluation import rms_error, simulate_tracking, tracking_rms, weight_errors
from .learner import LearnerConfig, run_online
from .lti_system import CostParams, Plant, PlantModel
from .oracle import gain_from_H, model_value_iteration
from .qstructure import (
    H_to_weights,
    build_pattern,
    count_weights_full,
    count_weights_naive,
    count_weights_sparse,
    full_pattern,
    structural_residual,
)
from .reference import ExoSystem, ReferenceSource, default_suite, read_reference_csv

log = logging.getLogger("qtrack")

EXIT_OK, EXIT_EXCITATION, EXIT_DIVERGED = 0, 2, 3
U64_MAX = 2**64 - 1
METRIC_FIELDS = ["system", "method", "reference", "seed", "rms", "tracking_rms", "e_I", "e_II"]


@dataclass
class Problem:
    name: str
    model: PlantModel
    cost: CostParams
    N: int
    learner: LearnerConfig
    train_src: ReferenceSource
    suite: dict[str, ReferenceSource]
    eval_steps: int
    seeds: list[int] = field(default_factory=list)
    raw: dict = field(default_factory=dict)

    @property
    def coord(self) -> int:
        return self.cost.tracked[0] if self.cost.tracked else 0


def bundled_config(name: str) -> Path:
    return Path(str(resources.files("qtrack") / "configs" / f"{name}.json"))


def resolve_config(path) -> Path:
    """A file path, or the bare name of a bundled config (system1, system2)."""
    p = Path(path)
    if p.exists():
        return p
    b = bundled_config(str(path).removesuffix(".json"))
    if b.exists():
        return b
    raise FileNotFoundError(f"config not found: {path}")


def make_reference(desc: dict, n: int, coords, length, base: Path | None = None) -> ReferenceSource:
    """Reference from a config entry: {"kind", "params", "length", "coords"} or {"csv"}."""
    if "csv" in desc:
        p = Path(desc["csv"])
        if base is not None and not p.is_absolute():
            p = base / p
        return read_reference_csv(p, desc.get("coords"))
    return ReferenceSource(desc["kind"], n, tuple(desc.get("coords", coords)), dict(desc.get("params", {})), desc.get("length", length))


def load_problem(path, seed=None, stop_after_first_vi=False) -> Problem:
    path = resolve_config(path)
    raw = json.loads(path.read_text())
    model = PlantModel(raw["A"], raw["B"])
    cost = CostParams(raw["Q"], raw["R"], raw.get("gamma", 0.9))
    N = int(raw.get("N", 10))
    opts = dict(raw.get("learner", {}))
    if stop_after_first_vi:
        opts["stop_after_first_vi"] = True
    base_seed = int(raw.get("seed", 0)) if seed is None else seed
    lcfg = LearnerConfig(gamma=cost.gamma, N=N, seed=base_seed, **opts)
    steps = int(raw.get("eval_steps", 300))
    train = make_reference(raw.get("training_reference", {"kind": "exo_sine"}), model.n, cost.tracked, None, path.parent)
    if "suite" in raw:
        suite = {k: make_reference(v, model.n, cost.tracked, steps, path.parent) for k, v in raw["suite"].items()}
    else:
        suite = default_suite(model.n, cost.tracked, steps)
    seeds = [seed] if seed is not None else [int(s) for s in raw.get("seeds", [base_seed])]
    return Problem(raw.get("name", path.stem), model, cost, N, lcfg, train, suite, steps, seeds, raw)


# ---------------------------------------------------------------- output helpers


def write_matrix(path, M, prefix="c") -> Path:
    M = np.atleast_2d(M)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"{prefix}{j}" for j in range(M.shape[1])])
        w.writerows(M.tolist())
    return Path(path)


def write_rows(path, fields, rows, seed=None) -> Path:
    with open(path, "w", newline="") as fh:
        if seed is not None:
            fh.write(f"# seed={seed}\n")
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
    return Path(path)


def write_tidy(path, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series", "k", "value"])
        w.writerows(rows)
    return Path(path)


def versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "scipy", "matplotlib"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def write_manifest(out: Path, command: str, config: Path, seeds, files, extra=None) -> Path:
    config = resolve_config(config)
    doc = {
        "command": command,
        "config": str(config),
        "config_sha256": hashlib.sha256(config.read_bytes()).hexdigest(),
        "seeds": list(seeds),
        "versions": versions(),
        "outputs": sorted(Path(f).name for f in files),
    }
    if extra:
        doc.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------- experiments


def oracle_solution(prob: Problem, keep_trace=True):
    m, c = prob.model, prob.cost
    H, trace = model_value_iteration(m.A, m.B, c.Q, c.R, c.gamma, prob.N, keep_trace=keep_trace)
    return H, trace, gain_from_H(H, m.n, m.m, prob.N)


def run_oracle(prob: Problem, out: Path) -> list[Path]:
    n, mm, N = prob.model.n, prob.model.m, prob.N
    H, trace, L = oracle_solution(prob)
    pattern = build_pattern(n, mm, N, prob.cost.Q)
    w = H_to_weights(H, pattern)
    try:
        eq_count = count_weights_sparse(n, mm, N, n - len(prob.cost.tracked))
    except NonIntegralCount:
        eq_count = ""
    Lx = L[:, :n]
    rho = max(abs(np.linalg.eigvals(np.sqrt(prob.cost.gamma) * (prob.model.A + prob.model.B @ Lx))))
    report = [
        ("dim", H.shape[0]),
        ("naive_count", count_weights_naive(n, mm, N)),
        ("full_count", count_weights_full(n, mm, N)),
        ("closed_form_sparse_count", eq_count),
        ("free_entries", len(pattern)),
        ("structural_residual", structural_residual(H, pattern)),
        ("iterations", len(trace) - 1),
        ("closed_loop_spectral_radius", float(rho)),
    ]
    files = [
        write_matrix(out / "H.csv", H),
        write_matrix(out / "gain.csv", L),
        write_rows(out / "weights.csv", ["entry", "value"], [{"entry": e, "value": v} for e, v in zip(pattern.entry_names(), w.tolist())]),
        write_rows(out / "structure.csv", ["key", "value"], [{"key": k, "value": v} for k, v in report]),
    ]
    steps = [float(np.abs(b - a).max()) for a, b in zip(trace, trace[1:])]
    files.append(write_rows(out / "trace.csv", ["i", "dH_max"], [{"i": i + 1, "dH_max": d} for i, d in enumerate(steps)]))
    tidy = [("dH_max", i + 1, d) for i, d in enumerate(steps)]
    files.append(write_tidy(out / "plot_oracle.csv", tidy))
    files.append(plotting.plot_series(tidy, out / "oracle_convergence.png", "oracle iteration", "i", "max |dH|", logy=True))
    files.append(plotting.plot_pattern(pattern.mask(), out / "H_pattern.png", f"free entries of H ({len(pattern)})"))
    for k, v in report:
        log.info("%s: %s", k, v)
    return files


def learn_once(prob: Problem, seed: int, oracle=None):
    """One online learning run; returns (OnlineResult, w_star or None)."""
    cfg = LearnerConfig(**{**prob.learner.__dict__, "seed": seed})
    w_star = None
    if oracle is not None:
        pattern = build_pattern(prob.model.n, prob.model.m, prob.N, prob.cost.Q)
        w_star = H_to_weights(oracle[0], pattern)
    res = run_online(Plant(prob.model), prob.cost, prob.train_src, cfg, w_star=w_star)
    return res, w_star


def run_learn(prob: Problem, out: Path, seed: int) -> list[Path]:
    oracle = oracle_solution(prob, keep_trace=False) if prob.raw.get("oracle", True) else None
    res, w_star = learn_once(prob, seed, oracle)
    n, m = prob.model.n, prob.model.m
    step_fields = ["k"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)] + [f"r{i + 1}" for i in range(n)] + ["c", "learning"]
    step_rows = []
    for row in res.step_log:
        d = {"k": row["k"], "c": row["c"], "learning": int(row["learning"])}
        d.update({f"x{i + 1}": v for i, v in enumerate(row["x"].tolist())})
        d.update({f"u{i + 1}": v for i, v in enumerate(np.ravel(row["u"]).tolist())})
        d.update({f"r{i + 1}": v for i, v in enumerate(row["r"].tolist())})
        step_rows.append(d)
    vi_fields = ["round", "k", "i", "dw"] + (["e_I", "e_II"] if w_star is not None else [])
    files = [
        write_rows(out / "steps.csv", step_fields, step_rows, seed),
        write_rows(out / "vi.csv", vi_fields, res.vi_log, seed),
        write_rows(out / "weights.csv", ["entry", "value"], [{"entry": e, "value": v} for e, v in zip(res.pattern.entry_names(), np.asarray(res.w).tolist())]),
        write_matrix(out / "gain.csv", res.gain),
    ]
    c = prob.coord
    traj = [(f"x{c + 1}", r["k"], r["x"][c]) for r in res.step_log]
    traj += [(f"r{c + 1}", r["k"], r["r"][c]) for r in res.step_log]
    traj += [("u1", r["k"], float(np.ravel(r["u"])[0])) for r in res.step_log]
    files.append(write_tidy(out / "plot_trajectory.csv", traj))
    files.append(plotting.plot_series(traj, out / "trajectory.png", f"{prob.name}, seed {seed}"))
    vi = [("dw", r["i"], r["dw"]) for r in res.vi_log]
    if w_star is not None:
        vi += [(e, r["i"], r[e]) for r in res.vi_log for e in ("e_I", "e_II")]
    files.append(write_tidy(out / "plot_vi.csv", vi))
    files.append(plotting.plot_series(vi, out / "weight_errors.png", "value iteration", "i", logy=True))
    if res.vi_results:
        last = res.vi_results[-1]
        log.info("value iteration: %d iterations, |dw| = %.3g", last.iterations, last.dw[-1])
        if last.e_II:
            log.info("e_I = %.3g, e_II = %.3g", last.e_I[-1], last.e_II[-1])
    return files


def evaluate_methods(prob: Problem, seed: int, methods=("proposed",), oracle=None, traces=None) -> list[dict]:
    """Metrics rows for each method and suite reference (learned vs optimal)."""
    if not prob.suite:
        return []
    if oracle is None:
        oracle = oracle_solution(prob, keep_trace=False)
    L_opt = oracle[2]
    rows = []
    opt = {k: simulate_tracking(prob.model, prob.cost, L_opt, src, prob.N, prob.eval_steps) for k, src in prob.suite.items()}
    cfg = LearnerConfig(**{**prob.learner.__dict__, "seed": seed})
    for method in methods:
        if method == "proposed":
            res, w_star = learn_once(prob, seed, oracle)
            eI, eII = weight_errors(res.w, w_star)
            run = lambda src: simulate_tracking(prob.model, prob.cost, res.gain, src, prob.N, prob.eval_steps)  # noqa: E731
        else:
            exo = ExoSystem()
            b = train_baseline(Plant(prob.model), exo, prob.cost, cfg)
            eI, eII = weight_errors(b.w, H_to_weights(augmented_optimal_H(prob.model, exo, prob.cost), full_pattern(b.gain.shape[1] + prob.model.m)))
            run = lambda src, g=b.gain: evaluate_baseline(g, prob.model, src, prob.eval_steps, exo, prob.cost)  # noqa: E731
        for name, src in prob.suite.items():
            traj = run(src)
            rows.append(
                {
                    "system": prob.name,
                    "method": method,
                    "reference": name,
                    "seed": seed,
                    "rms": rms_error(traj, opt[name], prob.coord),
                    "tracking_rms": tracking_rms(traj, prob.coord),
                    "e_I": eI,
                    "e_II": eII,
                }
            )
            if traces is not None:
                traces[(method, name)] = (traj, opt[name])
    return rows


def run_eval(prob: Problem, out: Path, methods=("proposed",)) -> list[Path]:
    oracle = oracle_solution(prob, keep_trace=False)
    rows, traces = [], {}
    for i, seed in enumerate(prob.seeds):
        rows += evaluate_methods(prob, seed, methods, oracle, traces if i == 0 else None)
    files = [write_rows(out / "metrics.csv", METRIC_FIELDS, rows)]
    tidy = []
    c = prob.coord
    for (method, name), (traj, opt) in traces.items():
        k = range(len(traj.inputs))
        tidy += [(f"{name}/{method}", j, traj.states[j, c]) for j in k]
        if method == methods[0]:
            tidy += [(f"{name}/optimal", j, opt.states[j, c]) for j in k]
            tidy += [(f"{name}/reference", j, traj.references[j, c]) for j in k]
    files.append(write_tidy(out / "plot_tracking.csv", tidy))
    for name in prob.suite:
        sel = [s for s in {t[0] for t in tidy} if s.startswith(name + "/")]
        files.append(plotting.plot_series(tidy, out / f"tracking_{name}.png", f"{prob.name}: {name}", series=sorted(sel)))
    for r in rows:
        log.info("%s %-9s %-10s seed %d: rms %.3g, tracking %.3g", r["system"], r["method"], r["reference"], r["seed"], r["rms"], r["tracking_rms"])
    return files


COMMANDS = ("oracle", "learn", "compare", "eval")


def u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v <= U64_MAX:
        raise argparse.ArgumentTypeError(f"seed must lie in [0, 2^64 - 1], got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qtrack", description="Reference-preview Q-learning tracking experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON config file, or a bundled name (system1, system2)")
    p.add_argument("--out", required=True, type=Path, help="output directory (created if missing)")
    p.add_argument("--seed", type=u64, default=None, help="overrides the config seed(s)")
    p.add_argument("--stop-after-first-vi", action="store_true", help="freeze weights after the first value-iteration round")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    prob = load_problem(args.config, args.seed, args.stop_after_first_vi)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    seeds = prob.seeds if args.command in ("eval", "compare") else [prob.seeds[0]]
    status, files, error = EXIT_OK, [], None
    try:
        if args.command == "oracle":
            files = run_oracle(prob, out)
        elif args.command == "learn":
            files = run_learn(prob, out, seeds[0])
        elif args.command == "eval":
            files = run_eval(prob, out, ("proposed",))
        else:
            files = run_eval(prob, out, ("proposed", "baseline"))
    except ExcitationDeficient as exc:
        status, error = EXIT_EXCITATION, f"ExcitationDeficient: {exc}"
    except DivergedState as exc:
        status, error = EXIT_DIVERGED, f"DivergedState: {exc}"
    if error:
        print(error, file=sys.stderr)
    write_manifest(out, args.command, args.config, seeds, files, {"exit_code": status, "error": error})
    return status


if __name__ == "__main__":
    sys.exit(main())
