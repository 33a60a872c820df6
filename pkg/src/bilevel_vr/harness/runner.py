"""Build problems from configs, run trajectories and write metrics CSVs."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import DivergenceError, make_rng
from ..problems.hyperclean import HyperCleanDataset, HyperCleanProblem, corrupt_labels, make_hyperclean_synthetic
from ..problems.idx import load_idx
from ..problems.synthetic import SyntheticProblem, make_synthetic
from ..solver import expected_samples, initial_state, outer_step
from .config import ConfigError

log = logging.getLogger(__name__)

CSV_HEADER = ("k", "samples_used", "wall_seconds", "phi", "grad_norm", "test_accuracy", "lyapunov")


@dataclass(frozen=True)
class MetricsRow:
    k: int
    samples_used: int
    wall_seconds: float
    phi: float
    grad_norm: float | None = None
    test_accuracy: float | None = None
    lyapunov: float | None = None


@dataclass
class RunResult:
    config: object
    seed: int
    rows: list
    initial_phi: float
    final_state: object
    max_v_norm: float
    expected_samples: int
    csv_path: Path | None = None
    error: str | None = None
    extras: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.error is None


def build_problem(cfg):
    """Instantiate the oracle described by ``cfg`` (deterministic in ``data_seed``)."""
    if cfg.problem == "synthetic":
        train, val = make_synthetic(cfg.n, cfg.dim, reg=cfg.problem_reg, seed=cfg.data_seed)
        return SyntheticProblem(train, val)
    if cfg.problem == "hyperclean":
        data = make_hyperclean_synthetic(
            cfg.n_train, cfg.n_val, cfg.n_test, cfg.dim, cfg.n_classes,
            cfg.corruption_prob, seed=cfg.data_seed, reg=cfg.problem_reg,
            separation=cfg.separation,
        )
        return HyperCleanProblem(data)
    return HyperCleanProblem(_idx_dataset(cfg))


def _idx_dataset(cfg):
    try:
        train_u, train_lab = load_idx(cfg.train_images, cfg.train_labels)
        test_u, test_lab = load_idx(cfg.test_images, cfg.test_labels)
    except OSError as exc:
        raise ConfigError(f"cannot read IDX file: {exc}") from None
    n_classes = int(max(train_lab.max(), test_lab.max())) + 1
    if cfg.n_train + cfg.n_val > train_u.shape[0]:
        raise ConfigError(
            f"n_train + n_val = {cfg.n_train + cfg.n_val} exceeds {train_u.shape[0]} training images",
            "n_train",
        )
    rng = make_rng(cfg.data_seed)
    order = rng.permutation(train_u.shape[0])
    tr, va = order[: cfg.n_train], order[cfg.n_train : cfg.n_train + cfg.n_val]
    test = np.arange(min(cfg.n_test, test_u.shape[0]))
    noisy, mask = corrupt_labels(rng, train_lab[tr], n_classes, cfg.corruption_prob)
    return HyperCleanDataset(
        train_features=train_u[tr], train_labels=noisy,
        val_features=train_u[va], val_labels=train_lab[va],
        test_features=test_u[test], test_labels=test_lab[test],
        corruption_mask=mask, corruption_prob=cfg.corruption_prob,
        n_classes=n_classes, reg=cfg.problem_reg, true_train_labels=train_lab[tr],
    )


def evaluate(problem, state, with_lyapunov=True):
    """``(phi, grad_norm, test_accuracy, lyapunov)`` for the current state."""
    if isinstance(problem, SyntheticProblem):
        sol = problem.exact(state.x)
        lyap = None
        if with_lyapunov:
            lyap = sol.phi + float(np.sum((state.y - sol.y_star) ** 2) + np.sum((state.v - sol.v_star) ** 2))
        return sol.phi, float(np.linalg.norm(sol.grad_phi)), None, lyap
    return problem.validation_loss(state.y), None, problem.test_accuracy(state.y), None


def initial_phi(problem, state):
    return evaluate(problem, state, with_lyapunov=False)[0]


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(rows, path, record_time=True):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow([
                _fmt(row.k), _fmt(row.samples_used),
                _fmt(row.wall_seconds) if record_time else "",
                _fmt(row.phi), _fmt(row.grad_norm), _fmt(row.test_accuracy), _fmt(row.lyapunov),
            ])
    return path


def read_csv(path):
    def num(text, kind=float):
        return None if text == "" else kind(text)

    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        return [
            MetricsRow(
                k=int(r[0]), samples_used=int(r[1]), wall_seconds=num(r[2]),
                phi=float(r[3]), grad_norm=num(r[4]), test_accuracy=num(r[5]), lyapunov=num(r[6]),
            )
            for r in reader
        ]


def run_single(cfg, seed, problem=None, write=True):
    """Run one seed of ``cfg``; never raises on divergence (see ``RunResult.error``)."""
    problem = build_problem(cfg) if problem is None else problem
    solver_cfg = cfg.solver_config(seed)
    rng = make_rng(seed)
    state = initial_state(problem, solver_cfg)
    phi0 = initial_phi(problem, state)
    rows = []
    max_v = float(np.linalg.norm(state.v))
    elapsed = 0.0
    error = None
    lyap = cfg.lyapunov and isinstance(problem, SyntheticProblem)
    while state.k < solver_cfg.k_max:
        tic = time.monotonic()
        try:
            state = outer_step(state, solver_cfg, problem, rng)
        except DivergenceError as exc:
            error = f"diverged at outer iteration {state.k}: {exc}"
            log.error("%s (seed %d)", error, seed)
            break
        elapsed += time.monotonic() - tic
        max_v = max(max_v, float(np.linalg.norm(state.v)))
        if state.k % cfg.eval_every == 0:
            phi, gnorm, acc, lyap_val = evaluate(problem, state, lyap)
            rows.append(MetricsRow(state.k, state.samples_used, elapsed, phi, gnorm, acc, lyap_val))
    result = RunResult(
        config=cfg, seed=seed, rows=rows, initial_phi=phi0, final_state=state,
        max_v_norm=max_v, expected_samples=expected_samples(problem, solver_cfg, state.k),
        error=error,
    )
    if write:
        result.csv_path = write_csv(rows, cfg.output_path(seed), record_time=cfg.record_time)
    return result


def run_experiment(cfg, write=True):
    """Run every seed in ``cfg`` sequentially; returns one :class:`RunResult` per seed.

    The problem instance is built once and shared (it is read-only).
    """
    problem = build_problem(cfg)
    return [run_single(cfg, seed, problem=problem, write=write) for seed in cfg.seeds]


def compare_runs(cfg_a, cfg_b, write=True, n_budgets=5):
    """Run two configs on the same problem instance and summarise them.

    Returns ``(summary, aligned, runs)``: ``summary`` has one dict per
    algorithm and seed with the final metrics; ``aligned`` reports, at common
    sample budgets, the last recorded metrics whose ``samples_used`` fits the
    budget; ``runs`` maps ``"a"``/``"b"`` to the lists of :class:`RunResult`.
    """
    if cfg_a.problem_signature() != cfg_b.problem_signature():
        diff = sorted(
            k for k, v in cfg_a.problem_signature().items() if cfg_b.problem_signature()[k] != v
        )
        raise ConfigError(f"configs target different problem instances (differ in {', '.join(diff)})")
    if tuple(cfg_a.seeds) != tuple(cfg_b.seeds):
        raise ConfigError("configs use different seed sets", "seeds")
    if cfg_a.output_path() == cfg_b.output_path():
        out = Path(cfg_a.output)
        cfg_a = cfg_a.replace(output=str(out.with_name(f"{out.stem}_a{out.suffix}")))
        cfg_b = cfg_b.replace(output=str(out.with_name(f"{out.stem}_b{out.suffix}")))
    problem = build_problem(cfg_a)
    runs = {}
    for tag, cfg in (("a", cfg_a), ("b", cfg_b)):
        runs[tag] = [run_single(cfg, s, problem=problem, write=write) for s in cfg.seeds]

    summary = []
    for tag, results in runs.items():
        for res in results:
            last = res.rows[-1] if res.rows else None
            summary.append({
                "run": tag,
                "algorithm": res.config.label,
                "seed": res.seed,
                "k": last.k if last else 0,
                "samples_used": last.samples_used if last else 0,
                "initial_phi": res.initial_phi,
                "final_phi": last.phi if last else math.nan,
                "final_grad_norm": last.grad_norm if last else None,
                "final_test_accuracy": last.test_accuracy if last else None,
                "status": "ok" if res.ok else "diverged",
            })

    aligned = []
    ends = [res.rows[-1].samples_used for rs in runs.values() for res in rs if res.rows]
    if ends:
        top = min(ends)
        budgets = sorted({int(round(top * (i + 1) / n_budgets)) for i in range(n_budgets)})
        for budget in budgets:
            for tag, results in runs.items():
                for res in results:
                    fit = [r for r in res.rows if r.samples_used <= budget]
                    if not fit:
                        continue
                    r = fit[-1]
                    aligned.append({
                        "budget": budget, "run": tag, "algorithm": res.config.label,
                        "seed": res.seed, "k": r.k, "phi": r.phi, "grad_norm": r.grad_norm,
                        "test_accuracy": r.test_accuracy,
                    })
    return summary, aligned, runs


def write_table(rows, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return path
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) if not isinstance(v, str) else v for k, v in row.items()})
    return path


def format_table(rows):
    """Fixed-width text rendering of a list of flat dicts."""
    if not rows:
        return "(empty)"
    cols = list(rows[0])

    def cell(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return f"{v:.6g}"
        return str(v)

    body = [[cell(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines)
