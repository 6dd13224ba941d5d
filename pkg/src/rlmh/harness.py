"""Experiment orchestration and file output.

For every ``(method, seed)`` pair the pipeline is run and the following
files are written under ``<output_dir>/<method>/seed_<seed>/``:

``samples.csv``
    the frozen evaluation path: ``step, x1..xd, accepted, reward``.
``rewards.csv`` (RLMH only)
    per training step: ``step, reward, log_alpha, accepted, step_norm,
    drift_norm, learning_rate``.
``policy.json`` (RLMH only)
    checkpoint of the trained policy.
``metrics.csv``
    one row: ``method, target, seed, esjd, mmd, acceptance_rate,
    lengthscale, n_samples``.
``manifest.json``
    configuration echo, status, wall-clock time, and the SHA-256 of every
    file above.

The top-level ``metrics.csv`` stacks every run and ``summary.csv`` holds
mean and standard error per method.  Numeric output uses 17 significant
digits; timestamps appear only in manifests, so reruns with the same seeds
reproduce every CSV byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_reference
from .estimators import AMALASampler, ARWMHSampler, RLMHSampler
from .metrics import MetricReport, evaluate, median_heuristic
from .policy import Policy, phi_map, save_policy

log = logging.getLogger(__name__)

METRIC_COLUMNS = ["method", "target", "seed", "esjd", "mmd", "acceptance_rate",
                  "lengthscale", "n_samples"]
SUMMARY_COLUMNS = ["method", "target", "n_seeds", "esjd_mean", "esjd_se", "mmd_mean",
                   "mmd_se", "acceptance_rate_mean", "acceptance_rate_se"]


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:  # pragma: no cover - source checkout
        return "0+unknown"


def format_number(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_number(v) for v in row])
    return buf.getvalue()


def _write(path: Path, text: str) -> str:
    path.write_text(text, encoding="utf-8", newline="")
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunArtifacts:
    method: str
    seed: int
    directory: Path
    manifest: dict
    report: MetricReport | None = None
    files: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.manifest.get("status") == "ok"


@dataclass
class ExperimentResult:
    runs: list
    metrics_path: Path
    summary_path: Path
    summary: list


def _sampler(method: str, cfg: ExperimentConfig, seed: int):
    if method == "rlmh":
        r = cfg.rlmh
        return RLMHSampler(warm_m=cfg.warm.m, warm_beta=cfg.warm.beta, hidden=r.hidden,
                           radius=r.radius, pretrain_threshold=r.pretrain_threshold,
                           pretrain_epochs=r.pretrain_epochs, episodes=r.episodes,
                           steps_per_episode=r.steps_per_episode, clip=r.clip,
                           schedule=r.schedule, alpha0=r.alpha0, kappa=r.kappa, gamma=r.gamma,
                           batch_size=r.batch_size, critic_lr=r.critic_lr, tau=r.tau,
                           buffer_capacity=r.buffer_capacity, critic_hidden=r.critic_hidden,
                           cap_critic_lr=r.cap_critic_lr,
                           r_min=r.r_min, n_eval=cfg.n_eval, random_state=seed)
    if method == "arwmh":
        return ARWMHSampler(cfg.arwmh.n_iter, cfg.arwmh.beta, cfg.n_eval, random_state=seed)
    if method == "amala":
        a = cfg.amala
        return AMALASampler(a.eps0, a.n_epochs, a.warm_epoch_length, a.final_epoch_length,
                            a.blend, cfg.n_eval, random_state=seed)
    raise ValueError(f"unknown method {method!r}")


def run_single(cfg: ExperimentConfig, method: str, seed: int, out_dir=None,
               reference=None) -> RunArtifacts:
    """Run one method for one seed and write its files.

    On error the manifest is written with ``status = "failed"`` and the
    exception is re-raised.
    """
    root = Path(out_dir if out_dir is not None else cfg.output_dir)
    run_dir = root / method / f"seed_{seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "method": method,
        "seed": seed,
        "target": cfg.target.family,
        "version": _version(),
        "config": cfg.model_dump(mode="json"),
        "started_at": datetime.now(timezone.utc).isoformat(),
        "status": "running",
        "files": {},
    }
    t0 = time.perf_counter()
    try:
        target = cfg.target.build()
        if reference is None:
            reference = load_reference(cfg.target, target)
        ell = median_heuristic(reference)
        sampler = _sampler(method, cfg, seed)
        sampler.fit(target)
        X = sampler.sample(cfg.n_eval)
        report = evaluate(X, sampler.last_accepted_, reference, ell)

        files = {}
        d = target.dim
        header = ["step", *(f"x{i + 1}" for i in range(d)), "accepted", "reward"]
        rows = ([i + 1, *X[i], bool(a), r]
                for i, (a, r) in enumerate(zip(sampler.last_accepted_, sampler.last_rewards_)))
        files["samples.csv"] = _write(run_dir / "samples.csv", csv_text(header, rows))
        if method == "rlmh":
            res = sampler.result_
            rows = zip(range(1, res.rewards.shape[0] + 1), res.rewards, res.log_alpha,
                       res.accepted, res.step_norms, res.drift_norms, res.learning_rates)
            files["rewards.csv"] = _write(
                run_dir / "rewards.csv",
                csv_text(["step", "reward", "log_alpha", "accepted", "step_norm",
                          "drift_norm", "learning_rate"], rows))
            save_policy(sampler.policy_, run_dir / "policy.json")
            files["policy.json"] = sha256_file(run_dir / "policy.json")
            manifest["episode_mean_rewards"] = [float(v) for v in res.episode_rewards]
            manifest["clip_threshold"] = res.clip
            manifest["pretrain_epochs_run"] = len(sampler.pretrain_.val_loss) - 1
        row = [method, cfg.target.family, seed, report.esjd, report.mmd,
               report.acceptance_rate, report.lengthscale, report.n_samples]
        files["metrics.csv"] = _write(run_dir / "metrics.csv", csv_text(METRIC_COLUMNS, [row]))
    except Exception as err:
        manifest["status"] = "failed"
        manifest["error"] = f"{type(err).__name__}: {err}"
        manifest["wall_clock_seconds"] = time.perf_counter() - t0
        (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=1))
        raise
    manifest["status"] = "ok"
    manifest["wall_clock_seconds"] = time.perf_counter() - t0
    manifest["files"] = {name: {"path": name, "sha256": h} for name, h in files.items()}
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=1))
    log.info("%s seed %d: mmd %.4g esjd %.4g acceptance %.3f (%.1fs)", method, seed,
             report.mmd, report.esjd, report.acceptance_rate, manifest["wall_clock_seconds"])
    return RunArtifacts(method, seed, run_dir, manifest, report, files)


def mean_se(values) -> tuple[float, float]:
    """Mean and ``sd / sqrt(n)``; the standard error is NaN for one value."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("no values to aggregate")
    if v.size == 1:
        return float(v[0]), math.nan
    return float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(v.size))


def summarize(runs, target_label: str) -> list[list]:
    rows = []
    methods = list(dict.fromkeys(r.method for r in runs))
    for method in methods:
        reps = [r.report for r in runs if r.method == method]
        row = [method, target_label, len(reps)]
        for key in ("esjd", "mmd", "acceptance_rate"):
            row.extend(mean_se([getattr(rep, key) for rep in reps]))
        rows.append(row)
    return rows


def _run_job(args):
    cfg, method, seed, out_dir = args
    return run_single(cfg, method, seed, out_dir)


def run_experiment(cfg: ExperimentConfig, out_dir=None, methods=None, seeds=None,
                   jobs: int = 1) -> ExperimentResult:
    """Run every ``(method, seed)`` pair and write the aggregate tables."""
    root = Path(out_dir if out_dir is not None else cfg.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    methods = list(methods or cfg.methods)
    seeds = list(seeds if seeds is not None else cfg.seeds)
    pairs = [(cfg, m, s, root) for m in methods for s in seeds]
    if jobs > 1 and len(pairs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_run_job, pairs))
    else:
        target = cfg.target.build()
        reference = load_reference(cfg.target, target)
        runs = [run_single(c, m, s, r, reference) for c, m, s, r in pairs]

    metric_rows = [[r.method, cfg.target.family, r.seed, r.report.esjd, r.report.mmd,
                    r.report.acceptance_rate, r.report.lengthscale, r.report.n_samples]
                   for r in runs]
    metrics_path = root / "metrics.csv"
    _write(metrics_path, csv_text(METRIC_COLUMNS, metric_rows))
    summary = summarize(runs, cfg.target.family)
    summary_path = root / "summary.csv"
    _write(summary_path, csv_text(SUMMARY_COLUMNS, summary))
    return ExperimentResult(runs, metrics_path, summary_path, summary)


def parse_grid(spec: str) -> np.ndarray:
    """``"a:b:n"`` to ``n`` evenly spaced points from ``a`` to ``b``."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValueError(f"grid must look like a:b:n, got {spec!r}")
    a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    if n < 1:
        raise ValueError("grid needs at least one point")
    return np.linspace(a, b, n)


def emit_policy_slice(policy: Policy, grid) -> str:
    """CSV of ``x, φ(x)`` over a 1-D grid, or the tensor lattice in 2-D."""
    d = policy.dim
    if d > 2:
        raise ValueError(f"policy slices are only supported for d <= 2, got d = {d}")
    g = np.asarray(grid, dtype=float).ravel()
    if d == 1:
        X = g[:, None]
    else:
        u, v = np.meshgrid(g, g, indexing="ij")
        X = np.column_stack([u.ravel(), v.ravel()])
    phi = phi_map(policy, X)
    header = [*(f"x{i + 1}" for i in range(d)), *(f"phi{i + 1}" for i in range(d))]
    return csv_text(header, np.hstack([X, phi]).tolist())
