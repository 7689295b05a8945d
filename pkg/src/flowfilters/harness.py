"""Campaign runner: seeded Monte Carlo benchmarks over (scenario, filters).

A campaign simulates ground truth per trajectory, then runs every
configured filter on the same measurement sequence (fairness contract),
optionally several times per trajectory with independently perturbed
priors.  Seeds derive from the master seed through SeedSequence spawn
keys, so results are reproducible and independent across runs.  Results
are written as a per-timestep detail file plus a per-filter summary.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, FlowFilterError
from .filters import FILTER_IDS, init_state, step
from .flow import make_schedule
from .kalman import UkfParams
from .metrics import extract_target_positions, mse, omat
from .models import ScenarioModel
from .scenarios import acoustic, sensor_network

__all__ = ["CampaignConfig", "RunRecord", "run_campaign", "emit_results", "summarize"]

SCENARIOS = ("acoustic", "sensor_network")

_DEFAULT_HORIZON = {"acoustic": 40, "sensor_network": 10}
_METRIC_KIND = {"acoustic": "omat", "sensor_network": "mse"}


@dataclass
class CampaignConfig:
    scenario: str = "acoustic"
    filters: Tuple[str, ...] = ("pfgpf_ledh",)
    n_particles: int = 100
    n_lambda: int = 29
    lambda_ratio: float = 1.2
    kalman: str = "ekf"
    ukf: Optional[Dict] = None
    flow_cov: str = "kalman"
    horizon: Optional[int] = None
    n_trajectories: int = 10
    n_reruns: int = 1
    seed: int = 0
    out_dir: str = "results"
    format: str = "csv"
    timing_enabled: bool = True
    scenario_params: Dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, path) -> "CampaignConfig":
        with open(path) as fh:
            raw = json.load(fh)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "filters" in raw:
            raw["filters"] = tuple(raw["filters"])
        return cls(**raw)

    def resolved_horizon(self) -> int:
        if self.horizon is not None:
            return self.horizon
        return _DEFAULT_HORIZON[self.scenario]

    def ukf_params(self) -> Optional[UkfParams]:
        return UkfParams(**self.ukf) if self.ukf else None

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if not self.filters:
            raise ConfigError("filter list is empty")
        for fid in self.filters:
            if fid not in FILTER_IDS:
                raise ConfigError(f"unknown filter {fid!r}; choose from {FILTER_IDS}")
        for name in ("n_particles", "n_lambda", "n_trajectories", "n_reruns"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.horizon is not None and self.horizon < 1:
            raise ConfigError("horizon must be positive")
        if self.lambda_ratio < 1.0:
            raise ConfigError("lambda_ratio must be >= 1")
        if self.kalman not in ("ekf", "ukf"):
            raise ConfigError("kalman engine must be 'ekf' or 'ukf'")
        if self.flow_cov not in ("kalman", "ensemble"):
            raise ConfigError("flow_cov must be 'kalman' or 'ensemble'")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be 'csv' or 'json'")
        try:
            self.build_scenario()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad scenario_params: {exc}") from exc

    def build_scenario(self) -> ScenarioModel:
        params = dict(self.scenario_params)
        if self.scenario == "acoustic":
            for key in ("sensor_positions", "true_init"):
                if key in params:
                    params[key] = np.asarray(params[key], dtype=float)
            return acoustic.make_scenario(acoustic.AcousticConfig(**params))
        return sensor_network.make_scenario(sensor_network.SensorNetConfig(**params))


@dataclass
class RunRecord:
    """Result of one (filter, trajectory, rerun) run."""

    filter_id: str
    trajectory: int
    rerun: int
    n_particles: int
    estimates: np.ndarray
    per_step_metric: np.ndarray
    run_metric: float
    mean_step_seconds: float
    n_degenerate: int = 0
    error: Optional[str] = None


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))))


def _per_step_metric(kind: str, truth_t: np.ndarray, est_t: np.ndarray) -> float:
    if kind == "omat":
        return omat(extract_target_positions(truth_t), extract_target_positions(est_t))
    return mse(truth_t[None, :], est_t[None, :])


def run_campaign(cfg: CampaignConfig) -> List[RunRecord]:
    """Run every (trajectory, rerun, filter) cell of the campaign.

    Per-run failures are recorded on their RunRecord instead of aborting
    the rest of the campaign.
    """
    cfg.validate()
    scenario = cfg.build_scenario()
    schedule = make_schedule(cfg.n_lambda, cfg.lambda_ratio)
    horizon = cfg.resolved_horizon()
    metric_kind = _METRIC_KIND[cfg.scenario]
    records: List[RunRecord] = []

    for traj in range(cfg.n_trajectories):
        states, measurements = scenario.simulate_truth(horizon, _rng(cfg.seed, 0, traj))
        for rerun in range(cfg.n_reruns):
            prior = scenario.sample_prior(_rng(cfg.seed, 1, traj, rerun))
            for fi, fid in enumerate(cfg.filters):
                fs = init_state(fid, prior, cfg.n_particles,
                                _rng(cfg.seed, 2, traj, rerun, fi))
                estimates = np.empty((horizon, scenario.state_dim))
                per_step = np.empty(horizon)
                seconds = 0.0
                n_degenerate = 0
                error = None
                try:
                    for t in range(horizon):
                        fs, out = step(fid, fs, measurements[t], scenario,
                                       cfg.n_particles, schedule,
                                       kalman=cfg.kalman, ukf_params=cfg.ukf_params(),
                                       flow_cov=cfg.flow_cov)
                        estimates[t] = out.estimate
                        per_step[t] = _per_step_metric(metric_kind, states[t + 1],
                                                       out.estimate)
                        seconds += out.diagnostics.get("seconds", 0.0)
                        n_degenerate += bool(out.diagnostics.get("degenerate"))
                except (FlowFilterError, np.linalg.LinAlgError) as exc:
                    error = f"{type(exc).__name__}: {exc}"
                if error is None:
                    records.append(RunRecord(
                        filter_id=fid, trajectory=traj, rerun=rerun,
                        n_particles=cfg.n_particles, estimates=estimates,
                        per_step_metric=per_step,
                        run_metric=float(per_step.mean()),
                        mean_step_seconds=seconds / horizon,
                        n_degenerate=n_degenerate))
                else:
                    records.append(RunRecord(
                        filter_id=fid, trajectory=traj, rerun=rerun,
                        n_particles=cfg.n_particles,
                        estimates=np.empty((0, scenario.state_dim)),
                        per_step_metric=np.empty(0), run_metric=float("nan"),
                        mean_step_seconds=float("nan"), error=error))
    return records


def summarize(records: Sequence[RunRecord], timing_enabled: bool = True) -> List[Dict]:
    """Per-filter aggregate rows mirroring the benchmark tables."""
    rows = []
    for fid in sorted({r.filter_id for r in records}):
        ok = [r for r in records if r.filter_id == fid and r.error is None]
        if not ok:
            rows.append({"filter": fid, "n_particles": 0, "mean_metric": float("nan"),
                         "std_metric": float("nan"), "mean_step_seconds": 0.0})
            continue
        metrics = np.array([r.run_metric for r in ok])
        secs = float(np.mean([r.mean_step_seconds for r in ok])) if timing_enabled else 0.0
        rows.append({
            "filter": fid,
            "n_particles": ok[0].n_particles,
            "mean_metric": float(metrics.mean()),
            "std_metric": float(metrics.std()),
            "mean_step_seconds": secs,
        })
    return rows


def _fmt(value: float) -> str:
    return repr(float(value))


def emit_results(records: Sequence[RunRecord], fmt: str, out_dir,
                 timing_enabled: bool = True) -> Tuple[Path, Path]:
    """Write detail.(csv|json) and summary.csv; returns the two paths.

    Output ordering is canonical (sorted by filter, trajectory, rerun,
    timestep) so identical campaigns yield identical bytes.
    """
    if not records:
        raise ConfigError("no run records to emit")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ordered = sorted((r for r in records if r.error is None),
                     key=lambda r: (r.filter_id, r.trajectory, r.rerun))
    state_dim = max((r.estimates.shape[1] for r in ordered), default=0)

    if fmt == "csv":
        detail_path = out / "detail.csv"
        with open(detail_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["filter", "trajectory_id", "rerun_id", "timestep"]
                            + [f"est_{i}" for i in range(state_dim)] + ["metric"])
            for r in ordered:
                for t in range(r.estimates.shape[0]):
                    writer.writerow([r.filter_id, r.trajectory, r.rerun, t]
                                    + [_fmt(v) for v in r.estimates[t]]
                                    + [_fmt(r.per_step_metric[t])])
    else:
        detail_path = out / "detail.json"
        payload = [{
            "filter": r.filter_id, "trajectory_id": r.trajectory, "rerun_id": r.rerun,
            "estimates": [[float(v) for v in row] for row in r.estimates],
            "per_step_metric": [float(v) for v in r.per_step_metric],
            "run_metric": float(r.run_metric),
        } for r in ordered]
        detail_path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")

    summary_path = out / "summary.csv"
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filter", "n_particles", "mean_metric", "std_metric",
                         "mean_step_seconds"])
        for row in summarize(records, timing_enabled=timing_enabled):
            writer.writerow([row["filter"], row["n_particles"],
                             _fmt(row["mean_metric"]), _fmt(row["std_metric"]),
                             _fmt(row["mean_step_seconds"])])
    return detail_path, summary_path


def report_failures(records: Sequence[RunRecord], stream=sys.stderr) -> int:
    """Print failed runs; returns how many there were."""
    failed = [r for r in records if r.error is not None]
    for r in failed:
        print(f"run failed: filter={r.filter_id} trajectory={r.trajectory} "
              f"rerun={r.rerun}: {r.error}", file=stream)
    return len(failed)
