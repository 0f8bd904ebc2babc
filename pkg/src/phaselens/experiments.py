"""Declarative rho_m sweeps: plans, per-trial records, aggregation and CSV/JSON output."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .core import (DomainError, GaussianNoise, NoiseSpec, ZeroNoise, complex_gaussian, derive_seed,
                   make_rng, measure, noise_from_dict, noise_to_dict, sample_ensemble)
from .metrics import error_report
from .solvers import SolverAbort, SolverConfig, SparseSpectral, l1_norm, wirtinger_flow
from .theory import optimality_audit

logger = logging.getLogger(__name__)

KINDS = ("dense", "sparse", "theory")

CSV_COLUMNS = ("m", "trial", "dist", "rho_m", "bound", "iterations", "converged",
               "seed", "final_loss", "residual_ok", "fourth_power_ok", "cone_ok")


def sparse_log_factor(d: int, s: int) -> float:
    """s * log(e d / s)."""
    return s * math.log(math.e * d / s)


def resolve_m_values(rule, d: int, s: Optional[int] = None) -> List[int]:
    """Expand an m-grid.

    ``rule`` is a list of integers, ``{"multiples_of_d": [...]}``, or
    ``{"multiples_of_slog": [...]}`` meaning ceil(c * s * log(e d / s)) for each c.
    """
    if isinstance(rule, dict):
        if len(rule) != 1:
            raise DomainError(f"m rule must have exactly one key, got {sorted(rule)}")
        (key, mults), = rule.items()
        if key == "multiples_of_d":
            values = [int(math.ceil(c * d)) for c in mults]
        elif key == "multiples_of_slog":
            if s is None:
                raise DomainError("multiples_of_slog needs the sparsity s")
            values = [int(math.ceil(c * sparse_log_factor(d, s))) for c in mults]
        else:
            raise DomainError(f"unknown m rule {key!r}")
    else:
        values = [int(v) for v in rule]
    if not values:
        raise DomainError("m_values is empty")
    if any(v < 1 for v in values) or any(b <= a for a, b in zip(values, values[1:])):
        raise DomainError(f"m_values must be positive and strictly increasing, got {values}")
    return values


@dataclass(frozen=True)
class ExperimentPlan:
    kind: str
    d: int
    m_values: Union[list, dict]
    trials: int
    noise: NoiseSpec = field(default_factory=lambda: GaussianNoise(1.0, 1.0))
    solver: SolverConfig = field(default_factory=SolverConfig)
    master_seed: int = 0
    output_path: str = "results"
    s: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.d < 1 or self.trials < 1:
            raise DomainError("d and trials must be positive")
        if self.kind == "sparse":
            if self.s is None or not 1 <= self.s <= self.d:
                raise DomainError(f"sparse plans need 1 <= s <= d, got s={self.s}")
        if self.kind != "theory":
            resolve_m_values(self.m_values, self.d, self.s)

    @property
    def ms(self) -> List[int]:
        return resolve_m_values(self.m_values, self.d, self.s)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "d": self.d, "s": self.s, "m_values": self.m_values,
                "trials": self.trials, "noise": noise_to_dict(self.noise),
                "solver": self.solver.to_dict(), "master_seed": self.master_seed,
                "output_path": self.output_path}

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentPlan":
        data = dict(data)
        if "noise" in data:
            data["noise"] = noise_from_dict(data["noise"])
        if "solver" in data:
            data["solver"] = SolverConfig.from_dict(data["solver"])
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentPlan":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def preset(name: str, kind: str) -> ExperimentPlan:
    """Named plans: ``desk`` runs in minutes, ``paper`` is the full-size sweep (hours)."""
    noise = GaussianNoise(1.0, 1.0)
    if kind == "dense":
        if name == "desk":
            return ExperimentPlan("dense", d=64, m_values={"multiples_of_d": [4, 8, 12, 16, 20]},
                                  trials=20, noise=noise, output_path="results/dense-desk")
        if name == "paper":
            return ExperimentPlan("dense", d=500,
                                  m_values={"multiples_of_d": [4, 10, 20, 30, 40, 50]},
                                  trials=100, noise=noise, output_path="results/dense-paper")
    elif kind == "sparse":
        mults = [6, 9.5, 13, 16.5, 20]
        if name == "desk":
            return ExperimentPlan("sparse", d=256, s=10, m_values={"multiples_of_slog": mults},
                                  trials=20, noise=noise,
                                  solver=SolverConfig(init=SparseSpectral(10)),
                                  output_path="results/sparse-desk")
        if name == "paper":
            return ExperimentPlan("sparse", d=1000, s=100, m_values={"multiples_of_slog": mults},
                                  trials=100, noise=noise,
                                  solver=SolverConfig(init=SparseSpectral(100)),
                                  output_path="results/sparse-paper")
    elif kind == "theory":
        return ExperimentPlan("theory", d=16, m_values=[1], trials=1,
                              output_path=f"results/theory-{name}")
    raise DomainError(f"no preset {name!r} for kind {kind!r}")


@dataclass(frozen=True)
class TrialRecord:
    m: int
    trial: int
    seed: int
    dist: float
    rho_m: Optional[float]
    bound: float
    iterations: int
    final_loss: float
    converged: bool
    residual_ok: bool
    fourth_power_ok: bool
    cone_ok: Optional[bool] = None

    def to_row(self) -> Dict[str, str]:
        return {k: _fmt(getattr(self, k)) for k in CSV_COLUMNS}

    @classmethod
    def from_row(cls, row: Dict[str, str]) -> "TrialRecord":
        return cls(m=int(row["m"]), trial=int(row["trial"]), seed=int(row["seed"]),
                   dist=float(row["dist"]), rho_m=_opt_float(row["rho_m"]),
                   bound=float(row["bound"]), iterations=int(row["iterations"]),
                   final_loss=float(row["final_loss"]), converged=_bool(row["converged"]),
                   residual_ok=_bool(row["residual_ok"]),
                   fourth_power_ok=_bool(row["fourth_power_ok"]),
                   cone_ok=None if row["cone_ok"] == "" else _bool(row["cone_ok"]))

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "TrialRecord":
        return cls(**data)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _opt_float(s: str) -> Optional[float]:
    return None if s == "" else float(s)


def _bool(s: str) -> bool:
    if s not in ("true", "false"):
        raise DomainError(f"bad boolean {s!r}")
    return s == "true"


def trial_seed(plan: ExperimentPlan, m: int, trial_index: int) -> int:
    return derive_seed(plan.master_seed, m, trial_index)


def sample_signal(plan: ExperimentPlan, seed: int) -> np.ndarray:
    rng = make_rng(seed)
    if plan.kind == "sparse":
        x0 = np.zeros(plan.d, dtype=complex)
        support = np.sort(rng.choice(plan.d, size=plan.s, replace=False))
        x0[support] = rng.standard_normal(plan.s)
        return x0
    return complex_gaussian(rng, plan.d)


def run_trial(plan: ExperimentPlan, m: int, trial_index: int) -> TrialRecord:
    if m not in plan.ms:
        raise DomainError(f"m={m} is not on the plan grid {plan.ms}")
    seed = trial_seed(plan, m, trial_index)
    x0 = sample_signal(plan, derive_seed(seed, 0))
    ens = sample_ensemble(plan.d, m, derive_seed(seed, 1))
    meas = measure(ens, x0, plan.noise, derive_seed(seed, 2))

    config = dataclasses.replace(plan.solver, seed=derive_seed(seed, 3))
    radius = None
    if plan.kind == "sparse":
        radius = config.l1_radius if config.l1_radius is not None else l1_norm(x0)
        config = dataclasses.replace(config, l1_radius=radius)

    try:
        res = wirtinger_flow(ens, meas.b, config)
        x_hat, iters, loss, converged = res.estimate, res.iterations, res.loss_trace[-1], res.converged
    except SolverAbort as exc:
        logger.warning("trial (m=%d, t=%d) aborted: %s", m, trial_index, exc)
        x_hat, iters, loss, converged = exc.iterate, exc.iteration, float("nan"), False
    except DomainError as exc:
        logger.warning("trial (m=%d, t=%d) could not start: %s", m, trial_index, exc)
        x_hat, iters, loss, converged = np.zeros(plan.d, complex), 0, float("nan"), False

    rep = error_report(x_hat, x0, meas.eta, m)
    audit = optimality_audit(ens, meas.b, x_hat, x0, meas.eta, l1_radius=radius,
                             s=plan.s if plan.kind == "sparse" else None)
    return TrialRecord(m=m, trial=trial_index, seed=seed, dist=rep.dist, rho_m=rep.rho_m,
                       bound=rep.bound, iterations=iters, final_loss=float(loss),
                       converged=converged, residual_ok=audit.residual_ok,
                       fourth_power_ok=audit.fourth_power_ok, cone_ok=audit.cone_ok)


def _run_trial_args(args):
    return run_trial(*args)


@dataclass(frozen=True)
class MAggregate:
    m: int
    trials: int
    converged: int
    excluded: int
    mean_rho: Optional[float]
    std_rho: Optional[float]
    mean_dist: Optional[float]
    convergence_rate: float


def aggregate(records: Sequence[TrialRecord]) -> List[MAggregate]:
    """Per-m statistics; rho_m is averaged over converged trials only."""
    by_m: Dict[int, List[TrialRecord]] = {}
    for r in records:
        by_m.setdefault(r.m, []).append(r)
    out = []
    for m in sorted(by_m):
        recs = sorted(by_m[m], key=lambda r: r.trial)
        good = [r for r in recs if r.converged and r.rho_m is not None]
        rho = np.array([r.rho_m for r in good])
        dist = np.array([r.dist for r in good])
        out.append(MAggregate(
            m=m, trials=len(recs), converged=len(good), excluded=len(recs) - len(good),
            mean_rho=float(np.mean(rho)) if rho.size else None,
            std_rho=float(np.std(rho, ddof=1)) if rho.size > 1 else (0.0 if rho.size else None),
            mean_dist=float(np.mean(dist)) if dist.size else None,
            convergence_rate=len(good) / len(recs)))
    return out


def coefficient_of_variation(values: Sequence[float]) -> float:
    """Population std over mean of the per-m mean ratios (nan when the mean is 0)."""
    v = np.asarray(values, dtype=float)
    mean = float(np.mean(v))
    return float(np.std(v) / mean) if mean != 0 else float("nan")


@dataclass
class ExperimentReport:
    plan: ExperimentPlan
    per_m: List[MAggregate]
    records: List[TrialRecord]
    wall_clock_seconds: float = 0.0
    started_at: str = ""

    @property
    def mean_rhos(self) -> List[Optional[float]]:
        return [a.mean_rho for a in self.per_m]

    @property
    def rho_cv(self) -> Optional[float]:
        rhos = self.mean_rhos
        if any(r is None for r in rhos):
            return None
        cv = coefficient_of_variation(rhos)
        return None if math.isnan(cv) else cv

    def to_dict(self) -> dict:
        return {"plan": self.plan.to_dict(),
                "per_m": [dataclasses.asdict(a) for a in self.per_m],
                "rho_cv": self.rho_cv,
                "wall_clock_seconds": self.wall_clock_seconds,
                "started_at": self.started_at}


def records_to_csv(records: Sequence[TrialRecord]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in sorted(records, key=lambda r: (r.m, r.trial)):
        w.writerow(r.to_row())
    return buf.getvalue()


def records_from_csv(text: str) -> List[TrialRecord]:
    return [TrialRecord.from_row(row) for row in csv.DictReader(io.StringIO(text))]


def ensure_writable(directory) -> None:
    """Create ``directory`` and prove a file can be written there; raises OSError."""
    os.makedirs(directory, exist_ok=True)
    with tempfile.NamedTemporaryFile(dir=directory, prefix=".probe-"):
        pass


def run_experiment(plan: ExperimentPlan, out_dir=None, workers: int = 1,
                   write: bool = True) -> ExperimentReport:
    """Run every (m, trial) cell, aggregate, and write trials.csv and report.json."""
    if plan.kind == "theory":
        raise DomainError("theory plans run through run_theory_suite")
    out_dir = plan.output_path if out_dir is None else out_dir
    if write:
        ensure_writable(out_dir)
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    t0 = time.perf_counter()
    cells = [(plan, m, t) for m in plan.ms for t in range(plan.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_trial_args, cells))
    else:
        records = [run_trial(*c) for c in cells]
    report = ExperimentReport(plan=plan, per_m=aggregate(records), records=records,
                              wall_clock_seconds=time.perf_counter() - t0, started_at=started)
    if write:
        with open(os.path.join(out_dir, "trials.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(records_to_csv(records))
        with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2)
    return report


@dataclass(frozen=True)
class TheoryCheck:
    name: str
    passed: bool
    value: float
    threshold: str


def run_theory_suite(master_seed: int = 0, n_mc: int = 100_000) -> List[TheoryCheck]:
    """Quick pass/fail battery over the lifted map, moments, small-ball and LRIP checks."""
    from . import theory
    from .core import hs_inner, lift_adjoint, lift_apply, realify, realify_matrix
    from .objective import (finite_difference_gradient, intensity_loss, realified_gradient,
                            wirtinger_gradient)
    from .solvers import project_l1_ball

    checks: List[TheoryCheck] = []
    seed = lambda *k: derive_seed(master_seed, *k)  # noqa: E731

    worst = 0.0
    for t in range(20):
        rng = make_rng(seed(1, t))
        ens = sample_ensemble(6, 30, seed(2, t))
        G = complex_gaussian(rng, (6, 6))
        H = G + G.conj().T
        z = rng.standard_normal(30)
        lhs, rhs = float(lift_apply(ens, H) @ z), hs_inner(H, lift_adjoint(ens, z))
        worst = max(worst, abs(lhs - rhs) / (1 + abs(lhs)))
    checks.append(TheoryCheck("adjointness", worst <= 1e-10, worst, "<= 1e-10"))

    worst = 0.0
    for t in range(20):
        rng = make_rng(seed(3, t))
        ens = sample_ensemble(4, 16, seed(4, t))
        b = rng.uniform(0, 3, 16)
        x = complex_gaussian(rng, 4)
        fd = finite_difference_gradient(lambda v: intensity_loss(ens, b, v), x)
        an = realified_gradient(wirtinger_gradient(ens, b, x))
        worst = max(worst, float(np.linalg.norm(fd - an) / np.linalg.norm(an)))
    checks.append(TheoryCheck("gradient_vs_finite_differences", worst <= 1e-6, worst, "<= 1e-6"))

    ens = sample_ensemble(5, 40, seed(5))
    rs = realify(ens)
    rng = make_rng(seed(6))
    G = complex_gaussian(rng, (5, 5))
    H = G + G.conj().T
    Ht = realify_matrix(H)
    quad = np.einsum("ji,ik,jk->j", rs.tilde_rows, Ht, rs.tilde_rows)
    err = float(np.max(np.abs(quad - lift_apply(ens, H))))
    checks.append(TheoryCheck("realification_identity", err <= 1e-10, err, "<= 1e-10"))

    worst_k, worst_2, worst_4 = 0.0, 0.0, 0.0
    rng = make_rng(seed(7))
    spectra = [[1.0], [1 / math.sqrt(2), -1 / math.sqrt(2)]]
    for _ in range(20):
        lam = rng.standard_normal(int(rng.integers(1, 7)))
        spectra.append(list(lam / np.linalg.norm(lam)))
    for i, lam in enumerate(spectra):
        rep = theory.moment_report(lam, n_mc=10 * n_mc, seed=seed(8, i))
        worst_k = max(worst_k, rep.kurtosis_ratio)
        worst_2 = max(worst_2, abs(rep.second_mc / rep.second_exact - 1))
        worst_4 = max(worst_4, abs(rep.fourth_mc / rep.fourth_exact - 1))
    checks.append(TheoryCheck("kurtosis_ratio", worst_k <= theory.KURTOSIS_CAP, worst_k, "<= 13"))
    checks.append(TheoryCheck("second_moment_mc", worst_2 <= 0.01, worst_2, "<= 1%"))
    checks.append(TheoryCheck("fourth_moment_mc", worst_4 <= 0.03, worst_4, "<= 3%"))

    prof = theory.small_ball_profile(16, 2, n_mc, 50, seed(9), n_width=20)
    sigma = math.sqrt(theory.SMALL_BALL_FLOOR * (1 - theory.SMALL_BALL_FLOOR) / n_mc)
    floor = theory.SMALL_BALL_FLOOR - 3 * sigma
    checks.append(TheoryCheck("small_ball_q_hat", prof.q_hat >= floor, prof.q_hat,
                              f">= {floor:.5f}"))
    v = np.zeros(16, dtype=complex)
    v[0] = 1.0
    frac = theory.small_ball_fraction(np.outer(v, v.conj()), n_mc, make_rng(seed(10)))
    gap = abs(frac - math.exp(-theory.SMALL_BALL_LEVEL))
    checks.append(TheoryCheck("small_ball_rank_one_exact", gap <= 0.01, gap, "<= 0.01"))
    w_max = float(np.max(theory.rademacher_width(32, 640, 50, seed(11))))
    checks.append(TheoryCheck("rademacher_width", w_max <= 4 * math.sqrt(32), w_max,
                              f"<= {4 * math.sqrt(32):.3f}"))

    lrip = min(theory.empirical_lrip(16, 2, 640, 500, seed(12, k)).min_ratio for k in range(5))
    checks.append(TheoryCheck("empirical_lrip", lrip >= 0.3, lrip, ">= 0.3"))

    rng = make_rng(seed(13))
    worst = 0.0
    for _ in range(200):
        x = complex_gaussian(rng, int(rng.integers(1, 12))) * rng.uniform(0.1, 5)
        R = float(rng.uniform(0.1, 5))
        p = project_l1_ball(x, R)
        worst = max(worst, float(np.sum(np.abs(p))) - R)
        if not np.array_equal(project_l1_ball(p, R), p):
            worst = math.inf
    checks.append(TheoryCheck("l1_projection_feasible_idempotent", worst <= 0.0, worst, "<= 0"))
    return checks
