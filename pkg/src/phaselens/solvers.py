"""Spectral initialization, l1-ball projection and (projected) Wirtinger Flow."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

import numpy as np

from .core import DomainError, SensingEnsemble, as_hermitian, as_signal, make_rng
from .objective import _check_b, _sum_squares, loss_and_gradient

logger = logging.getLogger(__name__)

TRUNCATION_ALPHA = 3.0


class SolverAbort(RuntimeError):
    """Non-finite loss during iteration; ``iteration`` is the offending iterate index."""

    def __init__(self, message: str, iteration: int, iterate: np.ndarray):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration
        self.iterate = iterate


class EigenPair(NamedTuple):
    value: float
    vector: np.ndarray
    iterations: int
    converged: bool


def _fix_phase(v: np.ndarray) -> np.ndarray:
    # make the largest-modulus entry real and positive
    k = int(np.argmax(np.abs(v)))
    if v[k] == 0:
        return v
    out = v * (abs(v[k]) / v[k])
    out[k] = abs(v[k])
    return out


def power_iteration(H, tol: float = 1e-10, max_iters: int = 10_000, seed: int = 0) -> EigenPair:
    """Dominant-in-magnitude eigenpair of a Hermitian matrix.

    Stops once ``||H v - lam v|| <= tol * ||H||_F``. Hitting ``max_iters``
    returns the last iterate with ``converged=False`` instead of raising.
    """
    H = as_hermitian(H)
    d = H.shape[0]
    fro = np.linalg.norm(H)
    v = np.zeros(d, dtype=complex)
    v[0] = 1.0
    if fro == 0.0:
        return EigenPair(0.0, v, 0, True)
    rng = make_rng(seed)
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    v /= np.linalg.norm(v)
    lam = 0.0
    for it in range(1, max_iters + 1):
        Hv = H @ v
        lam = float(np.vdot(v, Hv).real)
        if np.linalg.norm(Hv - lam * v) <= tol * fro:
            return EigenPair(lam, _fix_phase(v), it, True)
        nrm = np.linalg.norm(Hv)
        if nrm == 0.0:
            # v sits in the kernel; any unit vector is a (zero) eigenvector
            return EigenPair(0.0, _fix_phase(v), it, True)
        v = Hv / nrm
    logger.warning("power iteration did not converge in %d iterations", max_iters)
    return EigenPair(lam, _fix_phase(v), max_iters, False)


def truncated_spectral_init(ensemble: SensingEnsemble, b, alpha: float = TRUNCATION_ALPHA,
                            seed: int = 0) -> np.ndarray:
    """Leading eigenvector of the truncated surrogate, scaled to the mean intensity.

    lam2 = mean(b); Y = (1/m) sum b_j a_j a_j^* over 0 <= b_j <= alpha^2 lam2;
    returns sqrt(lam2) * v with v the top unit eigenvector of Y.
    """
    b = _check_b(ensemble, b)
    m, d = ensemble.m, ensemble.d
    if m < d:
        logger.warning("spectral init with m=%d < d=%d", m, d)
    lam2 = float(np.mean(b))
    if not lam2 > 0:
        raise DomainError(f"mean intensity must be positive for spectral init, got {lam2}")
    keep = (b >= 0) & (b <= alpha ** 2 * lam2)
    if not np.any(keep):
        raise DomainError("truncation removed all measurements")
    A = ensemble.rows[keep]
    Y = (A.T * b[keep]) @ A.conj() / m
    pair = power_iteration(0.5 * (Y + Y.conj().T), tol=1e-10, max_iters=5000, seed=seed)
    return np.sqrt(lam2) * pair.vector


def support_scores(ensemble: SensingEnsemble, b) -> np.ndarray:
    """(1/m) sum_j b_j |a_{j,i}|^2 for each coordinate i."""
    b = _check_b(ensemble, b)
    return b @ (np.abs(ensemble.rows) ** 2) / ensemble.m


def sparse_spectral_init(ensemble: SensingEnsemble, b, s_est: int, seed: int = 0) -> np.ndarray:
    d = ensemble.d
    if not 1 <= s_est <= d:
        raise DomainError(f"s_est must lie in [1, {d}], got {s_est}")
    scores = support_scores(ensemble, b)
    # stable sort so ties go to the lower index
    support = np.sort(np.argsort(-scores, kind="stable")[:s_est])
    z = np.zeros(d, dtype=complex)
    z[support] = truncated_spectral_init(ensemble.restrict(support), b, seed=seed)
    return z


def l1_norm(x: np.ndarray) -> float:
    return float(np.sum(np.abs(x)))


def _l1_threshold(mag: np.ndarray, R: float) -> float:
    u = np.sort(mag, kind="stable")[::-1]
    css = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    rho = np.nonzero(u * k > css - R)[0][-1]
    return max((css[rho] - R) / (rho + 1.0), 0.0)


def project_l1_ball(x, R: float) -> np.ndarray:
    """Euclidean projection of a complex vector onto {z : sum |z_i| <= R}.

    Phases are kept and the moduli are soft-thresholded at the level that puts
    them on the real l1 sphere of radius ``R``.
    """
    if not R > 0:
        raise DomainError(f"l1 radius must be positive, got {R}")
    x = np.asarray(x, dtype=complex)
    mag = np.abs(x)
    if float(np.sum(mag)) <= R:
        return x.copy()
    tau = _l1_threshold(mag, R)
    phase = np.divide(x, mag, out=np.zeros_like(x), where=mag > 0)
    out = np.maximum(mag - tau, 0.0) * phase
    # rounding can leave the result a few ulps outside; nudge tau until feasible
    bump = np.finfo(float).eps * max(float(mag.max()), 1.0)
    while float(np.sum(np.abs(out))) > R:
        tau += bump
        bump *= 2.0
        out = np.maximum(mag - tau, 0.0) * phase
    return out


@dataclass(frozen=True)
class ScheduleStep:
    """mu_t = min(1 - exp(-t / t0), mu_max), applied as mu_t / ||z0||^2."""

    t0: float = 330.0
    mu_max: float = 0.2
    kind = "schedule"

    def params(self):
        return {"t0": self.t0, "mu_max": self.mu_max}


@dataclass(frozen=True)
class FixedStep:
    mu: float = 0.1
    kind = "fixed"

    def params(self):
        return {"mu": self.mu}


@dataclass(frozen=True)
class BacktrackingStep:
    shrink: float = 0.5
    max_halvings: int = 30
    initial: float = 0.4
    kind = "backtracking"

    def __post_init__(self):
        if not 0 < self.shrink < 1:
            raise DomainError(f"shrink must lie in (0, 1), got {self.shrink}")

    def params(self):
        return {"shrink": self.shrink, "max_halvings": self.max_halvings, "initial": self.initial}


StepRule = Union[ScheduleStep, FixedStep, BacktrackingStep]
_STEP_KINDS = {"schedule": ScheduleStep, "fixed": FixedStep, "backtracking": BacktrackingStep}


@dataclass(frozen=True)
class TruncatedSpectral:
    kind = "truncated_spectral"


@dataclass(frozen=True)
class SparseSpectral:
    s_est: int
    kind = "sparse_spectral"


@dataclass(frozen=True, eq=False)
class Provided:
    point: np.ndarray
    kind = "provided"


InitKind = Union[TruncatedSpectral, SparseSpectral, Provided]


@dataclass(frozen=True)
class SolverConfig:
    """Wirtinger Flow settings.

    Step sizes are expressed for the per-measurement loss (1/2m) f, i.e. the
    update is ``z - (mu / (2 m)) * grad f(z)``; with the schedule rule ``mu``
    is further divided by ``||z0||^2``.
    """

    max_iters: int = 2500
    grad_tol: float = 1e-9
    step_rule: StepRule = field(default_factory=ScheduleStep)
    l1_radius: Optional[float] = None
    init: InitKind = field(default_factory=TruncatedSpectral)
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 0:
            raise DomainError("max_iters must be >= 0")
        if not self.grad_tol > 0:
            raise DomainError("grad_tol must be positive")
        if self.l1_radius is not None and not self.l1_radius > 0:
            raise DomainError("l1_radius must be positive when set")

    def to_dict(self) -> dict:
        init = {"kind": self.init.kind}
        if isinstance(self.init, SparseSpectral):
            init["s_est"] = self.init.s_est
        elif isinstance(self.init, Provided):
            p = np.asarray(self.init.point, dtype=complex)
            init["point"] = [[float(v.real), float(v.imag)] for v in p]
        return {
            "max_iters": self.max_iters,
            "grad_tol": self.grad_tol,
            "step_rule": {"kind": self.step_rule.kind, **self.step_rule.params()},
            "l1_radius": self.l1_radius,
            "init": init,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        data = dict(data)
        step = dict(data.pop("step_rule", {"kind": "schedule"}))
        kind = step.pop("kind", "schedule")
        if kind not in _STEP_KINDS:
            raise DomainError(f"unknown step rule {kind!r}")
        init_d = dict(data.pop("init", {"kind": "truncated_spectral"}))
        ikind = init_d.get("kind", "truncated_spectral")
        if ikind == "truncated_spectral":
            init = TruncatedSpectral()
        elif ikind == "sparse_spectral":
            init = SparseSpectral(int(init_d["s_est"]))
        elif ikind == "provided":
            init = Provided(np.array([complex(re, im) for re, im in init_d["point"]]))
        else:
            raise DomainError(f"unknown init kind {ikind!r}")
        return cls(step_rule=_STEP_KINDS[kind](**step), init=init, **data)


@dataclass(eq=False)
class SolveResult:
    estimate: np.ndarray
    iterations: int
    loss_trace: list
    final_grad_norm: float
    converged: bool
    init_point: np.ndarray


def initial_point(ensemble: SensingEnsemble, b, config: SolverConfig) -> np.ndarray:
    init = config.init
    if isinstance(init, Provided):
        return as_signal(init.point, ensemble.d).copy()
    if isinstance(init, SparseSpectral):
        return sparse_spectral_init(ensemble, b, init.s_est, seed=config.seed)
    return truncated_spectral_init(ensemble, b, seed=config.seed)


def wirtinger_flow(ensemble: SensingEnsemble, b, config: SolverConfig = SolverConfig()) -> SolveResult:
    """Gradient descent on f, projected onto the l1 ball when ``config.l1_radius`` is set.

    Stops when the gradient norm drops below ``grad_tol * (1 + loss)``. For
    the projected variant the gradient is replaced by the gradient mapping
    ``(z - P(z - s grad)) / s``, which vanishes at constrained stationary points.
    """
    b = _check_b(ensemble, b)
    R = config.l1_radius
    proj = (lambda v: project_l1_ball(v, R)) if R is not None else (lambda v: v)
    z = proj(initial_point(ensemble, b, config))
    z0 = z.copy()
    m = ensemble.m
    norm0_sq = float(np.vdot(z0, z0).real)
    rule = config.step_rule
    if isinstance(rule, ScheduleStep) and norm0_sq == 0.0:
        raise DomainError("initial point is zero; the step schedule is undefined")
    # schedule and backtracking both scale by ||z0||^2; fall back to 1 for a zero start
    scale = 1.0 / (2.0 * m * (norm0_sq if norm0_sq > 0 else 1.0))

    loss, grad = loss_and_gradient(ensemble, b, z)
    if not np.isfinite(loss):
        raise SolverAbort("non-finite loss", 0, z)
    trace = [loss]
    gnorm = _stationarity(z, grad, proj, scale * _nominal_mu(rule), R)
    bt_mu = getattr(rule, "initial", None)

    it = 0
    while gnorm > config.grad_tol * (1.0 + loss) and it < config.max_iters:
        it += 1
        if isinstance(rule, BacktrackingStep):
            mu = min(bt_mu / rule.shrink, rule.initial)
            for _ in range(rule.max_halvings + 1):
                z_new = proj(z - mu * scale * grad)
                loss_new = _loss_only(ensemble, b, z_new)
                if loss_new <= loss:
                    break
                mu *= rule.shrink
            else:
                logger.debug("backtracking exhausted at iteration %d", it)
                break
            bt_mu = mu
        else:
            mu = _step_mu(rule, it - 1)
            z_new = proj(z - mu * scale * grad)
        loss_new, grad_new = loss_and_gradient(ensemble, b, z_new)
        if not np.isfinite(loss_new):
            raise SolverAbort("non-finite loss", it, z_new)
        z, loss, grad = z_new, loss_new, grad_new
        trace.append(loss)
        step = mu if isinstance(rule, BacktrackingStep) else _nominal_mu(rule)
        gnorm = _stationarity(z, grad, proj, scale * step, R)

    # the relative test is also met by runs that blow up (grad ~ |z|^3, loss ~ |z|^4),
    # so a final loss above the starting loss never counts as converged
    converged = gnorm <= config.grad_tol * (1.0 + loss) and loss <= trace[0]
    return SolveResult(estimate=z, iterations=it, loss_trace=trace, final_grad_norm=gnorm,
                       converged=bool(converged), init_point=z0)


def _loss_only(ensemble, b, z):
    return _sum_squares(np.abs(ensemble.project(z)) ** 2 - b)


def _nominal_mu(rule: StepRule) -> float:
    if isinstance(rule, ScheduleStep):
        return rule.mu_max
    if isinstance(rule, FixedStep):
        return rule.mu
    return rule.initial


def _step_mu(rule: StepRule, t: int) -> float:
    if isinstance(rule, ScheduleStep):
        # t counts from 0, so the first step uses 1 - exp(-1/t0)
        return min(1.0 - np.exp(-(t + 1) / rule.t0), rule.mu_max)
    return rule.mu


def _stationarity(z, grad, proj, s, R) -> float:
    if R is None:
        return float(np.linalg.norm(grad))
    return float(np.linalg.norm(z - proj(z - s * grad))) / s
