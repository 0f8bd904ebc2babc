"""Monte-Carlo checks of the quantities behind the stability guarantees.

Covers the lower restricted isometry ratio of the lifted map, small-ball
probabilities and Rademacher widths, closed-form moments of a^* H a,
operator-norm concentration, and audits of a computed solution against the
ground truth.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .core import (DomainError, SensingEnsemble, as_signal, complex_gaussian, derive_seed,
                   lift_adjoint, lift_apply, make_rng, sample_ensemble)
from .metrics import dist_up_to_phase

SMALL_BALL_LEVEL = 1.0 / math.sqrt(2.0)
SMALL_BALL_FLOOR = 1.0 / 52.0
KURTOSIS_CAP = 13.0
FOURTH_POWER_GAMMA = 1.0
AUDIT_RTOL = 1e-8


def random_unitary_frame(rng: np.random.Generator, d: int, r: int) -> np.ndarray:
    """d x r matrix with orthonormal complex columns."""
    Q, R = np.linalg.qr(complex_gaussian(rng, (d, r)))
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def random_low_rank_hermitian(rng: np.random.Generator, d: int, r: int) -> np.ndarray:
    """sum_k lam_k v_k v_k^* with orthonormal v_k and ||lam|| = 1."""
    V = random_unitary_frame(rng, d, r)
    lam = rng.standard_normal(r)
    lam /= np.linalg.norm(lam)
    H = (V * lam) @ V.conj().T
    return 0.5 * (H + H.conj().T)


def difference_of_rank_ones(rng: np.random.Generator, d: int) -> np.ndarray:
    """(u u^* - w w^*) normalized to unit Frobenius norm."""
    u = complex_gaussian(rng, d)
    # w near u makes the difference nearly cancel, the hard direction for the ratio
    w = u + rng.uniform(0.05, 1.0) * complex_gaussian(rng, d)
    H = np.outer(u, u.conj()) - np.outer(w, w.conj())
    H = 0.5 * (H + H.conj().T)
    return H / np.linalg.norm(H)


def sample_test_matrices(rng: np.random.Generator, d: int, r: int, n: int) -> List[np.ndarray]:
    """Unit-Frobenius Hermitian matrices of rank <= r.

    Isotropic spectra are mixed with differences of rank-one terms when
    r >= 2 (every other sample).
    """
    out = []
    for i in range(n):
        if r >= 2 and i % 2 == 1:
            out.append(difference_of_rank_ones(rng, d))
        else:
            out.append(random_low_rank_hermitian(rng, d, r))
    return out


def lrip_ratio(ensemble: SensingEnsemble, H) -> float:
    """||A(H)|| / (sqrt(m) ||H||_F); invariant to scaling of H."""
    H = np.asarray(H, dtype=complex)
    fro = np.linalg.norm(H)
    if fro == 0:
        raise DomainError("ratio undefined for the zero matrix")
    return float(np.linalg.norm(lift_apply(ensemble, H / fro)) / math.sqrt(ensemble.m))


@dataclass(frozen=True)
class LripEstimate:
    d: int
    r: int
    m: int
    n_samples: int
    min_ratio: float
    seed: int

    def to_dict(self):
        return asdict(self)


def empirical_lrip(d: int, r: int, m: int, n_samples: int, seed: int) -> LripEstimate:
    if r > d or r < 1:
        raise DomainError(f"need 1 <= r <= d, got r={r}, d={d}")
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    ens = sample_ensemble(d, m, derive_seed(seed, 0))
    rng = make_rng(derive_seed(seed, 1))
    ratios = [lrip_ratio(ens, H) for H in sample_test_matrices(rng, d, r, n_samples)]
    return LripEstimate(d, r, m, n_samples, float(min(ratios)), seed)


def small_ball_fraction(H, n_mc: int, rng: np.random.Generator,
                        level: float = SMALL_BALL_LEVEL) -> float:
    """Fraction of fresh Gaussian a with |a^* H a| >= level."""
    H = np.asarray(H, dtype=complex)
    a = complex_gaussian(rng, (n_mc, H.shape[0]))
    q = np.sum((a.conj() @ H) * a, axis=1).real
    return float(np.mean(np.abs(q) >= level))


def rademacher_width(d: int, m: int, n_rep: int, seed: int) -> np.ndarray:
    """Samples of ||A^*(eps)|| / sqrt(m), fresh ensemble and Rademacher signs each time."""
    out = np.empty(n_rep)
    for k in range(n_rep):
        ens = sample_ensemble(d, m, derive_seed(seed, k, 0))
        eps = make_rng(derive_seed(seed, k, 1)).choice([-1.0, 1.0], size=m)
        out[k] = np.linalg.norm(lift_adjoint(ens, eps), 2) / math.sqrt(m)
    return out


@dataclass(frozen=True)
class SmallBallProfile:
    q_hat: float
    w_proxy: float
    n_mc: int
    fractions: tuple = field(default=(), repr=False)

    def to_dict(self):
        return asdict(self)


def small_ball_profile(d: int, r: int, n_mc: int, n_h_samples: int, seed: int,
                       m: Optional[int] = None, n_width: int = 50) -> SmallBallProfile:
    """q_hat is the smallest per-matrix small-ball fraction; w_proxy the mean width.

    The width uses ``m = 20 d r`` measurements unless given.
    """
    if r > d or r < 1:
        raise DomainError(f"need 1 <= r <= d, got r={r}, d={d}")
    m = 20 * d * r if m is None else m
    rng_h = make_rng(derive_seed(seed, 0))
    rng_a = make_rng(derive_seed(seed, 1))
    fracs = tuple(small_ball_fraction(H, n_mc, rng_a)
                  for H in sample_test_matrices(rng_h, d, r, n_h_samples))
    w = rademacher_width(d, m, n_width, derive_seed(seed, 2))
    return SmallBallProfile(q_hat=min(fracs), w_proxy=float(np.mean(w)), n_mc=n_mc,
                            fractions=fracs)


def second_moment_exact(spectrum) -> float:
    """E (a^* H a)^2 for H with eigenvalues ``spectrum``."""
    lam = np.asarray(spectrum, dtype=float)
    return float(np.sum(lam ** 2) + np.sum(lam) ** 2)


def fourth_moment_exact(spectrum) -> float:
    """E (a^* H a)^4 for H with eigenvalues ``spectrum``."""
    lam = np.asarray(spectrum, dtype=float)
    s1, s2, s3, s4 = (float(np.sum(lam ** k)) for k in (1, 2, 3, 4))
    return s1 ** 4 + 6 * s2 * s1 ** 2 + 3 * s2 ** 2 + 8 * s3 * s1 + 6 * s4


@dataclass(frozen=True)
class MomentReport:
    spectrum: tuple
    second_exact: float
    second_mc: float
    fourth_exact: float
    fourth_mc: float
    kurtosis_ratio: float

    def to_dict(self):
        return asdict(self)


def moment_report(spectrum, n_mc: int = 100_000, seed: int = 0,
                  chunk: int = 250_000) -> MomentReport:
    lam = np.asarray(spectrum, dtype=float)
    if lam.ndim != 1 or lam.size == 0:
        raise DomainError("spectrum must be a non-empty sequence")
    # by unitary invariance a^* H a has the law of sum_k lam_k |a_k|^2
    rng = make_rng(seed)
    s2 = s4 = 0.0
    done = 0
    while done < n_mc:
        n = min(chunk, n_mc - done)
        q = (np.abs(complex_gaussian(rng, (n, lam.size))) ** 2) @ lam
        q2 = q * q
        s2 += float(np.sum(q2))
        s4 += float(np.sum(q2 * q2))
        done += n
    second = second_moment_exact(lam)
    fourth = fourth_moment_exact(lam)
    return MomentReport(spectrum=tuple(float(v) for v in lam), second_exact=second,
                        second_mc=s2 / n_mc, fourth_exact=fourth, fourth_mc=s4 / n_mc,
                        kurtosis_ratio=fourth / second ** 2)


@dataclass(frozen=True)
class ConcentrationReport:
    mode: str
    deviations: tuple

    @property
    def max_deviation(self) -> float:
        return max(self.deviations)

    @property
    def mean_deviation(self) -> float:
        return float(np.mean(self.deviations))

    def to_dict(self):
        return {"mode": self.mode, "deviations": list(self.deviations),
                "max_deviation": self.max_deviation, "mean_deviation": self.mean_deviation}


def concentration_report(d: int, m: int, *, eta=None, v=None, n_trials: int = 20,
                         seed: int = 0) -> ConcentrationReport:
    """Operator-norm deviations for one of two shapes.

    eta-mode: ||sum_j eta_j (a_j a_j^* - I)|| / (sqrt(d) ||eta|| + d ||eta||_inf).
    v-mode:   ||(1/m) sum_j |a_j^* v|^2 a_j a_j^* - (v v^* + ||v||^2 I)|| / ||v||^2.
    """
    if (eta is None) == (v is None):
        raise DomainError("pass exactly one of eta or v")
    devs = []
    if eta is not None:
        eta = np.asarray(eta, dtype=float)
        if eta.shape != (m,):
            raise DomainError(f"eta has shape {eta.shape}, expected ({m},)")
        scale = math.sqrt(d) * np.linalg.norm(eta) + d * np.max(np.abs(eta))
        for t in range(n_trials):
            if scale == 0:
                devs.append(0.0)
                continue
            ens = sample_ensemble(d, m, derive_seed(seed, t))
            M = lift_adjoint(ens, eta) - np.sum(eta) * np.eye(d)
            devs.append(float(np.linalg.norm(M, 2) / scale))
        return ConcentrationReport("eta", tuple(devs))
    v = as_signal(v, d)
    nv2 = float(np.vdot(v, v).real)
    if nv2 == 0:
        raise DomainError("v must be non-zero")
    target = np.outer(v, v.conj()) + nv2 * np.eye(d)
    for t in range(n_trials):
        ens = sample_ensemble(d, m, derive_seed(seed, t))
        w = np.abs(ens.project(v)) ** 2
        M = lift_adjoint(ens, w) / m - target
        devs.append(float(np.linalg.norm(M, 2) / nv2))
    return ConcentrationReport("v", tuple(devs))


@dataclass(frozen=True)
class AuditReport:
    residual: float
    eta_norm: float
    residual_ok: bool
    fourth_power_ratio: float
    fourth_power_ok: bool
    cone_ok: Optional[bool] = None
    l1_ok: Optional[bool] = None

    def to_dict(self):
        return asdict(self)


def optimality_audit(ensemble: SensingEnsemble, b, x_hat, x0, eta,
                     l1_radius: Optional[float] = None, s: Optional[int] = None,
                     gamma: float = FOURTH_POWER_GAMMA) -> AuditReport:
    """Post-hoc checks that a computed solution behaves like a global minimizer.

    * residual: ||A(x_hat x_hat^* - x0 x0^*) - eta|| <= ||eta||, i.e. the fit is
      no worse than the truth's.
    * fourth power: (1/m) sum |a_j^* x_hat|^4 <= (2 + gamma) ||x_hat||^4.
    * cone (sparse runs only): with h = x_hat - e^{i theta} x0 phase-aligned and
      S = supp(x0), ||h_{S^c}||_1 <= ||h_S||_1 and ||h||_1 <= 2 sqrt(s) ||h||.
    """
    m, d = ensemble.m, ensemble.d
    b = np.asarray(b, dtype=float)
    eta = np.asarray(eta, dtype=float)
    x_hat = as_signal(x_hat, d)
    x0 = as_signal(x0, d)
    if b.shape != (m,) or eta.shape != (m,):
        raise DomainError("b and eta must have length m")
    clean = np.abs(ensemble.project(x0)) ** 2
    bscale = max(float(np.linalg.norm(b)), 1.0)
    if np.linalg.norm(clean + eta - b) > AUDIT_RTOL * bscale:
        raise DomainError("(b, x0, eta) are inconsistent")

    fit = np.abs(ensemble.project(x_hat)) ** 2
    residual = float(np.linalg.norm(fit - clean - eta))
    eta_norm = float(np.linalg.norm(eta))
    residual_ok = residual <= eta_norm + AUDIT_RTOL * bscale

    nx = float(np.linalg.norm(x_hat))
    ratio = float(np.mean(fit ** 2) / nx ** 4) if nx > 0 else 0.0
    fourth_ok = ratio <= 2.0 + gamma

    cone_ok = l1_ok = None
    if l1_radius is not None and s is not None:
        _, theta = dist_up_to_phase(x_hat, x0)
        h = x_hat - np.exp(1j * theta) * x0
        S = np.abs(x0) > 0
        tol = AUDIT_RTOL * max(float(l1_radius), 1.0)
        on, off = float(np.sum(np.abs(h[S]))), float(np.sum(np.abs(h[~S])))
        cone_ok = bool(off <= on + tol and on + off <= 2 * math.sqrt(s) * np.linalg.norm(h) + tol)
        l1_ok = bool(np.sum(np.abs(x_hat)) <= l1_radius * (1 + 1e-10))
    return AuditReport(residual=residual, eta_norm=eta_norm, residual_ok=bool(residual_ok),
                       fourth_power_ratio=ratio, fourth_power_ok=bool(fourth_ok),
                       cone_ok=cone_ok, l1_ok=l1_ok)
