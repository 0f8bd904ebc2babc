"""Phase-invariant error metrics."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Tuple

import numpy as np

from .core import DomainError, as_signal


def dist_up_to_phase(u, v) -> Tuple[float, float]:
    """min over theta of ||u - e^{i theta} v||, and the minimizing theta in [0, 2 pi).

    The minimizer aligns the phase of ``v`` with ``u``: theta = arg <v, u>
    (taken as 0 when the inner product vanishes).
    """
    u = as_signal(u)
    v = as_signal(v, u.size)
    ip = np.vdot(v, u)
    theta = float(np.angle(ip)) % (2 * math.pi) if ip != 0 else 0.0
    sq = float(np.vdot(u, u).real + np.vdot(v, v).real - 2.0 * abs(ip))
    # the closed form cancels badly near zero; fall back to the direct norm there
    if sq < 1e-8 * (float(np.vdot(u, u).real) + 1e-300):
        return float(np.linalg.norm(u - np.exp(1j * theta) * v)), theta
    return math.sqrt(sq), theta


def lifted_distance(u, v) -> float:
    """||u u^* - v v^*||_F."""
    u = as_signal(u)
    v = as_signal(v, u.size)
    return float(np.linalg.norm(np.outer(u, u.conj()) - np.outer(v, v.conj())))


def rate_bound(eta_norm: float, x0_norm: float, m: int) -> float:
    """min{ sqrt(||eta||) / m^(1/4), ||eta|| / (||x0|| sqrt(m)) }."""
    if eta_norm == 0.0:
        return 0.0
    first = math.sqrt(eta_norm) / m ** 0.25
    if x0_norm == 0.0:
        return first
    return min(first, eta_norm / (x0_norm * math.sqrt(m)))


@dataclass(frozen=True)
class ErrorReport:
    dist: float
    theta_star: float
    rho_m: float | None
    bound: float
    lifted_dist: float
    inequality_ok: bool

    def to_dict(self) -> dict:
        return asdict(self)


def error_report(x_hat, x0, eta, m: int) -> ErrorReport:
    x_hat = as_signal(x_hat)
    x0 = as_signal(x0, x_hat.size)
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (m,):
        raise DomainError(f"eta has length {eta.size}, expected m={m}")
    dist, theta = dist_up_to_phase(x_hat, x0)
    x0_norm = float(np.linalg.norm(x0))
    eta_norm = float(np.linalg.norm(eta))
    if x0_norm == 0.0:
        rho = None
    elif eta_norm == 0.0:
        rho = 0.0
    else:
        rho = dist / (eta_norm / (x0_norm * math.sqrt(m)))
    lifted = lifted_distance(x_hat, x0)
    ok = x0_norm > 0 and dist <= 2.0 * lifted / x0_norm * (1 + 1e-12) + 1e-15
    return ErrorReport(dist=dist, theta_star=theta, rho_m=rho,
                       bound=rate_bound(eta_norm, x0_norm, m),
                       lifted_dist=lifted, inequality_ok=bool(ok))
