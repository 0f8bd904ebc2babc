"""Intensity least-squares loss f(x) = sum_j (|a_j^* x|^2 - b_j)^2 and its Wirtinger gradient."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import DomainError, SensingEnsemble, as_signal

# above this many terms the loss is accumulated with math.fsum
COMPENSATED_SUM_MIN_M = 10_000


def _check_b(ensemble: SensingEnsemble, b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.shape != (ensemble.m,):
        raise DomainError(f"b has shape {b.shape}, expected ({ensemble.m},)")
    return b


def residuals(ensemble: SensingEnsemble, b, x) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(r, Ax)`` with ``Ax = a_j^* x`` and ``r = |Ax|^2 - b``."""
    b = _check_b(ensemble, b)
    x = as_signal(x, ensemble.d)
    Ax = ensemble.project(x)
    return np.abs(Ax) ** 2 - b, Ax


def _sum_squares(r: np.ndarray) -> float:
    sq = r * r
    if sq.size >= COMPENSATED_SUM_MIN_M:
        return math.fsum(sq.tolist())
    return float(np.sum(sq))


def intensity_loss(ensemble: SensingEnsemble, b, x) -> float:
    r, _ = residuals(ensemble, b, x)
    return _sum_squares(r)


def wirtinger_gradient(ensemble: SensingEnsemble, b, x) -> np.ndarray:
    """2 * sum_j (|a_j^* x|^2 - b_j) a_j a_j^* x.

    This is the derivative with respect to conj(x). The gradient of ``f`` in
    the real coordinates ``(Re x, Im x)`` is twice ``(Re g, Im g)``, so the
    directional derivative along ``u`` is ``2 Re <g, u>``.
    """
    r, Ax = residuals(ensemble, b, x)
    return 2.0 * (ensemble.rows.T @ (r * Ax))


def loss_and_gradient(ensemble: SensingEnsemble, b, x) -> Tuple[float, np.ndarray]:
    r, Ax = residuals(ensemble, b, x)
    return _sum_squares(r), 2.0 * (ensemble.rows.T @ (r * Ax))


def directional_derivative(grad: np.ndarray, u: np.ndarray) -> float:
    """Derivative of f along the complex direction ``u`` given the Wirtinger gradient."""
    return 2.0 * float(np.vdot(grad, u).real)


@dataclass(frozen=True)
class FirstOrderReport:
    loss: float
    grad_norm: float
    radial_derivative: float
    stationarity_gap: Optional[float] = None
    fourth_moment: float = 0.0  # (1/m) sum |a_j^* x|^4, the natural scale of the gap


def first_order_report(ensemble: SensingEnsemble, b, x, truth=None,
                       consistency_rtol: float = 1e-9) -> FirstOrderReport:
    """Stationarity diagnostics at ``x``.

    ``truth`` is an optional ``(x0, eta)`` pair. When given, the gap

        (1/m) sum |a^* x|^4 - (1/m) sum |a^* x|^2 |a^* x0|^2 - (1/m) sum eta |a^* x|^2

    is reported; it vanishes wherever Re<grad f(x), x> does.
    """
    b = _check_b(ensemble, b)
    loss, grad = loss_and_gradient(ensemble, b, x)
    x = as_signal(x, ensemble.d)
    Ax2 = np.abs(ensemble.project(x)) ** 2
    m = ensemble.m
    gap = None
    if truth is not None:
        x0, eta = truth
        x0 = as_signal(x0, ensemble.d)
        eta = np.asarray(eta, dtype=float)
        if eta.shape != (m,):
            raise DomainError(f"eta has shape {eta.shape}, expected ({m},)")
        clean = np.abs(ensemble.project(x0)) ** 2
        scale = 1.0 + np.max(np.abs(b))
        if np.max(np.abs(clean + eta - b)) > consistency_rtol * scale:
            raise DomainError("truth is inconsistent with b (b != |Ax0|^2 + eta)")
        gap = float(np.sum(Ax2 * Ax2) / m - np.sum(Ax2 * clean) / m - np.sum(eta * Ax2) / m)
    return FirstOrderReport(
        loss=loss,
        grad_norm=float(np.linalg.norm(grad)),
        radial_derivative=float(np.vdot(grad, x).real),
        stationarity_gap=gap,
        fourth_moment=float(np.sum(Ax2 * Ax2) / m),
    )


def finite_difference_gradient(loss_fn, x, h: Optional[float] = None) -> np.ndarray:
    """Central differences of ``loss_fn`` in the real coordinates (Re x, Im x).

    Returns a real vector of length 2d. Only evaluates ``loss_fn``, so it is an
    independent check on :func:`wirtinger_gradient` (compare against
    ``2 * concat(Re g, Im g)``).
    """
    x = as_signal(x)
    d = x.size
    if h is None:
        h = 1e-5 * (1.0 + float(np.linalg.norm(x)))
    g = np.empty(2 * d)
    for k in range(2 * d):
        e = np.zeros(d, dtype=complex)
        e[k % d] = 1.0 if k < d else 1j
        g[k] = (loss_fn(x + h * e) - loss_fn(x - h * e)) / (2 * h)
    return g


def realified_gradient(grad: np.ndarray) -> np.ndarray:
    """Gradient in (Re x, Im x) coordinates from the Wirtinger gradient."""
    return 2.0 * np.concatenate([grad.real, grad.imag])
