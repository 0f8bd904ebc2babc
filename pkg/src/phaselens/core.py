"""Measurement model: complex Gaussian ensembles, noise, intensities and the lifted map.

Signals are plain ``complex128`` numpy vectors and Hermitian matrices are dense
``(d, d)`` arrays. Everything random is a pure function of an integer seed;
generators are Philox (counter-based) so that independent streams can be keyed
by tuples such as ``(master_seed, m, trial)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

HERMITIAN_ATOL = 1e-12
IMAG_RESIDUE_RTOL = 1e-10


class DomainError(ValueError):
    """Raised when inputs violate a documented precondition."""


def derive_seed(*keys: int) -> int:
    """Hash a tuple of non-negative integers into a single 64-bit seed."""
    if not keys:
        raise DomainError("derive_seed needs at least one key")
    ss = np.random.SeedSequence(int(keys[0]), spawn_key=tuple(int(k) for k in keys[1:]))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    # numpy's ziggurat normal sampler on top of a Philox stream
    return np.random.Generator(np.random.Philox(int(seed)))


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """Draws with independent N(0, 1/2) real and imaginary parts, so E|z|^2 = 1."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) / np.sqrt(2.0)


def as_signal(x, d: Optional[int] = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 1 or x.size == 0:
        raise DomainError(f"signal must be a non-empty 1-d vector, got shape {x.shape}")
    if d is not None and x.size != d:
        raise DomainError(f"signal has dim {x.size}, expected {d}")
    return x


def as_hermitian(H, d: Optional[int] = None) -> np.ndarray:
    """Validate ``H`` as self-adjoint and return an exactly Hermitian copy."""
    H = np.asarray(H, dtype=np.complex128)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {H.shape}")
    if d is not None and H.shape[0] != d:
        raise DomainError(f"matrix is {H.shape[0]}x{H.shape[0]}, expected {d}x{d}")
    if not np.allclose(H, H.conj().T, rtol=0.0, atol=HERMITIAN_ATOL):
        raise DomainError("matrix is not self-adjoint")
    return 0.5 * (H + H.conj().T)


@dataclass(frozen=True, eq=False)
class SensingEnsemble:
    """m measurement vectors a_j stored as the rows of ``rows`` (shape ``(m, d)``)."""

    rows: np.ndarray
    seed: int

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    def project(self, x: np.ndarray) -> np.ndarray:
        """Inner products a_j^* x for every row."""
        return self.rows.conj() @ x

    def restrict(self, coords) -> "SensingEnsemble":
        """Ensemble seen by a signal supported on ``coords``."""
        return SensingEnsemble(np.ascontiguousarray(self.rows[:, coords]), self.seed)


def sample_ensemble(d: int, m: int, seed: int) -> SensingEnsemble:
    if d < 1 or m < 1:
        raise DomainError(f"need d >= 1 and m >= 1, got d={d}, m={m}")
    rows = complex_gaussian(make_rng(seed), (m, d))
    rows.setflags(write=False)
    return SensingEnsemble(rows, int(seed))


@dataclass(frozen=True)
class ZeroNoise:
    kind = "zero"

    def params(self) -> dict:
        return {}


@dataclass(frozen=True)
class FixedNoise:
    values: Sequence[float]

    kind = "fixed"

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def params(self) -> dict:
        return {"values": list(self.values)}


@dataclass(frozen=True)
class GaussianNoise:
    mean: float = 0.0
    std: float = 1.0

    kind = "gaussian"

    def __post_init__(self):
        if self.std < 0:
            raise DomainError(f"noise std must be >= 0, got {self.std}")

    def params(self) -> dict:
        return {"mean": self.mean, "std": self.std}


NoiseSpec = Union[ZeroNoise, FixedNoise, GaussianNoise]


def noise_to_dict(noise: NoiseSpec) -> dict:
    return {"kind": noise.kind, "params": noise.params()}


def noise_from_dict(spec: dict) -> NoiseSpec:
    kind = spec.get("kind")
    params = spec.get("params", {})
    if kind == "zero":
        return ZeroNoise()
    if kind == "fixed":
        return FixedNoise(params["values"])
    if kind == "gaussian":
        return GaussianNoise(float(params.get("mean", 0.0)), float(params.get("std", 1.0)))
    raise DomainError(f"unknown noise kind {kind!r}")


def draw_noise(noise: NoiseSpec, m: int, seed: int) -> np.ndarray:
    if isinstance(noise, ZeroNoise):
        return np.zeros(m)
    if isinstance(noise, FixedNoise):
        if len(noise.values) != m:
            raise DomainError(f"fixed noise has length {len(noise.values)}, expected m={m}")
        return np.array(noise.values, dtype=float)
    if isinstance(noise, GaussianNoise):
        return noise.mean + noise.std * make_rng(seed).standard_normal(m)
    raise DomainError(f"unsupported noise spec {noise!r}")


@dataclass(frozen=True, eq=False)
class IntensityMeasurements:
    b: np.ndarray
    eta: Optional[np.ndarray] = None
    clean: Optional[np.ndarray] = None

    @property
    def m(self) -> int:
        return self.b.size


def measure(ensemble: SensingEnsemble, x0, noise: NoiseSpec = ZeroNoise(),
            noise_seed: int = 0) -> IntensityMeasurements:
    """b_j = |a_j^* x0|^2 + eta_j, keeping the clean part and the noise."""
    x0 = as_signal(x0, ensemble.d)
    clean = np.abs(ensemble.project(x0)) ** 2
    eta = draw_noise(noise, ensemble.m, noise_seed)
    return IntensityMeasurements(b=clean + eta, eta=eta, clean=clean)


def _drop_imag(z: np.ndarray) -> np.ndarray:
    bad = np.abs(z.imag) > IMAG_RESIDUE_RTOL * (1.0 + np.abs(z.real))
    if np.any(bad):
        raise DomainError("quadratic form has a non-negligible imaginary part; "
                          "matrix is not self-adjoint")
    return z.real.copy()


def lift_apply(ensemble: SensingEnsemble, H) -> np.ndarray:
    """The lifted linear map: H -> (a_j^* H a_j)_j."""
    H = np.asarray(H, dtype=np.complex128)
    if H.shape != (ensemble.d, ensemble.d):
        raise DomainError(f"matrix shape {H.shape} does not match d={ensemble.d}")
    A = ensemble.rows
    vals = np.sum((A.conj() @ H) * A, axis=1)
    return _drop_imag(vals)


def lift_adjoint(ensemble: SensingEnsemble, z) -> np.ndarray:
    """Dual of :func:`lift_apply`: z -> sum_j z_j a_j a_j^*."""
    z = np.asarray(z, dtype=float)
    if z.shape != (ensemble.m,):
        raise DomainError(f"vector length {z.shape} does not match m={ensemble.m}")
    A = ensemble.rows
    M = (A.T * z) @ A.conj()
    return 0.5 * (M + M.conj().T)


def hs_inner(H, G) -> float:
    """Real Hilbert-Schmidt inner product tr(H^* G) of two Hermitian matrices."""
    return float(np.vdot(H, G).real)


@dataclass(frozen=True, eq=False)
class RealifiedSystem:
    tilde_rows: np.ndarray   # (m, 2d): [Re a_j, Im a_j]
    beta: np.ndarray         # (m // 2, 2d)
    gamma: np.ndarray        # (m // 2, 2d)


def realify(ensemble: SensingEnsemble) -> RealifiedSystem:
    if ensemble.m < 2:
        raise DomainError("realification needs m >= 2 to form pairs")
    A = ensemble.rows
    tilde = np.hstack([A.real, A.imag])
    k = ensemble.m // 2
    odd, even = tilde[0:2 * k:2], tilde[1:2 * k:2]
    return RealifiedSystem(tilde_rows=tilde, beta=odd + even, gamma=odd - even)


def realify_matrix(H) -> np.ndarray:
    """[[Re H, -Im H], [Im H, Re H]], the real symmetric counterpart of H."""
    H = np.asarray(H, dtype=np.complex128)
    return np.block([[H.real, -H.imag], [H.imag, H.real]])


def provenance(ensemble: SensingEnsemble, noise: NoiseSpec, noise_seed: int) -> dict:
    """JSON-ready description from which the measurement setup can be regenerated."""
    return {"d": ensemble.d, "m": ensemble.m, "seed": ensemble.seed,
            "noise": {**noise_to_dict(noise), "seed": int(noise_seed)}}


def from_provenance(record: dict):
    """Inverse of :func:`provenance`: returns ``(ensemble, noise, noise_seed)``."""
    ens = sample_ensemble(int(record["d"]), int(record["m"]), int(record["seed"]))
    noise = noise_from_dict(record["noise"])
    return ens, noise, int(record["noise"].get("seed", 0))
