"""Mean-zero fields on the torus [0, lambda) in Fourier coefficients.

Conventions: physical frequencies are ``k = j / lambda`` for integer ``j``,

    f_hat(k) = int_0^lambda f(x) exp(-2 i pi k x) dx,
    f(x)     = (1/lambda) sum_k f_hat(k) exp(2 i pi k x),
    ||f||_{H^alpha}^2 = (1/lambda) sum_k |k|^(2 alpha) |f_hat(k)|^2.

Coefficients are stored densely for ``j = -K..K``; the ``j = 0`` slot is
always zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TorusField",
    "sobolev_norm",
    "inner",
    "project",
    "evaluate",
    "analyze",
    "random_field",
    "single_mode",
    "zeros",
]


@dataclass(frozen=True, eq=False)
class TorusField:
    lam: float
    K: int
    coeffs: np.ndarray
    real: bool = False

    def __post_init__(self):
        K = int(self.K)
        c = np.array(self.coeffs, dtype=complex)
        if c.shape != (2 * K + 1,):
            raise ValueError(f"expected {2 * K + 1} coefficients for K={K}, got {c.shape}")
        if self.lam < 1:
            raise ValueError("lambda must be >= 1")
        c[K] = 0.0
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def j(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1)

    @property
    def k(self) -> np.ndarray:
        return self.j / self.lam

    def coeff(self, j: int) -> complex:
        if abs(j) > self.K:
            return 0j
        return complex(self.coeffs[j + self.K])

    def same_torus(self, other: "TorusField") -> bool:
        return self.lam == other.lam and self.K == other.K

    def _check(self, other):
        if not isinstance(other, TorusField):
            return NotImplemented
        if not self.same_torus(other):
            raise ValueError(
                f"torus mismatch: (lam={self.lam}, K={self.K}) vs (lam={other.lam}, K={other.K})"
            )
        return None

    def with_coeffs(self, coeffs, real: bool | None = None) -> "TorusField":
        return TorusField(self.lam, self.K, coeffs, self.real if real is None else real)

    def resized(self, K: int) -> "TorusField":
        """Zero-pad or truncate to a new cutoff ``K``."""
        out = np.zeros(2 * K + 1, dtype=complex)
        m = min(K, self.K)
        out[K - m : K + m + 1] = self.coeffs[self.K - m : self.K + m + 1]
        return TorusField(self.lam, K, out, self.real)

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return self.with_coeffs(self.coeffs + other.coeffs, self.real and other.real)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return self.with_coeffs(self.coeffs - other.coeffs, self.real and other.real)

    def __mul__(self, scalar):
        if isinstance(scalar, TorusField):
            return NotImplemented
        real = self.real and np.isrealobj(scalar)
        return self.with_coeffs(self.coeffs * scalar, real)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_coeffs(-self.coeffs)

    def hermitian_defect(self) -> float:
        """max |c(-j) - conj c(j)| relative to max |c|."""
        scale = np.abs(self.coeffs).max()
        if scale == 0:
            return 0.0
        return float(np.abs(self.coeffs[::-1] - self.coeffs.conj()).max() / scale)


def zeros(lam: float, K: int, real: bool = True) -> TorusField:
    return TorusField(lam, K, np.zeros(2 * K + 1, dtype=complex), real)


def single_mode(lam: float, K: int, j: int, value: complex = 1.0) -> TorusField:
    c = np.zeros(2 * K + 1, dtype=complex)
    c[j + K] = value
    return TorusField(lam, K, c, False)


def sobolev_norm(f: TorusField, alpha: float = 0.0) -> float:
    k = np.abs(f.k)
    k[f.K] = 1.0  # zero mode is empty anyway
    w = k ** (2.0 * alpha)
    return float(np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2) / f.lam))


def inner(f: TorusField, g: TorusField) -> complex:
    """L^2(0, lambda) inner product, linear in the second slot."""
    f._check(g)
    return complex(np.vdot(f.coeffs, g.coeffs) / f.lam)


def project(f: TorusField, N: float) -> TorusField:
    """Galerkin projector onto |k| <= N."""
    if N < 0:
        raise ValueError("N must be >= 0")
    keep = np.abs(f.j) <= N * f.lam * (1 + 1e-14)
    return f.with_coeffs(np.where(keep, f.coeffs, 0.0))


def evaluate(f: TorusField, x) -> np.ndarray:
    """Pointwise synthesis ``(1/lambda) sum_k f_hat(k) exp(2 i pi k x)``."""
    x = np.asarray(x, dtype=float)
    phase = np.exp(2j * np.pi * np.multiply.outer(x, f.k))
    return phase @ f.coeffs / f.lam


def uniform_grid(lam: float, M: int) -> np.ndarray:
    return np.arange(M) * (lam / M)


def synthesize(f: TorusField, M: int) -> np.ndarray:
    """FFT fast path of :func:`evaluate` on the uniform grid of ``M`` points."""
    if M < 2 * f.K + 1:
        raise ValueError("grid too coarse for the field's band")
    buf = np.zeros(M, dtype=complex)
    j = f.j
    buf[j % M] = f.coeffs
    return np.fft.ifft(buf) * (M / f.lam)


def analyze(values, lam: float, K: int, real: bool = False) -> TorusField:
    """Inverse of :func:`synthesize`: coefficients of samples on the uniform grid."""
    values = np.asarray(values)
    M = values.shape[-1]
    if M < 2 * K + 1:
        raise ValueError("grid too coarse for the requested band")
    spec = np.fft.fft(values) * (lam / M)
    j = np.arange(-K, K + 1)
    return TorusField(lam, K, spec[j % M], real)


def random_field(
    lam: float, K: int, alpha: float = 0.0, seed: int = 0, norm: float | None = 1.0,
    decay: float | None = None,
) -> TorusField:
    """Real mean-zero field with ``|f_hat(k)| ~ |k|^(-alpha - 1/2)`` and random phases.

    With ``norm`` set, the field is rescaled to that H^alpha norm.
    ``decay`` overrides the spectral exponent.
    """
    rng = np.random.default_rng(seed)
    j = np.arange(1, K + 1)
    k = j / lam
    p = alpha + 0.5 if decay is None else decay
    amp = k ** (-p) * rng.uniform(0.5, 1.5, K)
    pos = amp * np.exp(2j * np.pi * rng.uniform(size=K))
    c = np.zeros(2 * K + 1, dtype=complex)
    c[K + 1 :] = pos
    c[:K] = pos[::-1].conj()
    f = TorusField(lam, K, c, True)
    if norm is not None:
        size = sobolev_norm(f, alpha)
        f = f * (norm / size) if size > 0 else f
    return f
