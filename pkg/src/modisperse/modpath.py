"""Modulation paths and their occupation-measure Fourier transform.

A modulation path is stored as samples on a uniform grid and interpreted as
its piecewise-linear interpolant, so that

    Phi_{s,t}(a) = int_s^t exp(i a w_r) dr

has a closed form on every segment. Everything downstream (operators, solvers)
consumes ``phi`` / ``phi_many``; no quadrature is involved anywhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "ModulationPath",
    "IrregularityEstimate",
    "EmbeddingError",
    "DegenerateFitError",
    "sample_fbm",
    "brownian",
    "linear",
    "constant",
    "custom",
    "phi",
    "phi_many",
    "dyadic_pairs",
    "geometric_a_grid",
    "irregularity_seminorm",
    "estimate_rho",
]

# below this |a * dw| the closed form loses too many digits; use the series
SERIES_THRESHOLD = 1e-4


class EmbeddingError(RuntimeError):
    """Circulant embedding and the Cholesky fallback both failed."""


class DegenerateFitError(RuntimeError):
    """The log-log regression window has no usable (finite, positive) data."""


@dataclass(frozen=True)
class ModulationPath:
    """Continuous path on ``[0, horizon]`` given by uniform grid samples.

    ``samples[i]`` is the value at ``t_i = i * horizon / n`` where
    ``n = len(samples) - 1``. Values between grid points are obtained by
    linear interpolation.
    """

    horizon: float
    samples: np.ndarray
    kind: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size < 2:
            raise ValueError("a path needs at least two samples (n >= 1)")
        if not np.all(np.isfinite(samples)):
            raise ValueError("path samples must be finite")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError("horizon must be a positive finite number")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def n(self) -> int:
        return self.samples.size - 1

    @property
    def dt(self) -> float:
        return self.horizon / self.n

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.dt

    def __call__(self, t):
        return np.interp(t, self.times, self.samples)

    def _locate(self, t: float) -> tuple[int, float]:
        """Segment index ``j`` with ``t_j <= t <= t_{j+1}`` and the value w(t)."""
        x = t / self.dt
        j = min(int(math.floor(x)), self.n - 1)
        frac = x - j
        if frac <= 0.0:
            return j, float(self.samples[j])
        if frac >= 1.0:
            return j, float(self.samples[j + 1])
        w0, w1 = self.samples[j], self.samples[j + 1]
        return j, float(w0 + frac * (w1 - w0))

    def __eq__(self, other):
        if not isinstance(other, ModulationPath):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and self.samples.shape == other.samples.shape
            and bool(np.all(self.samples == other.samples))
        )

    def __hash__(self):
        return hash((self.horizon, self.samples.tobytes()))


@dataclass
class IrregularityEstimate:
    gamma: float
    rho_hat: float
    seminorm: float
    a_grid: np.ndarray
    pair_grid: str
    argmax: tuple | None = None
    rho: float | None = None
    profile: np.ndarray | None = None


# ---------------------------------------------------------------- sampling


def _fgn_autocov(hurst: float, n: int) -> np.ndarray:
    k = np.arange(n, dtype=float)
    h2 = 2.0 * hurst
    return 0.5 * (np.abs(k + 1) ** h2 - 2.0 * k**h2 + np.abs(k - 1) ** h2)


def _fgn_circulant(hurst: float, n: int, rng: np.random.Generator) -> np.ndarray | None:
    gamma = _fgn_autocov(hurst, n + 1)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    m = row.size  # 2n
    eig = np.fft.fft(row).real
    if eig.min() < -1e-10 * max(1.0, eig.max()):
        return None
    eig = np.clip(eig, 0.0, None)
    z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    y = np.fft.fft(np.sqrt(eig / m) * z)
    return y.real[:n]


def _fgn_cholesky(hurst: float, n: int, rng: np.random.Generator) -> np.ndarray:
    gamma = _fgn_autocov(hurst, n)
    idx = np.arange(n)
    cov = gamma[np.abs(idx[:, None] - idx[None, :])]
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise EmbeddingError(
            f"circulant spectrum negative and Cholesky failed (H={hurst}, n={n})"
        ) from exc
    return chol @ rng.standard_normal(n)


def sample_fbm(hurst: float, n: int, T: float = 1.0, seed: int = 0) -> ModulationPath:
    """Exact fractional Brownian motion sample on ``n + 1`` uniform grid points.

    Uses Davies-Harte circulant embedding of the fractional Gaussian noise
    covariance; falls back to a Cholesky factorisation when the embedding has
    a negative eigenvalue.
    """
    if not (0.0 < hurst < 1.0):
        raise ValueError(f"hurst must lie in (0, 1), got {hurst}")
    if n < 2:
        raise ValueError("n must be >= 2")
    if T <= 0:
        raise ValueError("horizon must be positive")
    rng = np.random.default_rng(seed)
    fgn = _fgn_circulant(hurst, n, rng)
    method = "circulant"
    if fgn is None:
        fgn = _fgn_cholesky(hurst, n, rng)
        method = "cholesky"
    samples = np.concatenate([[0.0], np.cumsum(fgn)]) * (T / n) ** hurst
    kind = "brownian" if hurst == 0.5 else "fbm"
    return ModulationPath(
        T, samples, kind, {"hurst": hurst, "seed": seed, "method": method}
    )


def brownian(n: int, T: float = 1.0, seed: int = 0) -> ModulationPath:
    return sample_fbm(0.5, n, T, seed)


def linear(slope: float = 1.0, n: int = 1, T: float = 1.0) -> ModulationPath:
    return ModulationPath(T, slope * np.linspace(0.0, T, n + 1), "linear", {"slope": slope})


def constant(level: float = 0.0, n: int = 1, T: float = 1.0) -> ModulationPath:
    return ModulationPath(T, np.full(n + 1, float(level)), "constant", {"level": level})


def custom(samples: Sequence[float], T: float = 1.0) -> ModulationPath:
    return ModulationPath(T, np.asarray(samples, dtype=float), "custom")


# ------------------------------------------------------------ phase integral


_BLOCK_ELEMENTS = 1 << 18


def _expm1_over(z: np.ndarray) -> np.ndarray:
    """``(exp(i z) - 1) / (i z)`` for real ``z``, series near zero."""
    out = np.empty(z.shape, dtype=complex)
    small = np.abs(z) < SERIES_THRESHOLD
    big = ~small
    zb = z[big]
    out[big] = np.expm1(1j * zb) / (1j * zb)
    zs = z[small]
    iz = 1j * zs
    # 1 + iz/2 + (iz)^2/6 + (iz)^3/24; |z| < 1e-4 makes the next term < 1e-17
    out[small] = 1.0 + iz * (0.5 + iz * (1.0 / 6.0 + iz / 24.0))
    return out


def _segment_terms(lengths, vals, a) -> np.ndarray:
    """Per-segment integrals, shape ``(len(lengths), len(a))``.

    Where ``|a dw| > 1`` the difference of node exponentials has no
    cancellation problem and saves one exponential per term; elsewhere the
    ``expm1`` form (with its series) is used.
    """
    nodes = np.exp(1j * np.multiply.outer(vals, a))
    z = np.multiply.outer(np.diff(vals), a)
    d = np.asarray(lengths)[:, None]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        terms = d * (nodes[1:] - nodes[:-1]) / (1j * z)
    near = np.abs(z) <= 1.0
    if near.any():
        rows, cols = np.nonzero(near)
        terms[rows, cols] = d[rows, 0] * nodes[rows, cols] * _expm1_over(z[rows, cols])
    return terms


def _check_interval(path: ModulationPath, s: float, t: float) -> None:
    if s > t:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    if s < 0 or t > path.horizon * (1 + 1e-14):
        raise ValueError(f"[{s}, {t}] is outside [0, {path.horizon}]")


def _pieces(path: ModulationPath, s: float, t: float):
    """Breakpoints and values of the interpolant restricted to [s, t]."""
    t = min(t, path.horizon)
    js, ws = path._locate(s)
    jt, wt = path._locate(t)
    inner = np.arange(js + 1, jt + 1)
    inner_t = inner * path.dt
    keep = (inner_t > s) & (inner_t < t)
    times = np.concatenate([[s], inner_t[keep], [t]])
    vals = np.concatenate([[ws], path.samples[inner[keep]], [wt]])
    return times, vals


def phi_many(path: ModulationPath, s: float, t: float, a) -> np.ndarray:
    """Vectorised ``phi`` over an array of frequencies ``a``."""
    _check_interval(path, s, t)
    a = np.asarray(a, dtype=float)
    flat = a.reshape(-1)
    out = np.zeros(flat.size, dtype=complex)
    if t == s:
        return out.reshape(a.shape)
    times, vals = _pieces(path, s, t)
    lengths = np.diff(times)
    if np.any(lengths <= 0.0):
        live = np.concatenate([[True], lengths > 0.0])
        times, vals = times[live], vals[live]
        lengths = np.diff(times)
    block = max(1, _BLOCK_ELEMENTS // max(flat.size, 1))
    for lo in range(0, lengths.size, block):
        hi = min(lo + block, lengths.size)
        out += _segment_terms(lengths[lo:hi], vals[lo : hi + 1], flat).sum(axis=0)
    return out.reshape(a.shape)


def phi(path: ModulationPath, s: float, t: float, a: float) -> complex:
    """``int_s^t exp(i a w_r) dr`` for the piecewise-linear path, exactly."""
    return complex(phi_many(path, s, t, np.array([a]))[0])


def segment_phi(path: ModulationPath, a) -> np.ndarray:
    """Phi over every grid segment, shape ``(n, len(a))``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    lengths = np.full(path.n, path.dt)
    return _segment_terms(lengths, path.samples, a)


def cumulative_phi(path: ModulationPath, a) -> np.ndarray:
    """``Phi_{0, t_i}(a)`` at every grid node, shape ``(n + 1, len(a))``."""
    seg = segment_phi(path, a)
    out = np.zeros((path.n + 1, seg.shape[1]), dtype=complex)
    np.cumsum(seg, axis=0, out=out[1:])
    return out


# ------------------------------------------------------------ irregularity


def dyadic_pairs(path: ModulationPath, depth: int, min_level: int = 0) -> np.ndarray:
    """Index pairs ``(i, j)`` of all dyadic intervals down to ``depth``.

    Levels finer than the path grid are dropped; requires ``n`` to be a
    power of two for the finest levels to land on grid nodes.
    """
    n = path.n
    pairs = []
    for level in range(min_level, depth + 1):
        m = 2**level
        if n % m:
            break
        step = n // m
        starts = np.arange(m) * step
        pairs.append(np.stack([starts, starts + step], axis=1))
    if not pairs:
        raise ValueError("path grid does not support any dyadic level")
    return np.concatenate(pairs)


def geometric_a_grid(a_min: float, a_max: float, points_per_decade: int = 8) -> np.ndarray:
    decades = math.log10(a_max / a_min)
    count = max(2, int(round(decades * points_per_decade)) + 1)
    return np.geomspace(a_min, a_max, count)


def _profile(path, gamma, a_grid, pairs, chunk=16):
    """Per-frequency max of |Phi_{s,t}(a)| / (t-s)^gamma and its arg-max pair."""
    pairs = np.asarray(pairs)
    a_grid = np.asarray(a_grid, dtype=float)
    prof = np.empty(a_grid.size)
    arg = np.empty(a_grid.size, dtype=int)
    if np.issubdtype(pairs.dtype, np.integer):
        lengths = (pairs[:, 1] - pairs[:, 0]) * path.dt
        weight = lengths ** (-gamma)
        for lo in range(0, a_grid.size, chunk):
            sub = a_grid[lo : lo + chunk]
            cum = cumulative_phi(path, sub)
            vals = np.abs(cum[pairs[:, 1]] - cum[pairs[:, 0]]) * weight[:, None]
            arg[lo : lo + chunk] = np.argmax(vals, axis=0)
            prof[lo : lo + chunk] = vals[arg[lo : lo + chunk], np.arange(sub.size)]
    else:
        vals = np.empty((len(pairs), a_grid.size))
        for p, (s, t) in enumerate(pairs):
            if not s < t:
                raise ValueError("pair_grid needs s < t")
            vals[p] = np.abs(phi_many(path, s, t, a_grid)) / (t - s) ** gamma
        arg = np.argmax(vals, axis=0)
        prof = vals[arg, np.arange(a_grid.size)]
    return prof, arg


def _pair_times(path, pairs, p):
    pairs = np.asarray(pairs)
    if np.issubdtype(pairs.dtype, np.integer):
        return float(pairs[p, 0] * path.dt), float(pairs[p, 1] * path.dt)
    return float(pairs[p, 0]), float(pairs[p, 1])


def irregularity_seminorm(
    path: ModulationPath, rho: float, gamma: float, a_grid, pair_grid
) -> IrregularityEstimate:
    """Grid lower bound for sup <a>^rho |Phi_{s,t}(a)| / (t-s)^gamma.

    ``pair_grid`` is either an integer array of grid-index pairs (as returned
    by :func:`dyadic_pairs`) or a float array of ``(s, t)`` times.
    """
    if rho < 0:
        raise ValueError("rho must be >= 0")
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    a_grid = np.atleast_1d(np.asarray(a_grid, dtype=float))
    if a_grid.size == 0:
        raise ValueError("a_grid is empty")
    prof, arg = _profile(path, gamma, a_grid, pair_grid)
    weighted = (1.0 + a_grid**2) ** (rho / 2) * prof
    best = int(np.argmax(weighted))
    s, t = _pair_times(path, pair_grid, arg[best])
    return IrregularityEstimate(
        gamma=gamma,
        rho_hat=float("nan"),
        seminorm=float(weighted[best]),
        a_grid=a_grid,
        pair_grid=f"{len(pair_grid)} pairs",
        argmax=(s, t, float(a_grid[best])),
        rho=rho,
        profile=prof,
    )


def estimate_rho(path: ModulationPath, gamma: float, a_grid, pair_grid) -> IrregularityEstimate:
    """Fit the decay exponent of M(a) = max_pairs |Phi(a)| / (t-s)^gamma.

    The slope of log M against log <a> over the upper half of ``a_grid``
    gives ``-rho_hat``.
    """
    a_grid = np.sort(np.atleast_1d(np.asarray(a_grid, dtype=float)))
    if a_grid.size < 4:
        raise ValueError("a_grid needs at least 4 points")
    prof, arg = _profile(path, gamma, a_grid, pair_grid)
    upper = slice(a_grid.size // 2, None)
    x = 0.5 * np.log1p(a_grid[upper] ** 2)
    y = prof[upper]
    ok = np.isfinite(y) & (y > 1e-300)
    if ok.sum() < 2:
        raise DegenerateFitError("M(a) underflows across the fit window")
    slope = np.polyfit(x[ok], np.log(y[ok]), 1)[0]
    rho_hat = -float(slope)
    weighted = (1.0 + a_grid**2) ** (max(rho_hat, 0.0) / 2) * prof
    best = int(np.argmax(weighted))
    s, t = _pair_times(path, pair_grid, arg[best])
    return IrregularityEstimate(
        gamma=gamma,
        rho_hat=rho_hat,
        seminorm=float(weighted[best]),
        a_grid=a_grid,
        pair_grid=f"{len(pair_grid)} pairs",
        argmax=(s, t, float(a_grid[best])),
        rho=max(rho_hat, 0.0),
        profile=prof,
    )
