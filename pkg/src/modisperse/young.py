"""Nonlinear Young integration and the Young equation solver.

An increment family is any callable ``X(s, t, state) -> state``. States are
:class:`~modisperse.spectral.TorusField` values in the solvers; the sewing
routine also accepts plain numbers / numpy arrays.

The Young equation ``psi_t = psi_0 + int_0^t X_ds(psi_s)`` is discretised on a
dyadic grid; its discrete fixed point is found by Picard iteration and
continued window by window.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .spectral import TorusField, sobolev_norm

__all__ = [
    "SolutionTrace",
    "NoContractionError",
    "SewingDivergenceError",
    "young_integral",
    "euler_step",
    "picard_solve",
    "solve_global",
    "galerkin_convergence_study",
    "holder_seminorm",
    "trace_distance",
    "empirical_operator_norm",
    "max_local_time",
]

log = logging.getLogger(__name__)


class NoContractionError(RuntimeError):
    def __init__(self, message, ratio=float("nan"), T_local=float("nan")):
        super().__init__(message)
        self.ratio = ratio
        self.T_local = T_local


class SewingDivergenceError(RuntimeError):
    pass


def _norm(x) -> float:
    if isinstance(x, TorusField):
        return sobolev_norm(x, 0.0)
    return float(np.linalg.norm(np.atleast_1d(np.asarray(x))))


# ---------------------------------------------------------------- traces


@dataclass
class SolutionTrace:
    """Twisted states on increasing times plus per-step diagnostics."""

    times: np.ndarray
    states: list
    gamma: float = 0.55
    M: int = 1
    iterations: list = field(default_factory=list)
    remainders: np.ndarray | None = None
    windows: list = field(default_factory=list)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.states) != self.times.size:
            raise ValueError("one state per time required")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.remainders is None:
            self.remainders = np.zeros(self.times.size)

    def coeff_matrix(self) -> np.ndarray:
        return np.stack([s.coeffs for s in self.states])

    @property
    def l2(self) -> np.ndarray:
        return np.array([sobolev_norm(s, 0.0) for s in self.states])

    @property
    def drift(self) -> np.ndarray:
        l2 = self.l2
        return np.abs(l2**2 - l2[0] ** 2)

    def max_drift(self) -> float:
        return float(self.drift.max())

    def holder(self, exponent: float = 0.5) -> float:
        return holder_seminorm(self.times, self.coeff_matrix(), exponent, self.states[0].lam)

    def sobolev(self, alpha: float) -> np.ndarray:
        return np.array([sobolev_norm(s, alpha) for s in self.states])

    def at(self, t: float):
        i = int(np.searchsorted(self.times, t - 1e-12 * max(1.0, abs(t))))
        if i >= self.times.size or abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"time {t} not on the trace grid")
        return self.states[i]

    def step_iterations(self) -> np.ndarray:
        out = np.zeros(self.times.size, dtype=int)
        for (i0, i1, iters) in self.windows:
            out[i0 + 1 : i1 + 1] = iters
        return out


def holder_seminorm(times, coeffs, exponent: float = 0.5, lam: float = 1.0,
                    max_points: int = 2049) -> float:
    """Discrete ``max_{i<j} ||f_j - f_i|| / |t_j - t_i|^exponent`` in L^2(0, lam).

    Uses the Gram matrix; longer traces are thinned to ``max_points``
    equally spaced indices (always keeping the endpoints).
    """
    times = np.asarray(times, dtype=float)
    C = np.asarray(coeffs)
    if times.size < 2:
        return 0.0
    if times.size > max_points:
        keep = np.unique(np.linspace(0, times.size - 1, max_points).round().astype(int))
        times, C = times[keep], C[keep]
    G = C @ C.conj().T
    d = np.real(np.diag(G))
    dist2 = np.maximum(d[:, None] + d[None, :] - 2 * G.real, 0.0) / lam
    dt = np.abs(times[:, None] - times[None, :])
    iu = np.triu_indices(times.size, 1)
    return float(np.max(np.sqrt(dist2[iu]) / dt[iu] ** exponent))


def trace_distance(a: SolutionTrace, b: SolutionTrace, exponent: float = 0.5) -> tuple[float, float]:
    """Discrete C^0 and C^exponent distances between two traces on the same grid."""
    if a.times.size != b.times.size or np.any(np.abs(a.times - b.times) > 1e-12):
        raise ValueError("traces must share the time grid")
    D = a.coeff_matrix() - b.coeff_matrix()
    lam = a.states[0].lam
    c0 = float(np.sqrt(np.max(np.sum(np.abs(D) ** 2, axis=1)) / lam))
    return c0, holder_seminorm(a.times, D, exponent, lam)


# ---------------------------------------------------------------- sewing


def _g_at(g, times):
    if callable(g):
        return [g(t) for t in times]
    g_times, g_values = g
    g_times = np.asarray(g_times, dtype=float)
    idx = np.searchsorted(g_times, np.asarray(times) + 1e-14, side="right") - 1
    idx = np.clip(idx, 0, len(g_values) - 1)
    return [g_values[i] for i in idx]


def young_integral(X: Callable, g, s: float, t: float, depth: int, norm=_norm) -> dict:
    """Dyadic Riemann sums ``sum_i X_{t_i t_{i+1}}(g_{t_i})`` up to ``depth``.

    ``g`` is a callable of time or a ``(times, values)`` pair extended
    piecewise-constantly from the left. Returns the depth-``depth`` sum, all
    intermediate sums' increments ``||S_d - S_{d-1}||`` and their ratios.
    Raises :class:`SewingDivergenceError` when the increment ratio exceeds 1
    at three consecutive depths (increments below ``1e-12`` of the sum's
    norm count as converged).
    """
    sums = []
    increments = []
    prev = None
    above = 0
    for d in range(depth + 1):
        m = 2**d
        grid = s + (t - s) * np.arange(m + 1) / m
        vals = _g_at(g, grid[:-1])
        total = None
        for a, b, v in zip(grid[:-1], grid[1:], vals):
            term = X(a, b, v)
            total = term if total is None else total + term
        sums.append(total)
        if prev is not None:
            increments.append(norm(total - prev))
            # increments at rounding level (telescoping sums) carry no signal
            floor = 1e-12 * norm(total)
            if len(increments) >= 2 and increments[-2] > 0 and increments[-1] > floor:
                above = above + 1 if increments[-1] / increments[-2] > 1 else 0
            else:
                above = 0
            if above >= 3:
                raise SewingDivergenceError(f"sewing increments grow at depth {d}")
        prev = total
    inc = np.array(increments)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = inc[1:] / inc[:-1] if inc.size > 1 else np.array([])
    return {"value": sums[-1], "sums": sums, "increments": inc, "ratios": ratios}


def euler_step(X: Callable, psi, s: float, t: float):
    if not s < t:
        raise ValueError("need s < t")
    return psi + X(s, t, psi)


# ---------------------------------------------------------------- solver


def _picard_window(X, psi0, grid, tol, max_iter, min_iter=1):
    m = grid.size - 1
    lam = psi0.lam
    states = [psi0] * (m + 1)
    dists = []
    ratio = float("nan")
    prev_inc = None
    for it in range(1, max_iter + 1):
        # overflow is reported below as a contraction failure, not as warnings
        with np.errstate(over="ignore", invalid="ignore"):
            incs = [X(grid[i], grid[i + 1], states[i]) for i in range(m)]
            new = [psi0]
            acc = psi0
            for inc in incs:
                acc = acc + inc
                new.append(acc)
            D = np.stack([a.coeffs - b.coeffs for a, b in zip(new, states)])
            if not np.all(np.isfinite(D)):
                raise NoContractionError("Picard iterate overflowed", float("inf"), grid[-1] - grid[0])
            dist = holder_seminorm(grid, D, 0.5, lam) + float(np.sqrt(np.max(np.sum(np.abs(D) ** 2, axis=1)) / lam))
        states = new
        dists.append(dist)
        prev_inc = incs
        if len(dists) >= 2 and dists[-2] > 0:
            ratio = dists[-1] / dists[-2]
            if ratio >= 1.0:
                raise NoContractionError(
                    f"Picard iterates do not contract (ratio {ratio:.3g})", ratio, grid[-1] - grid[0]
                )
        if dist < tol and it >= min_iter:
            break
    else:
        raise NoContractionError(
            f"no convergence in {max_iter} iterations (last distance {dists[-1]:.3g})",
            ratio, grid[-1] - grid[0],
        )
    return states, it, dists, prev_inc


def _dyadic_grid(t0: float, t1: float, h: float) -> np.ndarray:
    """Grid on [t0, t1] with 2^d steps, step <= h."""
    m = 1
    while (t1 - t0) / m > h * (1 + 1e-12):
        m *= 2
    return t0 + (t1 - t0) * np.arange(m + 1) / m


def picard_solve(X: Callable, psi0: TorusField, T_local: float, tol: float = 1e-10,
                 max_iter: int = 200, h: float | None = None, t0: float = 0.0,
                 gamma: float = 0.55) -> SolutionTrace:
    """Fixed point of ``psi_t = psi0 + sum X_{t_i t_{i+1}}(psi_{t_i})`` on [t0, t0 + T_local].

    The grid is dyadic with step at most ``h`` (default ``T_local / 64``).
    Iterates stop once their discrete C^0 + C^{1/2} distance is below ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    h = T_local / 64 if h is None else h
    grid = _dyadic_grid(t0, t0 + T_local, h)
    states, iters, dists, incs = _picard_window(X, psi0, grid, tol, max_iter)
    trace = SolutionTrace(grid, states, gamma=gamma)
    trace.windows = [(0, grid.size - 1, iters)]
    trace.picard_distances = dists
    return trace


def empirical_operator_norm(X: Callable, psi: TorusField, T: float, gamma: float,
                            depth: int = 3, finest: float | None = None) -> float:
    """max over dyadic intervals of ``||X_st(psi)|| / (||psi||^2 (t-s)^gamma)``.

    Without ``finest`` the intervals are the dyadic subintervals of [0, T]
    down to ``depth`` levels. With ``finest = h`` they are the intervals of
    length ``h, 2h, ..., 2^depth h`` tiling ``[0, 2^depth h]``, which keeps
    the cost independent of ``T`` on finely sampled paths.
    """
    size = sobolev_norm(psi, 0.0)
    if size == 0:
        return 0.0
    if finest is None:
        levels = [(T / 2**lvl, 2**lvl) for lvl in range(depth + 1)]
    else:
        top = min(T, finest * 2**depth)
        levels = [(top / 2**lvl, 2**lvl) for lvl in range(depth + 1)]
    best = 0.0
    for length, count in levels:
        for i in range(count):
            s, t = i * length, (i + 1) * length
            best = max(best, sobolev_norm(X(s, t, psi), 0.0) / (size**2 * (t - s) ** gamma))
    return best


def _initial_window(X, psi0, T, gamma, h, c=0.25):
    size = sobolev_norm(psi0, 0.0)
    xnorm = empirical_operator_norm(X, psi0, min(1.0, T), gamma, finest=h)
    scale = xnorm * (1.0 + size)
    if scale <= 0:
        return min(1.0, T)
    return min(1.0, T, c * scale ** (-1.0 / (gamma - 0.5)))


def _continue(X, psi0, T, tol, h, gamma, max_iter, min_window, window=None, t_start=0.0):
    times = [t_start]
    states = [psi0]
    windows = []
    remainders = [0.0]
    t = t_start
    psi = psi0
    T_end = t_start + T
    if window is None:
        window = _initial_window(X, psi0, T, gamma, h)
    window = min(window, T)
    while t < T_end - 1e-12 * T_end:
        span = min(window, T_end - t)
        grid = _dyadic_grid(t, t + span, h)
        try:
            win, iters, dists, incs = _picard_window(X, psi, grid, tol, max_iter)
        except NoContractionError as exc:
            window = span / 2
            log.debug("window halved to %g at t=%g (%s)", window, t, exc)
            if window < min_window:
                raise NoContractionError(
                    f"window fell below {min_window:g} at t={t:g}", exc.ratio, window
                ) from exc
            continue
        i0 = len(times) - 1
        times.extend(grid[1:])
        states.extend(win[1:])
        # ||psi + X(psi)||^2 - ||psi||^2 - 2 Re<psi, X(psi)> per step
        for st, inc in zip(win[:-1], incs):
            remainders.append(sobolev_norm(inc, 0.0) ** 2)
        windows.append((i0, len(times) - 1, iters))
        t = grid[-1]
        psi = win[-1]
        window = min(2 * span, 1.0)
    trace = SolutionTrace(np.array(times), states, gamma=gamma)
    trace.windows = windows
    trace.remainders = np.array(remainders)
    return trace


def solve_global(X: Callable, psi0: TorusField, T: float, tol: float = 1e-10,
                 h: float = 2.0**-10, gamma: float = 0.55, max_iter: int = 200,
                 equation: str = "kdv", window: float | None = None) -> SolutionTrace:
    """Chain Picard windows up to ``T``; L^2 drift is recorded, never corrected.

    Windows start at the size suggested by the contraction scaling, are
    halved on failure (down to ``2^-20 T``) and doubled after success.
    """
    if equation != "kdv":
        raise ValueError("conservation-based continuation is implemented for kdv only")
    return _continue(X, psi0, T, tol, h, gamma, max_iter, 2.0**-20 * T, window)


def solve_windows(X: Callable, psi0: TorusField, T: float, tol: float = 1e-10,
                  h: float = 2.0**-10, gamma: float = 0.55, max_iter: int = 200,
                  window: float | None = None, t_start: float = 0.0) -> SolutionTrace:
    """Window chaining without the conservation precondition (any equation)."""
    return _continue(X, psi0, T, tol, h, gamma, max_iter, 2.0**-20 * T, window, t_start)


def max_local_time(X: Callable, psi0: TorusField, upper: float = 1.0, tol: float = 1e-8,
                   h_fraction: float = 1 / 64, bisections: int = 12, max_iter: int = 60) -> float:
    """Largest window (by bisection) on which Picard iteration contracts."""
    def ok(T_local):
        try:
            picard_solve(X, psi0, T_local, tol=tol, h=T_local * h_fraction, max_iter=max_iter)
            return True
        except NoContractionError:
            return False

    if ok(upper):
        return upper
    lo, hi = 0.0, upper
    for _ in range(bisections):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def galerkin_convergence_study(X, psi0: TorusField, T: float, L_list: Sequence[int],
                               tol: float = 1e-10, h: float = 2.0**-8, gamma: float = 0.55,
                               window: float | None = None) -> list[dict]:
    """Solve with ``X^L`` for each L and compare against the largest L.

    ``X`` is a :class:`~modisperse.modop.ModulatedOperator` (its truncations
    ``X^L`` are used) or any callable ``L -> increment family``. Initial data
    are projected to ``|j| <= L``. Every run uses the window size accepted
    for the largest L so that all traces share one time grid. Rows hold the
    discrete C^0 and C^{1/2} gaps to the reference.
    """
    from .spectral import project

    L_list = sorted(int(L) for L in L_list)
    if L_list[-1] > psi0.K:
        raise ValueError("max(L_list) must be <= K")
    family = X.increment if hasattr(X, "increment") else X
    lam = psi0.lam
    ref_L = L_list[-1]
    ref = _continue(family(ref_L), project(psi0, ref_L / lam), T, tol, h, gamma, 200,
                    2.0**-20 * T, window)
    used_window = ref.times[ref.windows[0][1]] - ref.times[0] if ref.windows else T
    rows = []
    for L in L_list[:-1]:
        tr = _continue(family(L), project(psi0, L / lam), T, tol, h, gamma, 200,
                       2.0**-20 * T, used_window)
        if tr.times.size != ref.times.size:
            tr = _resample(tr, ref.times)
        c0, c_half = trace_distance(tr, ref)
        rows.append({"L": L, "gap_c0": c0, "gap_c_half": c_half})
    return rows


def _resample(trace: SolutionTrace, times: np.ndarray) -> SolutionTrace:
    idx = [int(np.argmin(np.abs(trace.times - t))) for t in times]
    if any(abs(trace.times[i] - t) > 1e-12 for i, t in zip(idx, times)):
        raise ValueError("trace grids are not nested")
    return SolutionTrace(times, [trace.states[i] for i in idx], gamma=trace.gamma)
