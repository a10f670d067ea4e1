"""I-method on the rescaled torus.

The smoothing multiplier ``I`` damps frequencies above ``N``; its L^2 norm
``||I v||`` is an almost-conserved quantity. This module provides the
symbol, the KdV rescaling to the lambda-torus, the commutator
``I X(f, g) - X(I f, I g)`` and a driver that follows ``||I v_t||`` window by
window along the Young solution.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .modop import ModulatedOperator, x_apply
from .modpath import ModulationPath, brownian
from .spectral import TorusField, inner, random_field, sobolev_norm
from .young import NoContractionError, _continue

__all__ = [
    "IMultiplier",
    "rescale",
    "apply_I",
    "commutator_norm",
    "commutator_scan",
    "choose_lambda",
    "AlmostConservationConfig",
    "almost_conservation_run",
]

log = logging.getLogger(__name__)

_LOG10 = math.log(10.0)


@dataclass(frozen=True)
class IMultiplier:
    """Symbol ``m(xi)``: 1 below 1, ``|xi|^alpha`` above 10, C^1 in between.

    With ``u = log10|xi|`` the transition is ``log m = alpha log(10) p(u)``
    where ``p(u) = 2u^2 - u^3`` is the cubic matching value and slope of both
    neighbouring regimes (0 at ``u = 0``; ``alpha log|xi|`` at ``u = 1``), so
    ``m`` is monotone and continuously differentiable. ``m_N(k) = m(k / N)``.
    """

    alpha: float
    N: float

    def __post_init__(self):
        if self.alpha > 0:
            raise ValueError("alpha must be <= 0")
        if self.N < 1:
            raise ValueError("N must be >= 1")

    def m(self, xi) -> np.ndarray:
        x = np.abs(np.asarray(xi, dtype=float))
        out = np.ones_like(x)
        high = x >= 10.0
        out[high] = x[high] ** self.alpha
        mid = (x >= 1.0) & ~high
        u = np.log(x[mid]) / _LOG10
        step = u * u * (2.0 - u)
        out[mid] = np.exp(self.alpha * _LOG10 * step)
        return out

    def m_N(self, k) -> np.ndarray:
        return self.m(np.asarray(k, dtype=float) / self.N)


def apply_I(mult: IMultiplier, f: TorusField) -> TorusField:
    return f.with_coeffs(f.coeffs * mult.m_N(f.k))


def rescale(path: ModulationPath, f: TorusField, lam: float, refine: int = 1
            ) -> tuple[ModulationPath, TorusField]:
    """KdV scaling to the lambda-torus.

    Path: ``w^lam_t = lam^3 w_{t / lam^3}`` on horizon ``lam^3 T``. The
    piecewise-linear interpolant is represented exactly (same nodes, scaled
    times and values); ``refine`` subdivides every segment, which does not
    change the interpolant.

    Field: index ``j`` keeps its slot (frequency ``j / lam``) and its
    coefficient is multiplied by ``1 / lam``.
    """
    if lam < 1:
        raise ValueError("lambda must be >= 1")
    lam = float(lam)
    samples = np.asarray(path.samples)
    if refine > 1:
        fine = np.linspace(0.0, path.horizon, path.n * refine + 1)
        samples = np.interp(fine, path.times, samples)
    new_path = ModulationPath(
        path.horizon * lam**3, samples * lam**3, path.kind,
        dict(path.params, rescaled_by=lam),
    )
    new_field = TorusField(f.lam * lam, f.K, f.coeffs / lam, f.real)
    return new_path, new_field


def commutator(op: ModulatedOperator, mult: IMultiplier, s: float, t: float,
               psi1: TorusField, psi2: TorusField) -> TorusField:
    fields = (psi1, psi2) if op.arity == 2 else (psi1, psi2, psi2)
    lhs = apply_I(mult, x_apply(op, s, t, fields))
    rhs = x_apply(op, s, t, tuple(apply_I(mult, f) for f in fields))
    return lhs - rhs


def commutator_norm(op: ModulatedOperator, mult: IMultiplier, s: float, t: float,
                    psi1: TorusField, psi2: TorusField) -> float:
    """``||I X_st(psi1, psi2) - X_st(I psi1, I psi2)||_{L^2}``."""
    return sobolev_norm(commutator(op, mult, s, t, psi1, psi2), 0.0)


def commutator_scan(op: ModulatedOperator, alpha: float, N_list, samples: int = 8,
                    pairs=None, seed: int = 0, gamma: float = 0.55) -> dict:
    """Median commutator norm against N and its log2-slope.

    Fields are real, H^alpha-normalised random draws (two per sample);
    each norm is divided by ``(t - s)^gamma`` before taking the median.
    """
    if pairs is None:
        T = op.path.horizon
        pairs = [(0.0, T), (0.0, T / 2), (T / 2, T)]
    N_list = [float(N) for N in N_list]
    draws = [(random_field(op.lam, op.K, alpha, seed=seed + 2 * i),
              random_field(op.lam, op.K, alpha, seed=seed + 2 * i + 1)) for i in range(samples)]
    rows = []
    medians = []
    for N in N_list:
        mult = IMultiplier(alpha, N)
        vals = [commutator_norm(op, mult, s, t, f, g) / (t - s) ** gamma
                for (f, g) in draws for (s, t) in pairs]
        med = float(np.median(vals))
        medians.append(med)
        rows.append({"N": N, "median": med, "max": float(np.max(vals))})
    slope = float(np.polyfit(np.log2(N_list), np.log2(medians), 1)[0])
    return {"rows": rows, "slope": slope}


def _energy(mult: IMultiplier, f: TorusField) -> float:
    return sobolev_norm(apply_I(mult, f), 0.0)


def choose_lambda(phi: TorusField, mult: IMultiplier, epsilon0: float,
                  lam_max: float = 1e6) -> float:
    """Smallest ``lambda >= 1`` with ``||I phi^lambda||_{L^2} = epsilon0``.

    ``||I phi^lambda||`` decreases in lambda (roughly like
    ``lambda^(-alpha-3/2)``), so a bracketing root-finder suffices.
    """
    def gap(log_lam):
        lam = math.exp(log_lam)
        return math.log(_energy(mult, TorusField(phi.lam * lam, phi.K, phi.coeffs / lam))) - math.log(epsilon0)

    if _energy(mult, phi) == 0:
        return 1.0
    if gap(0.0) <= 0:
        return 1.0
    if gap(math.log(lam_max)) > 0:
        raise ValueError("epsilon0 not reachable below lam_max")
    return math.exp(brentq(gap, 0.0, math.log(lam_max), xtol=1e-14, rtol=1e-14))


@dataclass
class AlmostConservationConfig:
    alpha: float = -0.25
    N: float = 8.0
    K: int = 32
    epsilon0: float = 0.1
    windows: int = 8
    h: float = 2.0**-6
    tol: float = 1e-10
    gamma: float = 0.55
    path_n: int = 2**14
    path_seed: int = 0
    data_seed: int = 0
    zero_data: bool = False
    lam: float | None = None
    threads: int | None = 1
    path: ModulationPath | None = field(default=None, repr=False)


def almost_conservation_run(config: AlmostConservationConfig) -> dict:
    """Follow ``||I v_t||`` over unit windows on the lambda-torus.

    Per window the report holds the energies at both ends (``||I v||``),
    the first-order term ``sum 2 Re <I v, I X(v, v) - X(I v, I v)>`` and the
    remainder (squared-energy increment minus that term). The run fails
    (``ok = False``, with the window index) if the energy reaches
    ``2 epsilon0``.
    """
    c = config
    mult = IMultiplier(c.alpha, c.N)
    if c.zero_data:
        phi = TorusField(1.0, c.K, np.zeros(2 * c.K + 1), True)
    else:
        phi = random_field(1.0, c.K, c.alpha, seed=c.data_seed, norm=1.0)
    lam = c.lam if c.lam is not None else choose_lambda(phi, mult, c.epsilon0)
    path = c.path
    if path is None:
        horizon = max(c.windows / lam**3, 1e-300)
        path = brownian(c.path_n, horizon, seed=c.path_seed)
    if path.horizon * lam**3 < c.windows * (1 - 1e-12):
        raise ValueError("path horizon too short for the requested windows")
    w_lam, psi = rescale(path, phi, lam)
    op = ModulatedOperator("kdv", w_lam, c.K, lam=lam, threads=c.threads)
    X = op.increment()
    report = {
        "alpha": c.alpha, "N": c.N, "lambda": lam, "epsilon0": c.epsilon0,
        "K": c.K, "h": c.h, "windows": [], "ok": True, "failed_window": None,
    }
    window_guess = 1.0
    for wi in range(c.windows):
        t0, t1 = float(wi), float(wi + 1)
        e0 = _energy(mult, psi)
        try:
            trace = _continue(X, psi, 1.0, c.tol, c.h, c.gamma, 200, 2.0**-20, window_guess, t0)
        except NoContractionError as exc:
            report["ok"] = False
            report["failed_window"] = wi
            report["error"] = str(exc)
            break
        first = 0.0
        for a, b, state in zip(trace.times[:-1], trace.times[1:], trace.states[:-1]):
            Iv = apply_I(mult, state)
            diff = apply_I(mult, X(a, b, state)) - X(a, b, Iv)
            first += 2.0 * inner(Iv, diff).real
        psi = trace.states[-1]
        e1 = _energy(mult, psi)
        report["windows"].append({
            "t0": t0, "t1": t1, "energy0": e0, "energy1": e1,
            "commutator_term": first, "remainder": (e1**2 - e0**2) - first,
            "steps": int(trace.times.size - 1),
        })
        if trace.windows:
            i0, i1, _ = trace.windows[-1]
            window_guess = float(trace.times[i1] - trace.times[i0])
        if e1 >= 2 * c.epsilon0:
            report["ok"] = False
            report["failed_window"] = wi
            break
    return report


def mean_window_increment(report: dict) -> float:
    """Mean ``|energy1^2 - energy0^2|`` over the report's windows."""
    w = report["windows"]
    if not w:
        return 0.0
    return float(np.mean([abs(x["energy1"] ** 2 - x["energy0"] ** 2) for x in w]))
