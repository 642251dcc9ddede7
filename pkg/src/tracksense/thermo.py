"""Vapor-liquid equilibrium primitives for the methanol-water binary.

Ideal Raoult's law on top of Antoine saturation pressures; Murphree
efficiency is the only non-ideality knob. Compositions are methanol
(light component) mole fractions throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

KPA_PER_MMHG = 101.325 / 760.0
P_ATM_KPA = 101.325

#: |T_high - T_low| below which the bubble-point bisection stops, degC.
BUBBLE_T_TOL = 1e-10


@dataclass(frozen=True)
class AntoineParams:
    """Antoine coefficients, log10(P[mmHg]) = A - B / (C + T[degC])."""

    A: float
    B: float
    C: float
    valid_t_range: tuple[float, float]


# Lange's handbook constants (log10 / mmHg / degC convention).
METHANOL = AntoineParams(A=7.87863, B=1473.11, C=230.0, valid_t_range=(15.0, 110.0))
WATER = AntoineParams(A=7.96681, B=1668.21, C=228.0, valid_t_range=(10.0, 150.0))

COMPONENTS = {"methanol": METHANOL, "water": WATER}


class ExtrapolationError(ValueError):
    """Temperature outside the Antoine validity range with extrapolate=False."""


class BracketError(RuntimeError):
    """Bubble-point bisection could not bracket a root (bad Antoine data)."""


def _resolve(component: str | AntoineParams) -> AntoineParams:
    if isinstance(component, AntoineParams):
        return component
    try:
        return COMPONENTS[component]
    except KeyError:
        raise KeyError(f"unknown component {component!r}; known: {sorted(COMPONENTS)}") from None


def _psat_mmhg(p: AntoineParams, t_c):
    return 10.0 ** (p.A - p.B / (p.C + t_c))


def saturation_pressure(component: str | AntoineParams, t_c: float, extrapolate: bool = False) -> float:
    """Pure-component saturation pressure in kPa at t_c degC."""
    p = _resolve(component)
    if not math.isfinite(t_c):
        raise ValueError(f"non-finite temperature {t_c!r}")
    lo, hi = p.valid_t_range
    if not extrapolate and not (lo <= t_c <= hi):
        raise ExtrapolationError(
            f"T={t_c:.2f} degC outside Antoine range [{lo}, {hi}]; pass extrapolate=True to force"
        )
    return float(_psat_mmhg(p, t_c)) * KPA_PER_MMHG


def boiling_point(component: str | AntoineParams, p_kpa: float) -> float:
    """Invert the Antoine equation for the pure-component boiling point, degC."""
    if not (math.isfinite(p_kpa) and p_kpa > 0.0):
        raise ValueError(f"pressure must be positive and finite, got {p_kpa!r}")
    p = _resolve(component)
    return p.B / (p.A - math.log10(p_kpa / KPA_PER_MMHG)) - p.C


def bubble_point(
    x_meoh: float,
    p_kpa: float,
    light: AntoineParams = METHANOL,
    heavy: AntoineParams = WATER,
) -> tuple[float, float]:
    """Bubble-point temperature and equilibrium vapor composition.

    Solves x*Psat_light(T) + (1-x)*Psat_heavy(T) = P by bisection between
    the two pure-component boiling points. Returns (T degC, y_meoh).
    """
    if not (math.isfinite(x_meoh) and 0.0 <= x_meoh <= 1.0):
        raise ValueError(f"x_meoh must be in [0, 1], got {x_meoh!r}")
    if not (math.isfinite(p_kpa) and p_kpa > 0.0):
        raise ValueError(f"pressure must be positive and finite, got {p_kpa!r}")

    p_mmhg = p_kpa / KPA_PER_MMHG
    t_lo = boiling_point(light, p_kpa) - 0.5
    t_hi = boiling_point(heavy, p_kpa) + 0.5

    def f(t: float) -> float:
        return x_meoh * _psat_mmhg(light, t) + (1.0 - x_meoh) * _psat_mmhg(heavy, t) - p_mmhg

    f_lo, f_hi = f(t_lo), f(t_hi)
    if f_lo > 0.0 or f_hi < 0.0:
        raise BracketError(
            f"no sign change on [{t_lo:.2f}, {t_hi:.2f}] degC (f_lo={f_lo:.3g}, f_hi={f_hi:.3g})"
        )
    for _ in range(200):
        if t_hi - t_lo <= BUBBLE_T_TOL:
            break
        t_mid = 0.5 * (t_lo + t_hi)
        if f(t_mid) > 0.0:
            t_hi = t_mid
        else:
            t_lo = t_mid
    t = 0.5 * (t_lo + t_hi)
    y = x_meoh * _psat_mmhg(light, t) / p_mmhg
    return t, min(max(y, 0.0), 1.0)


def equilibrium_vapor(
    x_meoh: float,
    t_c: float,
    p_kpa: float,
    murphree_eff: float = 1.0,
    y_in: float | None = None,
) -> float:
    """Actual vapor composition leaving a tray with Murphree efficiency.

    y = y_in + eff * (y_eq - y_in), clamped to [0, 1]. y_in is the vapor
    composition entering from below; it may be omitted only at eff = 1.
    """
    if not 0.0 <= murphree_eff <= 1.0:
        raise ValueError(f"murphree_eff must be in [0, 1], got {murphree_eff!r}")
    p_mmhg = p_kpa / KPA_PER_MMHG
    y_eq = min(max(x_meoh * float(_psat_mmhg(METHANOL, t_c)) / p_mmhg, 0.0), 1.0)
    if murphree_eff == 1.0:
        return y_eq
    if y_in is None:
        raise ValueError("y_in is required when murphree_eff < 1")
    y = y_in + murphree_eff * (y_eq - y_in)
    return min(max(y, 0.0), 1.0)


class BubblePointCurve:
    """Fast bubble-point lookups at fixed pressure.

    Knot temperatures are solved on a dense composition grid by the same
    bisection as bubble_point; evaluation is linear interpolation on that
    grid. The grid is dense enough that agreement with the scalar solver
    is better than 1e-8 degC (tested).
    """

    def __init__(
        self,
        p_kpa: float,
        light: AntoineParams = METHANOL,
        heavy: AntoineParams = WATER,
        n_knots: int = 2**17 + 1,
    ):
        self.p_kpa = float(p_kpa)
        self.light = light
        self.heavy = heavy
        p_mmhg = self.p_kpa / KPA_PER_MMHG
        xs = np.linspace(0.0, 1.0, n_knots)
        t_lo = np.full(n_knots, boiling_point(light, p_kpa) - 0.5)
        t_hi = np.full(n_knots, boiling_point(heavy, p_kpa) + 0.5)
        # 60 halvings of a ~36 degC bracket: width < 1e-15 degC.
        for _ in range(60):
            t_mid = 0.5 * (t_lo + t_hi)
            f = xs * _psat_mmhg(light, t_mid) + (1.0 - xs) * _psat_mmhg(heavy, t_mid) - p_mmhg
            high = f > 0.0
            t_hi = np.where(high, t_mid, t_hi)
            t_lo = np.where(high, t_lo, t_mid)
        self._grid_x = xs
        self._grid_t = 0.5 * (t_lo + t_hi)
        self._p_mmhg = p_mmhg

    def temperature(self, x: np.ndarray) -> np.ndarray:
        """Bubble-point temperature (degC) for methanol mole fractions x."""
        return np.interp(np.clip(x, 0.0, 1.0), self._grid_x, self._grid_t)

    def vapor_composition(self, x: np.ndarray, t: np.ndarray | None = None) -> np.ndarray:
        """Equilibrium vapor methanol fraction for liquid x (and optional precomputed T)."""
        xc = np.clip(x, 0.0, 1.0)
        if t is None:
            t = self.temperature(xc)
        y = xc * _psat_mmhg(self.light, t) / self._p_mmhg
        return np.clip(y, 0.0, 1.0)


@lru_cache(maxsize=8)
def bubble_point_curve(
    p_kpa: float,
    light: AntoineParams = METHANOL,
    heavy: AntoineParams = WATER,
) -> BubblePointCurve:
    return BubblePointCurve(p_kpa, light, heavy)
