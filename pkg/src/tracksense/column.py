"""Dynamic tray-by-tray simulator of a binary methanol-water column.

Constant-molal-overflow tray model with energy effects folded into
heat-loss condensation terms: ambient losses from the top and bottom
column sections condense rising vapor (adding to internal reflux), so a
larger heat-loss coefficient lowers that section's steady temperatures.
Stage indexing: 0 = reflux drum (total condenser), 1..n_trays = trays
numbered from the top, n_trays+1 = reboiler/sump. Explicit Euler with
automatic substepping keeps the stiffest stage stable; total and
component mole balances are exact to float roundoff by construction.

Units: time min, flows kmol/min, holdups kmol, duties kW, latent heat
kJ/kmol, temperatures degC, compositions methanol mole fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import thermo
from ._kernels import _integrate, _relax_to_steady


class IntegrationError(RuntimeError):
    """A substep produced a negative holdup; dt too large or absurd inputs."""


class ConvergenceError(RuntimeError):
    """init_steady failed to reach the residual tolerance within budget."""


@dataclass(frozen=True)
class ColumnConfig:
    n_trays: int = 10
    feed_tray: int = 3  # 1-based tray index, counted from the top
    pressure_kpa: float = 101.325
    tray_holdup_nominal: float = 0.75
    tray_hydraulic_tau: float = 0.3  # min; holdup-deviation relaxation
    drum_capacity: float = 6.0
    sump_capacity: float = 6.0
    drum_setpoint_pct: float = 50.0
    sump_setpoint_pct: float = 50.0
    latent_heat_light: float = 35300.0
    latent_heat_heavy: float = 40700.0
    heat_capacity_light: float = 81.0  # kJ/kmol/K, liquid
    heat_capacity_heavy: float = 75.3
    feed_temperature_c: float = 64.0  # subcooled feed condenses vapor at the feed tray
    ambient_temperature_c: float = 25.0
    murphree_efficiency: float = 1.0
    steam_meter_offset_kw: float = 0.0  # true reboiler duty = indicated + offset
    thermometer_stages: tuple[int, ...] = (0, 2, 4, 6, 8, 11)
    temp_range_c: tuple[float, float] = (55.0, 110.0)
    feed_range: tuple[float, float] = (0.0, 2.0)
    steam_range_kw: tuple[float, float] = (0.0, 3000.0)
    reflux_range: tuple[float, float] = (0.0, 4.0)
    top_product_range: tuple[float, float] = (0.0, 2.0)
    u_range_kw_per_k: tuple[float, float] = (0.0, 20.0)
    z_range: tuple[float, float] = (0.40, 1.0)
    # nominal operating point: observer initial condition and controller biases
    nominal_u_top: float = 2.0
    nominal_u_bot: float = 2.0
    nominal_z: float = 0.80
    nominal_feed: float = 1.0
    nominal_steam_kw: float = 1470.0
    nominal_reflux: float = 1.0

    def __post_init__(self):
        if not 1 <= self.feed_tray <= self.n_trays:
            raise ValueError(f"feed_tray {self.feed_tray} outside 1..{self.n_trays}")
        if self.feed_tray < 2:
            raise ValueError("feed_tray must leave at least one rectifying tray")
        stages = self.thermometer_stages
        if len(set(stages)) != len(stages):
            raise ValueError("thermometer stages must be distinct")
        if any(not 0 <= s <= self.n_trays + 1 for s in stages):
            raise ValueError(f"thermometer stage outside 0..{self.n_trays + 1}")
        for cap in (self.tray_holdup_nominal, self.drum_capacity, self.sump_capacity):
            if cap <= 0:
                raise ValueError("holdups and capacities must be positive")

    @property
    def n_stages(self) -> int:
        return self.n_trays + 2

    def nominal_params(self) -> "ParamVector":
        return ParamVector(self.nominal_u_top, self.nominal_u_bot, self.nominal_z)

    def nominal_mv(self) -> "MVInput":
        return MVInput(
            feed_flow=self.nominal_feed,
            steam_flow=self.nominal_steam_kw,
            reflux_flow=self.nominal_reflux,
        )


@dataclass(frozen=True)
class ParamVector:
    """Adjustable simulator parameters: section heat-loss coefficients
    (kW/K) and feed methanol mole fraction."""

    u_top: float
    u_bot: float
    z_feed: float

    def clamped(self, cfg: ColumnConfig) -> "ParamVector":
        ulo, uhi = cfg.u_range_kw_per_k
        zlo, zhi = cfg.z_range
        return ParamVector(
            u_top=min(max(self.u_top, ulo), uhi),
            u_bot=min(max(self.u_bot, ulo), uhi),
            z_feed=min(max(self.z_feed, zlo), zhi),
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.u_top, self.u_bot, self.z_feed])

    @staticmethod
    def from_array(a) -> "ParamVector":
        return ParamVector(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class MVInput:
    feed_flow: float
    steam_flow: float
    reflux_flow: float
    distillate_draw: float = 0.0
    bottoms_draw: float = 0.0

    def __post_init__(self):
        for name in ("feed_flow", "steam_flow", "reflux_flow", "distillate_draw", "bottoms_draw"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")


@dataclass
class ColumnState:
    """Holdups/compositions per stage plus derived bubble-point temperatures
    and equilibrium vapor compositions; clock in minutes."""

    holdup: np.ndarray
    x: np.ndarray
    temp: np.ndarray
    y_eq: np.ndarray
    clock: float = 0.0

    def copy(self) -> "ColumnState":
        return ColumnState(
            self.holdup.copy(), self.x.copy(), self.temp.copy(), self.y_eq.copy(), self.clock
        )

    def drum_level_pct(self, cfg: ColumnConfig) -> float:
        return 100.0 * self.holdup[0] / cfg.drum_capacity

    def sump_level_pct(self, cfg: ColumnConfig) -> float:
        return 100.0 * self.holdup[-1] / cfg.sump_capacity


@dataclass(frozen=True)
class NoiseModel:
    temp_std_c: float = 0.0
    flow_std_pct: float = 0.0

    @staticmethod
    def none() -> "NoiseModel":
        return NoiseModel(0.0, 0.0)


@dataclass(frozen=True)
class SensorFrame:
    """Observable boundary: 6 stage temperatures (degC) and 4 flows in
    percent of range (feed, reboiler steam, reflux, top product)."""

    t: float
    temps: np.ndarray
    flows_pct: np.ndarray


@dataclass
class StepAudit:
    """Cumulative boundary flows for conservation checks, kmol."""

    moles_in: float = 0.0
    moles_out: float = 0.0
    light_in: float = 0.0
    light_out: float = 0.0


@dataclass(frozen=True)
class InitResult:
    state: ColumnState
    distillate: float
    bottoms: float
    residual: float
    substeps: int


class ColumnModel:
    """Config-bound simulator; all operations are deterministic and leave
    their input state untouched."""

    def __init__(self, config: ColumnConfig):
        self.config = config
        self.curve = thermo.bubble_point_curve(config.pressure_kpa)
        self.step_counter = 0  # instrumentation: total step() calls
        c = self.curve
        self._grid_t = np.ascontiguousarray(c._grid_t)
        self._p_mmhg = c._p_mmhg
        lp = c.light
        self._ant_l = (lp.A, lp.B, lp.C)

    def _kernel_args(self, params: ParamVector, mv: MVInput):
        """Scalar bundle shared by the compiled integrator entry points."""
        cfg = self.config
        z = params.z_feed
        cp_feed = z * cfg.heat_capacity_light + (1.0 - z) * cfg.heat_capacity_heavy
        duty = max(mv.steam_flow + cfg.steam_meter_offset_kw, 0.0)
        a, b, c = self._ant_l
        return (
            self._grid_t, a, b, c, self._p_mmhg,
            cfg.n_trays, cfg.feed_tray,
            cfg.latent_heat_light, cfg.latent_heat_heavy,
            cfg.ambient_temperature_c, cfg.murphree_efficiency,
            params.u_top, params.u_bot, z, cp_feed, cfg.feed_temperature_c,
            mv.feed_flow, duty, mv.reflux_flow,
        )

    # -- state derivation ---------------------------------------------------

    def derive_stage(self, state: ColumnState) -> ColumnState:
        """Refresh T_i and y_i from x_i (bubble point at column pressure)."""
        out = state.copy()
        out.temp = np.asarray(self.curve.temperature(out.x))
        out.y_eq = np.asarray(self.curve.vapor_composition(out.x, out.temp))
        return out

    def make_state(self, holdup, x, clock: float = 0.0) -> ColumnState:
        s = ColumnState(
            np.asarray(holdup, dtype=float).copy(),
            np.asarray(x, dtype=float).copy(),
            np.zeros(self.config.n_stages),
            np.zeros(self.config.n_stages),
            clock,
        )
        if s.holdup.shape != (self.config.n_stages,) or s.x.shape != (self.config.n_stages,):
            raise ValueError("holdup/x must have one entry per stage")
        return self.derive_stage(s)

    # -- dynamics -----------------------------------------------------------

    def _substep_bound(self, min_holdup: float, mv: MVInput) -> float:
        cfg = self.config
        v_est = (mv.steam_flow + max(cfg.steam_meter_offset_kw, 0.0)) * 60.0 / cfg.latent_heat_light
        liq_est = mv.reflux_flow + mv.feed_flow + v_est  # condensate joins the liquid
        thr = max(v_est + liq_est + mv.distillate_draw + mv.bottoms_draw, 0.5)
        return 0.1 * max(min_holdup, 1e-3) / thr

    def step(
        self,
        state: ColumnState,
        mv: MVInput,
        params: ParamVector,
        dt: float,
        audit: StepAudit | None = None,
    ) -> ColumnState:
        """Advance the column by dt minutes under fixed MVs and parameters."""
        if dt <= 0.0:
            raise ValueError(f"dt must be positive, got {dt!r}")
        cfg = self.config
        p = params.clamped(cfg)
        bound = self._substep_bound(float(state.holdup.min()), mv)
        n_sub = min(max(int(math.ceil(dt / bound)), 1), 20000)
        dts = dt / n_sub

        m = state.holdup.copy()
        x = state.x.copy()
        audit4 = np.zeros(4)
        status = _integrate(
            m, x, n_sub, dts, audit4,
            *self._kernel_args(p, mv),
            mv.distillate_draw, mv.bottoms_draw,
            cfg.drum_capacity, cfg.sump_capacity,
            cfg.tray_hydraulic_tau, cfg.tray_holdup_nominal,
        )
        if status != 0:
            raise IntegrationError(
                f"negative holdup at stage {status - 1} "
                f"(t={state.clock:.1f} min, n_sub={n_sub})"
            )
        if audit is not None:
            audit.moles_in += audit4[0]
            audit.moles_out += audit4[1]
            audit.light_in += audit4[2]
            audit.light_out += audit4[3]

        self.step_counter += 1
        out = ColumnState(m, x, np.empty(0), np.empty(0), state.clock + dt)
        out.temp = np.asarray(self.curve.temperature(x))
        out.y_eq = np.asarray(self.curve.vapor_composition(x, out.temp))
        return out

    def init_steady(
        self,
        params: ParamVector,
        mv: MVInput,
        tol: float = 1e-8,
        max_substeps: int = 2_000_000,
        guess: ColumnState | None = None,
    ) -> InitResult:
        """Relax to the steady state with balance-exact (ideal) product draws.

        Drum and sump start at their level setpoints and stay there because
        the ideal draws close the balances each substep; tray compositions
        relax until the normalized state rate falls below tol (1/min).
        Deterministic: fixed iteration sequence for given inputs. The
        relaxation runs a larger substep than step(): only the fixed point
        matters, and the explicit-Euler fixed point is dt-independent.
        """
        cfg = self.config
        p = params.clamped(cfg)
        n = cfg.n_trays
        if guess is not None:
            m = guess.holdup.copy()
            x = guess.x.copy()
        else:
            m = np.full(cfg.n_stages, cfg.tray_holdup_nominal)
            m[0] = cfg.drum_capacity * cfg.drum_setpoint_pct / 100.0
            m[n + 1] = cfg.sump_capacity * cfg.sump_setpoint_pct / 100.0
            x = np.full(cfg.n_stages, p.z_feed)

        dts = 5.0 * self._substep_bound(float(m.min()), mv)
        scale = np.maximum(m, cfg.tray_holdup_nominal)
        status, residual, done, d_draw, b_draw = _relax_to_steady(
            m, x, dts, tol, max_substeps, scale,
            *self._kernel_args(p, mv),
            cfg.drum_capacity, cfg.sump_capacity,
            cfg.tray_hydraulic_tau, cfg.tray_holdup_nominal,
        )
        if status == 2:
            raise IntegrationError("negative holdup during steady-state relaxation")
        if status == 1:
            raise ConvergenceError(
                f"no steady state within {max_substeps} substeps "
                f"(residual {residual:.3g}, tol {tol:g})"
            )
        # drum/sump levels do not enter the composition fixed point; pin
        # them to their setpoints so episodes start trim
        m[0] = cfg.drum_capacity * cfg.drum_setpoint_pct / 100.0
        m[n + 1] = cfg.sump_capacity * cfg.sump_setpoint_pct / 100.0
        state = ColumnState(m, x, np.empty(0), np.empty(0), 0.0)
        state.temp = np.asarray(self.curve.temperature(x))
        state.y_eq = np.asarray(self.curve.vapor_composition(x, state.temp))
        return InitResult(state, d_draw, b_draw, residual, done)

    # -- observation boundary ------------------------------------------------

    def read_sensors(
        self,
        state: ColumnState,
        mv: MVInput,
        noise: NoiseModel | None = None,
        rng: np.random.Generator | None = None,
    ) -> SensorFrame:
        """Thermometer and flow readings; Gaussian noise when a model is given."""
        cfg = self.config
        temps = state.temp[list(cfg.thermometer_stages)].astype(float).copy()

        def pct(v, rng_pair):
            lo, hi = rng_pair
            return 100.0 * (v - lo) / (hi - lo)

        flows = np.array(
            [
                pct(mv.feed_flow, cfg.feed_range),
                pct(mv.steam_flow, cfg.steam_range_kw),
                pct(mv.reflux_flow, cfg.reflux_range),
                pct(mv.distillate_draw, cfg.top_product_range),
            ]
        )
        if noise is not None and (noise.temp_std_c > 0.0 or noise.flow_std_pct > 0.0):
            if rng is None:
                raise ValueError("rng required for a noisy sensor read")
            temps = temps + rng.normal(0.0, noise.temp_std_c, size=temps.shape)
            flows = flows + rng.normal(0.0, noise.flow_std_pct, size=flows.shape)
        flows = np.clip(flows, -10.0, 110.0)
        return SensorFrame(t=state.clock, temps=temps, flows_pct=flows)

    def lab_sample(self, state: ColumnState, stream: str, params: ParamVector) -> float:
        """Offline-analysis purity of a stream, mole-% methanol."""
        if stream == "feed":
            return 100.0 * params.z_feed
        if stream == "top":
            return 100.0 * float(state.x[0])
        if stream == "bottom":
            return 100.0 * float(state.x[-1])
        raise ValueError(f"unknown stream {stream!r}; expected feed|top|bottom")
