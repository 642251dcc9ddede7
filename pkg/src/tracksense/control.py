"""Regulatory control layer: positional PID, level loops, cascade switch.

The same PID primitive serves the drum/sump level loops that keep the
column operable and the residual-driven parameter adjuster baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace


@dataclass(frozen=True)
class PidState:
    """Positional PID with output clamping and conditional anti-windup.

    Derivative acts on the process variable (not the error) so setpoint
    steps do not kick the output. `bias` is the manual-reset/feedforward
    term the P/I/D contributions ride on.
    """

    kp: float
    ki: float = 0.0
    kd: float = 0.0
    lo: float = 0.0
    hi: float = 1.0
    bias: float = 0.0
    integral: float = 0.0
    prev_pv: float | None = None
    mode: str = "auto"  # auto | manual
    manual_output: float = 0.0

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"output limits must satisfy lo < hi, got [{self.lo}, {self.hi}]")
        if self.mode not in ("auto", "manual"):
            raise ValueError(f"mode must be 'auto' or 'manual', got {self.mode!r}")


def pid_step(pid: PidState, sv: float, pv: float, dt: float) -> tuple[float, PidState]:
    """One controller evaluation; returns (clamped output, new state)."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    if pid.mode == "manual":
        out = min(max(pid.manual_output, pid.lo), pid.hi)
        return out, replace(pid, prev_pv=pv)

    e = sv - pv
    p_term = pid.kp * e
    d_term = 0.0 if pid.prev_pv is None else -pid.kd * (pv - pid.prev_pv) / dt
    i_cand = pid.integral + pid.ki * e * dt
    raw = pid.bias + p_term + i_cand + d_term
    # Conditional integration: freeze the integral when it would push the
    # output further into saturation.
    if (raw > pid.hi and pid.ki * e > 0.0) or (raw < pid.lo and pid.ki * e < 0.0):
        i_new = pid.integral
    else:
        i_new = i_cand
    out = min(max(pid.bias + p_term + i_new + d_term, pid.lo), pid.hi)
    return out, replace(pid, integral=i_new, prev_pv=pv)


@dataclass(frozen=True)
class LevelLoopConfig:
    """Gains for one level-to-draw loop; kp/ki are negative (direct action:
    level above setpoint opens the draw)."""

    kp: float = -0.015
    ki: float = -0.003
    setpoint_pct: float = 50.0
    draw_lo: float = 0.0
    draw_hi: float = 2.5


def make_level_pid(cfg: LevelLoopConfig, bias: float) -> PidState:
    return PidState(kp=cfg.kp, ki=cfg.ki, kd=0.0, lo=cfg.draw_lo, hi=cfg.draw_hi, bias=bias)


def regulatory_step(
    levels: tuple[float, float],
    setpoints: tuple[float, float],
    pid_states: tuple[PidState, PidState],
    dt: float,
) -> tuple[tuple[float, float], tuple[PidState, PidState]]:
    """Drum/sump level regulation; returns ((distillate, bottoms) draws, states)."""
    drum_pct, sump_pct = levels
    sv_d, sv_b = setpoints
    d_draw, pid_d = pid_step(pid_states[0], sv_d, drum_pct, dt)
    b_draw, pid_b = pid_step(pid_states[1], sv_b, sump_pct, dt)
    return (max(d_draw, 0.0), max(b_draw, 0.0)), (pid_d, pid_b)


@dataclass(frozen=True)
class CascadeSwitch:
    """Threshold trigger with hysteresis flipping a named loop auto<->manual.

    One discrete mode change fires when the trigger crosses `threshold`
    upward; the loop reverts when the trigger falls back below
    `threshold - hysteresis`. Oscillation inside the band produces no
    events.
    """

    loop: str
    threshold: float
    hysteresis: float = 1.0
    tripped: bool = False
    events: int = 0

    def __post_init__(self):
        if self.hysteresis < 0.0:
            raise ValueError("hysteresis must be non-negative")


def cascade_switch(
    switch: CascadeSwitch,
    trigger: float,
    loops: dict[str, PidState],
) -> tuple[CascadeSwitch, dict[str, PidState], bool]:
    """Evaluate the trigger; returns (switch', loops', switched_this_call)."""
    switched = False
    tripped = switch.tripped
    if not tripped and trigger > switch.threshold:
        tripped, switched = True, True
    elif tripped and trigger < switch.threshold - switch.hysteresis:
        tripped, switched = False, True
    if not switched:
        return switch, loops, False
    new_switch = replace(switch, tripped=tripped, events=switch.events + 1)
    new_loops = dict(loops)
    if switch.loop in new_loops:
        pid = new_loops[switch.loop]
        new_loops[switch.loop] = replace(pid, mode="manual" if tripped else "auto")
    return new_switch, new_loops, True
