import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracksense.control import (
    CascadeSwitch,
    LevelLoopConfig,
    PidState,
    cascade_switch,
    make_level_pid,
    pid_step,
)


def test_no_error_yields_bias():
    pid = PidState(kp=2.0, ki=0.5, kd=0.1, lo=-10, hi=10, bias=3.0)
    out, _ = pid_step(pid, sv=1.0, pv=1.0, dt=1.0)
    assert out == 3.0


def test_pure_p_closed_form():
    pid = PidState(kp=2.0, lo=-100, hi=100, bias=1.0)
    for e in (-3.0, -0.5, 0.0, 0.7, 4.0):
        out, _ = pid_step(pid, sv=e, pv=0.0, dt=1.0)
        assert out == pytest.approx(1.0 + 2.0 * e, abs=1e-15)


def test_pure_p_clamps():
    pid = PidState(kp=10.0, lo=-1.0, hi=1.0)
    out, _ = pid_step(pid, sv=5.0, pv=0.0, dt=1.0)
    assert out == 1.0
    out, _ = pid_step(pid, sv=-5.0, pv=0.0, dt=1.0)
    assert out == -1.0


def test_step_response_matches_discrete_closed_form():
    # Pure-integrator plant x' = u, sampled at dt; independently re-simulated
    # with the textbook positional form.
    kp, ki, kd, dt = 0.8, 0.3, 0.2, 0.5
    sv = 1.0
    pid = PidState(kp=kp, ki=ki, kd=kd, lo=-1e9, hi=1e9)

    x = 0.0
    x_ref = 0.0
    integral = 0.0
    prev_pv = None
    for _ in range(200):
        u, pid = pid_step(pid, sv, x, dt)
        x = x + u * dt

        e = sv - x_ref
        integral += ki * e * dt
        d = 0.0 if prev_pv is None else -kd * (x_ref - prev_pv) / dt
        u_ref = kp * e + integral + d
        prev_pv = x_ref
        x_ref = x_ref + u_ref * dt

        assert abs(x - x_ref) < 1e-9


def test_manual_mode_returns_manual_output():
    pid = PidState(kp=5.0, ki=1.0, lo=0.0, hi=10.0, mode="manual", manual_output=4.2, integral=2.0)
    out, new = pid_step(pid, sv=100.0, pv=0.0, dt=1.0)
    assert out == 4.2
    assert new.integral == 2.0  # frozen in manual


@settings(max_examples=50, deadline=None)
@given(
    sv=st.floats(-100, 100),
    pv=st.floats(-100, 100),
    kp=st.floats(0, 10),
    ki=st.floats(0, 5),
)
def test_output_always_clamped(sv, pv, kp, ki):
    pid = PidState(kp=kp, ki=ki, lo=-2.0, hi=2.0)
    out, pid = pid_step(pid, sv, pv, 1.0)
    assert -2.0 <= out <= 2.0


def test_antiwindup_bounds_integral_under_saturation():
    pid = PidState(kp=1.0, ki=1.0, lo=0.0, hi=1.0)
    for _ in range(1000):
        out, pid = pid_step(pid, sv=100.0, pv=0.0, dt=1.0)
        assert out == 1.0
    assert abs(pid.integral) < 10.0  # halted, not 1e5


def test_invalid_limits_and_dt():
    with pytest.raises(ValueError):
        PidState(kp=1.0, lo=1.0, hi=1.0)
    pid = PidState(kp=1.0)
    with pytest.raises(ValueError):
        pid_step(pid, 0.0, 0.0, 0.0)


def test_regulatory_sign_convention():
    from tracksense.control import regulatory_step

    cfg = LevelLoopConfig()
    pid_d = make_level_pid(cfg, bias=0.8)
    pid_b = make_level_pid(cfg, bias=0.2)

    # at setpoint: draws equal bias
    (d, b), (pid_d, pid_b) = regulatory_step((50.0, 50.0), (50.0, 50.0), (pid_d, pid_b), 5.0)
    assert d == pytest.approx(0.8)
    assert b == pytest.approx(0.2)

    # drum level above setpoint -> distillate draw increases vs bias
    (d2, _), _ = regulatory_step((60.0, 50.0), (50.0, 50.0), (pid_d, pid_b), 5.0)
    assert d2 > 0.8


def test_cascade_no_change_below_threshold():
    sw = CascadeSwitch(loop="steam", threshold=10.0, hysteresis=2.0)
    loops = {"steam": PidState(kp=1.0, lo=0, hi=1)}
    sw, loops, switched = cascade_switch(sw, 5.0, loops)
    assert not switched
    assert sw.events == 0
    assert loops["steam"].mode == "auto"


def test_cascade_single_upward_crossing():
    sw = CascadeSwitch(loop="steam", threshold=10.0, hysteresis=2.0)
    loops = {"steam": PidState(kp=1.0, lo=0, hi=1)}
    events = 0
    for trig in (5.0, 9.9, 10.5, 11.0, 12.0, 10.1):
        sw, loops, switched = cascade_switch(sw, trig, loops)
        events += switched
    assert events == 1
    assert sw.events == 1
    assert loops["steam"].mode == "manual"


def test_cascade_hysteresis_band_suppresses_chatter():
    # Scripted trigger oscillating inside (threshold - hysteresis, threshold]
    sw = CascadeSwitch(loop="steam", threshold=10.0, hysteresis=2.0)
    loops = {"steam": PidState(kp=1.0, lo=0, hi=1)}
    rng = np.random.default_rng(3)
    for _ in range(200):
        trig = rng.uniform(8.1, 9.99)
        sw, loops, switched = cascade_switch(sw, float(trig), loops)
        assert not switched
    assert sw.events == 0


def test_cascade_full_cycle_two_events():
    sw = CascadeSwitch(loop="steam", threshold=10.0, hysteresis=2.0)
    loops = {"steam": PidState(kp=1.0, lo=0, hi=1)}
    for trig in (11.0, 9.0, 7.9):
        sw, loops, _ = cascade_switch(sw, trig, loops)
    assert sw.events == 2
    assert loops["steam"].mode == "auto"
