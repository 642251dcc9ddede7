"""Compiled inner loops for the column integrator.

Plain-float stage arithmetic arranged for numba; falls back to the same
Python code objects when numba is unavailable (slow but identical math).
Bubble-point temperatures come from a uniform-grid linear interpolant
whose knots the thermo module solves by bisection.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a hard speed dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@njit(cache=True)
def _bubble_t(x_val, grid_t):
    """Linear interpolation on the uniform composition grid."""
    n1 = grid_t.shape[0] - 1
    xx = min(max(x_val, 0.0), 1.0)
    pos = xx * n1
    i = int(pos)
    if i >= n1:
        i = n1 - 1
    w = pos - i
    return grid_t[i] * (1.0 - w) + grid_t[i + 1] * w


@njit(cache=True)
def _availability(level_frac):
    return min(max((level_frac - 0.05) / 0.10, 0.0), 1.0)


@njit(cache=True)
def _rates(
    m, x, dm, dmx,
    grid_t, ant_a, ant_b, ant_c, p_mmhg,
    n, f_tray,
    lam_l, lam_h, t_amb, eff,
    u_top, u_bot, z, cp_feed, t_feed_c,
    feed, duty, reflux_mv, d_mv, b_mv,
    drum_cap, sump_cap, tau, m_nom, ideal_draws,
):
    """Stage derivatives with exact telescoping balances.

    Writes dm/dmx in place; returns (d_draw, b_draw).
    """
    n_stage = n + 2
    temp = np.empty(n_stage)
    y_eq = np.empty(n_stage)
    for i in range(n_stage):
        t_i = _bubble_t(x[i], grid_t)
        temp[i] = t_i
        psat = 10.0 ** (ant_a - ant_b / (ant_c + t_i))
        y = x[i] * psat / p_mmhg
        y_eq[i] = min(max(y, 0.0), 1.0)

    # reboiler vapor, cut back if the sump is running dry
    y_reb = y_eq[n + 1]
    lam_reb = y_reb * lam_l + (1.0 - y_reb) * lam_h
    v_reb = duty * 60.0 / lam_reb * _availability(m[n + 1] / sump_cap)

    share_top = 1.0 / (f_tray - 1)
    share_bot = 1.0 / (n + 1 - f_tray)

    # vapor cascade bottom-up with heat-loss / feed-subcool condensation
    v_out = np.empty(n_stage)
    y_out = np.empty(n_stage)
    cond = np.zeros(n_stage)
    v_out[n + 1] = v_reb
    y_out[n + 1] = y_reb
    for i in range(n, 0, -1):
        v_in = v_out[i + 1]
        y_in = y_out[i + 1]
        u_i = u_top * share_top if i < f_tray else u_bot * share_bot
        dt_amb = temp[i] - t_amb
        lam_in = y_in * lam_l + (1.0 - y_in) * lam_h
        c = u_i * dt_amb * 60.0 / lam_in if dt_amb > 0.0 else 0.0
        if i == f_tray:
            dt_feed = temp[i] - t_feed_c
            if dt_feed > 0.0:
                c += feed * cp_feed * dt_feed / lam_in
        if c > v_in:
            c = v_in
        cond[i] = c
        v_out[i] = v_in - c
        y_out[i] = y_in + eff * (y_eq[i] - y_in) if v_in > 0.0 else y_eq[i]

    # liquid cascade top-down: pass inflow through, relax holdup deviation
    reflux = reflux_mv * _availability(m[0] / drum_cap)
    l_out = np.empty(n_stage)
    l_out[0] = reflux
    for i in range(1, n + 1):
        inflow = l_out[i - 1] + cond[i] + (feed if i == f_tray else 0.0)
        liq = inflow + (m[i] - m_nom) / tau
        l_out[i] = liq if liq > 0.0 else 0.0

    if ideal_draws == 1:
        d_draw = max(v_out[1] - reflux, 0.0)
        b_draw = max(l_out[n] - v_reb, 0.0)
    else:
        d_draw = d_mv * _availability(m[0] / drum_cap)
        b_draw = b_mv * _availability(m[n + 1] / sump_cap)

    dm[0] = v_out[1] - reflux - d_draw
    dmx[0] = v_out[1] * y_out[1] - (reflux + d_draw) * x[0]
    for i in range(1, n + 1):
        f_i = feed if i == f_tray else 0.0
        l_in = l_out[i - 1]
        dm[i] = l_in + f_i + cond[i] - l_out[i]
        dmx[i] = (
            l_in * x[i - 1]
            + f_i * z
            + v_out[i + 1] * y_out[i + 1]
            - l_out[i] * x[i]
            - v_out[i] * y_out[i]
        )
    dm[n + 1] = l_out[n] - v_reb - b_draw
    dmx[n + 1] = l_out[n] * x[n] - v_reb * y_out[n + 1] - b_draw * x[n + 1]
    return d_draw, b_draw


@njit(cache=True)
def _integrate(
    m, x, n_sub, dts, audit,
    grid_t, ant_a, ant_b, ant_c, p_mmhg,
    n, f_tray,
    lam_l, lam_h, t_amb, eff,
    u_top, u_bot, z, cp_feed, t_feed_c,
    feed, duty, reflux_mv, d_mv, b_mv,
    drum_cap, sump_cap, tau, m_nom,
):
    """Explicit-Euler substeps in place; audit accumulates boundary flows.

    Returns 0 on success, or (stage index + 1) whose holdup went negative.
    """
    n_stage = n + 2
    dm = np.empty(n_stage)
    dmx = np.empty(n_stage)
    for _ in range(n_sub):
        d_draw, b_draw = _rates(
            m, x, dm, dmx,
            grid_t, ant_a, ant_b, ant_c, p_mmhg,
            n, f_tray, lam_l, lam_h, t_amb, eff,
            u_top, u_bot, z, cp_feed, t_feed_c,
            feed, duty, reflux_mv, d_mv, b_mv,
            drum_cap, sump_cap, tau, m_nom, 0,
        )
        audit[0] += dts * feed
        audit[1] += dts * (d_draw + b_draw)
        audit[2] += dts * feed * z
        audit[3] += dts * (d_draw * x[0] + b_draw * x[n + 1])
        for i in range(n_stage):
            mx_i = m[i] * x[i] + dts * dmx[i]
            m_i = m[i] + dts * dm[i]
            if m_i < 0.0:
                return i + 1
            x_i = mx_i / m_i if m_i > 1e-12 else x[i]
            m[i] = m_i
            x[i] = min(max(x_i, 0.0), 1.0)
    return 0


@njit(cache=True)
def _relax_to_steady(
    m, x, dts, tol, max_substeps, scale,
    grid_t, ant_a, ant_b, ant_c, p_mmhg,
    n, f_tray,
    lam_l, lam_h, t_amb, eff,
    u_top, u_bot, z, cp_feed, t_feed_c,
    feed, duty, reflux_mv,
    drum_cap, sump_cap, tau, m_nom,
):
    """Relax with balance-exact draws until the normalized rate is < tol.

    Returns (status, residual, substeps, d_draw, b_draw); status 0 =
    converged, 1 = budget exhausted, 2 = negative holdup.
    """
    n_stage = n + 2
    dm = np.empty(n_stage)
    dmx = np.empty(n_stage)
    done = 0
    residual = 1e300
    d_draw = 0.0
    b_draw = 0.0
    while done < max_substeps:
        for _ in range(200):
            _rates(
                m, x, dm, dmx,
                grid_t, ant_a, ant_b, ant_c, p_mmhg,
                n, f_tray, lam_l, lam_h, t_amb, eff,
                u_top, u_bot, z, cp_feed, t_feed_c,
                feed, duty, reflux_mv, 0.0, 0.0,
                drum_cap, sump_cap, tau, m_nom, 1,
            )
            for i in range(n_stage):
                mx_i = m[i] * x[i] + dts * dmx[i]
                m_i = m[i] + dts * dm[i]
                if m_i < 0.0:
                    return 2, residual, done, d_draw, b_draw
                x_i = mx_i / m_i if m_i > 1e-12 else x[i]
                m[i] = m_i
                x[i] = min(max(x_i, 0.0), 1.0)
        done += 200
        d_draw, b_draw = _rates(
            m, x, dm, dmx,
            grid_t, ant_a, ant_b, ant_c, p_mmhg,
            n, f_tray, lam_l, lam_h, t_amb, eff,
            u_top, u_bot, z, cp_feed, t_feed_c,
            feed, duty, reflux_mv, 0.0, 0.0,
            drum_cap, sump_cap, tau, m_nom, 1,
        )
        residual = 0.0
        for i in range(n_stage):
            dx_i = abs(dmx[i] - x[i] * dm[i]) / max(m[i], 1e-12)
            dm_i = abs(dm[i]) / scale[i]
            if dx_i > residual:
                residual = dx_i
            if dm_i > residual:
                residual = dm_i
        if residual < tol:
            return 0, residual, done, d_draw, b_draw
    return 1, residual, done, d_draw, b_draw
