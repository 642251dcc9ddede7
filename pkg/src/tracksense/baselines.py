"""Baseline adjusters: residual-driven PID bank and supervised regressor.

The PID adjuster is the classical tracking-simulation scheme: each output
residual drives one simulator parameter through its own controller
(top-section temperatures -> u_top, bottom-section -> u_bot, top product
flow -> z_feed). It doubles as the behavior policy that generates the
historian data offline policy training consumes. The supervised baseline
regresses parameters pointwise from a single sensor frame and never runs
the simulator during estimation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .agent import (
    N_TRACKED,
    EstimateSeries,
    ObservationBuilder,
    PPOConfig,
    TrackingSession,
    tracked_vector,
)
from .column import ColumnConfig, ColumnModel, MVInput, ParamVector, SensorFrame
from .historian import Episode, EpisodeMeta, LabSample


@dataclass(frozen=True)
class PidAdjusterGains:
    """Integral-form gains: each call returns a bounded parameter delta.

    Signs: simulator top temperature above the plant's -> raise u_top
    (more top-section condensation cools it); same for the bottom pair;
    simulator top-product flow above the plant's -> lower z_feed (the
    distillate rate rises with feed purity).
    """

    ku_top: float = 0.35  # kW/K per percent of temperature residual
    ku_bot: float = 0.35
    kz: float = 0.004  # mole fraction per percent of flow residual
    kz_temp: float = 0.0  # optional temperature assist on the feed section
    delta_bounds: tuple[float, ...] = (2.0, 2.0, 0.02)


@dataclass
class PidAdjusterState:
    gains: PidAdjusterGains
    top_idx: tuple[int, ...] = (0, 1)
    bot_idx: tuple[int, ...] = (2, 3, 4, 5)
    flow_idx: int = 6


def make_pid_adjuster(column_cfg: ColumnConfig, gains: PidAdjusterGains | None = None) -> PidAdjusterState:
    """Residual->parameter pairings from the thermometer layout: sensors on
    stages above the feed tray drive u_top, the rest drive u_bot."""
    top = tuple(
        i for i, s in enumerate(column_cfg.thermometer_stages) if s < column_cfg.feed_tray
    )
    bot = tuple(
        i for i, s in enumerate(column_cfg.thermometer_stages) if s >= column_cfg.feed_tray
    )
    return PidAdjusterState(gains or PidAdjusterGains(), top_idx=top or (0,), bot_idx=bot or (5,))


def pid_adjuster_step(adj: PidAdjusterState, residual: np.ndarray) -> np.ndarray:
    """One bounded delta from the tracked-sensor residual (sim - plant)."""
    g = adj.gains
    e_top = float(np.mean(residual[list(adj.top_idx)]))
    e_bot = float(np.mean(residual[list(adj.bot_idx)]))
    e_flow = float(residual[adj.flow_idx])
    d_u_top = g.ku_top * e_top
    d_u_bot = g.ku_bot * e_bot
    d_z = -g.kz * e_flow + g.kz_temp * e_bot
    b = g.delta_bounds
    return np.array(
        [
            min(max(d_u_top, -b[0]), b[0]),
            min(max(d_u_bot, -b[1]), b[1]),
            min(max(d_z, -b[2]), b[2]),
        ]
    )


def pid_track_episode(
    episode: Episode,
    column_cfg: ColumnConfig,
    gains: PidAdjusterGains | None = None,
    session: TrackingSession | None = None,
    record_behavior: bool = False,
) -> tuple[EstimateSeries, Episode | None]:
    """Track a recorded episode with the PID adjuster.

    With record_behavior=True also returns a copy of the episode carrying
    the adjuster-action trace (offline training data).
    """
    if session is None:
        session = TrackingSession(column_cfg)
    cfg = session.cfg
    adj = make_pid_adjuster(cfg, gains)
    dt = episode.meta.dt_control
    session.reset()

    behavior = None
    if record_behavior:
        behavior = Episode(
            EpisodeMeta(
                episode_id=episode.meta.episode_id + "-pid",
                seed=episode.meta.seed,
                config_hash=episode.meta.config_hash,
                dt_control=dt,
                sensor_ranges=dict(episode.meta.sensor_ranges),
                extras={**episode.meta.extras, "behavior_policy": "pid_adjuster"},
            )
        )

    T = len(episode)
    t_l, p_l, top_l, x_l, ss_l, ps_l = [], [], [], [], [], []
    for k in range(T):
        plant_mv, s_plant, labs = episode.replay(k)
        s_hat = session.begin_step(plant_mv)
        residual = tracked_vector(s_hat, cfg) - tracked_vector(s_plant, cfg)
        delta = pid_adjuster_step(adj, residual)
        params = session.apply_delta(delta)
        if behavior is not None:
            truth = episode.truth[k] if episode.truth else None
            behavior.record(k * dt, plant_mv, s_plant, labs=labs, truth=truth, adjuster_action=delta)
        t_l.append(k * dt)
        p_l.append(params.as_array())
        top_l.append(100.0 * float(session.state.x[0]))
        x_l.append(session.state.x.copy())
        ss_l.append(tracked_vector(s_hat, cfg))
        ps_l.append(tracked_vector(s_plant, cfg))
        if k < T - 1:
            session.advance(dt)
    series = EstimateSeries(
        np.array(t_l), np.array(p_l), np.array(top_l), np.array(x_l), np.array(ss_l), np.array(ps_l)
    )
    return series, behavior
