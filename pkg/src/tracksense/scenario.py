"""Domain-randomized scenario generation and target-plant episode production.

A timeline draws the true parameter trajectory (heat-loss coefficients
with abrupt rain multipliers, feed purity with steps and ramps) plus the
operator MV schedule; run_plant_episode integrates the plant closed-loop
under level control and records a historian episode. The "real plant"
analog is the same simulator class with Murphree efficiency mismatch,
sensor noise, and its own timeline distribution.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import control, historian
from .column import ColumnConfig, ColumnModel, MVInput, NoiseModel, ParamVector, StepAudit

DT_CONTROL = 5.0  # min


@dataclass(frozen=True)
class RainSpec:
    probability: float = 0.35  # per-episode chance of one event
    multiplier_range: tuple[float, float] = (3.0, 6.0)
    duration_range: tuple[int, int] = (6, 24)  # control steps
    section_jitter: tuple[float, float] = (0.85, 1.2)


@dataclass(frozen=True)
class FeedPuritySpec:
    base_range: tuple[float, float] = (0.62, 0.93)
    max_steps: int = 2  # step events per episode
    step_size_range: tuple[float, float] = (0.04, 0.12)
    ramp_probability: float = 0.3  # a step becomes a ramp
    ramp_length_range: tuple[int, int] = (6, 18)
    clamp: tuple[float, float] = (0.60, 0.95)


@dataclass(frozen=True)
class MVScheduleSpec:
    feed_range: tuple[float, float] = (0.85, 1.15)
    steam_range: tuple[float, float] = (1350.0, 1600.0)
    reflux_range: tuple[float, float] = (0.85, 1.15)
    max_moves: int = 2  # setpoint step moves per episode
    move_fraction: tuple[float, float] = (0.92, 1.08)


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int = 0
    steps: int = 288
    u_base_range: tuple[float, float] = (1.4, 2.8)
    feed: FeedPuritySpec = field(default_factory=FeedPuritySpec)
    rain: RainSpec = field(default_factory=RainSpec)
    mv: MVScheduleSpec = field(default_factory=MVScheduleSpec)
    noise: NoiseModel = field(default_factory=NoiseModel.none)
    murphree_efficiency: float = 1.0  # plant-mismatch knob (twin uses < 1)
    lab_every: int = 12  # control steps between lab samples
    lab_noise_pct: float = 0.0
    cascade_enabled: bool = False
    cascade_threshold_c: float = 3.0  # |T_reb - sv| trip level
    cascade_hysteresis_c: float = 1.5


@dataclass
class ParamTimeline:
    """Per-step true parameters and MV schedule, plus event markers."""

    u_top: np.ndarray
    u_bot: np.ndarray
    z_feed: np.ndarray
    feed: np.ndarray
    steam: np.ndarray
    reflux: np.ndarray
    rain_steps: list[tuple[int, int]] = field(default_factory=list)  # (start, duration)
    z_events: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.z_feed)

    def params_at(self, k: int) -> ParamVector:
        return ParamVector(float(self.u_top[k]), float(self.u_bot[k]), float(self.z_feed[k]))


def generate_timeline(spec: ScenarioSpec, rng: np.random.Generator | None = None) -> ParamTimeline:
    """Draw one randomized timeline; deterministic for a given spec seed."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    n = spec.steps

    u_top = np.full(n, rng.uniform(*spec.u_base_range))
    u_bot = np.full(n, rng.uniform(*spec.u_base_range))
    rain_steps: list[tuple[int, int]] = []
    if rng.uniform() < spec.rain.probability and n > 20:
        start = int(rng.integers(10, n - 10))
        duration = int(rng.integers(spec.rain.duration_range[0], spec.rain.duration_range[1] + 1))
        mult = rng.uniform(*spec.rain.multiplier_range)
        j_top, j_bot = rng.uniform(*spec.rain.section_jitter, size=2)
        stop = min(start + duration, n)
        u_top[start:stop] *= mult * j_top
        u_bot[start:stop] *= mult * j_bot
        rain_steps.append((start, stop - start))

    z = np.full(n, rng.uniform(*spec.feed.base_range))
    z_events: list[int] = []
    n_events = int(rng.integers(0, spec.feed.max_steps + 1))
    for _ in range(n_events):
        if n <= 30:
            break
        at = int(rng.integers(10, n - 10))
        size = rng.uniform(*spec.feed.step_size_range) * rng.choice([-1.0, 1.0])
        if rng.uniform() < spec.feed.ramp_probability:
            length = int(rng.integers(spec.feed.ramp_length_range[0], spec.feed.ramp_length_range[1] + 1))
            stop = min(at + length, n)
            z[at:stop] += np.linspace(size / (stop - at), size, stop - at)
            z[stop:] += size
        else:
            z[at:] += size
        z_events.append(at)
    np.clip(z, *spec.feed.clamp, out=z)

    feed = np.full(n, rng.uniform(*spec.mv.feed_range))
    steam = np.full(n, rng.uniform(*spec.mv.steam_range))
    reflux = np.full(n, rng.uniform(*spec.mv.reflux_range))
    n_moves = int(rng.integers(0, spec.mv.max_moves + 1))
    for _ in range(n_moves):
        if n <= 30:
            break
        at = int(rng.integers(10, n - 10))
        target = [feed, steam, reflux][int(rng.integers(0, 3))]
        target[at:] *= rng.uniform(*spec.mv.move_fraction)

    return ParamTimeline(u_top, u_bot, z, feed, steam, reflux, rain_steps, z_events)


def constant_timeline(
    steps: int,
    params: ParamVector,
    mv: MVInput,
    z_step: tuple[int, float] | None = None,
) -> ParamTimeline:
    """Flat timeline for probes/tests, with an optional single feed-purity step."""
    z = np.full(steps, params.z_feed)
    if z_step is not None:
        at, size = z_step
        z[at:] += size
    return ParamTimeline(
        np.full(steps, params.u_top),
        np.full(steps, params.u_bot),
        z,
        np.full(steps, mv.feed_flow),
        np.full(steps, mv.steam_flow),
        np.full(steps, mv.reflux_flow),
        [],
        [at] if z_step is not None else [],
    )


def run_plant_episode(
    timeline: ParamTimeline,
    column_config: ColumnConfig,
    spec: ScenarioSpec,
    rng: np.random.Generator,
    episode_id: str = "plant",
    config_hash: str = "",
    audit: StepAudit | None = None,
) -> historian.Episode:
    """Integrate the target plant closed-loop and record its episode.

    The plant starts at its own steady state for the timeline's first
    point; drum/sump level PIDs set the product draws; lab samples of the
    feed and top streams land every spec.lab_every steps.
    """
    cfg = replace(column_config, murphree_efficiency=spec.murphree_efficiency)
    model = ColumnModel(cfg)
    n = len(timeline)

    mv0 = MVInput(float(timeline.feed[0]), float(timeline.steam[0]), float(timeline.reflux[0]))
    init = model.init_steady(timeline.params_at(0), mv0)
    state = init.state

    loop_cfg = control.LevelLoopConfig()
    pid_d = control.make_level_pid(loop_cfg, bias=init.distillate)
    pid_b = control.make_level_pid(loop_cfg, bias=init.bottoms)
    setpoints = (cfg.drum_setpoint_pct, cfg.sump_setpoint_pct)

    # optional steam cascade: a reboiler-temperature PID drives steam until a
    # large deviation trips it to manual (a discrete plant-state change)
    steam_pid = control.PidState(
        kp=40.0, ki=8.0, lo=cfg.steam_range_kw[0], hi=cfg.steam_range_kw[1],
        bias=float(timeline.steam[0]), manual_output=float(timeline.steam[0]),
    )
    switch = control.CascadeSwitch(
        loop="steam", threshold=spec.cascade_threshold_c, hysteresis=spec.cascade_hysteresis_c
    )
    t_reb_sv = float(state.temp[-1])

    meta = historian.EpisodeMeta(
        episode_id=episode_id,
        seed=spec.seed,
        config_hash=config_hash,
        dt_control=DT_CONTROL,
        sensor_ranges={
            "temp_c": list(cfg.temp_range_c),
            "feed": list(cfg.feed_range),
            "steam_kw": list(cfg.steam_range_kw),
            "reflux": list(cfg.reflux_range),
            "top_product": list(cfg.top_product_range),
        },
        extras={"murphree_efficiency": spec.murphree_efficiency},
    )
    episode = historian.Episode(meta)
    switch_events = 0

    for k in range(n):
        t = k * DT_CONTROL
        params = timeline.params_at(k)
        levels = (state.drum_level_pct(cfg), state.sump_level_pct(cfg))
        (d_draw, b_draw), (pid_d, pid_b) = control.regulatory_step(
            levels, setpoints, (pid_d, pid_b), DT_CONTROL
        )
        steam_sp = float(timeline.steam[k])
        if spec.cascade_enabled:
            trigger = abs(float(state.temp[-1]) - t_reb_sv)
            switch, loops, flipped = cascade_switch_step(switch, trigger, steam_pid)
            steam_pid = loops
            switch_events += flipped
            if steam_pid.mode == "auto":
                steam_mv, steam_pid = control.pid_step(steam_pid, t_reb_sv, float(state.temp[-1]), DT_CONTROL)
            else:
                steam_mv = steam_sp
        else:
            steam_mv = steam_sp
        mv = MVInput(
            feed_flow=float(timeline.feed[k]),
            steam_flow=steam_mv,
            reflux_flow=float(timeline.reflux[k]),
            distillate_draw=d_draw,
            bottoms_draw=b_draw,
        )
        frame = model.read_sensors(state, mv, spec.noise, rng)
        labs = ()
        if k % spec.lab_every == 0:
            feed_pur = model.lab_sample(state, "feed", params)
            top_pur = model.lab_sample(state, "top", params)
            if spec.lab_noise_pct > 0.0:
                feed_pur += float(rng.normal(0.0, spec.lab_noise_pct))
                top_pur += float(rng.normal(0.0, spec.lab_noise_pct))
            labs = (
                historian.LabSample(t, "feed", feed_pur),
                historian.LabSample(t, "top", top_pur),
            )
        episode.record(t, mv, frame, labs=labs, truth=params)
        state = model.step(state, mv, params, DT_CONTROL, audit)

    if spec.cascade_enabled:
        episode.meta.extras["cascade_switch_events"] = switch_events
    return episode


def cascade_switch_step(switch, trigger, steam_pid):
    """Adapter running the control-module switch over the single steam loop."""
    sw, loops, flipped = control.cascade_switch(switch, trigger, {"steam": steam_pid})
    return sw, loops["steam"], flipped


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """Independent, reproducible child generators for parallel episodes."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def make_pool(
    spec: ScenarioSpec,
    column_config: ColumnConfig,
    count: int,
    id_prefix: str = "sim",
    config_hash: str = "",
) -> list[historian.Episode]:
    """Generate a pool of independent episodes from one scenario family."""
    episodes = []
    seeds = np.random.SeedSequence(spec.seed).spawn(count)
    for i, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        ep_spec = replace(spec, seed=spec.seed + i)
        timeline = generate_timeline(ep_spec, rng)
        episodes.append(
            run_plant_episode(
                timeline,
                column_config,
                ep_spec,
                rng,
                episode_id=f"{id_prefix}-{i:04d}",
                config_hash=config_hash,
            )
        )
    return episodes


def config_hash_of(obj) -> str:
    """Stable short hash of any dataclass/dict-ish config."""
    if hasattr(obj, "__dataclass_fields__"):
        obj = asdict(obj)
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]
