import numpy as np
import pytest

from tracksense import historian, scenario
from tracksense.column import ColumnConfig, MVInput, NoiseModel, ParamVector, StepAudit
from tracksense.scenario import (
    FeedPuritySpec,
    RainSpec,
    ScenarioSpec,
    constant_timeline,
    generate_timeline,
    run_plant_episode,
)


def test_same_seed_identical_timelines():
    spec = ScenarioSpec(seed=7)
    a = generate_timeline(spec)
    b = generate_timeline(spec)
    for name in ("u_top", "u_bot", "z_feed", "feed", "steam", "reflux"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert a.rain_steps == b.rain_steps and a.z_events == b.z_events


def test_zero_rain_probability_constant_u():
    spec = ScenarioSpec(seed=3, rain=RainSpec(probability=0.0))
    tl = generate_timeline(spec)
    assert np.ptp(tl.u_top) == 0.0
    assert np.ptp(tl.u_bot) == 0.0
    assert tl.rain_steps == []


def test_rain_event_abrupt_and_reverting():
    spec = ScenarioSpec(seed=11, rain=RainSpec(probability=1.0))
    tl = generate_timeline(spec)
    assert len(tl.rain_steps) == 1
    start, dur = tl.rain_steps[0]
    base = tl.u_top[0]
    assert tl.u_top[start] > 2.0 * base  # single-step multiplicative jump
    assert tl.u_top[start - 1] == base
    if start + dur < len(tl):
        assert tl.u_top[start + dur] == base  # reverts


def test_rain_event_frequency_statistics():
    # deterministic empirical frequency over a fixed seed set
    spec = ScenarioSpec(rain=RainSpec(probability=0.3))
    hits = 0
    for seed in range(1000):
        tl = generate_timeline(ScenarioSpec(seed=seed, rain=RainSpec(probability=0.3)))
        hits += bool(tl.rain_steps)
    assert 0.27 <= hits / 1000 <= 0.33


def test_feed_purity_within_clamp():
    for seed in range(50):
        tl = generate_timeline(ScenarioSpec(seed=seed))
        lo, hi = FeedPuritySpec().clamp
        assert tl.z_feed.min() >= lo and tl.z_feed.max() <= hi


def test_constant_timeline_with_step():
    cfg = ColumnConfig()
    tl = constant_timeline(100, cfg.nominal_params(), cfg.nominal_mv(), z_step=(40, 0.06))
    assert tl.z_feed[39] == cfg.nominal_z
    assert tl.z_feed[40] == pytest.approx(cfg.nominal_z + 0.06)
    assert tl.z_events == [40]


@pytest.fixture(scope="module")
def quiet_episode_setup():
    cfg = ColumnConfig()
    spec = ScenarioSpec(seed=0, steps=120, noise=NoiseModel.none())
    tl = constant_timeline(120, cfg.nominal_params(), cfg.nominal_mv())
    audit = StepAudit()
    ep = run_plant_episode(tl, cfg, spec, np.random.default_rng(0), audit=audit)
    return cfg, tl, ep, audit


def test_steady_plant_flat_sensors(quiet_episode_setup):
    _, _, ep, _ = quiet_episode_setup
    sens = ep.sensor_matrix()
    tail = sens[-100:]
    assert tail.std(axis=0).max() < 0.01


def test_episode_truth_equals_timeline(quiet_episode_setup):
    _, tl, ep, _ = quiet_episode_setup
    truth = ep.truth_matrix()
    assert np.array_equal(truth[:, 0], tl.u_top)
    assert np.array_equal(truth[:, 1], tl.u_bot)
    assert np.array_equal(truth[:, 2], tl.z_feed)


def test_episode_conservation(quiet_episode_setup):
    # cumulative (in - out) equals holdup change: checked via the audit the
    # stepper itself accumulated plus endpoint states is not available here,
    # so assert in/out totals are consistent with a steady plant
    _, _, ep, audit = quiet_episode_setup
    assert audit.moles_in > 0
    assert abs(audit.moles_in - audit.moles_out) / audit.moles_in < 0.02


def test_lab_samples_match_truth(quiet_episode_setup):
    cfg, tl, ep, _ = quiet_episode_setup
    feed_labs = ep.labs_for("feed")
    assert len(feed_labs) == 10  # every 12 steps of 120
    for lab in feed_labs:
        k = int(lab.t / 5.0)
        assert lab.purity_pct == pytest.approx(100 * tl.z_feed[k], abs=1e-12)


def test_levels_stay_regulated(quiet_episode_setup):
    # draws in the record imply the level loops held; re-run checking levels
    cfg = ColumnConfig()
    spec = ScenarioSpec(seed=5, steps=200)
    tl = generate_timeline(spec)
    ep = run_plant_episode(tl, cfg, spec, np.random.default_rng(5))
    draws = ep.mv_matrix()[:, 3]
    assert np.all(draws >= 0)
    assert draws[-50:].std() < 0.2


def test_seed_determinism_end_to_end():
    cfg = ColumnConfig()
    spec = ScenarioSpec(seed=42, steps=60, noise=NoiseModel(0.3, 0.5))
    eps = []
    for _ in range(2):
        tl = generate_timeline(spec)
        eps.append(run_plant_episode(tl, cfg, spec, np.random.default_rng(spec.seed)))
    assert historian.episodes_equal(eps[0], eps[1])


def test_rain_event_drops_top_section_temperatures():
    cfg = ColumnConfig()
    spec = ScenarioSpec(seed=1, steps=80, noise=NoiseModel.none())
    k_rain = 40
    tl = constant_timeline(80, cfg.nominal_params(), cfg.nominal_mv())
    tl.u_top[k_rain:] *= 5.0
    tl.u_bot[k_rain:] *= 5.0
    ep = run_plant_episode(tl, cfg, spec, np.random.default_rng(1))
    sens = ep.sensor_matrix()
    before = sens[k_rain, :6]
    after = sens[k_rain + 3, :6]
    assert after[1] < before[1] - 0.1  # an upper-column temperature drops within 3 steps


def test_feed_step_raises_distillate_purity():
    cfg = ColumnConfig()
    spec = ScenarioSpec(seed=2, steps=140, noise=NoiseModel.none())
    tl = constant_timeline(140, ParamVector(2.0, 2.0, 0.70), cfg.nominal_mv(), z_step=(60, 0.10))
    ep = run_plant_episode(tl, cfg, spec, np.random.default_rng(2))
    top_labs = ep.labs_for("top")
    before = [lab.purity_pct for lab in top_labs if lab.t <= 55 * 5.0][-1]
    after = [lab.purity_pct for lab in top_labs if lab.t >= 130 * 5.0][-1]
    assert after > before + 1.0


def test_cascade_scenario_runs_and_logs_events():
    cfg = ColumnConfig()
    spec = ScenarioSpec(seed=3, steps=100, cascade_enabled=True, cascade_threshold_c=2.0)
    tl = constant_timeline(100, cfg.nominal_params(), cfg.nominal_mv(), z_step=(30, 0.12))
    ep = run_plant_episode(tl, cfg, spec, np.random.default_rng(3))
    assert "cascade_switch_events" in ep.meta.extras
    assert len(ep) == 100


def test_make_pool_distinct_and_deterministic():
    cfg = ColumnConfig()
    spec = ScenarioSpec(seed=9, steps=40)
    pool_a = scenario.make_pool(spec, cfg, 3)
    pool_b = scenario.make_pool(spec, cfg, 3)
    for a, b in zip(pool_a, pool_b):
        assert historian.episodes_equal(a, b)
    assert not np.array_equal(pool_a[0].truth_matrix(), pool_a[1].truth_matrix())
