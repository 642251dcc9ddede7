"""Reinforcement-learned parameter adjuster and the tracking loop it drives.

The adjuster watches the target plant's MVs and sensors alongside its own
simulator's outputs and internal state, and nudges the simulator's
parameter vector (heat-loss coefficients, feed purity) by bounded deltas
each control step so simulator outputs track the plant. The per-step
reward is the negative weighted sum of absolute sensor residuals in
percent-of-range units; the per-sensor weights renormalize periodically
toward sensors whose residuals are easiest to shrink. Training is PPO,
either online against freshly simulated targets or offline from historian
episodes that carry a recorded adjuster-action trace, with per-sample
updates skipped when the policy/behavior log-ratio is extreme.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import control, nn
from .column import ColumnConfig, ColumnModel, ColumnState, MVInput, ParamVector, SensorFrame
from .historian import Episode

SNAPSHOT_VERSION = 1
N_TRACKED = 7  # 6 stage temperatures + top product flow
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PPOConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 8
    minibatch: int = 128
    lr_policy: float = 3e-4
    lr_value: float = 1e-3
    entropy_coef: float = 0.0
    # per-parameter |delta| caps: 10% of the u range, 0.02 mole fraction
    delta_bounds: tuple[float, ...] = (2.0, 2.0, 0.02)
    log_ratio_skip: float = 20.0
    weight_update_period: int = 10  # policy updates between weight refreshes
    episodes_per_update: int = 4
    log_std_init: tuple[float, ...] | float = -0.7
    log_std_bounds: tuple[float, float] = (-5.0, 1.0)
    hidden: tuple[int, ...] = (64, 64)
    advantage_norm: bool = True

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if self.clip_eps <= 0.0:
            raise ValueError("clip_eps must be positive")
        if self.log_ratio_skip <= math.log(1.0 + self.clip_eps):
            raise ValueError("skip threshold must exceed the clip-relevant range")


# -- reward and weights -------------------------------------------------------


def tracked_vector(frame: SensorFrame, cfg: ColumnConfig) -> np.ndarray:
    """The sensors the adjuster equalizes, in percent-of-range units:
    the six stage temperatures and the top product flow."""
    lo, hi = cfg.temp_range_c
    temps_pct = 100.0 * (frame.temps - lo) / (hi - lo)
    return np.concatenate([temps_pct, frame.flows_pct[3:4]])


def reward(s_plant: np.ndarray, s_sim: np.ndarray, alpha: np.ndarray) -> float:
    """Negative weighted absolute residual; zero only on a perfect match."""
    s_plant = np.asarray(s_plant, dtype=float)
    s_sim = np.asarray(s_sim, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if s_plant.shape != s_sim.shape or s_plant.shape != alpha.shape:
        raise ValueError("sensor/weight length mismatch")
    return -float(np.sum(alpha * np.abs(s_sim - s_plant)))


def update_weights(sq_residuals: np.ndarray) -> np.ndarray:
    """Recompute sensor weights from a (K, n) history of squared residuals.

    Each step's residual energy is split into per-sensor fractions (an
    all-zero step counts uniformly); a sensor's weight is the normalized
    complement of its mean fraction, so easily-matched sensors gain weight.
    Degenerate cases (single sensor, zero total) fall back to uniform.
    """
    sq = np.asarray(sq_residuals, dtype=float)
    if sq.ndim != 2 or sq.shape[0] < 1:
        raise ValueError("need a (K, n) residual history with K >= 1")
    k, n = sq.shape
    tot = sq.sum(axis=1, keepdims=True)
    frac = np.where(tot > 0.0, sq / np.where(tot > 0.0, tot, 1.0), 1.0 / n)
    beta = 1.0 - frac.mean(axis=0)
    s = beta.sum()
    if s <= 0.0:
        return np.full(n, 1.0 / n)
    return beta / s


class RewardWeights:
    """Current sensor weights plus the residual history feeding refreshes."""

    def __init__(self, n_sensors: int = N_TRACKED, history_cap: int = 8192):
        self.alpha = np.full(n_sensors, 1.0 / n_sensors)
        self.history: deque[np.ndarray] = deque(maxlen=history_cap)

    def note_residuals(self, sq_matrix: np.ndarray) -> None:
        for row in np.atleast_2d(sq_matrix):
            self.history.append(np.asarray(row, dtype=float))

    def refresh(self) -> np.ndarray:
        if self.history:
            self.alpha = update_weights(np.stack(self.history))
            self.history.clear()
        if abs(self.alpha.sum() - 1.0) > 1e-12 or np.any(self.alpha < 0.0):
            raise RuntimeError(f"weight invariant violated: {self.alpha}")
        return self.alpha


# -- observation --------------------------------------------------------------


class ObservationBuilder:
    """Fixed-layout observation: previous parameter estimate, simulator and
    plant sensor frames, shared MVs, and the last four simulator
    composition profiles, each block normalized to its physical range."""

    def __init__(self, cfg: ColumnConfig):
        self.cfg = cfg
        n_x = cfg.n_stages
        blocks = [
            ("a_hat_prev", 3),
            ("s_hat", 10),
            ("a", 4),
            ("s", 10),
            ("x_hat_t", n_x),
            ("x_hat_tm1", n_x),
            ("x_hat_tm2", n_x),
            ("x_hat_tm3", n_x),
        ]
        self.layout: dict[str, tuple[int, int]] = {}
        off = 0
        for name, width in blocks:
            self.layout[name] = (off, off + width)
            off += width
        self.dim = off
        ulo, uhi = cfg.u_range_kw_per_k
        zlo, zhi = cfg.z_range
        self._p_lo = np.array([ulo, ulo, zlo])
        self._p_span = np.array([uhi - ulo, uhi - ulo, zhi - zlo])
        self._mv_span = np.array(
            [cfg.feed_range[1], cfg.steam_range_kw[1], cfg.reflux_range[1], cfg.top_product_range[1]]
        )
        self._t_lo, t_hi = cfg.temp_range_c
        self._t_span = t_hi - self._t_lo

    def _frame_block(self, frame: SensorFrame) -> np.ndarray:
        return np.concatenate(
            [(frame.temps - self._t_lo) / self._t_span, frame.flows_pct / 100.0]
        )

    def build(
        self,
        a_hat_prev: np.ndarray,
        s_hat: SensorFrame,
        mv: MVInput,
        s_plant: SensorFrame,
        x_lags,
    ) -> np.ndarray:
        """x_lags: iterable of 4 composition profiles, newest first."""
        lags = list(x_lags)
        if len(lags) != 4:
            raise ValueError("need exactly 4 composition lags (newest first)")
        a_block = (np.asarray(a_hat_prev) - self._p_lo) / self._p_span
        mv_block = (
            np.array([mv.feed_flow, mv.steam_flow, mv.reflux_flow, mv.distillate_draw])
            / self._mv_span
        )
        obs = np.concatenate(
            [a_block, self._frame_block(s_hat), mv_block, self._frame_block(s_plant), *lags]
        ) - 0.5
        if not np.all(np.isfinite(obs)):
            raise ValueError("non-finite observation")
        return obs


# -- policy -------------------------------------------------------------------


class GaussianPolicy:
    """Diagonal Gaussian over normalized parameter deltas: mean from an MLP,
    state-independent log-std vector."""

    def __init__(self, mean_net: nn.Mlp, log_std: np.ndarray, delta_bounds, log_std_bounds=(-5.0, 1.0)):
        self.mean_net = mean_net
        self.log_std = np.asarray(log_std, dtype=float).copy()
        self.delta_bounds = np.asarray(delta_bounds, dtype=float)
        self.log_std_bounds = log_std_bounds
        if self.log_std.shape != (mean_net.layer_sizes[-1],):
            raise ValueError("log_std length must match the action dimension")

    @property
    def action_dim(self) -> int:
        return self.mean_net.layer_sizes[-1]

    def log_prob(self, obs: np.ndarray, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(log-probs, means) for a batch of normalized (pre-clamp) actions."""
        obs = np.atleast_2d(obs)
        actions = np.atleast_2d(actions)
        mu = self.mean_net.forward(obs)
        sigma = np.exp(self.log_std)
        zscore = (actions - mu) / sigma
        lp = -0.5 * (zscore**2).sum(axis=1) - self.log_std.sum() - 0.5 * self.action_dim * LOG_2PI
        return lp, mu

    def entropy(self) -> float:
        return float(self.log_std.sum() + 0.5 * self.action_dim * (1.0 + LOG_2PI))

    def act(self, obs: np.ndarray, mode: str = "sample", rng: np.random.Generator | None = None):
        """Returns (physical delta, raw normalized action, log-prob).

        The raw action is the pre-clamp Gaussian sample (its log-prob is
        exact); the physical delta is the raw action clamped to [-1, 1]
        and scaled by the per-parameter bounds.
        """
        mu = self.mean_net.forward(obs)
        if not np.all(np.isfinite(mu)):
            raise ValueError("non-finite policy mean")
        if mode == "mean":
            raw = mu.copy()
        elif mode == "sample":
            if rng is None:
                raise ValueError("rng required for sampling")
            raw = mu + np.exp(self.log_std) * rng.standard_normal(self.action_dim)
        else:
            raise ValueError(f"mode must be sample|mean, got {mode!r}")
        zscore = (raw - mu) / np.exp(self.log_std)
        lp = float(
            -0.5 * (zscore**2).sum() - self.log_std.sum() - 0.5 * self.action_dim * LOG_2PI
        )
        delta = np.clip(raw, -1.0, 1.0) * self.delta_bounds
        return delta, raw, lp


def policy_act(policy: GaussianPolicy, obs, mode: str = "sample", rng=None):
    """Public acting surface: (bounded physical delta, log-prob)."""
    delta, _, lp = policy.act(obs, mode, rng)
    return delta, lp


# -- rollout buffer -----------------------------------------------------------


class RolloutBuffer:
    """Transition store; advantages/returns are computed at finalize time
    and never reused stale."""

    def __init__(self):
        self.obs: list[np.ndarray] = []
        self.actions: list[np.ndarray] = []
        self.log_probs: list[float] = []
        self.rewards: list[float] = []
        self.values: list[float] = []
        self.dones: list[bool] = []
        self._segments: list[tuple[int, int, float, bool]] = []  # start, stop, bootstrap, terminal

    def __len__(self) -> int:
        return len(self.obs)

    @property
    def n_segments(self) -> int:
        return len(self._segments)

    def add_segment(self, obs, actions, log_probs, rewards, values, bootstrap_value, terminal):
        start = len(self.obs)
        self.obs.extend(obs)
        self.actions.extend(actions)
        self.log_probs.extend(log_probs)
        self.rewards.extend(rewards)
        self.values.extend(values)
        self.dones.extend([False] * (len(obs) - 1) + [True])
        self._segments.append((start, len(self.obs), float(bootstrap_value), bool(terminal)))
        if not (len(self.obs) == len(self.actions) == len(self.log_probs) == len(self.rewards) == len(self.values)):
            raise ValueError("inconsistent segment column lengths")

    def finalize(self, gamma: float, lam: float) -> dict:
        """Compute GAE advantages/returns; returns dense training arrays."""
        adv = np.zeros(len(self.obs))
        for start, stop, bootstrap, terminal in self._segments:
            next_value = 0.0 if terminal else bootstrap
            running = 0.0
            for i in range(stop - 1, start - 1, -1):
                delta = self.rewards[i] + gamma * next_value - self.values[i]
                running = delta + gamma * lam * running
                adv[i] = running
                next_value = self.values[i]
        values = np.array(self.values)
        return {
            "obs": np.array(self.obs),
            "actions": np.array(self.actions),
            "log_probs": np.array(self.log_probs),
            "advantages": adv,
            "returns": adv + values,
            "values": values,
        }


# -- PPO update ---------------------------------------------------------------


@dataclass
class TrainerState:
    policy: GaussianPolicy
    value_net: nn.Mlp
    adam_policy: nn.AdamState
    adam_log_std: nn.AdamState
    adam_value: nn.AdamState


def make_trainer(obs_dim: int, cfg: PPOConfig, rng: np.random.Generator, action_dim: int | None = None) -> TrainerState:
    action_dim = action_dim if action_dim is not None else len(cfg.delta_bounds)
    sizes = [obs_dim, *cfg.hidden, action_dim]
    if np.isscalar(cfg.log_std_init):
        log_std0 = np.full(action_dim, float(cfg.log_std_init))
    else:
        log_std0 = np.asarray(cfg.log_std_init, dtype=float)[:action_dim]
    policy = GaussianPolicy(
        nn.Mlp(sizes, rng=rng),
        log_std0,
        cfg.delta_bounds[:action_dim] if action_dim <= len(cfg.delta_bounds) else np.ones(action_dim),
        cfg.log_std_bounds,
    )
    value_net = nn.Mlp([obs_dim, *cfg.hidden, 1], rng=rng, out_gain=1.0)
    return TrainerState(
        policy,
        value_net,
        nn.AdamState.fresh(policy.mean_net.n_params(), lr=cfg.lr_policy),
        nn.AdamState.fresh(action_dim, lr=cfg.lr_policy),
        nn.AdamState.fresh(value_net.n_params(), lr=cfg.lr_value),
    )


def ppo_update(data: dict, trainer: TrainerState, cfg: PPOConfig, rng: np.random.Generator) -> dict:
    """Clipped-surrogate update with the extreme-log-ratio skip rule.

    Samples whose |log ratio| exceeds cfg.log_ratio_skip contribute zero
    gradient; a non-finite loss or parameter aborts the update and
    restores the previous parameters.
    """
    policy, value_net = trainer.policy, trainer.value_net
    n = len(data["obs"])
    if n == 0:
        raise ValueError("empty rollout buffer")
    adv = data["advantages"]
    if cfg.advantage_norm and n > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    saved = (
        policy.mean_net.params.copy(),
        policy.log_std.copy(),
        value_net.params.copy(),
        trainer.adam_policy,
        trainer.adam_log_std,
        trainer.adam_value,
    )

    stats = {"skipped": 0, "samples": 0, "policy_loss": 0.0, "value_loss": 0.0,
             "approx_kl": 0.0, "aborted": False, "minibatches": 0}
    try:
        for _ in range(cfg.epochs):
            order = rng.permutation(n)
            for lo in range(0, n, cfg.minibatch):
                idx = order[lo : lo + cfg.minibatch]
                obs_mb = data["obs"][idx]
                act_mb = data["actions"][idx]
                lp_old = data["log_probs"][idx]
                adv_mb = adv[idx]
                ret_mb = data["returns"][idx]

                lp, mu = policy.log_prob(obs_mb, act_mb)
                delta_lp = lp - lp_old
                keep = np.abs(delta_lp) <= cfg.log_ratio_skip
                ratio = np.exp(np.minimum(delta_lp, 700.0))
                n_keep = int(keep.sum())
                stats["skipped"] += int((~keep).sum())
                stats["samples"] += len(idx)

                sigma_sq = np.exp(2.0 * policy.log_std)
                unclipped = (adv_mb >= 0) & (ratio <= 1.0 + cfg.clip_eps) | (
                    adv_mb < 0
                ) & (ratio >= 1.0 - cfg.clip_eps)
                coef = np.where(keep & unclipped, -adv_mb * ratio, 0.0) / max(n_keep, 1)

                surr = np.minimum(ratio * adv_mb, np.clip(ratio, 1 - cfg.clip_eps, 1 + cfg.clip_eps) * adv_mb)
                policy_loss = -float(np.where(keep, surr, 0.0).sum() / max(n_keep, 1))
                if not math.isfinite(policy_loss):
                    raise FloatingPointError("non-finite policy loss")

                diff = act_mb - mu
                upstream_mu = coef[:, None] * diff / sigma_sq
                grad_mean = policy.mean_net.gradient(obs_mb, upstream_mu)
                grad_log_std = (coef[:, None] * (diff**2 / sigma_sq - 1.0)).sum(axis=0)
                grad_log_std -= cfg.entropy_coef  # d(-c*H)/dlog_std = -c

                new_p, trainer.adam_policy = nn.adam_update(
                    policy.mean_net.params, grad_mean, trainer.adam_policy
                )
                policy.mean_net.set_params(new_p)
                new_ls, trainer.adam_log_std = nn.adam_update(
                    policy.log_std, grad_log_std, trainer.adam_log_std
                )
                policy.log_std = np.clip(new_ls, *cfg.log_std_bounds)

                v = value_net.forward(obs_mb)[:, 0]
                v_err = v - ret_mb
                value_loss = float((v_err**2).mean())
                if not math.isfinite(value_loss):
                    raise FloatingPointError("non-finite value loss")
                upstream_v = (2.0 * v_err / len(idx))[:, None]
                grad_v = value_net.gradient(obs_mb, upstream_v)
                new_v, trainer.adam_value = nn.adam_update(
                    value_net.params, grad_v, trainer.adam_value
                )
                value_net.set_params(new_v)

                stats["policy_loss"] = policy_loss
                stats["value_loss"] = value_loss
                stats["approx_kl"] = float(np.mean(lp_old - lp))
                stats["minibatches"] += 1
        for arr in (policy.mean_net.params, policy.log_std, value_net.params):
            if not np.all(np.isfinite(arr)):
                raise FloatingPointError("non-finite parameters after update")
    except (FloatingPointError, ValueError):
        policy.mean_net.set_params(saved[0])
        policy.log_std = saved[1]
        value_net.set_params(saved[2])
        trainer.adam_policy, trainer.adam_log_std, trainer.adam_value = saved[3], saved[4], saved[5]
        stats["aborted"] = True
    stats["skip_rate"] = stats["skipped"] / max(stats["samples"], 1)
    return stats


# -- tracking session ---------------------------------------------------------

_nominal_init_cache: dict = {}


def nominal_init(model: ColumnModel):
    """Memoized observer start: nominal steady state at nominal MVs."""
    key = model.config
    if key not in _nominal_init_cache:
        _nominal_init_cache[key] = model.init_steady(
            model.config.nominal_params(), model.config.nominal_mv()
        )
    return _nominal_init_cache[key]


class TrackingSession:
    """The observer half of the lockstep loop: a clean simulator fed the
    plant's feed/steam/reflux MVs, running its own level loops, with the
    adjuster moving its parameter vector."""

    def __init__(self, column_cfg: ColumnConfig, builder: ObservationBuilder | None = None):
        # the observer's model class is the config as given: Murphree 1.0
        # and zero meter offset unless a probe configures otherwise
        self.cfg = column_cfg
        self.model = ColumnModel(column_cfg)
        self.builder = builder if builder is not None else ObservationBuilder(column_cfg)
        self.state: ColumnState | None = None
        self.reset()

    def reset(self) -> None:
        init = nominal_init(self.model)
        self.state = init.state.copy()
        self.params = self.cfg.nominal_params()
        loop_cfg = control.LevelLoopConfig()
        self._pid_d = control.make_level_pid(loop_cfg, bias=init.distillate)
        self._pid_b = control.make_level_pid(loop_cfg, bias=init.bottoms)
        self._x_lags = deque([self.state.x.copy()] * 4, maxlen=4)
        self._mv: MVInput | None = None

    def begin_step(self, plant_mv: MVInput) -> SensorFrame:
        """Set this interval's observer MVs (shared feed/steam/reflux, own
        level-control draws) and return the observer's sensor frame."""
        levels = (self.state.drum_level_pct(self.cfg), self.state.sump_level_pct(self.cfg))
        (d_draw, b_draw), (self._pid_d, self._pid_b) = control.regulatory_step(
            levels,
            (self.cfg.drum_setpoint_pct, self.cfg.sump_setpoint_pct),
            (self._pid_d, self._pid_b),
            5.0,
        )
        self._mv = MVInput(
            feed_flow=plant_mv.feed_flow,
            steam_flow=plant_mv.steam_flow,
            reflux_flow=plant_mv.reflux_flow,
            distillate_draw=d_draw,
            bottoms_draw=b_draw,
        )
        return self.model.read_sensors(self.state, self._mv)

    def observation(self, s_hat: SensorFrame, plant_mv: MVInput, s_plant: SensorFrame) -> np.ndarray:
        return self.builder.build(
            self.params.as_array(), s_hat, plant_mv, s_plant, list(self._x_lags)
        )

    def apply_delta(self, delta: np.ndarray) -> ParamVector:
        p = ParamVector.from_array(self.params.as_array() + delta).clamped(self.cfg)
        self.params = p
        return p

    def advance(self, dt: float) -> None:
        self.state = self.model.step(self.state, self._mv, self.params, dt)
        self._x_lags.appendleft(self.state.x.copy())


# -- rollout collection ---------------------------------------------------------


def collect_rollout(
    trainer: TrainerState,
    session: TrackingSession,
    episode: Episode,
    alpha: np.ndarray,
    rng: np.random.Generator | None,
    mode: str = "sample",
):
    """Run the observer in lockstep with a recorded episode.

    Returns (segment dict for the buffer, per-step squared residual
    matrix, mean reward).
    """
    cfg = session.cfg
    dt = episode.meta.dt_control
    session.reset()
    obs_l, act_l, lp_l, rew_l, val_l = [], [], [], [], []
    sq_residuals = []
    bootstrap = 0.0
    T = len(episode)
    prev_open = False
    for k in range(T):
        plant_mv, s_plant, _ = episode.replay(k)
        s_hat = session.begin_step(plant_mv)
        if prev_open:
            r = reward(tracked_vector(s_plant, cfg), tracked_vector(s_hat, cfg), alpha)
            rew_l.append(r)
            sq_residuals.append(
                (tracked_vector(s_hat, cfg) - tracked_vector(s_plant, cfg)) ** 2
            )
        obs = session.observation(s_hat, plant_mv, s_plant)
        if k == T - 1:
            bootstrap = float(trainer.value_net.forward(obs)[0])
            break
        delta, raw, lp = trainer.policy.act(obs, mode, rng)
        session.apply_delta(delta)
        obs_l.append(obs)
        act_l.append(raw)
        lp_l.append(lp)
        val_l.append(float(trainer.value_net.forward(obs)[0]))
        prev_open = True
        session.advance(dt)
    segment = (obs_l, act_l, lp_l, rew_l, val_l, bootstrap, False)
    sq = np.array(sq_residuals) if sq_residuals else np.zeros((0, N_TRACKED))
    mean_reward = float(np.mean(rew_l)) if rew_l else 0.0
    return segment, sq, mean_reward


# -- estimates and snapshots -----------------------------------------------------


@dataclass
class EstimateSeries:
    """Per-step soft-sensor outputs from one tracking run."""

    t: np.ndarray
    params: np.ndarray  # (T, 3) u_top, u_bot, z_feed
    top_purity_pct: np.ndarray  # simulator drum composition
    x_hat: np.ndarray  # (T, n_stages) liquid compositions
    sim_sensors: np.ndarray  # (T, 7) tracked vector of the simulator
    plant_sensors: np.ndarray  # (T, 7) tracked vector of the target

    def feed_purity_pct(self) -> np.ndarray:
        return 100.0 * self.params[:, 2]

    def to_csv(self, path: str | Path) -> None:
        n_x = self.x_hat.shape[1]
        header = (
            ["t", "u_top", "u_bot", "z_feed", "top_purity_pct"]
            + [f"x_{i}" for i in range(n_x)]
            + [f"sim_s{i}" for i in range(N_TRACKED)]
            + [f"plant_s{i}" for i in range(N_TRACKED)]
        )
        rows = np.column_stack(
            [self.t, self.params, self.top_purity_pct, self.x_hat, self.sim_sensors, self.plant_sensors]
        )
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def track_episode(
    trainer: TrainerState,
    episode: Episode,
    column_cfg: ColumnConfig,
    mode: str = "mean",
    rng: np.random.Generator | None = None,
    session: TrackingSession | None = None,
) -> EstimateSeries:
    """Deployed tracking: run the observer against a recorded episode and
    expose its parameter estimates and internal state as the soft sensor."""
    if session is None:
        session = TrackingSession(column_cfg)
    cfg = session.cfg
    dt = episode.meta.dt_control
    session.reset()
    T = len(episode)
    t_l, p_l, top_l, x_l, ss_l, ps_l = [], [], [], [], [], []
    for k in range(T):
        plant_mv, s_plant, _ = episode.replay(k)
        s_hat = session.begin_step(plant_mv)
        obs = session.observation(s_hat, plant_mv, s_plant)
        delta, _, _ = trainer.policy.act(obs, mode, rng)
        params = session.apply_delta(delta)
        t_l.append(k * dt)
        p_l.append(params.as_array())
        top_l.append(100.0 * float(session.state.x[0]))
        x_l.append(session.state.x.copy())
        ss_l.append(tracked_vector(s_hat, cfg))
        ps_l.append(tracked_vector(s_plant, cfg))
        if k < T - 1:
            session.advance(dt)
    return EstimateSeries(
        np.array(t_l), np.array(p_l), np.array(top_l), np.array(x_l), np.array(ss_l), np.array(ps_l)
    )


@dataclass
class TrainingLog:
    episode_rows: list = field(default_factory=list)  # (episode, mean_reward)
    update_rows: list = field(default_factory=list)  # dicts from ppo_update + alpha
    alpha_history: list = field(default_factory=list)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write("episode,mean_reward\n")
            for ep, r in self.episode_rows:
                fh.write(f"{ep},{repr(float(r))}\n")

    def updates_to_csv(self, path: str | Path) -> None:
        cols = ["update", "policy_loss", "value_loss", "approx_kl", "skip_rate", "aborted"]
        with open(path, "w") as fh:
            fh.write(",".join(cols + ["alpha"]) + "\n")
            for i, row in enumerate(self.update_rows):
                alpha = ";".join(repr(float(a)) for a in row["alpha"])
                fh.write(
                    ",".join(
                        [str(i)]
                        + [repr(float(row[c])) if c != "aborted" else str(int(row[c])) for c in cols[1:]]
                    )
                    + f",{alpha}\n"
                )


def save_snapshot(trainer: TrainerState, builder: ObservationBuilder, path: str | Path, provenance: dict | None = None) -> None:
    """Versioned policy snapshot; round-trips bit-exact."""
    blob = {
        "version": SNAPSHOT_VERSION,
        "mean_net": nn.mlp_to_dict(trainer.policy.mean_net),
        "log_std": [v.hex() for v in trainer.policy.log_std],
        "delta_bounds": [float(v) for v in trainer.policy.delta_bounds],
        "value_net": nn.mlp_to_dict(trainer.value_net),
        "obs_layout": {k: list(v) for k, v in builder.layout.items()},
        "provenance": provenance or {},
    }
    Path(path).write_text(json.dumps(blob, indent=1, sort_keys=True))


def load_snapshot(path: str | Path, cfg: PPOConfig | None = None) -> tuple[TrainerState, dict]:
    blob = json.loads(Path(path).read_text())
    if blob.get("version", 0) > SNAPSHOT_VERSION:
        raise ValueError(f"snapshot version {blob['version']} newer than supported")
    cfg = cfg or PPOConfig()
    policy = GaussianPolicy(
        nn.mlp_from_dict(blob["mean_net"]),
        np.array([float.fromhex(h) for h in blob["log_std"]]),
        np.array(blob["delta_bounds"]),
        cfg.log_std_bounds,
    )
    value_net = nn.mlp_from_dict(blob["value_net"])
    trainer = TrainerState(
        policy,
        value_net,
        nn.AdamState.fresh(policy.mean_net.n_params(), lr=cfg.lr_policy),
        nn.AdamState.fresh(policy.action_dim, lr=cfg.lr_policy),
        nn.AdamState.fresh(value_net.n_params(), lr=cfg.lr_value),
    )
    return trainer, blob


# -- training loops ---------------------------------------------------------------


def behavior_clone(
    trainer: TrainerState,
    obs: np.ndarray,
    raw_actions: np.ndarray,
    rng: np.random.Generator,
    epochs: int = 60,
    minibatch: int = 128,
    lr: float = 1e-3,
) -> float:
    """Regress the policy mean onto recorded normalized actions (warm start).

    Returns the final mean-squared fit error.
    """
    obs = np.asarray(obs, dtype=float)
    raw_actions = np.asarray(raw_actions, dtype=float)
    n = len(obs)
    adam = nn.AdamState.fresh(trainer.policy.mean_net.n_params(), lr=lr)
    net = trainer.policy.mean_net
    loss = math.inf
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, minibatch):
            idx = order[lo : lo + minibatch]
            mu = net.forward(obs[idx])
            err = mu - raw_actions[idx]
            grad = net.gradient(obs[idx], 2.0 * err / len(idx))
            new_p, adam = nn.adam_update(net.params, grad, adam)
            net.set_params(new_p)
    loss = float(((net.forward(obs) - raw_actions) ** 2).mean())
    return loss


def train_online(
    make_target,
    n_episodes: int,
    column_cfg: ColumnConfig,
    ppo_cfg: PPOConfig,
    seed: int,
    trainer: TrainerState | None = None,
) -> tuple[TrainerState, TrainingLog]:
    """PPO over live tracking rollouts.

    make_target(i, rng) -> Episode supplies each training target (fresh
    randomized simulations, or a mix with recorded plant episodes). An
    existing trainer (e.g. behavior-cloned) continues training in place.
    """
    ss = np.random.SeedSequence(seed)
    rng_init, rng_act, rng_update, rng_target = [np.random.default_rng(s) for s in ss.spawn(4)]
    builder = ObservationBuilder(column_cfg)
    if trainer is None:
        trainer = make_trainer(builder.dim, ppo_cfg, rng_init)
    session = TrackingSession(column_cfg, builder)
    weights = RewardWeights(N_TRACKED)
    log = TrainingLog()
    log.alpha_history.append(weights.alpha.copy())

    buffer = RolloutBuffer()
    n_updates = 0
    for ep_i in range(n_episodes):
        target = make_target(ep_i, rng_target)
        segment, sq, mean_r = collect_rollout(trainer, session, target, weights.alpha, rng_act)
        buffer.add_segment(*segment)
        weights.note_residuals(sq)
        log.episode_rows.append((ep_i, mean_r))
        if buffer.n_segments >= ppo_cfg.episodes_per_update or ep_i == n_episodes - 1:
            data = buffer.finalize(ppo_cfg.gamma, ppo_cfg.gae_lambda)
            stats = ppo_update(data, trainer, ppo_cfg, rng_update)
            stats["alpha"] = weights.alpha.copy()
            log.update_rows.append(stats)
            buffer = RolloutBuffer()
            n_updates += 1
            if n_updates % ppo_cfg.weight_update_period == 0:
                log.alpha_history.append(weights.refresh().copy())
    log.alpha_history.append(weights.alpha.copy())
    return trainer, log


def reconstruct_offline_rollout(
    episode: Episode,
    session: TrackingSession,
    alpha: np.ndarray,
):
    """Deterministically rebuild the behavior run an adjuster trace encodes.

    Replays the recorded per-step deltas through a fresh observer,
    recovering the observations and rewards the behavior policy saw.
    """
    if not episode.adjuster:
        raise ValueError("offline training needs episodes with an adjuster-action trace")
    cfg = session.cfg
    dt = episode.meta.dt_control
    session.reset()
    bounds = np.asarray(PPOConfig().delta_bounds)
    obs_l, act_l, rew_l = [], [], []
    T = len(episode)
    prev_open = False
    for k in range(T):
        plant_mv, s_plant, _ = episode.replay(k)
        s_hat = session.begin_step(plant_mv)
        if prev_open:
            rew_l.append(reward(tracked_vector(s_plant, cfg), tracked_vector(s_hat, cfg), alpha))
        obs = session.observation(s_hat, plant_mv, s_plant)
        if k == T - 1:
            break
        delta = episode.adjuster[k]
        raw = np.clip(delta / bounds, -1.0, 1.0)
        session.apply_delta(np.asarray(delta, dtype=float))
        obs_l.append(obs)
        act_l.append(raw)
        prev_open = True
        session.advance(dt)
    return np.array(obs_l), np.array(act_l), np.array(rew_l), obs  # final obs for bootstrap


def train_offline(
    episodes: list[Episode],
    column_cfg: ColumnConfig,
    ppo_cfg: PPOConfig,
    seed: int,
    iterations: int = 20,
) -> tuple[TrainerState, TrainingLog]:
    """PPO from historian data: responses come from recorded episodes
    instead of a live simulator; the extreme-ratio skip rule guards the
    off-policy probability ratios."""
    ss = np.random.SeedSequence(seed)
    rng_init, rng_update = [np.random.default_rng(s) for s in ss.spawn(2)]
    builder = ObservationBuilder(column_cfg)
    trainer = make_trainer(builder.dim, ppo_cfg, rng_init)
    session = TrackingSession(column_cfg, builder)
    alpha = np.full(N_TRACKED, 1.0 / N_TRACKED)
    log = TrainingLog()

    rollouts = [reconstruct_offline_rollout(ep, session, alpha) for ep in episodes]

    for _ in range(iterations):
        buffer = RolloutBuffer()
        for obs_arr, act_arr, rew_arr, final_obs in rollouts:
            lp_old, _ = trainer.policy.log_prob(obs_arr, act_arr)
            values = trainer.value_net.forward(obs_arr)[:, 0]
            bootstrap = float(trainer.value_net.forward(final_obs)[0])
            buffer.add_segment(
                list(obs_arr), list(act_arr), list(lp_old), list(rew_arr), list(values),
                bootstrap, False,
            )
        data = buffer.finalize(ppo_cfg.gamma, ppo_cfg.gae_lambda)
        stats = ppo_update(data, trainer, ppo_cfg, rng_update)
        stats["alpha"] = alpha.copy()
        log.update_rows.append(stats)
        if not np.all(np.isfinite(trainer.policy.mean_net.params)):
            raise RuntimeError("non-finite policy parameters in offline training")
    return trainer, log
