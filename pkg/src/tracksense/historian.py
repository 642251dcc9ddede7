"""Episode recording, lossless persistence, and replay.

An episode is one closed-loop run of the target plant: per-step MVs and
sensor frames at a fixed control cadence, sparse lab samples, and (for
simulated plants) the ground-truth parameter trace. Episodes produced by
a tracking adjuster additionally carry the adjuster's per-step action
trace, which is what offline policy training consumes.

On-disk layout: one directory per episode holding `meta` (key=value
text), `steps.csv`, `labs.csv`, and optional `truth.csv` / `adjuster.csv`.
Column orders below are normative; floats are serialized as shortest
round-trip decimals, so write -> read is bit-exact.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .column import MVInput, ParamVector, SensorFrame

SCHEMA_VERSION = 1

STEP_COLUMNS = [
    "t",
    "feed_flow",
    "steam_flow",
    "reflux_flow",
    "distillate_draw",
    "bottoms_draw",
    "temp_0",
    "temp_1",
    "temp_2",
    "temp_3",
    "temp_4",
    "temp_5",
    "flow_pct_0",
    "flow_pct_1",
    "flow_pct_2",
    "flow_pct_3",
]
LAB_COLUMNS = ["t", "stream", "purity_pct"]
TRUTH_COLUMNS = ["t", "u_top", "u_bot", "z_feed"]
ADJUSTER_COLUMNS = ["t", "d_u_top", "d_u_bot", "d_z_feed"]


class SchemaError(ValueError):
    """Episode files do not match the expected schema."""


class VersionError(SchemaError):
    """Episode written by a newer schema than this reader supports."""


@dataclass(frozen=True)
class LabSample:
    t: float
    stream: str  # feed | top | bottom
    purity_pct: float


@dataclass
class EpisodeMeta:
    episode_id: str
    seed: int
    config_hash: str
    dt_control: float = 5.0
    sensor_ranges: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION
    extras: dict = field(default_factory=dict)


class Episode:
    """Time-indexed historian record with strictly uniform step cadence."""

    def __init__(self, meta: EpisodeMeta):
        self.meta = meta
        self.times: list[float] = []
        self.mvs: list[MVInput] = []
        self.frames: list[SensorFrame] = []
        self.labs: list[LabSample] = []
        self.truth: list[ParamVector] = []
        self.adjuster: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self.times)

    def record(
        self,
        t: float,
        mv: MVInput,
        frame: SensorFrame,
        labs: tuple[LabSample, ...] = (),
        truth: ParamVector | None = None,
        adjuster_action=None,
    ) -> None:
        """Append one control step; t must advance by exactly dt_control."""
        if self.times:
            expected = self.times[-1] + self.meta.dt_control
            if t != expected:
                raise ValueError(f"out-of-order step: got t={t}, expected {expected}")
        if self.truth and truth is None:
            raise ValueError("episode carries a truth trace; every step needs one")
        if self.adjuster and adjuster_action is None:
            raise ValueError("episode carries an adjuster trace; every step needs one")
        for lab in labs:
            if lab.t != t:
                raise ValueError(f"lab sample at t={lab.t} attached to step t={t}")
        self.times.append(t)
        self.mvs.append(mv)
        self.frames.append(frame)
        self.labs.extend(labs)
        if truth is not None:
            if len(self.truth) != len(self.times) - 1:
                raise ValueError("truth trace must start at the first step")
            self.truth.append(truth)
        if adjuster_action is not None:
            if len(self.adjuster) != len(self.times) - 1:
                raise ValueError("adjuster trace must start at the first step")
            self.adjuster.append(np.asarray(adjuster_action, dtype=float))

    def replay(self, t_index: int) -> tuple[MVInput, SensorFrame, tuple[LabSample, ...]]:
        """Exact stored values at a step index; labs only if sampled there."""
        if not 0 <= t_index < len(self.times):
            raise IndexError(f"t_index {t_index} outside 0..{len(self.times) - 1}")
        t = self.times[t_index]
        labs = tuple(lab for lab in self.labs if lab.t == t)
        return self.mvs[t_index], self.frames[t_index], labs

    # -- convenience views ----------------------------------------------------

    def sensor_matrix(self) -> np.ndarray:
        """(T, 10) array: 6 temps then 4 flow percents per step."""
        return np.array([np.concatenate([f.temps, f.flows_pct]) for f in self.frames])

    def mv_matrix(self) -> np.ndarray:
        """(T, 5) array in STEP_COLUMNS mv order."""
        return np.array(
            [
                [m.feed_flow, m.steam_flow, m.reflux_flow, m.distillate_draw, m.bottoms_draw]
                for m in self.mvs
            ]
        )

    def truth_matrix(self) -> np.ndarray:
        return np.array([p.as_array() for p in self.truth])

    def labs_for(self, stream: str) -> list[LabSample]:
        return [lab for lab in self.labs if lab.stream == stream]


def _fmt(v: float) -> str:
    return repr(float(v))


def write(episode: Episode, path: str | Path) -> Path:
    """Persist an episode directory; floats round-trip bit-exact."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    meta = episode.meta
    with open(root / "meta", "w") as fh:
        fh.write(f"schema_version={meta.schema_version}\n")
        fh.write(f"episode_id={meta.episode_id}\n")
        fh.write(f"seed={meta.seed}\n")
        fh.write(f"config_hash={meta.config_hash}\n")
        fh.write(f"dt_control={_fmt(meta.dt_control)}\n")
        fh.write(f"sensor_ranges={json.dumps(meta.sensor_ranges, sort_keys=True)}\n")
        fh.write(f"extras={json.dumps(meta.extras, sort_keys=True)}\n")

    with open(root / "steps.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STEP_COLUMNS)
        for t, mv, frame in zip(episode.times, episode.mvs, episode.frames):
            row = [
                _fmt(t),
                _fmt(mv.feed_flow),
                _fmt(mv.steam_flow),
                _fmt(mv.reflux_flow),
                _fmt(mv.distillate_draw),
                _fmt(mv.bottoms_draw),
            ]
            row += [_fmt(v) for v in frame.temps]
            row += [_fmt(v) for v in frame.flows_pct]
            w.writerow(row)

    with open(root / "labs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LAB_COLUMNS)
        for lab in episode.labs:
            w.writerow([_fmt(lab.t), lab.stream, _fmt(lab.purity_pct)])

    if episode.truth:
        with open(root / "truth.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRUTH_COLUMNS)
            for t, p in zip(episode.times, episode.truth):
                w.writerow([_fmt(t), _fmt(p.u_top), _fmt(p.u_bot), _fmt(p.z_feed)])

    if episode.adjuster:
        with open(root / "adjuster.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(ADJUSTER_COLUMNS)
            for t, a in zip(episode.times, episode.adjuster):
                w.writerow([_fmt(t), _fmt(a[0]), _fmt(a[1]), _fmt(a[2])])
    return root


def _read_csv(path: Path, expected_columns: list[str]) -> list[dict]:
    if not path.exists():
        raise SchemaError(f"missing file {path.name}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path.name} is empty (truncated file?)") from None
        missing = [c for c in expected_columns if c not in header]
        if missing:
            raise SchemaError(f"{path.name} missing column(s) {missing}")
        idx = [header.index(c) for c in expected_columns]
        rows = []
        for line in reader:
            if len(line) != len(header):
                raise SchemaError(f"{path.name}: truncated row {line!r}")
            rows.append({c: line[i] for c, i in zip(expected_columns, idx)})
        return rows


def read(path: str | Path) -> Episode:
    """Load an episode directory written by write()."""
    root = Path(path)
    meta_path = root / "meta"
    if not meta_path.exists():
        raise SchemaError(f"no meta file in {root}")
    kv = {}
    for line in meta_path.read_text().splitlines():
        if line.strip():
            k, _, v = line.partition("=")
            kv[k] = v
    version = int(kv.get("schema_version", "0"))
    if version > SCHEMA_VERSION:
        raise VersionError(
            f"episode schema v{version} is newer than supported v{SCHEMA_VERSION}"
        )
    meta = EpisodeMeta(
        episode_id=kv.get("episode_id", root.name),
        seed=int(kv.get("seed", "0")),
        config_hash=kv.get("config_hash", ""),
        dt_control=float(kv.get("dt_control", "5.0")),
        sensor_ranges=json.loads(kv.get("sensor_ranges", "{}")),
        schema_version=version,
        extras=json.loads(kv.get("extras", "{}")),
    )
    ep = Episode(meta)

    for row in _read_csv(root / "steps.csv", STEP_COLUMNS):
        mv = MVInput(
            float(row["feed_flow"]),
            float(row["steam_flow"]),
            float(row["reflux_flow"]),
            float(row["distillate_draw"]),
            float(row["bottoms_draw"]),
        )
        frame = SensorFrame(
            t=float(row["t"]),
            temps=np.array([float(row[f"temp_{i}"]) for i in range(6)]),
            flows_pct=np.array([float(row[f"flow_pct_{i}"]) for i in range(4)]),
        )
        ep.times.append(float(row["t"]))
        ep.mvs.append(mv)
        ep.frames.append(frame)

    for row in _read_csv(root / "labs.csv", LAB_COLUMNS):
        ep.labs.append(LabSample(float(row["t"]), row["stream"], float(row["purity_pct"])))

    truth_path = root / "truth.csv"
    if truth_path.exists():
        for row in _read_csv(truth_path, TRUTH_COLUMNS):
            ep.truth.append(
                ParamVector(float(row["u_top"]), float(row["u_bot"]), float(row["z_feed"]))
            )
        if len(ep.truth) != len(ep.times):
            raise SchemaError("truth.csv must carry one row per step")

    adj_path = root / "adjuster.csv"
    if adj_path.exists():
        for row in _read_csv(adj_path, ADJUSTER_COLUMNS):
            ep.adjuster.append(
                np.array([float(row["d_u_top"]), float(row["d_u_bot"]), float(row["d_z_feed"])])
            )
        if len(ep.adjuster) != len(ep.times):
            raise SchemaError("adjuster.csv must carry one row per step")
    return ep


def episodes_equal(a: Episode, b: Episode) -> bool:
    """Bit-exact equality over every stored field."""
    if len(a) != len(b) or a.times != b.times:
        return False
    if a.meta.__dict__ != b.meta.__dict__:
        return False
    for ma, mb in zip(a.mvs, b.mvs):
        if ma != mb:
            return False
    for fa, fb in zip(a.frames, b.frames):
        if fa.t != fb.t or not np.array_equal(fa.temps, fb.temps):
            return False
        if not np.array_equal(fa.flows_pct, fb.flows_pct):
            return False
    if a.labs != b.labs or a.truth != b.truth:
        return False
    if len(a.adjuster) != len(b.adjuster):
        return False
    return all(np.array_equal(x, y) for x, y in zip(a.adjuster, b.adjuster))
