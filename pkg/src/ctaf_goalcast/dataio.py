"""Track and radio-call ingestion, intent attachment, scene windowing and splits.

File formats
------------
Track file (CSV, header required)::

    time_s,aircraft_id,x_km,y_km,z_km

or the geodetic variant ``time_s,aircraft_id,lat,lon,alt_m`` which is projected
about the airport origin.

Radio-call file (JSON Lines, UTF-8), one object per call::

    {"time_s": 812.0, "transcript": "...", "speaker_truth": "N135PL", "intent_truth": "landing:08"}

``speaker_truth`` and ``intent_truth`` are optional.

Scene cache (JSON Lines): the first line is a header object
``{"format": "ctaf-goalcast-scenes", "schema": 1, ...}``; each following line is
one scene with keys ``scene_id, aircraft_id, day, t_obs, obs, intent, call_age,
goal``. ``obs`` is a list of ``[x, y, z]`` triples, ``goal`` one triple.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geometry import UNKNOWN, AirportConfig, GeoPoint, IntentLabel, LocalPosition, geodetic_to_local

TRACK_HEADER = ["time_s", "aircraft_id", "x_km", "y_km", "z_km"]
GEO_TRACK_HEADER = ["time_s", "aircraft_id", "lat", "lon", "alt_m"]
SCENE_SCHEMA = 1
STALENESS_LIMIT_S = 600.0
MAX_GAP_S = 2.0


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TrackPoint:
    time: float
    aircraft_id: str
    position: LocalPosition


@dataclass
class Track:
    """Time-sorted samples for one aircraft, stored as arrays."""

    aircraft_id: str
    times: np.ndarray
    positions: np.ndarray  # (n, 3) km

    def __len__(self) -> int:
        return len(self.times)

    def points(self) -> list[TrackPoint]:
        return [
            TrackPoint(float(t), self.aircraft_id, LocalPosition.from_array(p))
            for t, p in zip(self.times, self.positions)
        ]


@dataclass(frozen=True)
class RadioCall:
    time: float
    transcript: str
    speaker_truth: str | None = None
    intent_truth: IntentLabel | None = None


@dataclass(frozen=True)
class LabeledCall:
    time: float
    speaker: str
    intent: IntentLabel


@dataclass
class Scene:
    scene_id: str
    aircraft_id: str
    obs: np.ndarray  # (T, 3) absolute local km
    intent: IntentLabel
    call_age: float | None
    goal: np.ndarray  # (3,)
    t_obs: float
    day: int = 0

    def with_intent(self, intent: IntentLabel, call_age: float | None = None) -> "Scene":
        return Scene(self.scene_id, self.aircraft_id, self.obs, intent, call_age, self.goal, self.t_obs, self.day)


@dataclass
class DatasetSplit:
    train: list[Scene]
    val: list[Scene]
    test: list[Scene]
    seed: int = 0
    provenance: str = ""

    def all(self) -> list[Scene]:
        return self.train + self.val + self.test


# ------------------------------------------------------------------- tracks


def load_tracks(path: str | Path, origin: GeoPoint | None = None) -> dict[str, Track]:
    """Read a track file; rows grouped by aircraft and sorted by time.

    Repeated (aircraft, time) rows collapse to the last one in file order.
    """
    rows: dict[str, dict[float, np.ndarray]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return {}
        header = [h.strip() for h in header]
        if header == TRACK_HEADER:
            geodetic = False
        elif header == GEO_TRACK_HEADER:
            geodetic = True
            if origin is None:
                raise DataFormatError(f"{path}: geodetic track file needs an airport origin")
        else:
            raise DataFormatError(f"{path}:1: unrecognised track header {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 5:
                raise DataFormatError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            try:
                t = float(row[0])
                a, b, c = float(row[2]), float(row[3]), float(row[4])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
            if not all(math.isfinite(v) for v in (t, a, b, c)):
                raise DataFormatError(f"{path}:{lineno}: non-finite value")
            if geodetic:
                p = geodetic_to_local(GeoPoint(a, b, c), origin).as_array()
            else:
                p = np.array([a, b, c])
            rows.setdefault(row[1].strip(), {})[t] = p
    tracks = {}
    for aid in sorted(rows):
        times = np.array(sorted(rows[aid]))
        tracks[aid] = Track(aid, times, np.array([rows[aid][t] for t in times]))
    return tracks


def write_tracks(path: str | Path, tracks: Iterable[Track]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACK_HEADER)
        for tr in tracks:
            for t, p in zip(tr.times, tr.positions):
                w.writerow([repr(float(t)), tr.aircraft_id, repr(float(p[0])), repr(float(p[1])), repr(float(p[2]))])


def split_at_gaps(track: Track, max_gap: float = MAX_GAP_S) -> list[Track]:
    if len(track) == 0:
        return []
    breaks = np.nonzero(np.diff(track.times) > max_gap)[0] + 1
    pieces = []
    for idx in np.split(np.arange(len(track)), breaks):
        pieces.append(Track(track.aircraft_id, track.times[idx], track.positions[idx]))
    return pieces


def resample_track(track: Track, rate: float = 1.0, max_gap: float = MAX_GAP_S) -> list[Track]:
    """Linearly interpolate onto a uniform grid, one output per gap-free segment.

    Grid instants are multiples of ``1/rate`` on the track clock. A single-point
    track is returned unchanged.
    """
    if rate <= 0:
        raise ValueError("rate must be positive")
    if len(track) <= 1:
        return [track]
    out = []
    for seg in split_at_gaps(track, max_gap):
        if len(seg) == 1:
            out.append(seg)
            continue
        k0 = math.ceil(seg.times[0] * rate - 1e-9)
        k1 = math.floor(seg.times[-1] * rate + 1e-9)
        if k1 < k0:
            continue
        grid = np.arange(k0, k1 + 1) / rate
        pos = np.column_stack([np.interp(grid, seg.times, seg.positions[:, i]) for i in range(3)])
        out.append(Track(seg.aircraft_id, grid, pos))
    return out


# -------------------------------------------------------------------- calls


def load_calls(path: str | Path) -> list[RadioCall]:
    calls = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                intent = rec.get("intent_truth")
                calls.append(
                    RadioCall(
                        time=float(rec["time_s"]),
                        transcript=str(rec.get("transcript", "")),
                        speaker_truth=rec.get("speaker_truth") or None,
                        intent_truth=IntentLabel.parse(intent) if intent else None,
                    )
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
    calls.sort(key=lambda c: c.time)
    return calls


def write_calls(path: str | Path, calls: Iterable[RadioCall]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in calls:
            rec = {"time_s": c.time, "transcript": c.transcript}
            if c.speaker_truth:
                rec["speaker_truth"] = c.speaker_truth
            if c.intent_truth is not None:
                rec["intent_truth"] = str(c.intent_truth)
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def write_labeled_calls(path: str | Path, calls: Iterable[LabeledCall], notes: Sequence[str] | None = None) -> None:
    """Write ``time_s,speaker,intent,confidence_note`` rows."""
    calls = list(calls)
    notes = list(notes) if notes is not None else [""] * len(calls)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "speaker", "intent", "confidence_note"])
        for c, note in zip(calls, notes):
            w.writerow([repr(float(c.time)), c.speaker, str(c.intent), note])


def load_labeled_calls(path: str | Path) -> list[LabeledCall]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(LabeledCall(float(row["time_s"]), row["speaker"], IntentLabel.parse(row["intent"])))
            except (ValueError, KeyError, TypeError) as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
    out.sort(key=lambda c: c.time)
    return out


def attach_intent(
    aircraft_id: str,
    calls: Sequence[LabeledCall],
    t_obs: float,
    staleness_limit: float = STALENESS_LIMIT_S,
) -> tuple[IntentLabel, float | None]:
    """Latest label announced by ``aircraft_id`` at or before ``t_obs``.

    Calls older than ``staleness_limit`` seconds do not count. Returns
    ``(UNKNOWN, None)`` when nothing qualifies.
    """
    best = None
    for c in calls:
        if c.time > t_obs:
            break
        if c.speaker == aircraft_id and t_obs - c.time <= staleness_limit:
            best = c
    if best is None:
        return UNKNOWN, None
    return best.intent, t_obs - best.time


# ---------------------------------------------------------------- windowing


def window_scenes(
    tracks: dict[str, Track] | Iterable[Track],
    labeled_calls: Sequence[LabeledCall],
    obs_horizon: float = 11.0,
    pred_horizon: float = 120.0,
    stride: float = 10.0,
    sample_rate: float = 1.0,
    staleness_limit: float = STALENESS_LIMIT_S,
    day_of=None,
) -> list[Scene]:
    """Cut sliding (observation, goal) windows out of every gap-free segment.

    Output order is by aircraft id, then window start. ``day_of`` maps
    ``(aircraft_id, t_obs)`` to a day index (default: ``t_obs // 86400``).
    """
    if obs_horizon <= 0 or pred_horizon <= 0 or stride <= 0:
        raise ValueError("horizons and stride must be positive")
    if isinstance(tracks, dict):
        tracks = [tracks[k] for k in sorted(tracks)]
    else:
        tracks = sorted(tracks, key=lambda t: t.aircraft_id)
    n_obs = int(round(obs_horizon * sample_rate)) + 1
    n_pred = int(round(pred_horizon * sample_rate))
    step = int(round(stride * sample_rate))
    if step < 1:
        raise ValueError("stride shorter than one sample")
    calls_sorted = sorted(labeled_calls, key=lambda c: c.time)
    scenes = []
    for track in tracks:
        for seg in resample_track(track, sample_rate):
            n = len(seg)
            start = 0
            while start + n_obs - 1 + n_pred <= n - 1:
                obs_idx = start + n_obs - 1
                goal_idx = obs_idx + n_pred
                t_obs = float(seg.times[obs_idx])
                # goal must sit within half a sample of t_obs + pred_horizon
                if abs(seg.times[goal_idx] - (t_obs + pred_horizon)) <= 0.5:
                    intent, age = attach_intent(track.aircraft_id, calls_sorted, t_obs, staleness_limit)
                    day = day_of(track.aircraft_id, t_obs) if day_of else int(t_obs // 86400)
                    scenes.append(
                        Scene(
                            scene_id=f"{track.aircraft_id}@{t_obs:g}",
                            aircraft_id=track.aircraft_id,
                            obs=seg.positions[start : obs_idx + 1].copy(),
                            intent=intent,
                            call_age=age,
                            goal=seg.positions[goal_idx].copy(),
                            t_obs=t_obs,
                            day=day,
                        )
                    )
                start += step
    return scenes


def split_scenes(
    scenes: Sequence[Scene],
    fractions: tuple[float, float, float] = (0.7, 0.1, 0.2),
    seed: int = 0,
    provenance: str = "",
) -> DatasetSplit:
    """Assign whole (aircraft_id, day) groups to train/val/test."""
    groups: dict[tuple[str, int], list[Scene]] = {}
    for s in scenes:
        groups.setdefault((s.aircraft_id, s.day), []).append(s)
    keys = sorted(groups)
    order = np.random.default_rng(seed).permutation(len(keys))
    n = len(keys)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    buckets: list[list[Scene]] = [[], [], []]
    for rank, i in enumerate(order):
        b = 0 if rank < n_train else 1 if rank < n_train + n_val else 2
        buckets[b].extend(groups[keys[i]])
    for b in buckets:
        b.sort(key=lambda s: (s.aircraft_id, s.t_obs))
    return DatasetSplit(buckets[0], buckets[1], buckets[2], seed=seed, provenance=provenance)


# ------------------------------------------------------------- scene cache


def _scene_record(s: Scene) -> dict:
    return {
        "scene_id": s.scene_id,
        "aircraft_id": s.aircraft_id,
        "day": s.day,
        "t_obs": s.t_obs,
        "obs": s.obs.tolist(),
        "intent": str(s.intent),
        "call_age": s.call_age,
        "goal": s.goal.tolist(),
    }


def _scene_from_record(rec: dict) -> Scene:
    return Scene(
        scene_id=rec["scene_id"],
        aircraft_id=rec["aircraft_id"],
        obs=np.array(rec["obs"], dtype=np.float64).reshape(-1, 3),
        intent=IntentLabel.parse(rec["intent"]),
        call_age=None if rec["call_age"] is None else float(rec["call_age"]),
        goal=np.array(rec["goal"], dtype=np.float64),
        t_obs=float(rec["t_obs"]),
        day=int(rec["day"]),
    )


def save_split(path: str | Path, split: DatasetSplit) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "format": "ctaf-goalcast-scenes",
            "schema": SCENE_SCHEMA,
            "seed": split.seed,
            "provenance": split.provenance,
            "counts": [len(split.train), len(split.val), len(split.test)],
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for part, scenes in (("train", split.train), ("val", split.val), ("test", split.test)):
            for s in scenes:
                rec = _scene_record(s)
                rec["split"] = part
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_split(path: str | Path) -> DatasetSplit:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        try:
            header = json.loads(first)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}:1: bad scene-cache header") from exc
        if header.get("format") != "ctaf-goalcast-scenes":
            raise DataFormatError(f"{path}: not a scene cache")
        if header.get("schema") != SCENE_SCHEMA:
            raise DataFormatError(f"{path}: scene schema {header.get('schema')} != {SCENE_SCHEMA}")
        parts: dict[str, list[Scene]] = {"train": [], "val": [], "test": []}
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                parts[rec["split"]].append(_scene_from_record(rec))
            except (ValueError, KeyError) as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
    if [len(parts[k]) for k in ("train", "val", "test")] != header.get("counts"):
        raise DataFormatError(f"{path}: truncated scene cache")
    return DatasetSplit(parts["train"], parts["val"], parts["test"], header.get("seed", 0), header.get("provenance", ""))


def default_cache_dir() -> Path:
    return Path(os.environ.get("CTAF_GOALCAST_CACHE", Path.home() / ".cache" / "ctaf_goalcast"))
