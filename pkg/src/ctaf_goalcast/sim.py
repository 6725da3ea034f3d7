"""Synthetic traffic-pattern flights with templated CTAF calls.

Flights are built from kinematic legs (straight, constant-rate turn, ground roll
with linear speed change), each with a linear altitude ramp that may be clamped
at a target altitude. Positions are sampled on the simulation clock and
perturbed with isotropic Gaussian noise. Calls are emitted at leg transitions
and carry exact speaker and intent truth, whatever phrasing noise is applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dataio import DatasetSplit, LabeledCall, RadioCall, Scene, Track, split_scenes, window_scenes
from .geometry import (
    DEFAULT_AIRPORT,
    INSUFFICIENT,
    OTHER,
    AirportConfig,
    Depart,
    EnterLeg,
    IntentLabel,
    Landing,
    LocalPosition,
    RunwayEnd,
    Takeoff,
    bearing_deg,
    cardinal_direction,
    distance_miles,
)
from .radio import AircraftDirectoryEntry

DIRECTION_HEADING = {"N": 0.0, "E": 90.0, "S": 180.0, "W": 270.0}
DIRECTION_WORD = {"N": "north", "E": "east", "S": "south", "W": "west"}
SCRIPT_KINDS = ("pattern_landing", "touch_and_go", "entry_45", "departure", "taxi")

FLEET = {
    "cherokee": (("P28A", "Piper", "Cherokee", "Archer", "Warrior"), ("Cherokee", "Piper", "Archer")),
    "skyhawk": (("C172", "Cessna", "Skyhawk"), ("Skyhawk", "Cessna")),
    "diamond": (("DA40", "Diamond Star", "Diamond"), ("Diamond Star", "Diamond")),
    "cirrus": (("SR22", "Cirrus"), ("Cirrus",)),
    "bonanza": (("BE35", "Beech", "Bonanza"), ("Bonanza", "Beech")),
    "mooney": (("M20P", "Mooney"), ("Mooney",)),
}
SPOKEN_DIGIT_WORDS = ("zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "niner")
PHONETIC_WORDS = {
    c: w for c, w in zip(
        "ABCDEFGHIJKLMNOPQRSTUVWXYZ",
        ("alpha bravo charlie delta echo foxtrot golf hotel india juliet kilo lima mike november "
         "oscar papa quebec romeo sierra tango uniform victor whiskey xray yankee zulu").split(),
    )
}


class ScriptError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    airport: AirportConfig = DEFAULT_AIRPORT
    speed: float = 36.0  # m/s
    turn_rate: float = 3.0  # deg/s
    sample_rate: float = 1.0  # Hz
    position_noise: float = 0.02  # km
    phrasing_noise: tuple[float, float, float] = (1.0, 0.0, 0.0)  # weights: none, synonyms, omissions
    climb_rate: float = 4.0  # m/s
    taxi_speed: float = 8.0  # m/s
    downwind_offset: float = 1.6  # km from runway centreline
    departure_altitude: float = 0.9  # km
    seed: int = 0

    def __post_init__(self):
        if self.speed <= 0 or self.turn_rate <= 0 or self.sample_rate <= 0:
            raise ValueError("speed, turn_rate and sample_rate must be positive")

    @property
    def v(self) -> float:
        return self.speed / 1000.0

    @property
    def turn_radius(self) -> float:
        return self.v / math.radians(self.turn_rate)


# ----------------------------------------------------------------- kinematics


@dataclass(frozen=True)
class Leg:
    duration: float
    speed: float  # km/s at leg start
    speed_end: float  # km/s at leg end; differs from speed only on straight legs
    turn_rate: float  # deg/s, positive = clockwise (right)
    climb: float  # km/s
    z_limit: float | None  # altitude clamp reached by the ramp
    name: str = ""


@dataclass(frozen=True)
class State:
    x: float
    y: float
    z: float
    heading: float
    speed: float


def propagate(s: State, leg: Leg, t: float) -> State:
    """Exact state ``t`` seconds into ``leg``."""
    z = s.z + leg.climb * t
    if leg.z_limit is not None:
        z = min(z, leg.z_limit) if leg.climb > 0 else max(z, leg.z_limit)
    z = max(z, 0.0)
    h0 = math.radians(s.heading)
    if leg.turn_rate == 0.0:
        a = (leg.speed_end - leg.speed) / leg.duration if leg.duration > 0 else 0.0
        dist = leg.speed * t + 0.5 * a * t * t
        return State(s.x + dist * math.sin(h0), s.y + dist * math.cos(h0), z, s.heading, leg.speed + a * t)
    w = math.radians(leg.turn_rate)
    h = h0 + w * t
    r = leg.speed / w
    return State(
        s.x + r * (math.cos(h0) - math.cos(h)),
        s.y + r * (math.sin(h) - math.sin(h0)),
        z,
        math.degrees(h) % 360.0,
        leg.speed,
    )


@dataclass
class CallSpec:
    time: float  # seconds after spawn
    intent: IntentLabel
    phrase: str  # template key
    runway: str | None = None
    direction: str | None = None


class PathBuilder:
    """Accumulates legs while tracking the exact end state."""

    def __init__(self, start: State, config: SimConfig):
        self.start = start
        self.state = start
        self.config = config
        self.legs: list[Leg] = []
        self.calls: list[CallSpec] = []
        self.t = 0.0

    def _add(self, leg: Leg) -> "PathBuilder":
        if leg.duration < 0:
            raise ScriptError(f"negative leg duration in {leg.name}")
        if leg.duration > 0:
            self.state = propagate(self.state, leg, leg.duration)
            self.legs.append(leg)
            self.t += leg.duration
        return self

    def roll(self, duration: float, v_end: float, name: str = "roll") -> "PathBuilder":
        return self._add(Leg(duration, self.state.speed, v_end, 0.0, 0.0, None, name))

    def straight(self, duration: float, climb: float = 0.0, z_limit: float | None = None, name: str = "straight", speed: float | None = None) -> "PathBuilder":
        v = self.state.speed if speed is None else speed
        self.state = replace(self.state, speed=v)
        return self._add(Leg(duration, v, v, 0.0, climb, z_limit, name))

    def straight_to(self, point: np.ndarray, climb: float = 0.0, z_limit: float | None = None, name: str = "straight") -> "PathBuilder":
        h = math.radians(self.state.heading)
        dist = (point[0] - self.state.x) * math.sin(h) + (point[1] - self.state.y) * math.cos(h)
        if dist < -1e-9:
            raise ScriptError(f"{name}: target lies behind the aircraft")
        return self.straight(max(dist, 0.0) / self.state.speed, climb, z_limit, name)

    def turn(self, delta_deg: float, climb: float = 0.0, z_limit: float | None = None, name: str = "turn") -> "PathBuilder":
        if delta_deg == 0:
            return self
        rate = math.copysign(self.config.turn_rate, delta_deg)
        return self._add(Leg(abs(delta_deg) / self.config.turn_rate, self.state.speed, self.state.speed, rate, climb, z_limit, name))

    def turn_to(self, heading: float, direction: str | None = None, climb: float = 0.0, z_limit: float | None = None, name: str = "turn") -> "PathBuilder":
        delta = (heading - self.state.heading + 540.0) % 360.0 - 180.0
        if direction == "right" and delta < 0:
            delta += 360.0
        elif direction == "left" and delta > 0:
            delta -= 360.0
        return self.turn(delta, climb, z_limit, name)

    def call(self, intent: IntentLabel, phrase: str, runway: str | None = None, direction: str | None = None, offset: float = 0.0) -> "PathBuilder":
        self.calls.append(CallSpec(self.t + offset, intent, phrase, runway, direction))
        return self

    @property
    def position(self) -> np.ndarray:
        return np.array([self.state.x, self.state.y])


def sample_path(start: State, legs: Sequence[Leg], rate: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Noise-free (times, positions, speeds) at multiples of 1/rate from spawn."""
    total = sum(l.duration for l in legs)
    n = int(math.floor(total * rate + 1e-9)) + 1
    times = np.arange(n) / rate
    pos = np.zeros((n, 3))
    speeds = np.zeros(n)
    state, leg_start, i = start, 0.0, 0
    for leg in legs:
        leg_end = leg_start + leg.duration
        while i < n and (times[i] <= leg_end + 1e-9):
            s = propagate(state, leg, times[i] - leg_start)
            pos[i] = (s.x, s.y, s.z)
            speeds[i] = s.speed
            i += 1
        state = propagate(state, leg, leg.duration)
        leg_start = leg_end
    while i < n:
        pos[i] = (state.x, state.y, state.z)
        i += 1
    return times, pos, speeds


# ----------------------------------------------------------------- scripts


@dataclass
class FlightScript:
    aircraft_id: str
    type_key: str
    spawn_time: float
    start: State
    legs: list[Leg]
    calls: list[CallSpec]
    maneuver: str
    runway: str | None = None
    emit_calls: bool = True


class _RunwayFrame:
    """Along-track / lateral coordinates anchored at a runway threshold."""

    def __init__(self, end: RunwayEnd):
        self.end = end
        self.origin = np.array([end.threshold.x, end.threshold.y])
        self.u = end.unit_vector()
        self.n = end.pattern_side_vector()
        self.turn_sign = -1.0 if end.pattern == "left" else 1.0  # pattern turns

    def point(self, along: float, lateral: float) -> np.ndarray:
        return self.origin + along * self.u + lateral * self.n

    def along(self, p: np.ndarray) -> float:
        return float(np.dot(p - self.origin, self.u))


def _runway_length(airport: AirportConfig, end: RunwayEnd) -> float:
    other = airport.reciprocal(end)
    if other is None:
        return 1.4
    return float(np.hypot(other.threshold.x - end.threshold.x, other.threshold.y - end.threshold.y))


def _pattern_to_landing(b: PathBuilder, frame: _RunwayFrame, cfg: SimConfig, base_along: float = -1.0,
                        final_call: bool = True, base_call: bool = True, touch_and_go: bool = False) -> None:
    """From anywhere on downwind: base, final, touchdown at the threshold, rollout."""
    end = frame.end
    rw = end.designator
    r = cfg.turn_radius
    side = frame.turn_sign
    b.straight_to(frame.point(base_along, 0.0) + frame.n * cfg.downwind_offset, name="downwind")
    z0 = b.state.z
    base_len = max(cfg.downwind_offset - 2 * r, 0.0)
    final_len = -base_along
    t_desc = 2 * (90.0 / cfg.turn_rate) + (base_len + final_len) / b.state.speed
    sink = -z0 / t_desc
    if base_call:
        b.call(EnterLeg(rw, "base"), "base", rw)
    b.turn(90.0 * side, sink, 0.0, "base_turn")
    b.straight(base_len / b.state.speed, sink, 0.0, "base")
    if final_call:
        b.call(Landing(rw), "final", rw)
    b.turn(90.0 * side, sink, 0.0, "final_turn")
    b.straight_to(frame.point(0.0, 0.0), sink, 0.0, "final")
    if touch_and_go:
        b.roll(8.0, b.state.speed, name="touchdown")
        b.straight(40.0, cfg.climb_rate / 1000.0, end_z(cfg), "upwind")
    else:
        b.roll(25.0, cfg.taxi_speed / 1000.0, name="rollout")
        b.straight(20.0, name="taxi_clear")


def end_z(cfg: SimConfig) -> float:
    return cfg.airport.pattern_altitude_agl


def _takeoff_and_climb(b: PathBuilder, frame: _RunwayFrame, cfg: SimConfig, upwind_s: float = 40.0) -> None:
    climb = cfg.climb_rate / 1000.0
    b.roll(20.0, cfg.v, name="takeoff_roll")
    b.straight(upwind_s, climb, end_z(cfg), "upwind")


def _closed_pattern(b: PathBuilder, frame: _RunwayFrame, cfg: SimConfig, rng) -> None:
    """Crosswind and downwind legs after an upwind climb."""
    rw = frame.end.designator
    climb = cfg.climb_rate / 1000.0
    side = frame.turn_sign
    r = cfg.turn_radius
    b.call(EnterLeg(rw, "crosswind"), "crosswind", rw)
    b.turn(90.0 * side, climb, end_z(cfg), "crosswind_turn")
    b.straight(max(cfg.downwind_offset - 2 * r, 0.0) / b.state.speed, climb, end_z(cfg), "crosswind")
    b.turn(90.0 * side, climb, end_z(cfg), "downwind_turn")


def build_script(
    kind: str,
    aircraft_id: str,
    type_key: str,
    spawn_time: float,
    config: SimConfig,
    rng: np.random.Generator,
    runway: str | None = None,
    direction: str | None = None,
) -> FlightScript:
    """Construct one flight plan of the requested kind."""
    airport = config.airport
    if runway is None:
        runway = airport.sorted_ends()[int(rng.integers(len(airport.runway_ends)))].designator
    if not airport.has_runway(runway):
        raise ScriptError(f"{airport.name} has no runway {runway}")
    end = airport.runway(runway)
    frame = _RunwayFrame(end)
    rw = end.designator
    cfg = config
    pattern_z = airport.pattern_altitude_agl
    length = _runway_length(airport, end)

    if kind in ("pattern_landing", "touch_and_go"):
        p = frame.point(0.0, 0.0)
        b = PathBuilder(State(p[0], p[1], 0.0, end.heading, 0.0), cfg)
        b.call(Takeoff(rw), "takeoff_pattern", rw)
        _takeoff_and_climb(b, frame, cfg)
        _closed_pattern(b, frame, cfg, rng)
        b.call(Landing(rw), "downwind_touch_and_go" if kind == "touch_and_go" else "downwind_full_stop", rw)
        _pattern_to_landing(b, frame, cfg, base_along=-float(rng.uniform(0.8, 1.4)), touch_and_go=kind == "touch_and_go")
    elif kind == "entry_45":
        # join downwind at midfield on a 45-degree intercept from outside the pattern
        join = frame.point(length * 0.5, 0.0) + frame.n * cfg.downwind_offset
        downwind_heading = (end.heading + 180.0) % 360.0
        entry_heading = (downwind_heading - 45.0 * frame.turn_sign) % 360.0
        entry_s = float(rng.uniform(50.0, 90.0))
        probe = PathBuilder(State(0.0, 0.0, pattern_z, entry_heading, cfg.v), cfg)
        probe.straight(entry_s).turn(45.0 * frame.turn_sign)
        shift = join - probe.position
        b = PathBuilder(State(shift[0], shift[1], pattern_z, entry_heading, cfg.v), cfg)
        b.call(INSUFFICIENT, "position_report")
        b.straight(entry_s * 0.5, name="inbound")
        b.call(EnterLeg(rw, "downwind"), "enter_downwind", rw)
        b.straight(entry_s * 0.5, name="entry").turn(45.0 * frame.turn_sign, name="join_turn")
        b.call(Landing(rw), "downwind_full_stop", rw, offset=5.0)
        _pattern_to_landing(b, frame, cfg, base_along=-float(rng.uniform(0.8, 1.4)))
    elif kind == "departure":
        direction = direction or str(rng.choice(["N", "E", "S", "W"]))
        p = frame.point(0.0, 0.0)
        b = PathBuilder(State(p[0], p[1], 0.0, end.heading, 0.0), cfg)
        b.call(Takeoff(rw), "takeoff", rw)
        climb = cfg.climb_rate / 1000.0
        _takeoff_and_climb(b, frame, cfg, upwind_s=float(rng.uniform(25.0, 45.0)))
        b.call(Depart(direction), "depart_pattern", direction=direction)
        b.turn_to(DIRECTION_HEADING[direction], climb=climb, z_limit=cfg.departure_altitude, name="departure_turn")
        b.straight(240.0, climb, cfg.departure_altitude, "departure")
    elif kind == "taxi":
        # from a ramp abeam midfield on the non-pattern side, taxi to the threshold
        ramp = frame.point(length * 0.5, -0.25)
        hold = frame.point(0.05, -0.08)
        heading = bearing_deg(*(hold - ramp))
        b = PathBuilder(State(ramp[0], ramp[1], 0.0, heading, cfg.taxi_speed / 1000.0), cfg)
        b.call(OTHER, "taxi", rw)
        b.straight_to(hold, name="taxi")
        b.straight(float(rng.uniform(30.0, 90.0)), name="hold_short", speed=0.0)
    else:
        raise ScriptError(f"unknown script kind {kind!r}")
    return FlightScript(aircraft_id, type_key, spawn_time, b.start, b.legs, b.calls, kind, rw)


# ------------------------------------------------------------ radio calls


def spoken_tail(suffix: str) -> str:
    words = []
    for ch in suffix:
        words.append(SPOKEN_DIGIT_WORDS[int(ch)] if ch.isdigit() else PHONETIC_WORDS[ch.upper()])
    return " ".join(words)


def spoken_runway(designator: str) -> str:
    return " ".join(SPOKEN_DIGIT_WORDS[int(c)] for c in str(int(designator)))


_PHRASES = {
    "takeoff": ["departing runway {rw}"],
    "takeoff_pattern": ["departing runway {rw} remaining in the pattern"],
    "crosswind": ["left crosswind runway {rw}"],
    "downwind_full_stop": ["left downwind runway {rw} full stop"],
    "downwind_touch_and_go": ["left downwind runway {rw} touch and go"],
    "enter_downwind": ["entering left downwind runway {rw}"],
    "base": ["left base runway {rw}"],
    "final": ["final runway {rw} full stop"],
    "depart_pattern": ["departing the pattern to the {dir}"],
    "taxi": ["taxiing to runway {rw}"],
    "position_report": ["{pos} inbound"],
    # ambiguity benchmark branches, all announced while on downwind
    "bench_landing": ["left downwind runway {rw} full stop"],
    "bench_extend": ["left downwind runway {rw} extending downwind"],
    "bench_depart": ["left downwind runway {rw} departing to the {dir}"],
}
_SYNONYMS = {
    "takeoff": ["taking off runway {rw}", "departing runway {rw} straight out", "rolling runway {rw}"],
    "takeoff_pattern": ["taking off runway {rw} closed traffic", "departing runway {rw} for the pattern"],
    "crosswind": ["turning crosswind runway {rw}", "on crosswind for runway {rw}"],
    "downwind_full_stop": ["left downwind runway {rw} for landing", "downwind runway {rw} to land",
                           "midfield left downwind runway {rw} full stop landing"],
    "downwind_touch_and_go": ["left downwind runway {rw} for a touch and go", "downwind runway {rw} stop and go"],
    "enter_downwind": ["joining left downwind runway {rw}", "45 for the left downwind runway {rw}",
                       "entering the downwind runway {rw}"],
    "base": ["turning left base runway {rw}", "turning base runway {rw}"],
    "final": ["short final runway {rw}", "turning final runway {rw}", "final runway {rw} to land"],
    "depart_pattern": ["departing {dir}bound", "leaving the pattern to the {dir}", "{dir}bound departure"],
    "taxi": ["taxi to runway {rw}", "back taxi runway {rw}", "taxiing to runway {rw} via alpha"],
    "position_report": ["{pos} inbound with information", "{pos} at two thousand five hundred"],
    "bench_landing": ["downwind runway {rw} for landing"],
    "bench_extend": ["left downwind runway {rw} extending my downwind"],
    "bench_depart": ["downwind runway {rw} leaving the pattern to the {dir}"],
}


def _position_phrase(pos: LocalPosition) -> str:
    n = distance_miles(pos)
    if pos.x == 0.0 and pos.y == 0.0 or n == 0:
        return "over the field"
    unit = "mile" if n == 1 else "miles"
    return f"{n} {unit} {cardinal_direction(pos, 8).lower()} of the field"


def render_call(
    spec: CallSpec,
    tail: str,
    type_key: str,
    position: LocalPosition | None,
    airport: AirportConfig,
    rng: np.random.Generator,
    noise: str = "none",
) -> str:
    """Compose ``<airport> traffic, <type> <tail>, <position>, <intent>, <airport>``."""
    suffix = tail[1:] if tail.startswith("N") else tail
    spoken_names = FLEET[type_key][1]
    type_word = spoken_names[0] if noise == "none" else str(rng.choice(spoken_names))
    name = (airport.aliases[0] if airport.aliases else airport.name).title()
    rw_text = str(int(spec.runway)) if spec.runway else ""
    dir_text = DIRECTION_WORD.get(spec.direction or "", "")
    pos_text = _position_phrase(position) if position is not None else ""
    templates = _PHRASES[spec.phrase]
    if noise == "synonyms" and rng.random() < 0.8:
        templates = _SYNONYMS.get(spec.phrase, templates)
    template = str(rng.choice(templates)) if len(templates) > 1 else templates[0]
    if noise != "none" and spec.runway and rng.random() < 0.3:
        rw_text = spoken_runway(spec.runway)
    intent = template.format(rw=rw_text, dir=dir_text, pos=pos_text)
    ident = f"{type_word} {suffix}"
    parts = [f"{name} traffic", ident]
    if pos_text and spec.phrase != "position_report":
        parts.append(pos_text)
    parts.append(intent)
    parts.append(name)
    if noise == "omissions":
        if rng.random() < 0.5:
            parts[0] = ""
        if rng.random() < 0.5:
            parts[-1] = ""
        if pos_text and spec.phrase != "position_report" and rng.random() < 0.5:
            parts = [p for p in parts if p != pos_text]
        if rng.random() < 0.4:
            parts[1] = suffix
        if rng.random() < 0.3:
            parts[1] = f"{type_word} {spoken_tail(suffix)}"
        if spec.runway and rng.random() < 0.05:
            # pilots sometimes drop the runway; the label becomes unrecoverable
            parts = [p.replace(f" runway {rw_text}", "") for p in parts]
        if rng.random() < 0.3:
            parts.insert(int(rng.integers(1, len(parts) + 1)), "uh")
    return ", ".join(p for p in parts if p)


# -------------------------------------------------------------- simulation


def _noise_kind(config: SimConfig, rng: np.random.Generator) -> str:
    w = np.asarray(config.phrasing_noise, dtype=float)
    if w.sum() <= 0:
        return "none"
    return ("none", "synonyms", "omissions")[int(rng.choice(3, p=w / w.sum()))]


def simulate_flight(script: FlightScript, config: SimConfig, rng: np.random.Generator | None = None,
                    directory: dict[str, AircraftDirectoryEntry] | None = None) -> tuple[Track, list[RadioCall]]:
    """Sample the flight's track and render its calls.

    Returns the noisy track on the simulation clock and the calls with exact
    ``speaker_truth`` / ``intent_truth``.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    airport = config.airport
    if script.runway is not None and not airport.has_runway(script.runway):
        raise ScriptError(f"script runway {script.runway} not at {airport.name}")
    times, pos, _ = sample_path(script.start, script.legs, config.sample_rate)
    clean = pos.copy()
    if config.position_noise > 0:
        pos = pos + rng.normal(0.0, config.position_noise, size=pos.shape)
    track = Track(script.aircraft_id, times + script.spawn_time, pos)
    calls = []
    if script.emit_calls:
        for spec in script.calls:
            k = min(int(round(spec.time * config.sample_rate)), len(clean) - 1)
            here = LocalPosition.from_array(clean[k])
            noise = _noise_kind(config, rng)
            text = render_call(spec, script.aircraft_id, script.type_key, here, airport, rng, noise)
            calls.append(RadioCall(script.spawn_time + spec.time, text, script.aircraft_id, spec.intent))
    return track, calls


def make_fleet(n: int, rng: np.random.Generator) -> tuple[list[tuple[str, str]], dict[str, AircraftDirectoryEntry]]:
    """``n`` unique (tail, type) pairs and the matching alias directory."""
    letters = "ABCDEFGHJKLMNPQRSTUVWXYZ"
    tails: list[tuple[str, str]] = []
    seen: set[str] = set()
    keys = sorted(FLEET)
    while len(tails) < n:
        digits = "".join(str(d) for d in rng.integers(0, 10, size=int(rng.integers(2, 4))))
        digits = str(int(rng.integers(1, 10))) + digits
        tail = "N" + digits + "".join(rng.choice(list(letters), size=5 - len(digits)))
        suffix = tail[1:]
        # keep every spoken suffix unambiguous within the fleet
        if tail in seen or any(t.endswith(suffix) or tail.endswith(t[1:]) for t in seen):
            continue
        seen.add(tail)
        tails.append((tail, keys[int(rng.integers(len(keys)))]))
    directory = {t: AircraftDirectoryEntry(t, FLEET[k][0]) for t, k in tails}
    return tails, directory


@dataclass
class SimDataset:
    tracks: dict[str, Track]
    calls: list[RadioCall]
    directory: dict[str, AircraftDirectoryEntry]
    split: DatasetSplit
    scripts: list[FlightScript] = field(default_factory=list)

    def labeled_calls(self) -> list[LabeledCall]:
        return truth_labels(self.calls)


def truth_labels(calls: Sequence[RadioCall]) -> list[LabeledCall]:
    return [LabeledCall(c.time, c.speaker_truth, c.intent_truth) for c in calls
            if c.speaker_truth is not None and c.intent_truth is not None]


DEFAULT_MIX = {"pattern_landing": 0.3, "touch_and_go": 0.15, "entry_45": 0.2, "departure": 0.25, "taxi": 0.1}


def generate_dataset(
    n_flights: int,
    mix: dict[str, float] | None = None,
    config: SimConfig = SimConfig(),
    obs_horizon: float = 11.0,
    pred_horizon: float = 120.0,
    stride: float = 10.0,
    spacing: float = 120.0,
    flights_per_day: int = 10,
    split_fractions: tuple[float, float, float] = (0.7, 0.1, 0.2),
    labeler=None,
) -> SimDataset:
    """Seeded mix of scripted flights, windowed into scenes and split by day.

    ``labeler(calls, tracks, directory)`` turns calls into labelled calls; by
    default the ground-truth annotations are used.
    """
    if n_flights < 1:
        raise ValueError("n_flights must be >= 1")
    mix = dict(DEFAULT_MIX if mix is None else mix)
    kinds = [k for k in SCRIPT_KINDS if mix.get(k, 0) > 0]
    probs = np.array([mix[k] for k in kinds], dtype=float)
    probs /= probs.sum()
    root = np.random.SeedSequence(config.seed)
    fleet_rng, *flight_seeds = [np.random.default_rng(s) for s in root.spawn(n_flights + 1)]
    fleet, directory = make_fleet(n_flights, fleet_rng)
    tracks: dict[str, Track] = {}
    calls: list[RadioCall] = []
    scripts = []
    day = {}
    for i, ((tail, type_key), rng) in enumerate(zip(fleet, flight_seeds)):
        kind = kinds[int(rng.choice(len(kinds), p=probs))]
        spawn = i * spacing + float(rng.uniform(0.0, spacing / 2))
        script = build_script(kind, tail, type_key, float(round(spawn)), config, rng)
        track, fcalls = simulate_flight(script, config, rng)
        tracks[tail] = track
        calls.extend(fcalls)
        scripts.append(script)
        day[tail] = i // flights_per_day
    calls.sort(key=lambda c: c.time)
    labeled = labeler(calls, tracks, directory) if labeler else truth_labels(calls)
    scenes = window_scenes(tracks, labeled, obs_horizon, pred_horizon, stride, config.sample_rate,
                           day_of=lambda aid, t: day[aid])
    split = split_scenes(scenes, split_fractions, seed=config.seed, provenance=f"synthetic mix={mix} seed={config.seed}")
    return SimDataset(tracks, calls, directory, split, scripts)


# ------------------------------------------------------ ambiguity benchmark

BENCH_BRANCHES = ("landing", "extend", "N", "E", "S", "W")


@dataclass(frozen=True)
class BenchmarkConfig:
    n_flights: int = 720
    obs_horizon: float = 11.0
    pred_horizon: float = 120.0
    no_call_fraction: float = 0.0
    max_call_age: float = 300.0
    branch_delay: float = 4.0  # s, uniform jitter before the branch manoeuvre
    speed_jitter: float = 0.08  # +/- fraction applied after the branch point
    branch_along: float = 1.2  # km past the runway-08 threshold where the branch begins
    runway: str = "08"
    split_fractions: tuple[float, float, float] = (0.6, 0.1, 0.3)
    flights_per_day: int = 12
    sim: SimConfig = SimConfig()


def branch_intent(branch: str, runway: str) -> IntentLabel:
    if branch == "landing":
        return Landing(runway)
    if branch == "extend":
        return EnterLeg(runway, "downwind")
    return Depart(branch)


def _bench_script(branch: str, tail: str, type_key: str, spawn: float, bc: BenchmarkConfig,
                  rng: np.random.Generator, call_age: float | None) -> FlightScript:
    cfg = bc.sim
    airport = cfg.airport
    end = airport.runway(bc.runway)
    frame = _RunwayFrame(end)
    rw = end.designator
    downwind_heading = (end.heading + 180.0) % 360.0
    branch_pt = frame.point(bc.branch_along, 0.0) + frame.n * cfg.downwind_offset
    start_pt = branch_pt - cfg.v * bc.obs_horizon * np.array(
        [math.sin(math.radians(downwind_heading)), math.cos(math.radians(downwind_heading))]
    )
    z = airport.pattern_altitude_agl
    b = PathBuilder(State(start_pt[0], start_pt[1], z, downwind_heading, cfg.v), cfg)
    b.straight(bc.obs_horizon, name="shared_downwind")
    b.straight(float(rng.uniform(0.0, bc.branch_delay)), name="branch_delay")
    v = cfg.v * (1.0 + float(rng.uniform(-bc.speed_jitter, bc.speed_jitter)))
    b.state = replace(b.state, speed=v)
    bcfg = replace(cfg, speed=v * 1000.0)
    b.config = bcfg
    climb = cfg.climb_rate / 1000.0
    if branch == "landing":
        _pattern_to_landing(b, frame, bcfg, base_along=-1.0, final_call=False, base_call=False)
        b.straight(300.0, name="taxi_back", speed=cfg.taxi_speed / 1000.0)
    elif branch == "extend":
        _pattern_to_landing(b, frame, bcfg, base_along=-3.0, final_call=False, base_call=False)
        b.straight(300.0, name="taxi_back", speed=cfg.taxi_speed / 1000.0)
    else:
        b.turn_to(DIRECTION_HEADING[branch], direction="right" if branch == "E" else None,
                  climb=climb, z_limit=cfg.departure_altitude, name="departure_turn")
        b.straight(400.0, climb, cfg.departure_altitude, "departure")
    calls = []
    if call_age is not None:
        phrase = {"landing": "bench_landing", "extend": "bench_extend"}.get(branch, "bench_depart")
        calls.append(CallSpec(bc.obs_horizon - call_age, branch_intent(branch, rw), phrase, rw,
                              branch if branch in DIRECTION_HEADING else None))
    return FlightScript(tail, type_key, spawn, b.start, b.legs, calls, f"bench_{branch}", rw)


def ambiguity_benchmark(bc: BenchmarkConfig = BenchmarkConfig()) -> SimDataset:
    """Flights sharing one downwind prefix that branch by announced intent.

    Every flight flies the same ``obs_horizon`` seconds of downwind (up to
    position noise), then lands, extends downwind, or departs N/E/S/W. Its call
    announcing the branch precedes the end of the observation window. One scene
    per flight, ending exactly at the branch point.
    """
    cfg = bc.sim
    root = np.random.SeedSequence(cfg.seed)
    fleet_rng, order_rng, *flight_seeds = [np.random.default_rng(s) for s in root.spawn(bc.n_flights + 2)]
    fleet, directory = make_fleet(bc.n_flights, fleet_rng)
    branches = [BENCH_BRANCHES[i % len(BENCH_BRANCHES)] for i in range(bc.n_flights)]
    branches = [branches[i] for i in order_rng.permutation(bc.n_flights)]
    silent = np.zeros(bc.n_flights, dtype=bool)
    n_silent = int(round(bc.no_call_fraction * bc.n_flights))
    silent[order_rng.permutation(bc.n_flights)[:n_silent]] = True
    tracks: dict[str, Track] = {}
    calls: list[RadioCall] = []
    scripts = []
    day = {}
    span = bc.obs_horizon + bc.pred_horizon
    spacing = 1000.0
    for i, ((tail, type_key), rng) in enumerate(zip(fleet, flight_seeds)):
        age = None if silent[i] else float(np.round(rng.uniform(2.0, bc.max_call_age)))
        spawn = bc.max_call_age + i * spacing
        script = _bench_script(branches[i], tail, type_key, spawn, bc, rng, age)
        track, fcalls = simulate_flight(script, cfg, rng)
        keep = track.times <= spawn + span + 1e-9
        tracks[tail] = Track(tail, track.times[keep], track.positions[keep])
        calls.extend(fcalls)
        scripts.append(script)
        day[tail] = i // bc.flights_per_day
    calls.sort(key=lambda c: c.time)
    scenes = window_scenes(tracks, truth_labels(calls), bc.obs_horizon, bc.pred_horizon,
                           stride=span + 1.0, sample_rate=cfg.sample_rate, day_of=lambda aid, t: day[aid])
    split = split_scenes(scenes, bc.split_fractions, seed=cfg.seed,
                         provenance=f"ambiguity benchmark n={bc.n_flights} obs={bc.obs_horizon} pred={bc.pred_horizon} "
                                    f"no_call={bc.no_call_fraction} seed={cfg.seed}")
    return SimDataset(tracks, calls, directory, split, scripts)
