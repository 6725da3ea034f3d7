"""Airport frame, traffic-pattern structure and the discrete intent label set.

All positions live in a local east-north-up frame in kilometres, centred on the
airport reference point. Headings are degrees true, clockwise from north.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

EARTH_RADIUS_KM = 6371.0088
KM_PER_NM = 1.852
LEGS = ("crosswind", "base", "downwind")
DEPART_DIRECTIONS = ("N", "E", "S", "W")
SECTOR_NAMES_4 = ("North", "East", "South", "West")
SECTOR_NAMES_8 = ("North", "Northeast", "East", "Southeast", "South", "Southwest", "West", "Northwest")
MAX_PROJECTION_KM = 500.0


class AirportConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LocalPosition:
    x: float  # km east
    y: float  # km north
    z: float = 0.0  # km above field elevation

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError(f"non-finite position {self!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "LocalPosition":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    @property
    def horizontal_range(self) -> float:
        return math.hypot(self.x, self.y)


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float
    elevation_m: float = 0.0


@dataclass(frozen=True)
class RunwayEnd:
    designator: str
    heading: float
    threshold: LocalPosition
    pattern: str = "left"

    def __post_init__(self):
        if not 0.0 <= self.heading < 360.0:
            raise AirportConfigError(f"runway {self.designator}: heading {self.heading} outside [0, 360)")
        if self.pattern not in ("left", "right"):
            raise AirportConfigError(f"runway {self.designator}: pattern must be left or right")
        expected = round(self.heading / 10.0) % 36 or 36
        number = int(self.designator)
        if min(abs(number - expected), 36 - abs(number - expected)) > 1:
            raise AirportConfigError(
                f"runway {self.designator} does not match heading {self.heading:.1f}"
            )

    @property
    def number(self) -> int:
        return int(self.designator)

    def unit_vector(self) -> np.ndarray:
        h = math.radians(self.heading)
        return np.array([math.sin(h), math.cos(h)])

    def pattern_side_vector(self) -> np.ndarray:
        """Horizontal unit vector pointing from the runway towards the downwind leg."""
        h = math.radians(self.heading + (-90.0 if self.pattern == "left" else 90.0))
        return np.array([math.sin(h), math.cos(h)])


@dataclass(frozen=True)
class AirportConfig:
    name: str
    origin: GeoPoint
    runway_ends: tuple[RunwayEnd, ...]
    pattern_altitude_agl: float = 0.305
    aliases: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.runway_ends:
            raise AirportConfigError("airport needs at least one runway end")
        if not self.pattern_altitude_agl > 0:
            raise AirportConfigError("pattern_altitude_agl must be positive")
        names = [r.designator for r in self.runway_ends]
        if len(set(names)) != len(names):
            raise AirportConfigError(f"duplicate runway designators {names}")
        for a in self.runway_ends:
            recip = self.reciprocal(a)
            if recip is not None:
                diff = abs((a.heading - recip.heading) % 360.0 - 180.0)
                if diff > 1.0:
                    raise AirportConfigError(
                        f"runway ends {a.designator}/{recip.designator} headings differ by "
                        f"{(a.heading - recip.heading) % 360.0:.1f} deg, expected 180 +/- 1"
                    )

    def reciprocal(self, end: RunwayEnd) -> RunwayEnd | None:
        target = (end.number + 18 - 1) % 36 + 1
        for other in self.runway_ends:
            if other.number == target and other is not end:
                return other
        return None

    def sorted_ends(self) -> list[RunwayEnd]:
        return sorted(self.runway_ends, key=lambda r: r.designator)

    def runway(self, designator: str | int) -> RunwayEnd:
        number = int(designator)
        for r in self.runway_ends:
            if r.number == number:
                return r
        raise KeyError(f"{self.name} has no runway {designator}")

    def has_runway(self, designator: str | int) -> bool:
        try:
            self.runway(designator)
        except (KeyError, ValueError):
            return False
        return True


# --------------------------------------------------------------- intent labels


@dataclass(frozen=True)
class IntentLabel:
    """One element of the closed intent taxonomy.

    ``kind`` is one of takeoff, landing, enter_leg, depart, other, insufficient,
    unknown. Runway-bound kinds carry a designator; enter_leg also carries the leg,
    depart carries a 4-point direction.
    """

    kind: str
    runway: str | None = None
    leg: str | None = None
    direction: str | None = None

    def __str__(self) -> str:
        if self.kind in ("takeoff", "landing"):
            return f"{self.kind}:{self.runway}"
        if self.kind == "enter_leg":
            return f"enter_leg:{self.runway}:{self.leg}"
        if self.kind == "depart":
            return f"depart:{self.direction}"
        return self.kind

    @classmethod
    def parse(cls, text: str) -> "IntentLabel":
        parts = text.strip().split(":")
        kind = parts[0].lower()
        try:
            if kind in ("takeoff", "landing") and len(parts) == 2:
                return cls(kind, runway=_designator(parts[1]))
            if kind == "enter_leg" and len(parts) == 3 and parts[2] in LEGS:
                return cls(kind, runway=_designator(parts[1]), leg=parts[2])
            if kind == "depart" and len(parts) == 2 and parts[1].upper() in DEPART_DIRECTIONS:
                return cls(kind, direction=parts[1].upper())
        except ValueError:
            pass
        if kind in ("other", "insufficient", "unknown") and len(parts) == 1:
            return cls(kind)
        raise ValueError(f"not an intent label: {text!r}")


def _designator(text: str) -> str:
    return f"{int(text):02d}"


def Takeoff(runway: str | int) -> IntentLabel:
    return IntentLabel("takeoff", runway=_designator(str(runway)))


def Landing(runway: str | int) -> IntentLabel:
    return IntentLabel("landing", runway=_designator(str(runway)))


def EnterLeg(runway: str | int, leg: str) -> IntentLabel:
    if leg not in LEGS:
        raise ValueError(f"unknown leg {leg!r}")
    return IntentLabel("enter_leg", runway=_designator(str(runway)), leg=leg)


def Depart(direction: str) -> IntentLabel:
    if direction not in DEPART_DIRECTIONS:
        raise ValueError(f"unknown departure direction {direction!r}")
    return IntentLabel("depart", direction=direction)


OTHER = IntentLabel("other")
INSUFFICIENT = IntentLabel("insufficient")
UNKNOWN = IntentLabel("unknown")


def intent_label_set(airport: AirportConfig) -> list[IntentLabel]:
    """Ordered label list whose positions double as embedding indices.

    Order: takeoffs, landings, then the three leg entries per runway end (all in
    designator order), departures N/E/S/W, other, insufficient, unknown.
    """
    ends = [r.designator for r in airport.sorted_ends()]
    labels = [Takeoff(d) for d in ends]
    labels += [Landing(d) for d in ends]
    labels += [EnterLeg(d, leg) for d in ends for leg in LEGS]
    labels += [Depart(d) for d in DEPART_DIRECTIONS]
    labels += [OTHER, INSUFFICIENT, UNKNOWN]
    return labels


def label_index(labels: list[IntentLabel]) -> dict[IntentLabel, int]:
    return {label: i for i, label in enumerate(labels)}


# ------------------------------------------------------------ bearing helpers


def bearing_deg(x: float, y: float) -> float:
    return math.degrees(math.atan2(x, y)) % 360.0


def sector_index(bearing: float, sectors: int) -> int:
    width = 360.0 / sectors
    # sector i spans (i*w - w/2, i*w + w/2]; a boundary belongs to the earlier sector
    return int(math.ceil((bearing - width / 2.0) / width)) % sectors


def cardinal_direction(pos: LocalPosition, sectors: int = 8) -> str:
    if sectors not in (4, 8):
        raise ValueError("sectors must be 4 or 8")
    if pos.x == 0.0 and pos.y == 0.0:
        raise ValueError("direction undefined at field")
    i = sector_index(bearing_deg(pos.x, pos.y), sectors)
    return (SECTOR_NAMES_4 if sectors == 4 else SECTOR_NAMES_8)[i]


def depart_direction(bearing: float) -> str:
    return DEPART_DIRECTIONS[sector_index(bearing % 360.0, 4)]


def distance_miles(pos: LocalPosition) -> int:
    """Horizontal range in whole nautical miles, halves rounded up."""
    return int(math.floor(pos.horizontal_range / KM_PER_NM + 0.5))


# ---------------------------------------------------------------- projection


def geodetic_to_local(point: GeoPoint, origin: GeoPoint) -> LocalPosition:
    """Equirectangular tangent projection about ``origin``."""
    if abs(point.lat) > 90 or abs(origin.lat) > 90:
        raise ValueError("latitude outside [-90, 90]")
    dlon = (point.lon - origin.lon + 180.0) % 360.0 - 180.0
    lat0 = math.radians(origin.lat)
    x = EARTH_RADIUS_KM * math.radians(dlon) * math.cos(lat0)
    y = EARTH_RADIUS_KM * math.radians(point.lat - origin.lat)
    if math.hypot(x, y) > MAX_PROJECTION_KM:
        raise ValueError(f"point is {math.hypot(x, y):.0f} km from origin; projection limited to 500 km")
    return LocalPosition(x, y, (point.elevation_m - origin.elevation_m) / 1000.0)


def local_to_geodetic(pos: LocalPosition, origin: GeoPoint) -> GeoPoint:
    lat0 = math.radians(origin.lat)
    lat = origin.lat + math.degrees(pos.y / EARTH_RADIUS_KM)
    lon = origin.lon + math.degrees(pos.x / (EARTH_RADIUS_KM * math.cos(lat0)))
    return GeoPoint(lat, lon, origin.elevation_m + pos.z * 1000.0)


# ------------------------------------------------------------------ file I/O

AIRPORT_SCHEMA = 1


def load_airport(path: str | Path) -> AirportConfig:
    """Parse the airport config file.

    Layout::

        schema=1
        name=Butler County
        aliases=butler county|butler
        origin_lat=40.7769
        origin_lon=-79.9497
        origin_elevation_m=380
        pattern_altitude_agl_km=0.305
        [runway_ends]
        designator,heading_deg,threshold_x_km,threshold_y_km,pattern
        08,80,-0.689,-0.122,left
        26,260,0.689,0.122,left
    """
    return parse_airport(Path(path).read_text(encoding="utf-8"), source=str(path))


def parse_airport(text: str, source: str = "<string>") -> AirportConfig:
    values: dict[str, str] = {}
    rows: list[tuple[int, str]] = []
    in_table = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "[runway_ends]":
            in_table = True
            continue
        if in_table:
            rows.append((lineno, line))
        else:
            if "=" not in line:
                raise AirportConfigError(f"{source}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    if values.get("schema") != str(AIRPORT_SCHEMA):
        raise AirportConfigError(f"{source}: unsupported airport schema {values.get('schema')!r}")
    if rows and rows[0][1].replace(" ", "").startswith("designator,"):
        rows = rows[1:]
    ends = []
    for lineno, line in rows:
        cells = [c.strip() for c in line.split(",")]
        if len(cells) not in (4, 5):
            raise AirportConfigError(f"{source}:{lineno}: runway row needs 4 or 5 fields")
        try:
            ends.append(
                RunwayEnd(
                    designator=f"{int(cells[0]):02d}",
                    heading=float(cells[1]) % 360.0,
                    threshold=LocalPosition(float(cells[2]), float(cells[3]), 0.0),
                    pattern=cells[4] if len(cells) == 5 else "left",
                )
            )
        except ValueError as exc:
            raise AirportConfigError(f"{source}:{lineno}: {exc}") from exc
    try:
        origin = GeoPoint(
            float(values.get("origin_lat", 0.0)),
            float(values.get("origin_lon", 0.0)),
            float(values.get("origin_elevation_m", 0.0)),
        )
        pattern_alt = float(values.get("pattern_altitude_agl_km", 0.305))
    except ValueError as exc:
        raise AirportConfigError(f"{source}: {exc}") from exc
    aliases = tuple(a.strip() for a in values.get("aliases", "").split("|") if a.strip())
    return AirportConfig(
        name=values.get("name", "airport"),
        origin=origin,
        runway_ends=tuple(ends),
        pattern_altitude_agl=pattern_alt,
        aliases=aliases,
    )


def format_airport(airport: AirportConfig) -> str:
    lines = [
        f"schema={AIRPORT_SCHEMA}",
        f"name={airport.name}",
        f"aliases={'|'.join(airport.aliases)}",
        f"origin_lat={airport.origin.lat!r}",
        f"origin_lon={airport.origin.lon!r}",
        f"origin_elevation_m={airport.origin.elevation_m!r}",
        f"pattern_altitude_agl_km={airport.pattern_altitude_agl!r}",
        "[runway_ends]",
        "designator,heading_deg,threshold_x_km,threshold_y_km,pattern",
    ]
    for r in airport.sorted_ends():
        lines.append(f"{r.designator},{float(r.heading)!r},{float(r.threshold.x)!r},{float(r.threshold.y)!r},{r.pattern}")
    return "\n".join(lines) + "\n"


def single_runway_airport(
    name: str = "Butler County",
    heading: float = 80.0,
    length_km: float = 1.4,
    origin: GeoPoint = GeoPoint(40.7769, -79.9497, 380.0),
    aliases: Iterable[str] = ("butler county", "butler"),
) -> AirportConfig:
    """One physical runway centred on the origin, both ends with left traffic."""
    h = math.radians(heading)
    half = np.array([math.sin(h), math.cos(h)]) * length_km / 2.0
    d1 = f"{round(heading / 10) % 36 or 36:02d}"
    h2 = (heading + 180.0) % 360.0
    d2 = f"{round(h2 / 10) % 36 or 36:02d}"
    return AirportConfig(
        name=name,
        origin=origin,
        runway_ends=(
            RunwayEnd(d1, heading, LocalPosition(float(-half[0]), float(-half[1]), 0.0)),
            RunwayEnd(d2, h2, LocalPosition(float(half[0]), float(half[1]), 0.0)),
        ),
        aliases=tuple(aliases),
    )


DEFAULT_AIRPORT = single_runway_airport()
