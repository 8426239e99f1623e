"""Domain types for the hybrid ground/satellite network and the augmented
ground multigraph used for entanglement-distribution planning."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

from . import channel

StationId = Hashable


def pair_key(a, b) -> tuple:
    """Canonical unordered pair: ``pair_key(m, n) == pair_key(n, m)``."""
    if a == b:
        raise ValueError(f"degenerate pair ({a!r}, {a!r})")
    return (a, b) if str(a) <= str(b) else (b, a)


def _check_prob(name, value, allow_zero=False):
    lo_ok = value >= 0 if allow_zero else value > 0
    if not (lo_ok and value <= 1):
        raise ValueError(f"{name} must be in {'[0' if allow_zero else '(0'}, 1], got {value}")


@dataclass(frozen=True)
class GroundStation:
    id: StationId
    latitude: float
    longitude: float
    swap_success: float = 1.0
    population: float = 1.0

    def __post_init__(self):
        if not -90 <= self.latitude <= 90:
            raise ValueError(f"station {self.id}: latitude {self.latitude} out of range")
        if not -180 <= self.longitude <= 180:
            raise ValueError(f"station {self.id}: longitude {self.longitude} out of range")
        _check_prob(f"station {self.id} swap_success", self.swap_success)


@dataclass(frozen=True)
class FiberLink:
    a: StationId
    b: StationId
    capacity: int
    gen_success: float

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError(f"fiber endpoints must differ, got {self.a!r} twice")
        if int(self.capacity) != self.capacity or self.capacity < 1:
            raise ValueError(f"fiber {self.a}-{self.b}: capacity must be a positive integer")
        _check_prob(f"fiber {self.a}-{self.b} gen_success", self.gen_success)

    @property
    def pair(self) -> tuple:
        return pair_key(self.a, self.b)

    @classmethod
    def from_length(cls, a, b, capacity, length_km, gamma, gen: channel.GenerationParams,
                    gen_success=None):
        """Derive ``gen_success`` from the fiber length unless given explicitly."""
        if gen_success is None:
            gen_success = channel.fiber_success(length_km, gamma, gen)
            # a dead fiber is still a valid (useless) link
            gen_success = max(gen_success, 1e-300)
        return cls(a, b, capacity, gen_success)


@dataclass(frozen=True)
class Satellite:
    id: int
    plane_index: int
    slot_index: int
    lens_capacity: int = 4
    lens_success: float = 1.0

    def __post_init__(self):
        if int(self.lens_capacity) != self.lens_capacity or self.lens_capacity < 0:
            raise ValueError(f"satellite {self.id}: lens_capacity must be a nonnegative integer")
        _check_prob(f"satellite {self.id} lens_success", self.lens_success)


@dataclass(frozen=True)
class Isl:
    u: int
    v: int

    def __post_init__(self):
        if self.u == self.v:
            raise ValueError("ISL endpoints must differ")
        if self.u > self.v:
            a, b = self.v, self.u
            object.__setattr__(self, "u", a)
            object.__setattr__(self, "v", b)


@dataclass(frozen=True)
class Gsl:
    station: StationId
    satellite: int
    survival: float

    def __post_init__(self):
        _check_prob(f"GSL {self.station}-{self.satellite} survival", self.survival)


@dataclass(frozen=True)
class NetworkSnapshot:
    stations: tuple
    fibers: tuple
    satellites: tuple
    isls: tuple
    gsls_at_t: tuple
    time: float = 0.0

    def __post_init__(self):
        sids = {s.id for s in self.stations}
        vids = {s.id for s in self.satellites}
        for g in self.gsls_at_t:
            if g.station not in sids or g.satellite not in vids:
                raise ValueError(f"GSL {g.station}-{g.satellite} references an unknown node")

    def has_gsl(self, station, satellite) -> bool:
        return any(g.station == station and g.satellite == satellite for g in self.gsls_at_t)


@dataclass(frozen=True)
class Lightpath:
    source_station: StationId
    dest_station: StationId
    uplink: Gsl
    satellites: tuple  # Satellite objects v1..vk in traversal order
    downlink: Gsl
    capacity: float
    success: float = 0.0
    start_s: float = 0.0
    end_s: float = float("inf")
    commodity: Hashable = None
    epoch: int = 0

    def __post_init__(self):
        ids = [s.id for s in self.satellites]
        if not ids:
            raise ValueError("lightpath needs at least one satellite")
        if len(set(ids)) != len(ids):
            raise ValueError(f"lightpath repeats a satellite: {ids}")
        if self.uplink.satellite != ids[0] or self.downlink.satellite != ids[-1]:
            raise ValueError("uplink/downlink must attach to the first/last satellite")
        if self.source_station == self.dest_station:
            raise ValueError("lightpath endpoints must differ")
        if self.capacity <= 0:
            raise ValueError("lightpath capacity must be positive")
        object.__setattr__(self, "success",
                           channel.lightpath_success(self.uplink, self.satellites, self.downlink))

    @property
    def pair(self) -> tuple:
        return pair_key(self.source_station, self.dest_station)

    @property
    def satellite_ids(self) -> tuple:
        return tuple(s.id for s in self.satellites)

    @property
    def isl_sequence(self) -> tuple:
        ids = self.satellite_ids
        return tuple(Isl(a, b) for a, b in zip(ids, ids[1:]))

    def active_at(self, t: float) -> bool:
        return self.start_s <= t < self.end_s


@dataclass(frozen=True)
class Commodity:
    id: Hashable
    source: StationId
    dest: StationId
    demand_series: Mapping = field(default_factory=dict)  # window index -> z_i

    def __post_init__(self):
        if self.source == self.dest:
            raise ValueError(f"commodity {self.id}: source equals destination")
        for k, z in self.demand_series.items():
            if z < 0:
                raise ValueError(f"commodity {self.id}: negative demand {z} in window {k}")

    @property
    def pair(self) -> tuple:
        return pair_key(self.source, self.dest)

    def demand(self, window=0) -> float:
        return float(self.demand_series.get(window, 0.0))


@dataclass(frozen=True)
class Edge:
    """One parallel edge of the augmented graph (fiber or virtual lightpath)."""
    pair: tuple
    capacity: float
    success: float
    kind: str  # "fiber" | "lightpath"
    key: Hashable = None


@dataclass(frozen=True)
class AugmentedGraph:
    stations: tuple
    edges: tuple

    @property
    def station_ids(self) -> tuple:
        return tuple(s.id for s in self.stations)

    def swap_success(self) -> dict:
        return {s.id: s.swap_success for s in self.stations}

    def edges_by_pair(self) -> dict:
        out: dict = {}
        for e in self.edges:
            out.setdefault(e.pair, []).append(e)
        return out

    def pair_rate(self, pair) -> float:
        """Expected elementary ebits per slot on ``pair`` at full generation."""
        return sum(e.capacity * e.success for e in self.edges if e.pair == pair)


def build_augmented_graph(snapshot: NetworkSnapshot, provisioned: Iterable[Lightpath]) -> AugmentedGraph:
    """Fibers plus one parallel virtual edge per provisioned lightpath."""
    edges = [Edge(f.pair, f.capacity, f.gen_success, "fiber", ("fiber",) + f.pair)
             for f in snapshot.fibers]
    for n, lp in enumerate(provisioned):
        for g in (lp.uplink, lp.downlink):
            if not snapshot.has_gsl(g.station, g.satellite):
                raise ValueError(
                    f"lightpath {lp.source_station}->{lp.dest_station}: GSL "
                    f"{g.station}-{g.satellite} is not active at t={snapshot.time}")
        key = ("lightpath", lp.commodity, lp.epoch, lp.satellite_ids, n)
        edges.append(Edge(lp.pair, lp.capacity, lp.success, "lightpath", key))
    return AugmentedGraph(tuple(snapshot.stations), tuple(edges))


def ground_graph(stations: Sequence[GroundStation], fibers: Sequence[FiberLink],
                 lightpaths: Iterable[Lightpath] = ()) -> AugmentedGraph:
    """Augmented graph built directly from fibers and (already-checked) lightpaths."""
    edges = [Edge(f.pair, f.capacity, f.gen_success, "fiber", ("fiber",) + f.pair) for f in fibers]
    for n, lp in enumerate(lightpaths):
        edges.append(Edge(lp.pair, lp.capacity, lp.success, "lightpath",
                          ("lightpath", lp.commodity, lp.epoch, lp.satellite_ids, n)))
    return AugmentedGraph(tuple(stations), tuple(edges))


def validate_scenario(stations, fibers, satellites, commodities) -> list[str]:
    """Return a list of human-readable invariant violations (empty if well-formed).

    Accepts either constructed domain objects or plain dicts, so that invalid
    raw input can be reported rather than raising on construction.
    """
    problems: list[str] = []

    def get(obj, name, default=None):
        if isinstance(obj, Mapping):
            return obj.get(name, default)
        return getattr(obj, name, default)

    def prob(where, value, allow_zero=False):
        try:
            v = float(value)
        except (TypeError, ValueError):
            problems.append(f"{where}: not a number ({value!r})")
            return
        if not ((v >= 0 if allow_zero else v > 0) and v <= 1):
            problems.append(f"{where}: probability {v} out of range")

    ids = [get(s, "id") for s in stations]
    for sid, n in Counter(ids).items():
        if n > 1:
            problems.append(f"station {sid}: duplicate id")
    known = set(ids)
    for s in stations:
        sid = get(s, "id")
        lat, lon = get(s, "latitude", get(s, "lat")), get(s, "longitude", get(s, "lon"))
        if lat is None or not -90 <= float(lat) <= 90:
            problems.append(f"station {sid}: latitude {lat} out of range")
        if lon is None or not -180 <= float(lon) <= 180:
            problems.append(f"station {sid}: longitude {lon} out of range")
        prob(f"station {sid} swap_success", get(s, "swap_success", 1.0))

    seen_pairs = Counter()
    for f in fibers:
        a, b = get(f, "a"), get(f, "b")
        name = f"fiber {a}-{b}"
        if a not in known or b not in known:
            problems.append(f"{name}: references unknown station")
        if a == b:
            problems.append(f"{name}: endpoints must differ")
        else:
            seen_pairs[pair_key(a, b)] += 1
        cap = get(f, "capacity")
        if cap is None or int(cap) != cap or cap < 1:
            problems.append(f"{name}: capacity {cap} is not a positive integer")
        if get(f, "gen_success") is not None:
            prob(f"{name} gen_success", get(f, "gen_success"))
    for p, n in seen_pairs.items():
        if n > 1:
            problems.append(f"fiber {p[0]}-{p[1]}: duplicate fiber for pair")

    sat_ids = [get(v, "id") for v in satellites]
    for vid, n in Counter(sat_ids).items():
        if n > 1:
            problems.append(f"satellite {vid}: duplicate id")
    for v in satellites:
        vid = get(v, "id")
        cap = get(v, "lens_capacity", 1)
        if cap is None or int(cap) != cap or cap < 0:
            problems.append(f"satellite {vid}: lens_capacity {cap} invalid")
        prob(f"satellite {vid} lens_success", get(v, "lens_success", 1.0))

    cids = [get(c, "id") for c in commodities]
    for cid, n in Counter(cids).items():
        if n > 1:
            problems.append(f"commodity {cid}: duplicate id")
    for c in commodities:
        cid, s, d = get(c, "id"), get(c, "source"), get(c, "dest")
        if s not in known or d not in known:
            problems.append(f"commodity {cid}: references unknown station")
        if s == d:
            problems.append(f"commodity {cid}: source equals destination")
        for k, z in dict(get(c, "demand_series", {}) or {}).items():
            if z < 0:
                problems.append(f"commodity {cid}: negative demand in window {k}")
    return problems
