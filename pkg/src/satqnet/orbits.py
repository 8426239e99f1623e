"""Circular-orbit constellation geometry, GSL visibility and per-commodity epochs."""
from __future__ import annotations

import bisect
import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .netmodel import Isl, Satellite

EARTH_RADIUS_KM = 6371.0
MU_KM3_S2 = 398600.4
EARTH_ROTATION_RAD_S = 7.2921159e-5


@dataclass(frozen=True)
class ConstellationSpec:
    num_planes: int = 10
    sats_per_plane: int = 15
    inclination: float = 96.9  # degrees
    altitude_km: float = 780.0
    phasing_offset: float = 0.0  # fraction of in-plane spacing between adjacent planes

    def __post_init__(self):
        if self.num_planes < 1 or self.sats_per_plane < 1:
            raise ValueError("constellation needs at least one plane and one satellite per plane")
        if not 0 <= self.inclination <= 180:
            raise ValueError(f"inclination {self.inclination} outside [0, 180]")
        if not self.altitude_km > 0:
            raise ValueError("altitude must be positive")

    @property
    def radius_km(self) -> float:
        return EARTH_RADIUS_KM + self.altitude_km

    @property
    def period_s(self) -> float:
        return 2 * np.pi * np.sqrt(self.radius_km ** 3 / MU_KM3_S2)

    @property
    def mean_motion(self) -> float:
        return 2 * np.pi / self.period_s

    def sat_id(self, plane: int, slot: int) -> int:
        return (plane % self.num_planes) * self.sats_per_plane + (slot % self.sats_per_plane)


def generate_constellation(spec: ConstellationSpec, lens_capacity=4, lens_success=1.0):
    """Satellites and +Grid ISLs.

    ``lens_success`` may be a scalar or a sequence with one entry per satellite.
    """
    P, S = spec.num_planes, spec.sats_per_plane
    ls = np.broadcast_to(np.asarray(lens_success, dtype=float), (P * S,))
    sats = [Satellite(spec.sat_id(p, s), p, s, lens_capacity, float(ls[spec.sat_id(p, s)]))
            for p in range(P) for s in range(S)]
    links = set()
    for p in range(P):
        for s in range(S):
            me = spec.sat_id(p, s)
            for other in (spec.sat_id(p, s + 1), spec.sat_id(p, s - 1),
                          spec.sat_id(p + 1, s), spec.sat_id(p - 1, s)):
                if other != me:
                    links.add((min(me, other), max(me, other)))
    return sats, [Isl(u, v) for u, v in sorted(links)]


def _elements(spec: ConstellationSpec, plane, slot):
    raan = 2 * np.pi * np.asarray(plane) / spec.num_planes
    spacing = 2 * np.pi / spec.sats_per_plane
    anomaly0 = spacing * np.asarray(slot) + spec.phasing_offset * spacing * np.asarray(plane)
    return raan, anomaly0


def propagate(spec: ConstellationSpec, satellite, time_s, frame: str = "inertial"):
    """Geocentric position(s) in km.

    ``satellite`` is a Satellite (or ``(plane, slot)`` arrays); ``time_s`` may be
    an array.  ``frame="ecef"`` rotates into the Earth-fixed frame.
    """
    if isinstance(satellite, Satellite):
        plane, slot = satellite.plane_index, satellite.slot_index
    else:
        plane, slot = satellite
    t = np.asarray(time_s, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be nonnegative")
    raan, anomaly0 = _elements(spec, np.asarray(plane)[..., None], np.asarray(slot)[..., None])
    u = anomaly0 + spec.mean_motion * t  # argument of latitude
    inc = np.radians(spec.inclination)
    r = spec.radius_km
    cu, su = np.cos(u), np.sin(u)
    co, so = np.cos(raan), np.sin(raan)
    x = r * (co * cu - so * su * np.cos(inc))
    y = r * (so * cu + co * su * np.cos(inc))
    z = r * su * np.sin(inc) * np.ones_like(co)
    if frame == "ecef":
        th = EARTH_ROTATION_RAD_S * t
        x, y = x * np.cos(th) + y * np.sin(th), -x * np.sin(th) + y * np.cos(th)
    elif frame != "inertial":
        raise ValueError(f"unknown frame {frame!r}")
    pos = np.stack(np.broadcast_arrays(x, y, z), axis=-1)
    if pos.shape[0] == 1 and np.ndim(plane) == 0:
        pos = pos[0]
    return pos


def station_ecef(lat_deg, lon_deg) -> np.ndarray:
    lat, lon = np.radians(lat_deg), np.radians(lon_deg)
    return EARTH_RADIUS_KM * np.stack(
        [np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)], axis=-1)


def elevation_deg(station_pos, sat_pos) -> np.ndarray:
    """Elevation of ``sat_pos`` above the local horizon of ``station_pos`` (spherical Earth)."""
    d = sat_pos - station_pos
    up = station_pos / np.linalg.norm(station_pos, axis=-1, keepdims=True)
    s = np.sum(d * up, axis=-1) / np.linalg.norm(d, axis=-1)
    return np.degrees(np.arcsin(np.clip(s, -1.0, 1.0)))


@dataclass
class VisibilityTimeline:
    step_s: float
    horizon_s: float
    intervals: dict = field(default_factory=dict)  # (station, sat) -> [(rise, set), ...]

    def visible(self, station, t) -> set:
        """Satellites visible from ``station`` at time ``t``."""
        out = set()
        for (st, sat), ivs in self.intervals.items():
            if st == station and any(a <= t < b for a, b in ivs):
                out.add(sat)
        return out

    def stations(self) -> set:
        return {st for st, _ in self.intervals}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["station", "satellite", "rise_s", "set_s"])
            for (st, sat), ivs in sorted(self.intervals.items(), key=lambda kv: (str(kv[0][0]), kv[0][1])):
                for a, b in ivs:
                    w.writerow([st, sat, a, b])

    @classmethod
    def from_csv(cls, path, step_s, horizon_s) -> "VisibilityTimeline":
        tl = cls(step_s, horizon_s)
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                key = (row["station"], int(row["satellite"]))
                tl.intervals.setdefault(key, []).append((float(row["rise_s"]), float(row["set_s"])))
        for ivs in tl.intervals.values():
            ivs.sort()
        return tl


def visibility_timeline(spec: ConstellationSpec, stations, horizon_s, step_s=600.0,
                        min_elevation_deg=25.0) -> VisibilityTimeline:
    """Sample elevations every ``step_s``; sample k stands for ``[k*step, (k+1)*step)``."""
    if step_s <= 0 or horizon_s < step_s:
        raise ValueError("need step_s > 0 and horizon_s >= step_s")
    n = int(np.floor(horizon_s / step_s + 1e-9))
    times = np.arange(n) * step_s
    P, S = spec.num_planes, spec.sats_per_plane
    plane = np.repeat(np.arange(P), S)
    slot = np.tile(np.arange(S), P)
    sat_pos = propagate(spec, (plane, slot), times, frame="ecef")  # (P*S, n, 3)
    tl = VisibilityTimeline(step_s, n * step_s)
    for st in stations:
        g = station_ecef(st.latitude, st.longitude)
        vis = elevation_deg(g, sat_pos) >= min_elevation_deg  # (P*S, n)
        for sat in np.flatnonzero(vis.any(axis=1)):
            row = vis[sat].astype(np.int8)
            edges = np.diff(np.concatenate([[0], row, [0]]))
            rises, sets = np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)
            tl.intervals[(st.id, int(sat))] = [(float(a * step_s), float(b * step_s))
                                               for a, b in zip(rises, sets)]
    return tl


@dataclass
class CommodityEpochs:
    """Per commodity: epoch start times (first is 0), the candidate satellites
    visible from each endpoint during every epoch, and the epoch end times."""
    starts: dict = field(default_factory=dict)
    ends: dict = field(default_factory=dict)
    source_sats: dict = field(default_factory=dict)
    dest_sats: dict = field(default_factory=dict)
    unreachable: list = field(default_factory=list)

    def changes(self, cid) -> list:
        return self.starts[cid][1:]

    def index(self, cid, t) -> int:
        """m_i^t: number of topology changes at or before ``t``."""
        return bisect.bisect_right(self.changes(cid), t)

    def epochs(self, cid):
        for m, (a, b) in enumerate(zip(self.starts[cid], self.ends[cid])):
            yield m, a, b, self.source_sats[cid][m], self.dest_sats[cid][m]


def _visible_during(per_station, station, a, b):
    return frozenset(sat for sat, ivs in per_station.get(station, {}).items()
                     if any(lo <= a and b <= hi for lo, hi in ivs))


def commodity_epochs(timeline: VisibilityTimeline, commodities) -> CommodityEpochs:
    horizon = timeline.horizon_s
    per_station: dict = {}
    for (st, sat), ivs in timeline.intervals.items():
        per_station.setdefault(st, {})[sat] = ivs
    ce = CommodityEpochs()
    for c in commodities:
        events = set()
        touched = False
        for st in (c.source, c.dest):
            for ivs in per_station.get(st, {}).values():
                touched = touched or bool(ivs)
                for lo, hi in ivs:
                    events.update(x for x in (lo, hi) if 0 < x < horizon)
        if not touched:
            ce.unreachable.append(c.id)
        starts = [0.0] + sorted(events)
        ends = starts[1:] + [horizon]
        ce.starts[c.id], ce.ends[c.id] = starts, ends
        ce.source_sats[c.id] = [_visible_during(per_station, c.source, a, b) for a, b in zip(starts, ends)]
        ce.dest_sats[c.id] = [_visible_during(per_station, c.dest, a, b) for a, b in zip(starts, ends)]
    return ce


def static_timeline(pairs: Iterable, horizon_s, step_s=None) -> VisibilityTimeline:
    """Timeline where each ``(station, satellite)`` pair is visible throughout."""
    tl = VisibilityTimeline(step_s or horizon_s, horizon_s)
    for st, sat in pairs:
        tl.intervals[(st, sat)] = [(0.0, float(horizon_s))]
    return tl
