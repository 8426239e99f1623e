"""Scenario assembly and the end-to-end plan/provision/run driver."""
from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import channel, lpp, metrics, orbits, protosim
from .netmodel import Commodity, FiberLink, GroundStation, pair_key, validate_scenario

log = logging.getLogger(__name__)

ALGORITHMS = ("hybrid-dr", "hybrid-rr", "g-edt")
SECONDS_PER_DAY = 86400.0

# section -> key -> default; anything else in a scenario file is rejected
DEFAULTS = {
    "stations": {
        "builtin": "cities",
        "list": None,  # [{id, latitude, longitude, population?, swap_success?}]
        "population_range": [70.0, 300.0],
        "swap_success_range": [0.85, 0.98],
    },
    "fibers": {
        "topology": "complete",  # complete | list
        "capacity": 10,
        "list": None,  # [{a, b, capacity?, length_km?, gen_success?}]
        "distance_factor": 0.1,
        "min_gen_success": 1e-12,
    },
    "constellation": {
        "num_planes": 10,
        "sats_per_plane": 15,
        "inclination": 96.9,
        "altitude_km": 780.0,
        "phasing_offset": 0.0,
        "lens_capacity": 4,
        "min_elevation_deg": 25.0,
        "gsl_step_s": 600.0,
    },
    "channel": {
        "gamma_db_per_km": 0.2,
        "q_gen": 1.0,
        "n_attempts": 1,
        "gsl_up_survival": 0.2,
        "gsl_down_survival": 0.5,
        "lens_survival_range": [0.95, 0.98],
        "alpha": 10.0,
    },
    "commodities": {
        "count": 15,
        "list": None,  # [{id?, source, dest}]
        "total_demand": 40000.0,
        "demand_unit": "per_day",  # per_slot | per_window | per_day | per_horizon
        "demand_period_s": 3600.0,
    },
    "simulation": {
        "algorithm": "hybrid-dr",
        "threshold": 0.5,
        "repeaters": "all_stations",  # all_stations | commodities_only
        "slot_s": 10.0,
        "horizon_s": 86400.0,
        "planning_period_s": 86400.0,
        "edt_objective": "max_total",
        "lpp_backend": "auto",
        "edt_backend": "auto",
        "path_slack": None,
        "charge_gsl": False,
        "max_age_slots": None,
        "scenario_seed": 0,
    },
}


class ConfigError(ValueError):
    pass


def _merge(section: str, given) -> dict:
    if given is None:
        given = {}
    if not isinstance(given, dict):
        raise ConfigError(f"section {section!r} must be an object")
    unknown = sorted(set(given) - set(DEFAULTS[section]))
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {', '.join(unknown)}")
    out = copy.deepcopy(DEFAULTS[section])
    out.update(copy.deepcopy(given))
    return out


@dataclass
class ScenarioConfig:
    stations: dict = field(default_factory=lambda: _merge("stations", {}))
    fibers: dict = field(default_factory=lambda: _merge("fibers", {}))
    constellation: dict = field(default_factory=lambda: _merge("constellation", {}))
    channel: dict = field(default_factory=lambda: _merge("channel", {}))
    commodities: dict = field(default_factory=lambda: _merge("commodities", {}))
    simulation: dict = field(default_factory=lambda: _merge("simulation", {}))

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError("scenario must be a JSON object")
        unknown = sorted(set(data) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
        cfg = cls(**{s: _merge(s, data.get(s)) for s in DEFAULTS})
        cfg.check()
        return cfg

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {s: copy.deepcopy(getattr(self, s)) for s in DEFAULTS}

    def with_overrides(self, **dotted) -> "ScenarioConfig":
        """``cfg.with_overrides(**{"fibers.distance_factor": 0.01})``."""
        d = self.to_dict()
        for key, v in dotted.items():
            sec, name = key.split(".", 1)
            d[sec][name] = v
        return ScenarioConfig.from_dict(d)

    def check(self) -> None:
        sim, com = self.simulation, self.commodities
        if sim["algorithm"] not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}")
        if sim["repeaters"] not in ("all_stations", "commodities_only"):
            raise ConfigError("repeaters must be all_stations or commodities_only")
        if com["demand_unit"] not in ("per_slot", "per_window", "per_day", "per_horizon"):
            raise ConfigError(f"unknown demand_unit {com['demand_unit']!r}")
        for name, v in (("slot_s", sim["slot_s"]), ("horizon_s", sim["horizon_s"]),
                        ("planning_period_s", sim["planning_period_s"]),
                        ("demand_period_s", com["demand_period_s"]),
                        ("gsl_step_s", self.constellation["gsl_step_s"])):
            if not v > 0:
                raise ConfigError(f"{name} must be positive")
        if not com["total_demand"] > 0:
            raise ConfigError("total_demand must be positive")
        if not self.fibers["distance_factor"] > 0:
            raise ConfigError("distance_factor must be positive")
        if not 0 < sim["threshold"] <= 1:
            raise ConfigError("threshold must be in (0, 1]")
        if self.fibers["topology"] not in ("complete", "list"):
            raise ConfigError("fiber topology must be complete or list")


# --- building blocks -------------------------------------------------------

def builtin_cities() -> list[dict]:
    with resources.files("satqnet").joinpath("data/cities.json").open() as fh:
        return json.load(fh)


def great_circle_km(a: GroundStation, b: GroundStation) -> float:
    la1, lo1, la2, lo2 = map(math.radians, (a.latitude, a.longitude, b.latitude, b.longitude))
    h = math.sin((la2 - la1) / 2) ** 2 + math.cos(la1) * math.cos(la2) * math.sin((lo2 - lo1) / 2) ** 2
    return 2 * orbits.EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def scale_distances(stations, factor: float, gamma: float | None = None,
                    gen: channel.GenerationParams | None = None) -> dict:
    """Scaled great-circle distance per station pair; with ``gamma`` also the
    per-channel generation success of a fiber of that length."""
    if not factor > 0:
        raise ValueError("distance factor must be positive")
    gen = gen or channel.GenerationParams()
    out = {}
    stations = list(stations)
    for i, a in enumerate(stations):
        for b in stations[i + 1:]:
            d = great_circle_km(a, b) * factor
            out[pair_key(a.id, b.id)] = d if gamma is None else (d, channel.fiber_success(d, gamma, gen))
    return out


def gravity_demands(populations: dict, commodities, total_demand: float) -> dict:
    """``z_i`` proportional to the product of endpoint populations, summing to ``total_demand``."""
    commodities = list(commodities)
    if not commodities:
        return {}
    w = {}
    for c in commodities:
        ps, pd = populations[c.source], populations[c.dest]
        if ps <= 0 or pd <= 0:
            raise ValueError("populations must be positive")
        w[c.id] = ps * pd
    total_w = sum(w.values())
    return {cid: total_demand * v / total_w for cid, v in w.items()}


@dataclass
class Instance:
    """Everything a run needs, drawn once per (scenario, seed)."""
    stations: list
    fibers: list
    satellites: list
    isls: list
    commodities: list  # demand_series holds per-slot z per window
    populations: list  # per window: {station: population}
    spec: orbits.ConstellationSpec


def build_instance(cfg: ScenarioConfig, seed: int) -> Instance:
    st_cfg, fb_cfg, con, ch, com, sim = (cfg.stations, cfg.fibers, cfg.constellation,
                                         cfg.channel, cfg.commodities, cfg.simulation)
    rng = np.random.default_rng([int(sim["scenario_seed"]), int(seed)])
    raw = st_cfg["list"] if st_cfg["list"] is not None else builtin_cities()
    problems = validate_scenario(raw, [], [], [])
    if problems:
        raise ConfigError("; ".join(problems))
    lo, hi = st_cfg["swap_success_range"]
    stations = []
    for s in raw:
        q = s.get("swap_success", float(rng.uniform(lo, hi)))
        stations.append(GroundStation(s["id"], float(s["latitude"]), float(s["longitude"]), q,
                                      float(s.get("population", 0.0)) or 1.0))
    by_id = {s.id: s for s in stations}

    gen = channel.GenerationParams(ch["q_gen"], ch["n_attempts"])
    gamma, factor = ch["gamma_db_per_km"], fb_cfg["distance_factor"]
    if fb_cfg["topology"] == "complete":
        specs = [{"a": a.id, "b": b.id} for i, a in enumerate(stations) for b in stations[i + 1:]]
    else:
        specs = fb_cfg["list"] or []
    fibers = []
    for f in specs:
        if f["a"] not in by_id or f["b"] not in by_id:
            raise ConfigError(f"fiber {f['a']}-{f['b']} references an unknown station")
        length = f.get("length_km")
        length = great_circle_km(by_id[f["a"]], by_id[f["b"]]) if length is None else length
        q = f.get("gen_success")
        q = channel.fiber_success(length * factor, gamma, gen) if q is None else q
        if q < fb_cfg["min_gen_success"]:
            continue  # numerically dead fiber
        fibers.append(FiberLink(f["a"], f["b"], int(f.get("capacity", fb_cfg["capacity"])), q))

    spec = orbits.ConstellationSpec(con["num_planes"], con["sats_per_plane"], con["inclination"],
                                    con["altitude_km"], con["phasing_offset"])
    llo, lhi = ch["lens_survival_range"]
    lens = rng.uniform(llo, lhi, spec.num_planes * spec.sats_per_plane)
    sats, isls = orbits.generate_constellation(spec, con["lens_capacity"], lens)

    if com["list"] is not None:
        chosen = [(c.get("id", f"c{i}"), c["source"], c["dest"]) for i, c in enumerate(com["list"])]
    else:
        ids = [s.id for s in stations]
        all_pairs = [(a, b) for i, a in enumerate(ids) for b in ids[i + 1:]]
        n = min(com["count"], len(all_pairs))
        pick = sorted(rng.choice(len(all_pairs), size=n, replace=False))
        chosen = [(f"c{i}", *all_pairs[j]) for i, j in enumerate(pick)]

    slot_s = sim["slot_s"]
    window_s = com["demand_period_s"]
    n_windows = max(1, math.ceil(sim["horizon_s"] / window_s))
    per_slot = {
        "per_slot": 1.0,
        "per_window": slot_s / window_s,
        "per_day": slot_s / SECONDS_PER_DAY,
        "per_horizon": slot_s / sim["horizon_s"],
    }[com["demand_unit"]]
    plo, phi = st_cfg["population_range"]
    proto = [Commodity(cid, a, b) for cid, a, b in chosen]
    series = {cid: {} for cid, _, _ in chosen}
    pops = []
    for w in range(n_windows):
        pop = {s.id: float(rng.uniform(plo, phi)) for s in stations}
        pops.append(pop)
        for cid, z in gravity_demands(pop, proto, com["total_demand"]).items():
            series[cid][w] = z * per_slot
    commodities = [Commodity(cid, a, b, series[cid]) for cid, a, b in chosen]
    problems = validate_scenario(stations, fibers, sats, commodities)
    if problems:
        raise ConfigError("; ".join(problems))
    return Instance(stations, fibers, sats, isls, commodities, pops, spec)


# --- the driver ------------------------------------------------------------

def _clip(tl: orbits.VisibilityTimeline, a: float, b: float) -> orbits.VisibilityTimeline:
    """Sub-timeline on ``[a, b)`` re-based to start at 0."""
    out = orbits.VisibilityTimeline(tl.step_s, b - a)
    for key, ivs in tl.intervals.items():
        kept = [(max(lo, a) - a, min(hi, b) - a) for lo, hi in ivs if hi > a and lo < b]
        if kept:
            out.intervals[key] = kept
    return out


def _shift(c: lpp.CandidateLightpath, dt: float) -> lpp.CandidateLightpath:
    return lpp.CandidateLightpath(c.commodity, c.epoch, c.satellites, c.x_hat, c.received, c.injected,
                                  c.weight, c.start_s + dt, c.end_s + dt, c.source_station, c.dest_station)


@dataclass
class RunResult:
    algorithm: str
    seed: int
    average_throughput: float
    satisfaction_ratio: float
    total_throughput: float
    window_throughput: list
    window_satisfaction: list
    lightpaths: list
    sol_lp: list
    sol_alg: list
    horizon: protosim.HorizonResult = None

    def summary(self) -> dict:
        return dict(algorithm=self.algorithm, seed=self.seed,
                    average_throughput=self.average_throughput,
                    satisfaction_ratio=self.satisfaction_ratio,
                    total_throughput=self.total_throughput,
                    lightpaths=len(self.lightpaths), sol_lp=self.sol_lp, sol_alg=self.sol_alg)


def provision_lightpaths(cfg: ScenarioConfig, inst: Instance, seed: int, nodes=None):
    """Per planning period: visibility, epochs, relaxation, rounding.  Returns
    ``(lightpaths, sol_lp per period, sol_alg per period)``."""
    sim, con, ch = cfg.simulation, cfg.constellation, cfg.channel
    if sim["algorithm"] == "g-edt":
        return [], [], []
    horizon = sim["horizon_s"]
    step = con["gsl_step_s"]
    stations = [s for s in inst.stations if nodes is None or s.id in nodes]
    tl = orbits.visibility_timeline(inst.spec, stations, max(horizon, step), step, con["min_elevation_deg"])
    period = sim["planning_period_s"]
    paths, lps, algs = [], [], []
    start = 0.0
    while start < horizon:
        end = min(start + period, horizon)
        sub = _clip(tl, start, end)
        ep = orbits.commodity_epochs(sub, inst.commodities)
        li = lpp.LppInstance.from_epochs(inst.satellites, inst.isls, ep, inst.commodities, sim["slot_s"],
                                         alpha=ch["alpha"], gsl_up=ch["gsl_up_survival"],
                                         gsl_down=ch["gsl_down_survival"], path_slack=sim["path_slack"],
                                         charge_gsl=sim["charge_gsl"])
        model, sol, sol_lp = lpp.solve_relaxation(li, sim["lpp_backend"])
        cands = lpp.decompose_flows(model, sol, li)
        if sim["algorithm"] == "hybrid-dr":
            res = lpp.round_deterministic(cands, sim["threshold"], li, sol_lp)
        else:
            rr_seed = np.random.SeedSequence([int(sim["scenario_seed"]), int(seed), int(start)])
            res = lpp.round_randomized(cands, int(rr_seed.generate_state(1)[0]), li, sol_lp)
        assert not lpp.capacity_violations(res.selected, li)
        sel = [_shift(c, start) for c in res.selected]
        paths.extend(lpp.LppSolution(sel, sol_lp, res.sol_alg).lightpaths(li))
        lps.append(sol_lp)
        algs.append(res.sol_alg)
        start = end
    return paths, lps, algs


def run_once(cfg: ScenarioConfig, seed: int, keep_horizon: bool = False) -> RunResult:
    sim = cfg.simulation
    inst = build_instance(cfg, seed)
    nodes = None
    if sim["repeaters"] == "commodities_only":
        nodes = {x for c in inst.commodities for x in (c.source, c.dest)}
    try:
        paths, lps, algs = provision_lightpaths(cfg, inst, seed, nodes)
    except Exception as exc:
        raise RuntimeError(f"lightpath provisioning failed ({sim['algorithm']}, seed {seed}): {exc}") from exc
    slots = int(round(sim["horizon_s"] / sim["slot_s"]))
    max_age = math.inf if sim["max_age_slots"] is None else sim["max_age_slots"]
    try:
        hz = protosim.run_horizon(inst.stations, inst.fibers, paths, inst.commodities, slots, seed,
                                  sim["slot_s"], cfg.commodities["demand_period_s"], sim["edt_objective"],
                                  repeaters=nodes, nodes=nodes, backend=sim["edt_backend"], max_age=max_age)
    except Exception as exc:
        raise RuntimeError(f"protocol run failed ({sim['algorithm']}, seed {seed}): {exc}") from exc
    demand = lambda cid, w: next(c for c in inst.commodities if c.id == cid).demand(w)  # noqa: E731
    wt, ws = [], []
    for w, a in enumerate(range(0, slots, hz.window_slots)):
        chunk = hz.traces[a:a + hz.window_slots]
        wt.append(protosim.average_throughput(chunk, inst.commodities))
        ws.append(protosim.satisfaction_ratio(chunk, inst.commodities, lambda cid, _w, w=w: demand(cid, w)))
    avg = protosim.average_throughput(hz.traces, inst.commodities)
    return RunResult(sim["algorithm"], seed, avg, float(np.mean(ws)), avg * len(inst.commodities),
                     wt, ws, paths, lps, algs, hz if keep_horizon else None)


def run_experiment(cfg: ScenarioConfig, seeds) -> dict:
    """Run every seed and aggregate.  Pure function of ``(cfg, seeds)``."""
    runs = [run_once(cfg, int(s)) for s in seeds]
    return {
        "algorithm": cfg.simulation["algorithm"],
        "seeds": [int(s) for s in seeds],
        "average_throughput": metrics.aggregate([r.average_throughput for r in runs]).as_dict(),
        "satisfaction_ratio": metrics.aggregate([r.satisfaction_ratio for r in runs]).as_dict(),
        "runs": runs,
    }
