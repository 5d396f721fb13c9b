"""Scenario construction from files, population splits, and result output.

Two scenario document kinds are supported (UTF-8 JSON, schema in
``data/scenario.schema.json``):

``explicit``
    every cost, demand and capacity entry is listed (small analytical games);
``config``
    a mode/population/fleet configuration combined with a TNTP trips file and
    a distance source (the case-study form).

External files use 1-based location labels; arrays are 0-based.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import re
import tempfile
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import jsonschema
import numpy as np

from .model import (
    AFFINE,
    BPR_CODE,
    CONSTANT,
    UNBOUNDED,
    Capacities,
    CostModel,
    Scenario,
)

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
SPLIT_QUANTUM = 2.0 ** -16
EARTH_RADIUS_KM = 6371.0088


class ScenarioError(ValueError):
    """Raised for malformed scenario documents; ``field`` names the culprit."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


# ---------------------------------------------------------------------------
# TNTP trips files

_META = re.compile(r"^<([^>]*)>\s*(.*)$")
_ORIGIN = re.compile(r"^Origin\s+(\S+)\s*$", re.IGNORECASE)
_ENTRY = re.compile(r"(\S+)\s*:\s*([^;]*);")


def parse_tntp_trips(text: str) -> np.ndarray:
    """Parse a TNTP trips document into a dense 0-based matrix.

    Metadata lines look like ``<NUMBER OF ZONES> 24``; each ``Origin i`` block
    lists ``j : value;`` entries.  Unlisted pairs are zero and the diagonal
    is forced to zero (with a warning).
    """
    n_declared = None
    entries: dict = {}
    origin = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("~"):
            continue
        if line.startswith("<"):
            m = _META.match(line)
            if not m:
                raise ValueError(f"line {lineno}: malformed metadata line {raw!r}")
            key, value = m.group(1).strip().upper(), m.group(2).strip()
            if key == "NUMBER OF ZONES":
                try:
                    n_declared = int(value)
                except ValueError:
                    raise ValueError(f"line {lineno}: bad zone count {value!r}") from None
            continue
        if line.lower().startswith("origin"):
            m = _ORIGIN.match(line)
            if not m or not m.group(1).isdigit():
                raise ValueError(f"line {lineno}: malformed origin header {raw!r}")
            origin = int(m.group(1))
            if origin < 1 or (n_declared is not None and origin > n_declared):
                raise ValueError(f"line {lineno}: origin {origin} out of range")
            continue
        if origin is None:
            raise ValueError(f"line {lineno}: entry outside an Origin block")
        rest = line
        for m in _ENTRY.finditer(line):
            dest_s, val_s = m.group(1), m.group(2).strip()
            try:
                dest = int(dest_s)
                val = float(val_s)
            except ValueError:
                raise ValueError(f"line {lineno}: non-numeric entry {m.group(0)!r}") from None
            if dest < 1 or (n_declared is not None and dest > n_declared):
                raise ValueError(f"line {lineno}: destination {dest} out of range")
            if not math.isfinite(val) or val < 0:
                raise ValueError(f"line {lineno}: demand must be finite and >= 0, got {val_s}")
            entries[(origin, dest)] = val
            rest = rest.replace(m.group(0), "", 1)
        if rest.strip():
            raise ValueError(f"line {lineno}: cannot parse {rest.strip()!r}")
    n = n_declared
    if n is None:
        n = max((max(o, d) for o, d in entries), default=0)
    out = np.zeros((n, n))
    for (o, d), v in entries.items():
        if o == d:
            if v != 0:
                warnings.warn(f"diagonal demand at zone {o} ({v}) set to zero", stacklevel=2)
            continue
        out[o - 1, d - 1] = v
    return out


def format_tntp_trips(d) -> str:
    """Inverse of :func:`parse_tntp_trips` (floats written with ``repr``)."""
    d = np.asarray(d, dtype=float)
    n = d.shape[0]
    buf = io.StringIO()
    buf.write(f"<NUMBER OF ZONES> {n}\n")
    buf.write(f"<TOTAL OD FLOW> {float(d.sum())!r}\n")
    buf.write("<END OF METADATA>\n\n\n")
    for i in range(n):
        buf.write(f"Origin  {i + 1}\n")
        row = [f"{j + 1:5d} : {float(d[i, j])!r};" for j in range(n)]
        for start in range(0, n, 5):
            buf.write("  " + "  ".join(row[start:start + 5]) + "\n")
        buf.write("\n")
    return buf.getvalue()


def parse_tntp_nodes(text: str) -> dict:
    """Read ``node  x  y ;`` rows of a TNTP node file into ``{node: (x, y)}``."""
    coords = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip().rstrip(";").strip()
        if not line or line.startswith("~") or line.startswith("<"):
            continue
        parts = line.split()
        if parts[0].lower() == "node":
            continue
        if len(parts) < 3:
            raise ValueError(f"line {lineno}: expected 'node x y', got {raw!r}")
        try:
            coords[int(parts[0])] = (float(parts[1]), float(parts[2]))
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric node row {raw!r}") from None
    return coords


def distances_from_coordinates(coords: dict, n: int, system: str = "km",
                               detour_factor: float = 1.3) -> np.ndarray:
    """Detour-scaled straight-line distances (km) between nodes ``1..n``.

    ``system="lonlat"`` projects longitude/latitude degrees onto a local
    equirectangular plane before taking Euclidean distances.
    """
    missing = [i for i in range(1, n + 1) if i not in coords]
    if missing:
        raise ValueError(f"missing coordinates for nodes {missing}")
    xy = np.array([coords[i] for i in range(1, n + 1)], dtype=float)
    if system == "lonlat":
        lat0 = np.deg2rad(xy[:, 1].mean())
        xy = np.column_stack([
            np.deg2rad(xy[:, 0]) * np.cos(lat0) * EARTH_RADIUS_KM,
            np.deg2rad(xy[:, 1]) * EARTH_RADIUS_KM,
        ])
    elif system != "km":
        raise ValueError(f"unknown coordinate system {system!r}")
    diff = xy[:, None, :] - xy[None, :, :]
    return detour_factor * np.sqrt((diff ** 2).sum(axis=2))


# ---------------------------------------------------------------------------
# seeded population split

def splitmix64(seed: int) -> Iterator[int]:
    """SplitMix64 stream of unsigned 64-bit integers."""
    state = seed & MASK64
    while True:
        state = (state + 0x9E3779B97F4A7C15) & MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        yield z ^ (z >> 31)


def _uniform_open(stream) -> float:
    # in (0, 1]: 53 random bits, shifted away from zero
    return ((next(stream) >> 11) + 1) * 2.0 ** -53


def split_populations(d_total, shares: Sequence[float], rng_seed: int = 0,
                      mode: str = "deterministic", jitter: float = 0.5) -> np.ndarray:
    """Partition each origin-destination demand across populations.

    ``deterministic`` splits proportionally to ``shares``.  ``random`` draws,
    per pair in row-major order, ``shares + lam * (D - 1/K)`` with ``D`` a
    flat Dirichlet sample (normalised exponentials of SplitMix64 uniforms)
    and ``lam = jitter * K * min(shares)``, which keeps proportions
    non-negative and centred on ``shares``.

    The first K-1 portions are floored to multiples of 2**-16 and the last
    population takes the remainder, so summing over populations (in order)
    reproduces ``d_total`` exactly.
    """
    d_total = np.asarray(d_total, dtype=float)
    shares = np.asarray(shares, dtype=float)
    if np.any(shares < 0):
        raise ValueError("population shares must be non-negative")
    if abs(shares.sum() - 1.0) > 1e-9:
        raise ValueError(f"population shares must sum to 1, got {shares.sum()!r}")
    if mode not in ("deterministic", "random"):
        raise ValueError(f"unknown split mode {mode!r}")
    if not 0 <= jitter <= 1:
        raise ValueError("jitter must lie in [0, 1]")
    n = d_total.shape[0]
    k = len(shares)
    props = np.broadcast_to(shares, (n, n, k)).copy()
    if mode == "random" and k > 1:
        lam = jitter * k * shares.min()
        stream = splitmix64(rng_seed)
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                e = np.array([-math.log(_uniform_open(stream)) for _ in range(k)])
                props[i, j] = shares + lam * (e / e.sum() - 1.0 / k)
    out = np.zeros((n, n, k))
    head = np.floor(d_total[:, :, None] * props[:, :, : k - 1] / SPLIT_QUANTUM) * SPLIT_QUANTUM
    head = np.minimum(head, d_total[:, :, None])
    # keep the running total within d_total so the remainder is non-negative
    run = np.zeros_like(d_total)
    for kk in range(k - 1):
        head[:, :, kk] = np.minimum(head[:, :, kk], d_total - run)
        run = run + head[:, :, kk]
    out[:, :, : k - 1] = head
    out[:, :, k - 1] = d_total - run
    return out


# ---------------------------------------------------------------------------
# configuration documents

@dataclass(frozen=True)
class Pricing:
    kind: str  # "free", "flat" (usd per ride) or "per_km"
    usd: float = 0.0

    def price_matrix(self, distances_km: np.ndarray) -> np.ndarray:
        if self.kind == "free":
            return np.zeros_like(distances_km)
        if self.kind == "flat":
            return np.full_like(distances_km, self.usd)
        if self.kind == "per_km":
            return self.usd * distances_km
        raise ValueError(f"unknown pricing kind {self.kind!r}")


@dataclass(frozen=True)
class ModeSpec:
    name: str
    pricing: Pricing
    speed_kmh: float
    congestion: dict = field(default_factory=lambda: {"family": "constant"})
    emission_kg_per_km: float = 0.0


@dataclass(frozen=True)
class PopulationSpec:
    name: str
    value_of_time: float
    share: float


@dataclass(frozen=True)
class FleetPolicy:
    """Availability bound of one mode.

    kind: ``uniform_total`` (fleet spread evenly), ``per_location`` (scalar or
    one count per location), ``demand_fraction`` (share of departing demand)
    or ``concentrated_total`` (fleet spread evenly over the ``top_fraction``
    of locations with the most departing trips; the rest get none).
    """

    kind: str
    value: Union[float, tuple]
    seats_per_vehicle: float = 1.0
    top_fraction: float = 1.0

    def capacities(self, departing: np.ndarray) -> np.ndarray:
        n = len(departing)
        if self.kind == "uniform_total":
            veh = np.full(n, float(self.value) / n)
        elif self.kind == "per_location":
            veh = np.broadcast_to(np.asarray(self.value, dtype=float), (n,)).copy()
        elif self.kind == "demand_fraction":
            return float(self.value) * departing
        elif self.kind == "concentrated_total":
            count = top_location_count(n, self.top_fraction)
            veh = np.zeros(n)
            veh[densest_locations(departing, count)] = float(self.value) / count
        else:
            raise ValueError(f"unknown fleet policy {self.kind!r}")
        return veh * self.seats_per_vehicle


def top_location_count(n: int, fraction: float) -> int:
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    return max(1, min(n, int(round(fraction * n))))


def densest_locations(departing: np.ndarray, count: int) -> np.ndarray:
    """Indices of the ``count`` locations with most departing trips (ties: lower index)."""
    order = sorted(range(len(departing)), key=lambda i: (-departing[i], i))
    return np.array(sorted(order[:count]), dtype=int)


def relocation_configs(config: "ScenarioConfig", fraction: float, bus_fraction: Optional[float] = 0.7,
                       bus_mode: str = "bus") -> tuple:
    """Uniform and concentrated variants of ``config`` for the relocation study.

    Every mode with a ``uniform_total`` fleet keeps its fleet size but is
    spread either over all locations or over the ``fraction`` with most
    departing trips.  Buses, if ``bus_fraction`` is given, serve that share
    of departing demand in both variants.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    shared = [m for m, f in sorted(config.fleets.items()) if f.kind in ("uniform_total", "concentrated_total")]
    if not shared:
        raise ValueError("scenario has no shared fleet with a fixed total size")
    base = config
    if bus_fraction is not None and bus_mode in config.mode_names:
        base = base.with_fleet(bus_mode, FleetPolicy("demand_fraction", float(bus_fraction)))
    out = []
    for frac in (1.0, fraction):
        cfg = base
        for m in shared:
            f = config.fleets[m]
            cfg = cfg.with_fleet(m, FleetPolicy("concentrated_total", float(f.value), f.seats_per_vehicle, frac))
        out.append(cfg)
    return tuple(out), shared


@dataclass(frozen=True)
class ScenarioConfig:
    modes: tuple
    populations: tuple
    fleets: dict
    window_hours: float = 3.0
    rng_seed: int = 0
    regularization_weight: float = 0.0
    split_mode: str = "deterministic"
    split_jitter: float = 0.5
    demand_scale: float = 1.0

    def __post_init__(self):
        names = [m.name for m in self.modes]
        if names.count("walk") != 1:
            raise ScenarioError("modes", "exactly one mode must be named 'walk'")
        if self.modes[0].name != "walk":
            raise ScenarioError("modes", "walk must be the first mode")
        walk = self.modes[0]
        if walk.pricing.kind != "free":
            raise ScenarioError("modes[0].pricing", "walking must be free")
        if "walk" in self.fleets:
            raise ScenarioError("fleets.walk", "walking cannot have a fleet")
        unknown = set(self.fleets) - set(names)
        if unknown:
            raise ScenarioError("fleets", f"unknown modes {sorted(unknown)}")
        if len(set(names)) != len(names):
            raise ScenarioError("modes", "mode names must be unique")
        total = sum(p.share for p in self.populations)
        if abs(total - 1.0) > 1e-9:
            raise ScenarioError("populations", f"shares must sum to 1, got {total!r}")
        for idx, m in enumerate(self.modes):
            if not m.speed_kmh > 0:
                raise ScenarioError(f"modes[{idx}].speed_kmh", "speed must be positive")

    @property
    def mode_names(self) -> list:
        return [m.name for m in self.modes]

    def with_fleet(self, mode: str, policy: FleetPolicy) -> "ScenarioConfig":
        fleets = dict(self.fleets)
        fleets[mode] = policy
        return _replace(self, fleets=fleets)

    def with_pricing(self, mode: str, pricing: Pricing) -> "ScenarioConfig":
        modes = tuple(_replace(m, pricing=pricing) if m.name == mode else m for m in self.modes)
        return _replace(self, modes=modes)


def _replace(obj, **kw):
    from dataclasses import replace

    return replace(obj, **kw)


def _congestion_arrays(spec: dict, t_nom: np.ndarray):
    fam = spec.get("family", "constant")
    shape = t_nom.shape
    ones = np.ones(shape)
    if fam == "constant":
        return np.full(shape, CONSTANT), t_nom, np.zeros(shape), ones, ones
    if fam == "affine":
        return np.full(shape, AFFINE), t_nom, t_nom * float(spec.get("alpha", 0.0)), ones, ones
    if fam == "bpr":
        return (
            np.full(shape, BPR_CODE), t_nom, np.full(shape, float(spec.get("alpha", 0.15))),
            np.full(shape, float(spec.get("beta", 4.0))), np.full(shape, float(spec.get("kappa", 1.0))),
        )
    raise ScenarioError("congestion.family", f"unknown family {fam!r}")


def build_scenario(config: ScenarioConfig, d_total, distances_km) -> Scenario:
    """Assemble a :class:`Scenario` from a configuration, trips and distances."""
    dist = np.asarray(distances_km, dtype=float)
    d_total = np.asarray(d_total, dtype=float) * config.demand_scale
    n = d_total.shape[0]
    if dist.shape != (n, n):
        raise ScenarioError("distances", f"expected a {n}x{n} matrix, got {dist.shape}")
    off = ~np.eye(n, dtype=bool)
    if not np.all(np.isfinite(dist)) or np.any(dist[off] <= 0):
        raise ScenarioError("distances", "off-diagonal distances must be positive and finite")
    if not np.allclose(dist, dist.T, rtol=1e-12, atol=0):
        raise ScenarioError("distances", "distance matrix must be symmetric")
    dist = np.where(off, dist, 0.0)

    shares = [p.share for p in config.populations]
    demand = split_populations(d_total, shares, config.rng_seed, config.split_mode, config.split_jitter)
    vot = np.array([p.value_of_time for p in config.populations], dtype=float)
    m1 = len(config.modes)
    prices = np.stack([m.pricing.price_matrix(dist) for m in config.modes], axis=2)
    prices[~off] = 0.0
    c0 = prices[:, :, None, :] / vot[None, None, :, None]

    code = np.zeros((n, n, m1), dtype=np.int8)
    a, b = np.zeros((n, n, m1)), np.zeros((n, n, m1))
    beta, kappa = np.ones((n, n, m1)), np.ones((n, n, m1))
    for mi, mode in enumerate(config.modes):
        t_nom = dist / mode.speed_kmh
        code[:, :, mi], a[:, :, mi], b[:, :, mi], beta[:, :, mi], kappa[:, :, mi] = (
            _congestion_arrays(mode.congestion, t_nom)
        )
    cost_model = CostModel.from_arrays(c0, code, a, b, beta, kappa)

    departing = d_total.sum(axis=1)
    available = np.full((n, m1), UNBOUNDED)
    for mi, mode in enumerate(config.modes):
        policy = config.fleets.get(mode.name)
        if policy is not None:
            available[:, mi] = policy.capacities(departing)
    caps = Capacities(available, np.full((n, m1), UNBOUNDED), np.full((n, n, m1), UNBOUNDED))
    return Scenario(
        demand=demand,
        cost_model=cost_model,
        capacities=caps,
        window_hours=config.window_hours,
        regularization_weight=config.regularization_weight,
        mode_names=config.mode_names,
        population_names=[p.name for p in config.populations],
        values_of_time=vot,
        prices=prices,
        distances_km=dist,
        emission_factors=np.array([m.emission_kg_per_km for m in config.modes]),
    )


# ---------------------------------------------------------------------------
# JSON documents

def scenario_schema() -> dict:
    text = resources.files("mobility_game").joinpath("data/scenario.schema.json").read_text("utf-8")
    return json.loads(text)


def _validate_document(doc: dict) -> None:
    schema = scenario_schema()
    if not isinstance(doc, dict):
        raise ScenarioError("<root>", "document must be a JSON object")
    kind = doc.get("kind")
    if kind not in ("config", "explicit"):
        raise ScenarioError("kind", f"must be 'config' or 'explicit', got {kind!r}")
    # validate against the branch for this kind so messages name the field
    schema = {"definitions": schema["definitions"], "$ref": f"#/definitions/{kind}"}
    validator = jsonschema.Draft7Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise ScenarioError(where, err.message)


def _fleet_from_doc(name: str, doc: dict) -> FleetPolicy:
    seats = float(doc.get("seats_per_vehicle", 1.0))
    for kind in ("uniform_total", "per_location", "demand_fraction", "concentrated_total"):
        if kind in doc:
            value = doc[kind]
            if isinstance(value, list):
                value = tuple(float(v) for v in value)
            return FleetPolicy(kind, value, seats, float(doc.get("top_fraction", 1.0)))
    raise ScenarioError(f"fleets.{name}", "no fleet policy given")


def config_from_document(doc: dict) -> ScenarioConfig:
    modes = []
    for m in doc["modes"]:
        pr = m.get("pricing", {"kind": "free"})
        usd = float(pr.get("usd_per_ride", pr.get("usd_per_km", 0.0)))
        modes.append(ModeSpec(
            name=m["name"], pricing=Pricing(pr["kind"], usd), speed_kmh=float(m["speed_kmh"]),
            congestion=dict(m.get("congestion", {"family": "constant"})),
            emission_kg_per_km=float(m.get("emission_kg_per_km", 0.0)),
        ))
    pops = tuple(PopulationSpec(p["name"], float(p["value_of_time"]), float(p["share"]))
                 for p in doc["populations"])
    fleets = {name: _fleet_from_doc(name, f) for name, f in doc.get("fleets", {}).items()}
    split = doc.get("split", {})
    return ScenarioConfig(
        modes=tuple(modes), populations=pops, fleets=fleets,
        window_hours=float(doc.get("window_hours", 3.0)),
        rng_seed=int(doc.get("rng_seed", 0)),
        regularization_weight=float(doc.get("regularization_weight", 0.0)),
        split_mode=split.get("mode", "deterministic"),
        split_jitter=float(split.get("jitter", 0.5)),
        demand_scale=float(doc.get("demand_scale", 1.0)),
    )


def _distances_from_doc(doc: dict, base: Path, n: int) -> np.ndarray:
    src = doc["distances"]
    if "matrix" in src:
        return np.asarray(src["matrix"], dtype=float)
    coords = parse_tntp_nodes((base / src["nodes"]).read_text("utf-8"))
    return distances_from_coordinates(coords, n, src.get("coordinates", "km"),
                                      float(src.get("detour_factor", 1.3)))


def _explicit_scenario(doc: dict) -> Scenario:
    labels = doc.get("locations") or list(range(1, int(doc["n_locations"]) + 1))
    loc = {lab: i for i, lab in enumerate(labels)}
    pops = [p if isinstance(p, str) else p["name"] for p in doc["populations"]]
    vot = [1.0 if isinstance(p, str) else float(p.get("value_of_time", 1.0)) for p in doc["populations"]]
    pix = {p: i for i, p in enumerate(pops)}
    modes = [m if isinstance(m, str) else m["name"] for m in doc["modes"]]
    mix = {m: i for i, m in enumerate(modes)}
    n, k, m1 = len(labels), len(pops), len(modes)

    def lookup(table, key, where):
        if key not in table:
            raise ScenarioError(where, f"unknown reference {key!r}")
        return table[key]

    demand = np.zeros((n, n, k))
    for idx, e in enumerate(doc.get("demand", [])):
        w = f"demand.{idx}"
        demand[lookup(loc, e["origin"], w), lookup(loc, e["destination"], w),
               lookup(pix, e["population"], w)] = float(e["value"])
    c0 = np.zeros((n, n, k, m1))
    for idx, e in enumerate(doc.get("constant_costs", [])):
        w = f"constant_costs.{idx}"
        i, j, m = lookup(loc, e["origin"], w), lookup(loc, e["destination"], w), lookup(mix, e["mode"], w)
        ks = range(k) if e.get("population", "*") == "*" else [lookup(pix, e["population"], w)]
        for kk in ks:
            c0[i, j, kk, m] = float(e["value"])
    code = np.zeros((n, n, m1), dtype=np.int8)
    a, b = np.zeros((n, n, m1)), np.zeros((n, n, m1))
    beta, kappa = np.ones((n, n, m1)), np.ones((n, n, m1))
    for idx, e in enumerate(doc.get("congestion", [])):
        w = f"congestion.{idx}"
        i, j, m = lookup(loc, e["origin"], w), lookup(loc, e["destination"], w), lookup(mix, e["mode"], w)
        fam = e["family"]
        if fam == "constant":
            code[i, j, m], a[i, j, m] = CONSTANT, float(e.get("t_nom", 0.0))
        elif fam == "affine":
            code[i, j, m] = AFFINE
            if "slope" in e or "intercept" in e:
                a[i, j, m], b[i, j, m] = float(e.get("intercept", 0.0)), float(e.get("slope", 0.0))
            else:
                t = float(e.get("t_nom", 0.0))
                a[i, j, m], b[i, j, m] = t, t * float(e.get("alpha", 0.0))
        else:
            code[i, j, m] = BPR_CODE
            a[i, j, m], b[i, j, m] = float(e.get("t_nom", 0.0)), float(e.get("alpha", 0.15))
            beta[i, j, m], kappa[i, j, m] = float(e.get("beta", 4.0)), float(e.get("kappa", 1.0))
    available = np.full((n, m1), UNBOUNDED)
    displace = np.full((n, m1), UNBOUNDED)
    ride = np.full((n, n, m1), UNBOUNDED)
    for idx, e in enumerate(doc.get("capacities", [])):
        w = f"capacities.{idx}"
        m = lookup(mix, e["mode"], w)
        v = UNBOUNDED if e["value"] is None else float(e["value"])
        if e["kind"] == "ride":
            ride[lookup(loc, e["origin"], w), lookup(loc, e["destination"], w), m] = v
        elif e["kind"] == "available":
            available[lookup(loc, e["location"], w), m] = v
        else:
            displace[lookup(loc, e["location"], w), m] = v
    try:
        return Scenario(
            demand=demand,
            cost_model=CostModel.from_arrays(c0, code, a, b, beta, kappa),
            capacities=Capacities(available, displace, ride),
            window_hours=float(doc.get("window_hours", 1.0)),
            regularization_weight=float(doc.get("regularization_weight", 0.0)),
            mode_names=modes, population_names=pops, values_of_time=np.array(vot),
            location_labels=labels,
        )
    except ValueError as exc:
        raise ScenarioError("<scenario>", str(exc)) from exc


@dataclass
class ScenarioSource:
    """A loaded scenario plus what is needed to rebuild variants of it."""

    scenario: Scenario
    path: Optional[Path] = None
    sha256: str = ""
    config: Optional[ScenarioConfig] = None
    d_total: Optional[np.ndarray] = None
    distances_km: Optional[np.ndarray] = None

    def rebuild(self, config: ScenarioConfig) -> Scenario:
        if self.config is None:
            raise ValueError("scenario was not built from a configuration")
        return build_scenario(config, self.d_total, self.distances_km)


def load_scenario(path, seed: Optional[int] = None,
                  regularization_weight: Optional[float] = None) -> ScenarioSource:
    """Load a scenario document; ``seed`` and ``regularization_weight`` override it."""
    path = Path(path)
    raw = path.read_bytes()
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ScenarioError("<document>", f"not valid UTF-8 JSON ({exc})") from exc
    _validate_document(doc)
    if seed is not None:
        doc["rng_seed"] = int(seed)
    if regularization_weight is not None:
        doc["regularization_weight"] = float(regularization_weight)
    digest = hashlib.sha256(raw).hexdigest()
    if doc["kind"] == "explicit":
        return ScenarioSource(_explicit_scenario(doc), path, digest)
    config = config_from_document(doc)
    trips_path = path.parent / doc["trips"]
    try:
        d_total = parse_tntp_trips(trips_path.read_text("utf-8"))
    except OSError as exc:
        raise ScenarioError("trips", f"cannot read {trips_path} ({exc.strerror})") from exc
    except ValueError as exc:
        raise ScenarioError("trips", str(exc)) from exc
    try:
        dist = _distances_from_doc(doc, path.parent, d_total.shape[0])
    except OSError as exc:
        raise ScenarioError("distances", f"cannot read distance source ({exc.strerror})") from exc
    except ValueError as exc:
        raise ScenarioError("distances", str(exc)) from exc
    scenario = build_scenario(config, d_total, dist)
    return ScenarioSource(scenario, path, digest, config, d_total, dist)


# ---------------------------------------------------------------------------
# result files

def fmt(value: float) -> str:
    return repr(float(value))


def flows_rows(scenario: Scenario, flows) -> list:
    labels = scenario.labels()
    pops = scenario.population_names or [str(k) for k in range(scenario.n_populations)]
    modes = scenario.mode_names or [str(m) for m in range(scenario.n_modes)]
    rows = [["origin", "destination", "population", "mode", "flow"]]
    for i, j, k in zip(*np.nonzero(scenario.demand > 0)):
        for m in range(scenario.n_modes):
            rows.append([labels[i], labels[j], pops[k], modes[m], fmt(flows[i, j, k, m])])
    return rows


def read_flows_csv(scenario: Scenario, path) -> np.ndarray:
    """Read a flows table written by :func:`write_results` back into a tensor."""
    labels = {str(v): i for i, v in enumerate(scenario.labels())}
    pops = {p: i for i, p in enumerate(scenario.population_names or
                                       [str(k) for k in range(scenario.n_populations)])}
    modes = {m: i for i, m in enumerate(scenario.mode_names or
                                        [str(m) for m in range(scenario.n_modes)])}
    x = np.zeros(scenario.flow_shape)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = {"origin", "destination", "population", "mode", "flow"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns {sorted(need)}")
        for lineno, row in enumerate(reader, 2):
            try:
                idx = (labels[row["origin"]], labels[row["destination"]], pops[row["population"]],
                       modes[row["mode"]])
                x[idx] = float(row["flow"])
            except KeyError as exc:
                raise ValueError(f"{path}:{lineno}: unknown reference {exc}") from None
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric flow {row['flow']!r}") from None
    return x


def csv_text(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def write_files_atomic(directory, files: dict) -> list:
    """Write ``{name: text}`` into an existing directory via temp files and renames."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"output directory {directory} does not exist")
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=directory)
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            staged.append((tmp, directory / name))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, target in staged:
        os.replace(tmp, target)
    return [target for _, target in staged]


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_results(report, metrics, path, manifest: Optional[dict] = None, scenario=None) -> list:
    """Write ``flows.csv``, ``metrics.csv``, ``histogram.csv`` and ``manifest.json``.

    ``metrics`` is a :class:`~mobility_game.metrics.MetricsReport`; identical
    inputs always produce byte-identical files.
    """
    from .metrics import histogram_rows, metrics_rows

    scenario = scenario if scenario is not None else metrics.scenario
    man = dict(manifest or {})
    man.setdefault("tool", "mobility-game")
    from . import __version__

    man.setdefault("tool_version", __version__)
    man["status"] = report.status.value
    man["potential"] = report.potential
    man["kkt_residual"] = report.kkt_residual
    man["regularization_weight"] = report.regularization_weight
    files = {
        "flows.csv": csv_text(flows_rows(scenario, report.flows)),
        "metrics.csv": csv_text(metrics_rows(metrics)),
        "histogram.csv": csv_text(histogram_rows(metrics)),
        "manifest.json": json_text(man),
    }
    return write_files_atomic(path, files)
