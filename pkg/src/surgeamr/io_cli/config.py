"""Run configuration: strict JSON schema with documented defaults.

The configuration is plain JSON (a ``#``-comment-stripping preprocessor
runs first).  Unknown keys are hard errors with a nearest-key suggestion,
so typos cannot silently fall back to defaults.  ``resolved_dict`` echoes
every field explicitly; feeding that echo back reproduces the run.
"""

from __future__ import annotations

import difflib
import json
import os
from dataclasses import dataclass, field

from ..grid import BathymetrySources, ConfigError, GeoDomain, PhysConfig, read_esri_ascii
from ..sources import FrictionConfig, ManningRegion
from ..storm import read_track
from ..amr import LevelHierarchy, RefinementCriteria, RefinementRegion

_BOUNDARY_KINDS = ("outflow", "wall")

DEFAULTS = {
    "physics": dict(g=9.81, rho=1025.0, rho_air=1.15,
                    omega=2.0 * 3.141592653589793 / 8.61642e4,
                    earth_radius=6.367e6, dry_tolerance=1e-3, sea_level=0.0),
    "friction": dict(h_break=2.0, theta_f=10.0, gamma_f=4.0 / 3.0,
                     n_land=0.030, n_water=0.022, land_rule_depth=0.0,
                     regions=[]),
    "refinement": dict(max_levels=1, ratios=[], T_wave=None, T_speed=[],
                       T_r=[], T_wind=[], max_depth=None, regrid_interval=4,
                       min_fill=0.7, buffer=3, regions=[]),
    "solver": dict(courant_target=0.9, order=2, reflux_momentum=False),
    "boundary": dict(west="outflow", east="outflow", south="outflow",
                     north="outflow"),
    "storm": dict(track_file=None, background_pressure=101300.0,
                  ramp_width=100e3),
}

_SCHEMA = {
    "domain": {"lon_min", "lon_max", "lat_min", "lat_max",
               "n_cells_x", "n_cells_y"},
    "physics": set(DEFAULTS["physics"]),
    "friction": set(DEFAULTS["friction"]),
    "refinement": set(DEFAULTS["refinement"]),
    "solver": set(DEFAULTS["solver"]),
    "boundary": set(DEFAULTS["boundary"]),
    "storm": set(DEFAULTS["storm"]),
    "time": {"start", "end", "output_interval"},
    "bathymetry": None,          # list of paths
    "gauges": None,              # list of {id, lon, lat}
    "output_dir": None,
}

_FRICTION_REGION_KEYS = {"rect", "rules"}
_REFINE_REGION_KEYS = {"rect", "min_level", "max_level", "t_start", "t_end"}
_GAUGE_KEYS = {"id", "lon", "lat"}


def strip_comments(text: str) -> str:
    """Remove ``#`` comments outside of JSON strings."""
    out = []
    in_string = False
    escaped = False
    for line in text.splitlines():
        kept = []
        for ch in line:
            if escaped:
                kept.append(ch)
                escaped = False
                continue
            if ch == "\\" and in_string:
                kept.append(ch)
                escaped = True
                continue
            if ch == '"':
                in_string = not in_string
            elif ch == "#" and not in_string:
                break
            kept.append(ch)
        out.append("".join(kept))
        in_string = False
    return "\n".join(out)


def _reject_unknown(mapping, allowed, path):
    for key in mapping:
        if key not in allowed:
            hint = difflib.get_close_matches(key, sorted(allowed), n=1)
            suffix = f"; nearest valid key is '{hint[0]}'" if hint else ""
            raise ConfigError(f"unknown key '{path}{key}'{suffix}")


@dataclass
class Gauge:
    """Recording site: series of (t, level, h, hu, hv, eta) per level step."""

    id: int
    lon: float
    lat: float
    records: list = field(default_factory=list)


@dataclass
class RunConfig:
    """Fully resolved experiment description."""

    domain: GeoDomain
    phys: PhysConfig
    friction: FrictionConfig
    refinement: dict
    solver: dict
    boundary: dict
    storm: dict
    bathymetry_paths: list
    t_start: float
    t_end: float
    output_interval: float
    gauges: list
    output_dir: str

    def resolved_dict(self):
        d = self.domain
        out = {
            "domain": dict(lon_min=d.lon_min, lon_max=d.lon_max,
                           lat_min=d.lat_min, lat_max=d.lat_max,
                           n_cells_x=d.n_cells_x, n_cells_y=d.n_cells_y),
            "physics": dict(g=self.phys.g, rho=self.phys.rho,
                            rho_air=self.phys.rho_air, omega=self.phys.omega,
                            earth_radius=self.phys.earth_radius,
                            dry_tolerance=self.phys.dry_tolerance,
                            sea_level=self.phys.sea_level),
            "friction": dict(h_break=self.friction.h_break,
                             theta_f=self.friction.theta_f,
                             gamma_f=self.friction.gamma_f,
                             n_land=self.friction.n_land,
                             n_water=self.friction.n_water,
                             land_rule_depth=self.friction.land_rule_depth,
                             regions=[dict(rect=[r.lon_min, r.lat_min,
                                                 r.lon_max, r.lat_max],
                                           rules=[[depth, n]
                                                  for depth, n in r.rules])
                                      for r in self.friction.regions]),
            "refinement": dict(self.refinement),
            "solver": dict(self.solver),
            "boundary": dict(self.boundary),
            "storm": dict(self.storm),
            "time": dict(start=self.t_start, end=self.t_end,
                         output_interval=self.output_interval),
            "bathymetry": list(self.bathymetry_paths),
            "gauges": [dict(id=g.id, lon=g.lon, lat=g.lat)
                       for g in self.gauges],
            "output_dir": self.output_dir,
        }
        return out

    # -- factories -----------------------------------------------------
    def load_bathymetry(self) -> BathymetrySources:
        return BathymetrySources([read_esri_ascii(p)
                                  for p in self.bathymetry_paths])

    def load_track(self):
        if self.storm.get("track_file") is None:
            return None
        return read_track(self.storm["track_file"])

    def build_hierarchy(self) -> LevelHierarchy:
        ref = self.refinement
        criteria = RefinementCriteria(
            wave_tolerance=ref["T_wave"],
            speed_tolerances=tuple(ref["T_speed"]),
            eye_radii=tuple(ref["T_r"]),
            wind_tolerances=tuple(ref["T_wind"]),
            max_refinement_depth=ref["max_depth"],
            regions=tuple(RefinementRegion(
                lon_min=r["rect"][0], lat_min=r["rect"][1],
                lon_max=r["rect"][2], lat_max=r["rect"][3],
                min_level=r.get("min_level", 1),
                max_level=r.get("max_level"),
                t_start=r.get("t_start", -float("inf")),
                t_end=r.get("t_end", float("inf")))
                for r in ref["regions"]))
        storm_params = dict(
            background_pressure=self.storm["background_pressure"],
            ramp_width=self.storm["ramp_width"],
            rho_air=self.phys.rho_air)
        return LevelHierarchy(
            self.domain, self.phys, self.load_bathymetry(),
            criteria=criteria, ratios=ref["ratios"],
            max_levels=ref["max_levels"], friction=self.friction,
            boundary=self.boundary, regrid_interval=ref["regrid_interval"],
            courant_target=self.solver["courant_target"],
            order=self.solver["order"],
            reflux_momentum=self.solver["reflux_momentum"],
            min_fill=ref["min_fill"], cluster_buffer=ref["buffer"],
            storm_track=self.load_track(), storm_params=storm_params)


def _merge_section(raw, name):
    merged = dict(DEFAULTS[name])
    section = raw.get(name)
    if section is None:
        return merged
    if not isinstance(section, dict):
        raise ConfigError(f"'{name}' must be an object")
    _reject_unknown(section, _SCHEMA[name], f"{name}.")
    merged.update(section)
    return merged


def load_config(path) -> RunConfig:
    """Parse, validate and resolve a run configuration file."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            raw = json.loads(strip_comments(fh.read()))
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: malformed JSON ({err})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    _reject_unknown(raw, set(_SCHEMA), "")

    for req in ("domain", "bathymetry", "time"):
        if req not in raw:
            raise ConfigError(f"missing required section '{req}'")

    base = os.path.dirname(os.path.abspath(path))

    def resolve_path(p):
        return p if os.path.isabs(p) else os.path.normpath(
            os.path.join(base, p))

    dom_raw = raw["domain"]
    _reject_unknown(dom_raw, _SCHEMA["domain"], "domain.")
    for key in _SCHEMA["domain"]:
        if key not in dom_raw:
            raise ConfigError(f"domain.{key} is required")
    domain = GeoDomain(lon_min=float(dom_raw["lon_min"]),
                       lon_max=float(dom_raw["lon_max"]),
                       lat_min=float(dom_raw["lat_min"]),
                       lat_max=float(dom_raw["lat_max"]),
                       n_cells_x=int(dom_raw["n_cells_x"]),
                       n_cells_y=int(dom_raw["n_cells_y"]))

    phys_raw = _merge_section(raw, "physics")
    phys = PhysConfig(**{k: float(v) for k, v in phys_raw.items()})

    fric_raw = _merge_section(raw, "friction")
    regions = []
    for k, reg in enumerate(fric_raw["regions"]):
        _reject_unknown(reg, _FRICTION_REGION_KEYS, f"friction.regions[{k}].")
        rect = reg["rect"]
        rules = [(None if depth is None else float(depth), float(n))
                 for depth, n in reg["rules"]]
        regions.append(ManningRegion(lon_min=float(rect[0]),
                                     lat_min=float(rect[1]),
                                     lon_max=float(rect[2]),
                                     lat_max=float(rect[3]), rules=rules))
    friction = FrictionConfig(
        h_break=float(fric_raw["h_break"]), theta_f=float(fric_raw["theta_f"]),
        gamma_f=float(fric_raw["gamma_f"]), n_land=float(fric_raw["n_land"]),
        n_water=float(fric_raw["n_water"]),
        land_rule_depth=float(fric_raw["land_rule_depth"]), regions=regions)

    ref = _merge_section(raw, "refinement")
    ref["max_levels"] = int(ref["max_levels"])
    ref["ratios"] = [int(r) for r in ref["ratios"]]
    if len(ref["ratios"]) < ref["max_levels"] - 1:
        raise ConfigError("refinement.ratios must list one ratio per "
                          "level transition")
    for k, reg in enumerate(ref["regions"]):
        _reject_unknown(reg, _REFINE_REGION_KEYS, f"refinement.regions[{k}].")
    if ref["T_wave"] is not None:
        ref["T_wave"] = float(ref["T_wave"])
    ref["T_speed"] = [float(v) for v in ref["T_speed"]]
    ref["T_r"] = [float(v) for v in ref["T_r"]]
    ref["T_wind"] = [float(v) for v in ref["T_wind"]]

    solver = _merge_section(raw, "solver")
    solver["courant_target"] = float(solver["courant_target"])
    solver["order"] = int(solver["order"])
    solver["reflux_momentum"] = bool(solver["reflux_momentum"])

    boundary = _merge_section(raw, "boundary")
    for edge, kind in boundary.items():
        if kind not in _BOUNDARY_KINDS:
            raise ConfigError(
                f"boundary.{edge}: '{kind}' is not one of {_BOUNDARY_KINDS}")

    storm = _merge_section(raw, "storm")
    if storm["track_file"] is not None:
        storm["track_file"] = resolve_path(storm["track_file"])
        if not os.path.exists(storm["track_file"]):
            raise ConfigError(
                f"storm.track_file not found: {storm['track_file']}")
    storm["background_pressure"] = float(storm["background_pressure"])
    storm["ramp_width"] = float(storm["ramp_width"])

    time_raw = raw["time"]
    _reject_unknown(time_raw, _SCHEMA["time"], "time.")
    t_start = float(time_raw.get("start", 0.0))
    if "end" not in time_raw:
        raise ConfigError("time.end is required")
    t_end = float(time_raw["end"])
    if t_end <= t_start:
        raise ConfigError("time.end must exceed time.start")
    output_interval = float(time_raw.get("output_interval",
                                         t_end - t_start))
    if output_interval <= 0:
        raise ConfigError("time.output_interval must be positive")

    bathy_paths = [resolve_path(p) for p in raw["bathymetry"]]
    if not bathy_paths:
        raise ConfigError("bathymetry: at least one raster is required")
    for p in bathy_paths:
        if not os.path.exists(p):
            raise ConfigError(f"bathymetry raster not found: {p}")

    gauges = []
    for k, g in enumerate(raw.get("gauges", [])):
        _reject_unknown(g, _GAUGE_KEYS, f"gauges[{k}].")
        gauge = Gauge(id=int(g["id"]), lon=float(g["lon"]),
                      lat=float(g["lat"]))
        if not domain.contains(gauge.lon, gauge.lat):
            raise ConfigError(f"gauge {gauge.id} lies outside the domain")
        gauges.append(gauge)

    output_dir = os.environ.get("SURGEAMR_OUTPUT_DIR") \
        or raw.get("output_dir", "surgeamr_output")
    output_dir = resolve_path(output_dir)

    return RunConfig(domain=domain, phys=phys, friction=friction,
                     refinement=ref, solver=solver, boundary=boundary,
                     storm=storm, bathymetry_paths=bathy_paths,
                     t_start=t_start, t_end=t_end,
                     output_interval=output_interval, gauges=gauges,
                     output_dir=output_dir)
