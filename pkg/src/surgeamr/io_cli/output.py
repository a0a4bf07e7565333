"""Frame, gauge and statistics output: plain text, deterministic, lossless.

Each frame is a JSON manifest plus one CSV per patch with full-precision
cell data, so reading a frame back reproduces the in-memory state bitwise.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .. import __version__
from ..grid import surface_elevation

FRAME_COLUMNS = "i,j,lon,lat,h,hu,hv,b,eta"


def write_metadata(outdir, resolved_config):
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "metadata.json"), "w") as fh:
        json.dump({"code_version": __version__,
                   "config": resolved_config}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(outdir, "resolved_config.json"), "w") as fh:
        json.dump(resolved_config, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_frame(hierarchy, t, outdir, frame_index):
    """Write one output frame; returns the manifest path."""
    frame_dir = os.path.join(outdir, "frames")
    os.makedirs(frame_dir, exist_ok=True)
    manifest = {"frame": frame_index, "time": t, "patches": []}
    patches = [(lev, p) for lev in sorted(hierarchy.levels)
               for p in sorted(hierarchy.levels[lev],
                               key=lambda q: (q.i0, q.j0))]
    for count, (lev, p) in enumerate(patches):
        csv_name = f"frame_{frame_index:04d}_p{count:03d}.csv"
        manifest["patches"].append({
            "level": lev, "i0": p.i0, "j0": p.j0, "nx": p.nx, "ny": p.ny,
            "dx": p.dx, "dy": p.dy, "csv": csv_name})
        eta = p.interior(surface_elevation(p))
        h = p.interior(p.h)
        hu = p.interior(p.hu)
        hv = p.interior(p.hv)
        b = p.interior(p.b)
        lon = p.lon_centers(padded=False)
        lat = p.lat_centers(padded=False)
        lines = [FRAME_COLUMNS]
        for i in range(p.nx):
            for j in range(p.ny):
                row = (i, j, lon[i], lat[j], h[i, j], hu[i, j], hv[i, j],
                       b[i, j], eta[i, j])
                lines.append(",".join(repr(float(v)) if k >= 2 else str(v)
                                      for k, v in enumerate(row)))
        with open(os.path.join(frame_dir, csv_name), "w") as fh:
            fh.write("\n".join(lines) + "\n")
    path = os.path.join(frame_dir, f"frame_{frame_index:04d}.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def list_frames(outdir):
    frame_dir = os.path.join(outdir, "frames")
    if not os.path.isdir(frame_dir):
        return []
    out = []
    for name in sorted(os.listdir(frame_dir)):
        if name.startswith("frame_") and name.endswith(".json"):
            out.append(int(name[6:10]))
    return out


def read_frame(outdir, frame_index):
    """Load a frame manifest plus per-patch arrays."""
    frame_dir = os.path.join(outdir, "frames")
    path = os.path.join(frame_dir, f"frame_{frame_index:04d}.json")
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path) as fh:
        manifest = json.load(fh)
    patches = []
    for meta in manifest["patches"]:
        data = np.genfromtxt(os.path.join(frame_dir, meta["csv"]),
                             delimiter=",", names=True)
        data = np.atleast_1d(data)
        shape = (meta["nx"], meta["ny"])
        entry = dict(meta)
        for col in ("lon", "lat", "h", "hu", "hv", "b", "eta"):
            entry[col] = np.asarray(data[col]).reshape(shape)
        patches.append(entry)
    return {"frame": manifest["frame"], "time": manifest["time"],
            "patches": patches}


def make_gauge_recorder(gauges, domain):
    """Step hook recording each gauge from the finest patch containing it.

    Nearest-neighbor in space, one record per step of that patch's level.
    """
    cache = {"epoch": -1, "where": {}}

    def hook(hierarchy, level, t):
        if cache["epoch"] != hierarchy.regrid_epoch:
            cache["where"] = {}
            for g in gauges:
                found = hierarchy.finest_patch_at(g.lon, g.lat)
                if found is None:
                    continue
                lev, patch = found
                geom = patch.geom
                gi = int((g.lon - domain.lon_min) / geom.dx)
                gj = int((g.lat - domain.lat_min) / geom.dy)
                cache["where"][g.id] = (lev, patch, gi - patch.i0 + patch.ng,
                                        gj - patch.j0 + patch.ng)
            cache["epoch"] = hierarchy.regrid_epoch
        rows = []
        for g in gauges:
            entry = cache["where"].get(g.id)
            if entry is None or entry[0] != level:
                continue
            lev, patch, ip, jp = entry
            h = float(patch.h[ip, jp])
            eta = (h + float(patch.b[ip, jp])
                   if h >= hierarchy.phys.dry_tolerance
                   else hierarchy.phys.sea_level)
            rows.append((g, (float(t), lev, h, float(patch.hu[ip, jp]),
                             float(patch.hv[ip, jp]), float(eta))))
        return rows

    return hook


def write_gauges(gauges, outdir):
    gdir = os.path.join(outdir, "gauges")
    os.makedirs(gdir, exist_ok=True)
    for g in gauges:
        lines = ["t,level,h,hu,hv,eta"]
        for t, lev, h, hu, hv, eta in g.records:
            lines.append(f"{float(t)!r},{lev},{float(h)!r},{float(hu)!r},"
                         f"{float(hv)!r},{float(eta)!r}")
        with open(os.path.join(gdir, f"gauge_{g.id}.csv"), "w") as fh:
            fh.write("\n".join(lines) + "\n")


class StatsWriter:
    """Per-coarse-step cell counts; the cost-versus-time record."""

    def __init__(self, outdir):
        self.path = os.path.join(outdir, "cells_timeseries.csv")
        self.rows = ["t,level,n_patches,n_cells,cumulative_cell_steps"]

    def record(self, hierarchy, t):
        counts = hierarchy.cell_counts()
        for lev in sorted(counts):
            n_patches, n_cells = counts[lev]
            self.rows.append(f"{float(t)!r},{lev},{n_patches},{n_cells},"
                             f"{hierarchy.cell_steps}")

    def flush(self, hierarchy):
        os.makedirs(os.path.dirname(self.path), exist_ok=True)
        with open(self.path, "w") as fh:
            fh.write("\n".join(self.rows) + "\n")
        summary = {
            "cell_steps": hierarchy.cell_steps,
            "level_steps": {str(k): v
                            for k, v in sorted(hierarchy.level_steps.items())},
            "mass_change_total": hierarchy.mass_change_total,
            "finest_level_cells_if_uniform": (
                hierarchy.geoms[hierarchy.max_levels].nx_global
                * hierarchy.geoms[hierarchy.max_levels].ny_global),
        }
        with open(os.path.join(os.path.dirname(self.path),
                               "run_stats.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
