"""Raster plots of output frames: finest-on-top composite to a PNG.

Color tables are fixed and documented in a sidecar text file so identical
frames render to byte-identical images.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .output import read_frame

LAND_COLOR = (205, 186, 150)

# linear ramps: list of (position in [0,1], (r, g, b))
ETA_RAMP = [(0.0, (24, 40, 120)), (0.5, (245, 245, 245)),
            (1.0, (160, 16, 16))]
SPEED_RAMP = [(0.0, (245, 245, 245)), (0.5, (60, 130, 200)),
              (1.0, (130, 10, 140))]
LEVEL_COLORS = [(70, 130, 180), (60, 179, 113), (238, 180, 34),
                (205, 92, 92), (147, 112, 219), (0, 139, 139),
                (255, 105, 180), (105, 105, 105)]

VARIABLES = ("eta", "speed", "level")


def _ramp_color(ramp, frac):
    frac = min(max(frac, 0.0), 1.0)
    for (p0, c0), (p1, c1) in zip(ramp, ramp[1:]):
        if frac <= p1:
            w = 0.0 if p1 == p0 else (frac - p0) / (p1 - p0)
            return tuple(int(round(a + w * (b - a))) for a, b in zip(c0, c1))
    return ramp[-1][1]


def render_raster(outdir, frame_index, variable, bounds=None, out_path=None,
                  width=600, value_range=None, dry_tolerance=1e-3):
    """Composite one frame variable into a PNG plus a colorbar sidecar.

    ``bounds``: (lon_min, lat_min, lon_max, lat_max); defaults to the frame
    extent.  ``value_range``: fixed (vmin, vmax) for the color scale.
    """
    if variable not in VARIABLES:
        raise ValueError(f"unknown variable '{variable}'; "
                         f"choose from {', '.join(VARIABLES)}")
    frame = read_frame(outdir, frame_index)
    patches = frame["patches"]
    if bounds is None:
        lon0 = min(p["lon"].min() - 0.5 * p["dx"] for p in patches)
        lon1 = max(p["lon"].max() + 0.5 * p["dx"] for p in patches)
        lat0 = min(p["lat"].min() - 0.5 * p["dy"] for p in patches)
        lat1 = max(p["lat"].max() + 0.5 * p["dy"] for p in patches)
    else:
        lon0, lat0, lon1, lat1 = bounds
    height = max(1, int(round(width * (lat1 - lat0) / (lon1 - lon0))))
    px_lon = lon0 + (np.arange(width) + 0.5) * (lon1 - lon0) / width
    px_lat = lat0 + (np.arange(height) + 0.5) * (lat1 - lat0) / height

    value = np.full((width, height), np.nan)
    wet = np.zeros((width, height), dtype=bool)
    for p in sorted(patches, key=lambda q: q["level"]):
        plon0 = p["lon"][0, 0] - 0.5 * p["dx"]
        plat0 = p["lat"][0, 0] - 0.5 * p["dy"]
        ii = np.floor((px_lon - plon0) / p["dx"]).astype(int)
        jj = np.floor((px_lat - plat0) / p["dy"]).astype(int)
        okx = (ii >= 0) & (ii < p["nx"])
        oky = (jj >= 0) & (jj < p["ny"])
        sel = okx[:, None] & oky[None, :]
        if not sel.any():
            continue
        I = np.clip(ii, 0, p["nx"] - 1)[:, None]
        J = np.clip(jj, 0, p["ny"] - 1)[None, :]
        h = p["h"][I, J]
        cell_wet = h >= dry_tolerance
        if variable == "eta":
            v = p["eta"][I, J]
        elif variable == "speed":
            with np.errstate(divide="ignore", invalid="ignore"):
                v = np.where(cell_wet,
                             np.hypot(p["hu"][I, J], p["hv"][I, J])
                             / np.maximum(h, 1e-300), 0.0)
        else:
            v = np.full(h.shape, float(p["level"]))
        value[sel] = v[sel]
        wet[sel] = cell_wet[sel] | (variable == "level")

    if value_range is None:
        if variable == "eta":
            value_range = (-1.0, 1.0)
        elif variable == "speed":
            value_range = (0.0, 5.0)
        else:
            value_range = (1.0, float(max(p["level"] for p in patches)))
    vmin, vmax = value_range

    rgb = np.zeros((height, width, 3), dtype=np.uint8)
    rgb[...] = LAND_COLOR
    for iy in range(height):
        for ix in range(width):
            v = value[ix, iy]
            if np.isnan(v) or not wet[ix, iy]:
                continue
            if variable == "level":
                color = LEVEL_COLORS[(int(v) - 1) % len(LEVEL_COLORS)]
            else:
                frac = 0.5 if vmax == vmin else (v - vmin) / (vmax - vmin)
                ramp = ETA_RAMP if variable == "eta" else SPEED_RAMP
                color = _ramp_color(ramp, frac)
            rgb[height - 1 - iy, ix] = color

    if out_path is None:
        plot_dir = os.path.join(outdir, "plots")
        os.makedirs(plot_dir, exist_ok=True)
        out_path = os.path.join(plot_dir,
                                f"frame_{frame_index:04d}_{variable}.png")
    Image.fromarray(rgb, mode="RGB").save(out_path, format="PNG")
    with open(os.path.splitext(out_path)[0] + "_scale.txt", "w") as fh:
        fh.write(f"variable: {variable}\n")
        fh.write(f"value_range: {vmin!r} {vmax!r}\n")
        fh.write(f"bounds: {lon0!r} {lat0!r} {lon1!r} {lat1!r}\n")
        if variable == "level":
            for k, c in enumerate(LEVEL_COLORS, start=1):
                fh.write(f"level {k}: rgb{c}\n")
        else:
            ramp = ETA_RAMP if variable == "eta" else SPEED_RAMP
            for pos, c in ramp:
                fh.write(f"anchor {pos}: rgb{c}\n")
        fh.write(f"dry/land: rgb{LAND_COLOR}\n")
    return out_path
