"""Run configuration, output files, rendering and the command line."""

from .config import Gauge, RunConfig, load_config
from .driver import run_simulation
from .output import list_frames, read_frame, write_frame
from .render import render_raster

__all__ = ["Gauge", "RunConfig", "load_config", "run_simulation",
           "list_frames", "read_frame", "write_frame", "render_raster"]
