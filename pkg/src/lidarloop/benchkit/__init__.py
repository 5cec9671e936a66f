"""Data ingestion, benchmark segmentation, and the synthetic world oracle."""

from lidarloop.benchkit.io import (
    ScenarioIndex,
    cloud_from_bytes,
    cloud_to_bytes,
    ingest,
    load_beams,
    load_cloud,
    read_cloud,
    save_cloud,
    write_cloud,
    write_scenario,
)
from lidarloop.benchkit.protocol import SEGMENT_FRAMES, Segment, segment
from lidarloop.benchkit.synth import (
    Cuboid,
    EgoTrack,
    ScenarioConfig,
    SynthWorld,
    cast_rays,
    default_beams,
    make_world,
    ray_grid,
    raycast,
    synth_scenario,
)

__all__ = [
    "ScenarioIndex",
    "Segment",
    "SEGMENT_FRAMES",
    "segment",
    "ingest",
    "write_scenario",
    "load_beams",
    "load_cloud",
    "save_cloud",
    "read_cloud",
    "write_cloud",
    "cloud_to_bytes",
    "cloud_from_bytes",
    "Cuboid",
    "EgoTrack",
    "ScenarioConfig",
    "SynthWorld",
    "default_beams",
    "make_world",
    "ray_grid",
    "raycast",
    "cast_rays",
    "synth_scenario",
]
