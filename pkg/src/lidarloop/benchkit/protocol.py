"""Long-horizon benchmark segmentation: fixed windows of 20 frames (10 s)."""

from __future__ import annotations

from dataclasses import dataclass

from lidarloop.benchkit.io import ScenarioIndex
from lidarloop.scenemodel import FrameRecord

SEGMENT_FRAMES = 20


@dataclass(frozen=True)
class Segment:
    """Exactly 20 consecutive frames from a single scene."""

    frames: tuple[FrameRecord, ...]

    def __post_init__(self) -> None:
        frames = tuple(self.frames)
        if len(frames) != SEGMENT_FRAMES:
            raise ValueError(f"segment needs {SEGMENT_FRAMES} frames, got {len(frames)}")
        tokens = {f.scene_token for f in frames}
        if len(tokens) != 1:
            raise ValueError(f"segment spans scenes {sorted(tokens)}")
        object.__setattr__(self, "frames", frames)

    @property
    def scene_token(self) -> str:
        return self.frames[0].scene_token


def segment(index: ScenarioIndex) -> list[Segment]:
    """Cut the index into non-overlapping 20-frame windows, in order.

    Windows fall on a fixed grid; any window that would span two scenes is
    dropped (the grid does not re-align afterwards).
    """
    out = []
    frames = index.frames
    for start in range(0, len(frames) - SEGMENT_FRAMES + 1, SEGMENT_FRAMES):
        window = frames[start : start + SEGMENT_FRAMES]
        if len({f.scene_token for f in window}) == 1:
            out.append(Segment(tuple(window)))
    return out
