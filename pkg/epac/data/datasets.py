import dataclasses
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np

from epac.data import rawvideo
from epac.data import synthesis
from epac.structs import frames


@dataclasses.dataclass(frozen=True, eq=False)
class ClipSet:
    """
    The clips for the training or the evaluation, as 8-bit samples in memory.

    The frames are converted to `frames.FrameBuffer` only when requested,
    so that a whole dataset of the desk scale stays small.
    """
    clips: Mapping[int, np.ndarray]
    """ ``[N, C, H, W]`` unsigned 8-bit samples, per clip id. """

    infos: Mapping[int, synthesis.ClipInfo] = dataclasses.field(default_factory=dict)

    @property
    def ids(self) -> Tuple[int, ...]:
        return tuple(sorted(self.clips))

    def __len__(self) -> int:
        return len(self.clips)

    def length(self, clip_id: int) -> int:
        return int(self.clips[clip_id].shape[0])

    def frames(self, clip_id: int, start: int = 0, count: Optional[int] = None) -> List[frames.FrameBuffer]:
        clip = self.clips[clip_id]
        stop = clip.shape[0] if count is None else start + count
        if start < 0 or stop > clip.shape[0]:
            raise IndexError(f"Clip #{clip_id} has {clip.shape[0]} frames; "
                             f"requested {start}..{stop - 1}.")
        return [frames.FrameBuffer(plane.astype(np.float64) / 255.0) for plane in clip[start:stop]]

    def subset(self, clip_ids: Iterable[int]) -> 'ClipSet':
        chosen = list(clip_ids)
        return ClipSet(clips={i: self.clips[i] for i in chosen},
                       infos={i: self.infos[i] for i in chosen if i in self.infos})

    @classmethod
    def from_arrays(cls, rendered: Iterable[Tuple[np.ndarray, synthesis.ClipInfo]]) -> 'ClipSet':
        clips: Dict[int, np.ndarray] = {}
        infos: Dict[int, synthesis.ClipInfo] = {}
        for clip, info in rendered:
            clips[info.clip_id] = np.asarray(clip, dtype=np.uint8)
            infos[info.clip_id] = info
        return cls(clips=clips, infos=infos)

    @classmethod
    def from_manifest(cls, manifest: synthesis.Manifest, split: str = 'all') -> 'ClipSet':
        if split == 'train':
            ids: Iterable[int] = manifest.train
        elif split == 'test':
            ids = manifest.test
        elif split == 'all':
            ids = [info.clip_id for info in manifest.clips]
        else:
            raise ValueError(f"Unknown split {split!r}; use train, test, or all.")
        clips: Dict[int, np.ndarray] = {}
        infos: Dict[int, synthesis.ClipInfo] = {}
        for clip_id in ids:
            path = manifest.path(clip_id)
            header = rawvideo.read_header(path)
            clips[clip_id] = rawvideo.decode_raw(path.read_bytes(), header).copy()
            infos[clip_id] = manifest.clip(clip_id)
        return cls(clips=clips, infos=infos)
