"""
Neighbor Select
Selección de vecinos por relaciones temporales (frame I_last) y espaciales
(distancia entre centros de cajas)
"""

from dataclasses import dataclass
from typing import List, NamedTuple, Sequence

import numpy as np

from src.core_model import BoundingBox, Detection, Track


class MatchedPair(NamedTuple):
    """Par conservado (M_t') de la asociación inicial en el frame t"""

    track: Track
    detection_index: int
    detection: Detection


@dataclass(frozen=True, eq=False)
class NeighborCandidate:
    track_id: int
    detection_index: int
    box_at_last: BoundingBox
    box_at_t: BoundingBox
    track_feature: np.ndarray
    det_feature: np.ndarray


def candidate_set(query: Track, refined_matches: Sequence[MatchedPair]) -> List[NeighborCandidate]:
    """
    Candidatos a vecino de la trayectoria no asociada: trayectorias de M_t'
    que también estaban activas en su último frame activo I_last.
    """
    last_frame = query.last_active_frame
    candidates = []
    for pair in refined_matches:
        track = pair.track
        if not track.has_frame(last_frame):
            continue
        candidates.append(NeighborCandidate(
            track_id=track.id,
            detection_index=pair.detection_index,
            box_at_last=track.box_at(last_frame),
            box_at_t=pair.detection.box,
            track_feature=track.smoothed_feature,
            det_feature=pair.detection.embedding,
        ))
    return candidates


def _nearest(reference: BoundingBox, boxes: Sequence[BoundingBox],
             candidates: Sequence[NeighborCandidate], k: int) -> List[NeighborCandidate]:
    if k <= 0 or not candidates:
        return []
    ref = np.array(reference.center())
    centers = np.array([b.center() for b in boxes])
    distances = np.linalg.norm(centers - ref, axis=1)
    # Empates por id de track ascendente
    order = sorted(range(len(candidates)), key=lambda i: (distances[i], candidates[i].track_id))
    return [candidates[i] for i in order[:k]]


def select_neighbors_for_track(query: Track, candidates: Sequence[NeighborCandidate],
                               k: int) -> List[NeighborCandidate]:
    """Top-K candidatos más cercanos con las cajas del frame I_last"""
    reference = query.box_at(query.last_active_frame)
    return _nearest(reference, [c.box_at_last for c in candidates], candidates, k)


def select_neighbors_for_detection(detection: Detection, candidates: Sequence[NeighborCandidate],
                                   k: int) -> List[NeighborCandidate]:
    """Top-K candidatos más cercanos con las cajas del frame actual"""
    return _nearest(detection.box, [c.box_at_t for c in candidates], candidates, k)
