"""
Cascade Tracker
Orquesta la asociación por frame: ronda inicial con apariencia + movimiento,
refinamiento con tau1, segunda ronda con features de grafo de vecinos,
filtrado con tau2 y ciclo de vida de las trayectorias
"""

from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from src.assignment import FORBIDDEN, filter_matches, solve_assignment
from src.core_model import (
    AssociationResult,
    BoundingBox,
    ConfigError,
    Detection,
    InvalidInputError,
    Track,
    TrackerConfig,
    TrackState,
    cosine_similarity,
    l2_normalize,
    update_smoothed_feature,
)
from src.motion import KalmanBoxFilter, affinity_from_mahalanobis, squared_mahalanobis_batch
from src.neighbor_graph import GcnModel, build_graph, gcn_forward
from src.neighbor_select import (
    MatchedPair,
    candidate_set,
    select_neighbors_for_detection,
    select_neighbors_for_track,
)

Output = Tuple[int, BoundingBox]


@dataclass
class FrameStats:
    """Conteos de la cascada en un frame"""

    frame: int = 0
    detections: int = 0
    round1_kept: int = 0
    tau1_demoted: int = 0
    round2_pairs: int = 0
    round2_kept: int = 0
    tau2_rejected: int = 0
    graph_dropped: int = 0
    tracks_created: int = 0
    tracks_removed: int = 0


@dataclass
class CascadeStats:
    """Conteos acumulados de la cascada sobre una secuencia"""

    frames: int = 0
    detections: int = 0
    round1_kept: int = 0
    tau1_demoted: int = 0
    round2_pairs: int = 0
    round2_kept: int = 0
    tau2_rejected: int = 0
    graph_dropped: int = 0
    tracks_created: int = 0
    tracks_removed: int = 0

    def add(self, frame_stats: FrameStats):
        self.frames += 1
        for f in fields(self):
            if f.name != "frames":
                setattr(self, f.name, getattr(self, f.name) + getattr(frame_stats, f.name))

    def as_dict(self) -> Dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def summary_line(self) -> str:
        return ("round1_kept={round1_kept} tau1_demoted={tau1_demoted} "
                "round2_pairs={round2_pairs} round2_kept={round2_kept} "
                "tau2_rejected={tau2_rejected} graph_dropped={graph_dropped} "
                "tracks_created={tracks_created} tracks_removed={tracks_removed}"
                ).format(**self.as_dict())


@dataclass(eq=False)
class TrackerState:
    """Estado mutable del tracker: trayectorias Active + Lost y contador de ids"""

    config: TrackerConfig
    gcn: Optional[GcnModel] = None
    tracks: List[Track] = field(default_factory=list)
    next_id: int = 1
    frame: int = 0
    stats: CascadeStats = field(default_factory=CascadeStats)

    def track_by_id(self, track_id: int) -> Track:
        for track in self.tracks:
            if track.id == track_id:
                return track
        raise KeyError(track_id)


class CascadeTracker:
    """
    Tracker online de dos rondas. Cada llamada a step() consume las
    detecciones del frame siguiente y devuelve las cajas de las trayectorias
    activas.
    """

    def __init__(self, config: Optional[TrackerConfig] = None, gcn: Optional[GcnModel] = None,
                 state: Optional[TrackerState] = None):
        """
        Args:
            config: hiperparámetros (por defecto los de TrackerConfig())
            gcn: red de grafos; obligatoria si hay segunda ronda con K > 0
            state: estado existente a continuar (ignora config/gcn)
        """
        if state is None:
            state = TrackerState(config=config or TrackerConfig(), gcn=gcn)
        self.state = state
        self._kf = KalmanBoxFilter()
        self.frame_stats: List[FrameStats] = []

        cfg = self.state.config
        if cfg.second_round and not cfg.graph_dropped and self.state.gcn is None:
            raise ConfigError("la segunda ronda con K > 0 necesita un modelo GCN", "K")
        if self.state.gcn is not None and cfg.embedding_dim is not None \
                and self.state.gcn.dims[0] != cfg.embedding_dim:
            raise ConfigError(
                f"entrada de la GCN ({self.state.gcn.dims[0]}) != embedding_dim ({cfg.embedding_dim})",
                "embedding_dim")

    @property
    def config(self) -> TrackerConfig:
        return self.state.config

    @property
    def stats(self) -> CascadeStats:
        return self.state.stats

    # ------------------------------------------------------------------
    # Paso por frame
    # ------------------------------------------------------------------

    def step(self, detections: Sequence[Detection]) -> List[Output]:
        """
        Procesa el frame state.frame + 1.

        Args:
            detections: detecciones del frame (todas con el mismo índice de frame)

        Returns:
            Lista (id, caja) de las trayectorias activas, ordenada por id
        """
        frame = self.state.frame + 1
        detections = self._prepare_detections(detections, frame)
        stats = FrameStats(frame=frame, detections=len(detections))

        # 1. Predicción de Kalman de todas las trayectorias (Active y Lost)
        for track in self.state.tracks:
            track.kalman = self._kf.predict(track.kalman)

        tracks = list(self.state.tracks)
        gating = self._gating_matrix(tracks, detections)

        # 2. Asociación inicial y refinamiento con tau1
        initial = self._initial_association(tracks, detections, gating, stats)

        # 3. Segunda ronda sobre U_t'
        final = initial
        if self.config.second_round and initial.unmatched_tracks and initial.unmatched_detections:
            final = self._second_association(tracks, detections, gating, initial, stats)
        final.validate([t.id for t in tracks], len(detections))

        # 4. Ciclo de vida
        self._update_matched(final, detections, frame)
        stats.tracks_removed = self._age_unmatched(final.unmatched_tracks)
        stats.tracks_created = self._create_tracks(final.unmatched_detections, detections, frame)

        self.state.frame = frame
        self.state.stats.add(stats)
        self.frame_stats.append(stats)
        logger.debug(
            f"frame {frame}: {stats.detections} dets, r1={stats.round1_kept} "
            f"demoted={stats.tau1_demoted} r2={stats.round2_kept}/{stats.round2_pairs} "
            f"new={stats.tracks_created} removed={stats.tracks_removed}"
        )

        outputs = [(t.id, t.box_at(frame)) for t in self.state.tracks if t.is_active]
        return sorted(outputs, key=lambda o: o[0])

    def run(self, frames: Sequence[Sequence[Detection]]) -> List[List[Output]]:
        """Aplica step() a cada frame en orden (frames[0] es el frame 1)"""
        outputs = [self.step(dets) for dets in frames]
        logger.info(f"secuencia de {len(frames)} frames: {self.stats.summary_line()}")
        return outputs

    # ------------------------------------------------------------------
    # Validación de entrada
    # ------------------------------------------------------------------

    def _expected_dim(self) -> Optional[int]:
        if self.config.embedding_dim is not None:
            return self.config.embedding_dim
        if self.state.gcn is not None:
            return self.state.gcn.dims[0]
        if self.state.tracks:
            return int(self.state.tracks[0].smoothed_feature.shape[0])
        return None

    def _prepare_detections(self, detections: Sequence[Detection], frame: int) -> List[Detection]:
        expected_dim = self._expected_dim()
        prepared = []
        for det in detections:
            if det.frame != frame:
                raise InvalidInputError(
                    f"detección del frame {det.frame}, se esperaba el frame {frame}"
                )
            if expected_dim is None:
                expected_dim = det.dim
            if det.dim != expected_dim:
                raise InvalidInputError(f"embedding de dimensión {det.dim}, se esperaba {expected_dim}")
            if det.confidence < self.config.min_confidence:
                continue
            if self.config.normalize_embeddings:
                det = Detection(det.frame, det.box, det.confidence, l2_normalize(det.embedding))
            prepared.append(det)
        return prepared

    # ------------------------------------------------------------------
    # Rondas de asociación
    # ------------------------------------------------------------------

    def _gating_matrix(self, tracks: Sequence[Track], detections: Sequence[Detection]) -> np.ndarray:
        """Distancias de Mahalanobis al cuadrado tracks x detecciones"""
        d2 = np.zeros((len(tracks), len(detections)))
        if not detections:
            return d2
        measurements = np.array([det.box.to_xyah() for det in detections])
        for i, track in enumerate(tracks):
            mean, covariance = self._kf.project(track.kalman)
            d2[i] = squared_mahalanobis_batch(mean, covariance, measurements)
        return d2

    def _initial_association(self, tracks: Sequence[Track], detections: Sequence[Detection],
                             gating: np.ndarray, stats: FrameStats) -> AssociationResult:
        lam = self.config.lambda_motion
        affinity = np.full((len(tracks), len(detections)), FORBIDDEN)
        for i, track in enumerate(tracks):
            for j, det in enumerate(detections):
                if gating[i, j] > self.config.gate_threshold:
                    continue
                appearance = max(0.0, cosine_similarity(track.smoothed_feature, det.embedding))
                value = lam * appearance + (1.0 - lam) * affinity_from_mahalanobis(gating[i, j])
                affinity[i, j] = min(1.0, value)

        matches = solve_assignment(affinity)
        kept, demoted_rows, _ = filter_matches(matches, affinity, self.config.tau1)
        stats.round1_kept = len(kept)
        stats.tau1_demoted = len(demoted_rows)

        matched_rows = {r for r, _ in kept}
        matched_cols = {c for _, c in kept}
        return AssociationResult(
            matched=[(tracks[r].id, c, float(affinity[r, c])) for r, c in kept],
            unmatched_tracks=[t.id for i, t in enumerate(tracks) if i not in matched_rows],
            unmatched_detections=[j for j in range(len(detections)) if j not in matched_cols],
        )

    def _graph_feature(self, target: np.ndarray, neighbor_features: List[np.ndarray]) -> Optional[np.ndarray]:
        graph = build_graph(target, neighbor_features, self.config.K)
        if graph is None:
            return None
        return gcn_forward(graph, self.state.gcn, self.config.readout)

    @staticmethod
    def _graph_affinity(traj_feature: np.ndarray, det_feature: np.ndarray) -> float:
        if not np.any(traj_feature) or not np.any(det_feature):
            return 0.0
        return float(min(1.0, max(0.0, cosine_similarity(traj_feature, det_feature))))

    def _second_association(self, tracks: Sequence[Track], detections: Sequence[Detection],
                            gating: np.ndarray, initial: AssociationResult,
                            stats: FrameStats) -> AssociationResult:
        row_of = {t.id: i for i, t in enumerate(tracks)}
        refined = [MatchedPair(tracks[row_of[tid]], j, detections[j]) for tid, j, _ in initial.matched]
        u_tracks = [tracks[row_of[tid]] for tid in initial.unmatched_tracks]
        u_dets = list(initial.unmatched_detections)
        k = self.config.K

        affinity = np.full((len(u_tracks), len(u_dets)), FORBIDDEN)
        for a, track in enumerate(u_tracks):
            row = row_of[track.id]
            legal = [b for b, j in enumerate(u_dets) if gating[row, j] <= self.config.gate_threshold]
            if not legal:
                continue
            candidates = candidate_set(track, refined)
            track_neighbors = select_neighbors_for_track(track, candidates, k)
            traj_feature = self._graph_feature(
                track.smoothed_feature, [c.track_feature for c in track_neighbors])

            for b in legal:
                det = detections[u_dets[b]]
                stats.round2_pairs += 1
                if traj_feature is None:
                    stats.graph_dropped += 1
                    raw = cosine_similarity(track.smoothed_feature, det.embedding)
                    affinity[a, b] = min(1.0, max(0.0, raw))
                    continue
                det_neighbors = select_neighbors_for_detection(det, candidates, k)
                det_feature = self._graph_feature(det.embedding, [c.det_feature for c in det_neighbors])
                affinity[a, b] = self._graph_affinity(traj_feature, det_feature)

        matches = solve_assignment(affinity)
        kept, demoted_rows, _ = filter_matches(matches, affinity, self.config.tau2)
        stats.round2_kept = len(kept)
        stats.tau2_rejected = len(demoted_rows)

        rescued = [(u_tracks[a].id, u_dets[b], float(affinity[a, b])) for a, b in kept]
        rescued_tracks = {tid for tid, _, _ in rescued}
        rescued_dets = {j for _, j, _ in rescued}
        for tid, j, score in rescued:
            logger.debug(f"ronda 2: track {tid} recupera la detección {j} (afinidad {score:.3f})")
        return AssociationResult(
            matched=initial.matched + rescued,
            unmatched_tracks=[tid for tid in initial.unmatched_tracks if tid not in rescued_tracks],
            unmatched_detections=[j for j in initial.unmatched_detections if j not in rescued_dets],
        )

    # ------------------------------------------------------------------
    # Ciclo de vida
    # ------------------------------------------------------------------

    def _update_matched(self, result: AssociationResult, detections: Sequence[Detection], frame: int):
        for tid, j, _ in result.matched:
            track = self.state.track_by_id(tid)
            det = detections[j]
            track.kalman = self._kf.update(track.kalman, det.box)
            track.history[frame] = (det.box, det.embedding)
            track.smoothed_feature = update_smoothed_feature(
                track.smoothed_feature, det.embedding, self.config.mu)
            track.transition(TrackState.ACTIVE)
            track.age_since_update = 0

    def _age_unmatched(self, unmatched_track_ids: Sequence[int]) -> int:
        removed = 0
        for tid in unmatched_track_ids:
            track = self.state.track_by_id(tid)
            track.age_since_update += 1
            if track.state is TrackState.ACTIVE:
                track.transition(TrackState.LOST)
            if track.age_since_update > self.config.max_age:
                track.transition(TrackState.REMOVED)
                removed += 1
                logger.debug(f"track {tid} eliminado tras {track.age_since_update} frames sin asociar")
        self.state.tracks = [t for t in self.state.tracks if t.state is not TrackState.REMOVED]
        return removed

    def _create_tracks(self, unmatched_detections: Sequence[int], detections: Sequence[Detection],
                       frame: int) -> int:
        for j in unmatched_detections:
            det = detections[j]
            track = Track(
                id=self.state.next_id,
                kalman=self._kf.initiate(det.box),
                smoothed_feature=l2_normalize(det.embedding),
                history={frame: (det.box, det.embedding)},
            )
            self.state.next_id += 1
            self.state.tracks.append(track)
            logger.debug(f"track {track.id} creado en el frame {frame}")
        return len(unmatched_detections)


def new_state(config: TrackerConfig, gcn: Optional[GcnModel] = None) -> TrackerState:
    return TrackerState(config=config, gcn=gcn)


def step(state: TrackerState, detections: Sequence[Detection]) -> Tuple[TrackerState, List[Output]]:
    """Avanza un frame sobre el estado dado (lo muta) y devuelve (estado, salidas)"""
    tracker = CascadeTracker(state=state)
    outputs = tracker.step(detections)
    return tracker.state, outputs


def run_sequence(config: TrackerConfig, gcn: Optional[GcnModel],
                 frames: Sequence[Sequence[Detection]]) -> List[List[Output]]:
    """Pliega step() sobre los frames 1..T; determinista dado config, modelo y entrada"""
    return CascadeTracker(config, gcn).run(frames)
