"""
Core Model
Tipos de dominio, configuración y errores compartidos por todos los módulos
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

import numpy as np

if TYPE_CHECKING:
    from src.motion import KalmanState


# Dimensión de salida de la red de grafos (feature de 2048)
GRAPH_FEATURE_DIM = 2048
DEFAULT_HIDDEN_DIMS = (256, 512)


class TrackingError(Exception):
    """Error base del sistema de tracking"""


class InvalidInputError(TrackingError, ValueError):
    """Entrada inválida (dimensiones, rangos, frames)"""


class NumericalError(TrackingError, ArithmeticError):
    """Fallo numérico (p.ej. covarianza de innovación no invertible)"""


class ParseError(InvalidInputError):
    """Error de parseo con número de línea"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"línea {line}: {message}"
        super().__init__(message)


class SchemaError(InvalidInputError):
    """Documento con esquema incorrecto (pesos, specs)"""

    def __init__(self, message: str, field_name: Optional[str] = None):
        self.field = field_name
        if field_name is not None:
            message = f"{field_name}: {message}"
        super().__init__(message)


class ConfigError(SchemaError):
    """Clave desconocida, tipo o rango inválido en la configuración"""


@dataclass(frozen=True)
class BoundingBox:
    """Caja en píxeles (left, top, width, height)"""

    left: float
    top: float
    width: float
    height: float

    def __post_init__(self):
        values = (self.left, self.top, self.width, self.height)
        if not all(math.isfinite(v) for v in values):
            raise InvalidInputError(f"caja con valores no finitos: {values}")
        if self.width <= 0 or self.height <= 0:
            raise InvalidInputError(
                f"caja con ancho/alto no positivo: w={self.width}, h={self.height}"
            )

    def center(self) -> Tuple[float, float]:
        return (self.left + self.width / 2, self.top + self.height / 2)

    def to_xyah(self) -> np.ndarray:
        """Medida (cx, cy, aspect, height) del filtro de Kalman"""
        cx, cy = self.center()
        return np.array([cx, cy, self.width / self.height, self.height], dtype=float)

    @classmethod
    def from_xyah(cls, xyah: Sequence[float]) -> "BoundingBox":
        cx, cy, aspect, height = (float(v) for v in xyah[:4])
        width = aspect * height
        return cls(cx - width / 2, cy - height / 2, width, height)

    def translated(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.left + dx, self.top + dy, self.width, self.height)


@dataclass(frozen=True, eq=False)
class Detection:
    """Detección de un frame: caja, confianza y embedding de apariencia"""

    frame: int
    box: BoundingBox
    confidence: float
    embedding: np.ndarray

    def __post_init__(self):
        if int(self.frame) != self.frame or self.frame < 1:
            raise InvalidInputError(f"frame inválido: {self.frame}")
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidInputError(f"confianza fuera de [0,1]: {self.confidence}")
        embedding = np.asarray(self.embedding, dtype=float)
        if embedding.ndim != 1 or embedding.size == 0:
            raise InvalidInputError(f"embedding debe ser un vector, forma {embedding.shape}")
        if not np.all(np.isfinite(embedding)):
            raise InvalidInputError(f"embedding con valores no finitos (frame {self.frame})")
        if np.linalg.norm(embedding) == 0:
            raise InvalidInputError(f"embedding nulo (frame {self.frame})")
        object.__setattr__(self, "embedding", embedding)

    @property
    def dim(self) -> int:
        return int(self.embedding.shape[0])


class TrackState(Enum):
    ACTIVE = "active"
    LOST = "lost"
    REMOVED = "removed"


# Transiciones permitidas: Active <-> Lost, {Active, Lost} -> Removed
_ALLOWED_TRANSITIONS = {
    TrackState.ACTIVE: {TrackState.ACTIVE, TrackState.LOST, TrackState.REMOVED},
    TrackState.LOST: {TrackState.LOST, TrackState.ACTIVE, TrackState.REMOVED},
    TrackState.REMOVED: set(),
}


@dataclass(eq=False)
class Track:
    """
    Trayectoria: identidad, estado, historia por frame, feature suavizada
    (media móvil con momento mu) y estado de Kalman. Solo la muta el tracker que la posee.
    """

    id: int
    kalman: "KalmanState"
    smoothed_feature: np.ndarray
    history: Dict[int, Tuple[BoundingBox, np.ndarray]] = field(default_factory=dict)
    state: TrackState = TrackState.ACTIVE
    age_since_update: int = 0

    @property
    def last_active_frame(self) -> int:
        if not self.history:
            raise InvalidInputError(f"track {self.id} sin historia")
        return max(self.history)

    def has_frame(self, frame: int) -> bool:
        return frame in self.history

    def box_at(self, frame: int) -> BoundingBox:
        return self.history[frame][0]

    @property
    def latest_box(self) -> BoundingBox:
        return self.history[self.last_active_frame][0]

    def transition(self, new_state: TrackState):
        if new_state not in _ALLOWED_TRANSITIONS[self.state]:
            raise InvalidInputError(
                f"transición inválida del track {self.id}: {self.state.value} -> {new_state.value}"
            )
        self.state = new_state

    @property
    def is_active(self) -> bool:
        return self.state is TrackState.ACTIVE


@dataclass
class AssociationResult:
    """Conjuntos M (matched) y U (unmatched) de una ronda de asociación"""

    matched: List[Tuple[int, int, float]] = field(default_factory=list)
    unmatched_tracks: List[int] = field(default_factory=list)
    unmatched_detections: List[int] = field(default_factory=list)

    def validate(self, track_ids: Sequence[int], n_detections: int):
        """Verifica que matched + unmatched particionan exactamente las entradas"""
        tracks_seen = [t for t, _, _ in self.matched] + list(self.unmatched_tracks)
        dets_seen = [d for _, d, _ in self.matched] + list(self.unmatched_detections)
        if len(set(tracks_seen)) != len(tracks_seen) or set(tracks_seen) != set(track_ids):
            raise InvalidInputError("los tracks no forman una partición de la entrada")
        if len(set(dets_seen)) != len(dets_seen) or set(dets_seen) != set(range(n_detections)):
            raise InvalidInputError("las detecciones no forman una partición de la entrada")

    @property
    def matched_track_ids(self) -> List[int]:
        return [t for t, _, _ in self.matched]


@dataclass
class TrackerConfig:
    """
    Hiperparámetros del tracker (por defecto tau1=0.85, tau2=0.95, K=4,
    mu=0.9, tres capas GCN con salida de 2048).
    """

    tau1: float = 0.85
    tau2: float = 0.95
    K: int = 4
    mu: float = 0.9
    lambda_motion: float = 0.98
    max_age: int = 30
    min_confidence: float = 0.4
    embedding_dim: Optional[int] = None
    gcn_layer_dims: Optional[List[int]] = None
    gate_threshold: float = 9.4877
    readout: str = "target"
    second_round: bool = True
    normalize_embeddings: bool = True

    def __post_init__(self):
        for name in ("tau1", "tau2", "mu", "lambda_motion", "min_confidence"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"debe ser real, recibido {value!r}", name)
            if not 0.0 <= float(value) <= 1.0:
                raise ConfigError(f"fuera de rango [0,1]: {value}", name)
        for name in ("K", "max_age"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"debe ser entero, recibido {value!r}", name)
            if value < 0:
                raise ConfigError(f"debe ser >= 0: {value}", name)
        if isinstance(self.gate_threshold, bool) or not isinstance(self.gate_threshold, (int, float)) \
                or not self.gate_threshold > 0:
            raise ConfigError(f"debe ser real positivo: {self.gate_threshold!r}", "gate_threshold")
        if self.readout not in ("target", "mean"):
            raise ConfigError(f"debe ser 'target' o 'mean': {self.readout!r}", "readout")
        for name in ("second_round", "normalize_embeddings"):
            if not isinstance(getattr(self, name), bool):
                raise ConfigError(f"debe ser booleano: {getattr(self, name)!r}", name)
        if self.embedding_dim is not None:
            if isinstance(self.embedding_dim, bool) or not isinstance(self.embedding_dim, int) \
                    or self.embedding_dim < 1:
                raise ConfigError(f"debe ser entero >= 1: {self.embedding_dim!r}", "embedding_dim")
        if self.gcn_layer_dims is not None:
            dims = self.gcn_layer_dims
            if not isinstance(dims, (list, tuple)) or len(dims) < 2 or \
                    not all(isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in dims):
                raise ConfigError(f"lista de enteros positivos (>=2): {dims!r}", "gcn_layer_dims")
            if dims[-1] != GRAPH_FEATURE_DIM:
                raise ConfigError(f"la última dimensión debe ser {GRAPH_FEATURE_DIM}: {dims[-1]}",
                                  "gcn_layer_dims")
            if self.embedding_dim is not None and dims[0] != self.embedding_dim:
                raise ConfigError(
                    f"la primera dimensión ({dims[0]}) no coincide con embedding_dim ({self.embedding_dim})",
                    "gcn_layer_dims")
            self.gcn_layer_dims = list(dims)

    @property
    def graph_dropped(self) -> bool:
        """K=0: el grafo de vecinos se descarta"""
        return self.K == 0

    def layer_dims(self) -> List[int]:
        """Dimensiones de la GCN: [d, h1, h2, 2048] salvo que se configuren"""
        if self.gcn_layer_dims is not None:
            return list(self.gcn_layer_dims)
        if self.embedding_dim is None:
            raise ConfigError("sin embedding_dim no se pueden derivar las capas", "embedding_dim")
        return [self.embedding_dim, *DEFAULT_HIDDEN_DIMS, GRAPH_FEATURE_DIM]

    def with_embedding_dim(self, dim: int) -> "TrackerConfig":
        """Copia con embedding_dim resuelto (p.ej. desde la cabecera del archivo)"""
        if self.embedding_dim is not None and self.embedding_dim != dim:
            raise ConfigError(
                f"embedding_dim {self.embedding_dim} no coincide con d={dim} de las detecciones",
                "embedding_dim")
        values = dict(self.__dict__)
        values["embedding_dim"] = dim
        return TrackerConfig(**values)

    def with_layer_dims(self, dims: Sequence[int]) -> "TrackerConfig":
        """
        Copia con gcn_layer_dims fijado (p.ej. desde un archivo de pesos). Si la
        configuración ya fija otras capas es un error.
        """
        dims = [int(v) for v in dims]
        if self.gcn_layer_dims is not None and list(self.gcn_layer_dims) != dims:
            raise ConfigError(
                f"dimensiones de los pesos {dims} != configuración {list(self.gcn_layer_dims)}",
                "gcn_layer_dims")
        values = dict(self.__dict__)
        values["gcn_layer_dims"] = dims
        return TrackerConfig(**values)


def l2_normalize(vector: np.ndarray) -> np.ndarray:
    vector = np.asarray(vector, dtype=float)
    norm = np.linalg.norm(vector)
    if norm == 0 or not np.isfinite(norm):
        raise InvalidInputError("no se puede normalizar un vector nulo o no finito")
    return vector / norm


def smoothing_step(previous: np.ndarray, detection_embedding: np.ndarray, mu: float) -> np.ndarray:
    """mu * f_{t-1} + (1 - mu) * f~ sin normalizar"""
    previous = np.asarray(previous, dtype=float)
    detection_embedding = np.asarray(detection_embedding, dtype=float)
    if previous.shape != detection_embedding.shape:
        raise InvalidInputError(
            f"dimensiones distintas: {previous.shape} vs {detection_embedding.shape}"
        )
    if not 0.0 <= mu <= 1.0:
        raise InvalidInputError(f"mu fuera de [0,1]: {mu}")
    return mu * previous + (1.0 - mu) * detection_embedding


def update_smoothed_feature(previous: np.ndarray, detection_embedding: np.ndarray,
                            mu: float) -> np.ndarray:
    """
    Actualiza la feature suavizada de una trayectoria:
    f_t = mu * f_{t-1} + (1 - mu) * f~, y normaliza L2 el resultado.

    Args:
        previous: feature suavizada f_{t-1}
        detection_embedding: embedding de la detección asociada f~
        mu: término de momento en [0, 1]

    Returns:
        f_t con norma unitaria
    """
    return l2_normalize(smoothing_step(previous, detection_embedding, mu))


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Similitud coseno entre dos vectores no nulos de la misma dimensión"""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise InvalidInputError(f"dimensiones distintas: {a.shape} vs {b.shape}")
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        raise InvalidInputError("similitud coseno con vector nulo")
    return float(np.dot(a, b) / (norm_a * norm_b))
