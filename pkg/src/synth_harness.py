"""
Synth Harness
Generador determinista de escenarios de grupos que caminan juntos, con
oclusiones que corrompen los embeddings, ajuste sintético de la GCN y
experimento de ablación (cascada completa vs. solo ronda inicial)
"""

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from src.cascade_tracker import CascadeTracker
from src.clearmot_metrics import EvalReport, evaluate, report_table
from src.core_model import (
    BoundingBox,
    ConfigError,
    Detection,
    ParseError,
    TrackerConfig,
    l2_normalize,
)
from src.io_formats import (
    DetectionSequence,
    DetFileHeader,
    format_detections,
    format_results,
    outputs_to_frame,
)
from src.neighbor_graph import GcnModel, NeighborGraph, build_graph, init_model, train_graph_model

Window = Tuple[int, int]

# Frames iniciales sin oclusión (el filtro de Kalman converge) y separación
# mínima entre ventanas de un mismo grupo
WARMUP_FRAMES = 20
WINDOW_MARGIN = 10

TABLE_COLUMNS = ["MOTA", "IDF1", "IDS", "FP", "FN", "MT", "ML"]

# Ajuste sintético de la GCN: pares (grafo de trayectoria, grafo de detección)
FIT_PAIRS = 32
FIT_STEPS = 150
FIT_STEP = 0.2


@dataclass
class ScenarioSpec:
    """Parámetros de un escenario sintético de co-walkers"""

    seed: int = 0
    n_groups: int = 4
    group_size: int = 4
    frames: int = 200
    speed: float = 2.0
    group_spread: float = 10.0
    group_spacing: float = 300.0
    box_width: float = 40.0
    box_height: float = 100.0
    box_jitter: float = 0.5
    embedding_jitter: float = 0.005
    embedding_dim: int = 32
    corruption: float = 0.0
    dropout: float = 0.0
    occlusions_per_target: int = 0
    occlusion_length: int = 15
    occlusion_windows: Optional[Dict[int, List[Window]]] = None

    def __post_init__(self):
        for name in ("seed", "n_groups", "group_size", "frames", "embedding_dim",
                     "occlusions_per_target", "occlusion_length"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                raise ConfigError(f"debe ser entero >= 0: {value!r}", name)
        for name in ("n_groups", "group_size", "frames", "embedding_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"debe ser >= 1: {getattr(self, name)}", name)
        for name in ("corruption", "dropout", "embedding_jitter"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not 0.0 <= value <= 1.0:
                raise ConfigError(f"fuera de [0,1]: {value!r}", name)
        for name in ("speed", "group_spread", "group_spacing", "box_jitter"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0:
                raise ConfigError(f"debe ser real >= 0: {value!r}", name)
        for name in ("box_width", "box_height"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
                raise ConfigError(f"debe ser real > 0: {value!r}", name)
        if self.occlusion_windows is not None:
            self.occlusion_windows = self._parse_windows(self.occlusion_windows)

    def _parse_windows(self, windows) -> Dict[int, List[Window]]:
        if not isinstance(windows, dict):
            raise ConfigError("objeto id -> lista de [inicio, fin]", "occlusion_windows")
        parsed = {}
        for key, intervals in windows.items():
            try:
                target = int(key)
            except (TypeError, ValueError):
                raise ConfigError(f"id no entero: {key!r}", "occlusion_windows") from None
            if not 1 <= target <= self.n_targets:
                raise ConfigError(f"id fuera de rango: {target}", "occlusion_windows")
            parsed[target] = []
            for interval in intervals:
                if len(interval) != 2 or not all(isinstance(v, int) for v in interval) \
                        or not 1 <= interval[0] <= interval[1]:
                    raise ConfigError(f"intervalo inválido: {interval!r}", f"occlusion_windows.{key}")
                parsed[target].append((interval[0], interval[1]))
        return parsed

    @property
    def n_targets(self) -> int:
        return self.n_groups * self.group_size

    def replace(self, **changes) -> "ScenarioSpec":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return ScenarioSpec(**values)

    @classmethod
    def from_dict(cls, doc: Dict) -> "ScenarioSpec":
        if not isinstance(doc, dict):
            raise ConfigError("la especificación del escenario debe ser un objeto JSON")
        known = {f.name for f in fields(cls)}
        for key in doc:
            if key not in known:
                raise ConfigError("clave desconocida", key)
        return cls(**doc)


def read_scenario(path: Union[str, Path]) -> ScenarioSpec:
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(f"JSON inválido: {e.msg}", e.lineno) from e
    return ScenarioSpec.from_dict(doc)


@dataclass
class Scenario:
    """Escenario generado: ground truth, detecciones y ventanas de oclusión"""

    spec: ScenarioSpec
    ground_truth: pd.DataFrame
    detections: DetectionSequence
    windows: Dict[int, List[Window]] = field(default_factory=dict)

    def occluded(self, target: int, frame: int) -> bool:
        return _in_windows(self.windows, target, frame)


def _in_windows(windows: Dict[int, List[Window]], target: int, frame: int) -> bool:
    return any(start <= frame <= end for start, end in windows.get(target, []))


def _random_unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    return l2_normalize(rng.standard_normal(dim))


def _mixed(rng: np.random.Generator, base: np.ndarray, mix: float) -> np.ndarray:
    """Embedding observado: (1 - mix) * base + mix * ruido fresco, normalizado"""
    noise = _random_unit(rng, base.shape[0])
    return l2_normalize((1.0 - mix) * base + mix * noise)


def _staggered_windows(spec: ScenarioSpec, rng: np.random.Generator) -> Dict[int, List[Window]]:
    """
    Ventanas de oclusión por grupo: como mucho un miembro ocluido a la vez,
    separadas al menos WINDOW_MARGIN frames. Si no caben escalonadas se
    recurre a _overlapping_windows.
    """
    windows: Dict[int, List[Window]] = {}
    if spec.occlusions_per_target == 0 or spec.occlusion_length == 0:
        return windows
    if spec.occlusion_length > spec.frames:
        raise ConfigError(
            f"ventanas de {spec.occlusion_length} frames en una secuencia de {spec.frames}",
            "occlusion_length")
    n_windows = spec.group_size * spec.occlusions_per_target
    slot = spec.occlusion_length + WINDOW_MARGIN
    available = spec.frames - WARMUP_FRAMES - WINDOW_MARGIN
    slack = available - n_windows * slot
    if slack < 0:
        logger.warning(
            f"{n_windows} ventanas de {spec.occlusion_length} frames no caben escalonadas en "
            f"{spec.frames} frames; se permiten oclusiones simultáneas")
        return _overlapping_windows(spec, rng)

    for g in range(spec.n_groups):
        offsets = np.sort(rng.integers(0, slack + 1, size=n_windows))
        owners = rng.permutation(np.repeat(np.arange(spec.group_size), spec.occlusions_per_target))
        for i, (offset, member) in enumerate(zip(offsets, owners)):
            start = WARMUP_FRAMES + 1 + i * slot + int(offset)
            target = g * spec.group_size + int(member) + 1
            windows.setdefault(target, []).append((start, start + spec.occlusion_length - 1))
    return windows


def _overlapping_windows(spec: ScenarioSpec, rng: np.random.Generator) -> Dict[int, List[Window]]:
    """
    Ventanas para secuencias cortas: inicio uniforme tras el calentamiento
    (recortado si hace falta), sin exclusión dentro del grupo.
    """
    length = spec.occlusion_length
    warmup = min(WARMUP_FRAMES, spec.frames - length)
    windows: Dict[int, List[Window]] = {}
    for target in range(1, spec.n_targets + 1):
        starts = np.sort(rng.integers(warmup + 1, spec.frames - length + 2, size=spec.occlusions_per_target))
        windows[target] = [(int(s), int(s) + length - 1) for s in starts]
    return windows


def generate_scenario(spec: ScenarioSpec) -> Scenario:
    """
    Genera grupos de identidades que caminan en paralelo (eje x) con
    embeddings base persistentes. Dentro de una ventana de oclusión el
    embedding se mezcla con ruido fresco y la detección puede perderse.
    """
    rng = np.random.default_rng(spec.seed)
    bases = [_random_unit(rng, spec.embedding_dim) for _ in range(spec.n_targets)]
    windows = spec.occlusion_windows if spec.occlusion_windows is not None \
        else _staggered_windows(spec, rng)

    gt_rows = []
    det_frames: List[List[Detection]] = []
    for frame in range(1, spec.frames + 1):
        frame_dets = []
        for g in range(spec.n_groups):
            for m in range(spec.group_size):
                target = g * spec.group_size + m + 1
                left = 100.0 + m * spec.group_spread + spec.speed * (frame - 1)
                top = 100.0 + g * spec.group_spacing
                gt_rows.append((frame, target, left, top, spec.box_width, spec.box_height))

                is_occluded = _in_windows(windows, target, frame)
                jitter = rng.uniform(-spec.box_jitter, spec.box_jitter, size=2)
                confidence = float(rng.uniform(0.6, 1.0))
                mix = spec.corruption if is_occluded else spec.embedding_jitter
                embedding = _mixed(rng, bases[target - 1], mix)
                dropped = is_occluded and rng.random() < spec.dropout
                if dropped:
                    continue
                box = BoundingBox(left + jitter[0], top + jitter[1], spec.box_width, spec.box_height)
                frame_dets.append(Detection(frame, box, confidence, embedding))
        order = rng.permutation(len(frame_dets))
        det_frames.append([frame_dets[i] for i in order])

    gt = pd.DataFrame(gt_rows, columns=["frame", "id", "left", "top", "width", "height"])
    header = DetFileHeader(spec.embedding_dim, f"synth-{spec.seed}")
    return Scenario(spec, gt, DetectionSequence(header, det_frames), windows)


def format_ground_truth(ground_truth: pd.DataFrame) -> str:
    outputs: List[List[Tuple[int, BoundingBox]]] = []
    for frame, rows in ground_truth.groupby("frame"):
        while len(outputs) < frame - 1:
            outputs.append([])
        outputs.append([(int(r.id), BoundingBox(r.left, r.top, r.width, r.height))
                        for r in rows.itertuples(index=False)])
    return format_results(outputs)


def generate(spec: ScenarioSpec) -> Tuple[str, str]:
    """
    Returns:
        (contenido del archivo de ground truth, contenido del archivo de detecciones)
    """
    scenario = generate_scenario(spec)
    return format_ground_truth(scenario.ground_truth), format_detections(scenario.detections)


def _context_label(projection: np.ndarray, target: np.ndarray, mates: Sequence[np.ndarray]) -> np.ndarray:
    """Label no negativo del par: proyección fija del target más la media de su grupo"""
    context = target + np.mean(mates, axis=0) if len(mates) else target
    return np.maximum(projection @ context, 0.0) + 1e-3


def training_graphs(spec: ScenarioSpec, config: TrackerConfig, n_pairs: int = FIT_PAIRS,
                    seed: int = 0) -> Tuple[List[NeighborGraph], List[np.ndarray]]:
    """
    Pares de grafos estrella con el mismo label: el de la trayectoria (target
    limpio) y el de la detección (target corrompido con spec.corruption),
    ambos con los compañeros de grupo como vecinos. Cada par usa un grupo de
    identidades nuevo.

    Returns:
        (grafos, labels) con 2 * n_pairs elementos
    """
    if config.graph_dropped:
        raise ConfigError("con K=0 no hay grafos que ajustar", "K")
    if n_pairs < 1:
        raise ConfigError(f"debe ser >= 1: {n_pairs}", "n_pairs")
    dims = config.with_embedding_dim(spec.embedding_dim).layer_dims()
    rng = np.random.default_rng(seed)
    projection = rng.standard_normal((dims[-1], spec.embedding_dim))
    n_mates = min(config.K, spec.group_size - 1)

    graphs, labels = [], []
    for _ in range(n_pairs):
        bases = [_random_unit(rng, spec.embedding_dim) for _ in range(spec.group_size)]
        target = int(rng.integers(spec.group_size))
        mates = [bases[m] for m in range(spec.group_size) if m != target][:n_mates]
        label = _context_label(projection, bases[target], mates)

        track_target = _mixed(rng, bases[target], spec.embedding_jitter)
        det_target = _mixed(rng, bases[target], spec.corruption)
        track_mates = [_mixed(rng, b, spec.embedding_jitter) for b in mates]
        det_mates = [_mixed(rng, b, spec.embedding_jitter) for b in mates]
        graphs.append(build_graph(track_target, track_mates, config.K))
        graphs.append(build_graph(det_target, det_mates, config.K))
        labels.extend([label, label])
    return graphs, labels


def fit_graph_model(spec: ScenarioSpec, config: Optional[TrackerConfig] = None, seed: int = 0,
                    n_pairs: int = FIT_PAIRS, n_steps: int = FIT_STEPS,
                    step: float = FIT_STEP) -> Tuple[GcnModel, List[float]]:
    """
    Ajusta la GCN (capas de config.layer_dims()) sobre grafos de co-walkers
    sintéticos para que el grafo de la trayectoria y el de su detección
    corrompida converjan al mismo vector.

    Args:
        spec: escenario del que se toman dimensión, tamaño de grupo y corrupción
        config: K, readout y capas; por defecto TrackerConfig()
        seed: semilla de la inicialización y de los grafos

    Returns:
        (modelo ajustado, historia de la pérdida media)
    """
    config = (config or TrackerConfig()).with_embedding_dim(spec.embedding_dim)
    graphs, labels = training_graphs(spec, config, n_pairs, seed)
    model = init_model(config.layer_dims(), seed)
    fitted, history = train_graph_model(model, graphs, labels, step=step, n_steps=n_steps,
                                        readout=config.readout)
    logger.info(f"GCN {fitted.dims} ajustada en {n_steps} pasos: pérdida {history[0]:.4f} -> {history[-1]:.4f}")
    return fitted, history


def default_variants() -> Dict[str, TrackerConfig]:
    """
    Cascada completa con tau2 de escritorio (0.7), cascada con el tau2
    estricto por defecto (0.95) y línea base de una sola ronda
    """
    return {
        "full": TrackerConfig(tau2=0.7),
        "strict": TrackerConfig(),
        "baseline": TrackerConfig(second_round=False),
    }


def run_variant(scenario: Scenario, config: TrackerConfig, gcn_seed: int = 0,
                gcn: Optional[GcnModel] = None) -> EvalReport:
    """
    Tracker + evaluador sobre un escenario. Sin gcn se usa init_model con
    gcn_seed; con gcn la configuración adopta sus capas.
    """
    config = config.with_embedding_dim(scenario.detections.dim)
    if config.second_round and not config.graph_dropped:
        if gcn is None:
            gcn = init_model(config.layer_dims(), gcn_seed)
        else:
            config = config.with_layer_dims(gcn.dims)
    else:
        gcn = None
    tracker = CascadeTracker(config, gcn)
    outputs = tracker.run(scenario.detections.frames)
    return evaluate(scenario.ground_truth, outputs_to_frame(outputs))


def ablation_run(spec: ScenarioSpec, config_variants: Optional[Dict[str, TrackerConfig]] = None,
                 gcn_seed: int = 0, models: Optional[Dict[str, GcnModel]] = None) -> pd.DataFrame:
    """
    Ejecuta tracker + evaluador por variante sobre los mismos datos generados.

    Args:
        models: GCN ajustadas por nombre de variante; el resto usa init_model(gcn_seed)

    Returns:
        Tabla con una fila por variante (MOTA, IDF1, IDS, FP, FN, MT, ML, ...)
    """
    variants = config_variants if config_variants is not None else default_variants()
    if not variants:
        raise ConfigError("se necesita al menos una variante", "variants")
    models = models or {}
    unknown = set(models) - set(variants)
    if unknown:
        raise ConfigError(f"modelos para variantes inexistentes: {sorted(unknown)}", "models")
    scenario = generate_scenario(spec)
    reports = {name: run_variant(scenario, config, gcn_seed, models.get(name))
               for name, config in variants.items()}
    for name, report in reports.items():
        logger.info(f"seed {spec.seed} {name}: MOTA={report.mota:.3f} IDF1={report.idf1:.3f} IDS={report.ids}")
    return report_table(reports)


def ablation_sweep(spec: ScenarioSpec, config_variants: Optional[Dict[str, TrackerConfig]] = None,
                   seeds: Sequence[int] = range(20), gcn_seed: int = 0,
                   models: Optional[Dict[str, GcnModel]] = None) -> pd.DataFrame:
    """Repite ablation_run para cada semilla; una fila por (semilla, variante)"""
    tables = []
    for seed in seeds:
        table = ablation_run(spec.replace(seed=int(seed)), config_variants, gcn_seed, models)
        table.insert(0, "seed", int(seed))
        tables.append(table)
    sweep = pd.concat(tables)
    sweep.index.name = "variant"
    return sweep.reset_index()


def summarize_sweep(sweep: pd.DataFrame, columns: Sequence[str] = TABLE_COLUMNS) -> pd.DataFrame:
    """Medianas por variante sobre las semillas"""
    return sweep.groupby("variant", sort=False)[list(columns)].median()
