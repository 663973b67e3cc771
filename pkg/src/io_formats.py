"""
IO Formats
Lectura y escritura de detecciones con embeddings, resultados/ground truth
en formato MOT Challenge, pesos de la GCN (JSON) y configuración
"""

import json
import math
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.core_model import (
    BoundingBox,
    ConfigError,
    Detection,
    ParseError,
    SchemaError,
    TrackerConfig,
)
from src.neighbor_graph import GcnModel

PathLike = Union[str, Path]

DET_MAGIC = "# ngt-det v1"
_HEADER_RE = re.compile(r"^# ngt-det v1 d=(\d+)(?: name=(\S+))?$")
RESULT_COLUMNS = ["frame", "id", "left", "top", "width", "height"]


@dataclass
class DetFileHeader:
    dim: int
    name: Optional[str] = None

    def format(self) -> str:
        line = f"{DET_MAGIC} d={self.dim}"
        return f"{line} name={self.name}" if self.name else line


@dataclass
class DetectionSequence:
    """Detecciones agrupadas por frame: frames[i] son las del frame i + 1"""

    header: DetFileHeader
    frames: List[List[Detection]] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.header.dim

    @property
    def name(self) -> Optional[str]:
        return self.header.name

    @property
    def n_detections(self) -> int:
        return sum(len(f) for f in self.frames)


def _read_lines(path: PathLike) -> List[str]:
    with open(path, "r", encoding="utf-8") as f:
        return f.read().splitlines()


def _parse_float(token: str, line_no: int, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"{what} no numérico: {token!r}", line_no) from None
    if not math.isfinite(value):
        raise ParseError(f"{what} no finito: {token!r}", line_no)
    return value


def _parse_int(token: str, line_no: int, what: str) -> int:
    value = _parse_float(token, line_no, what)
    if value != int(value):
        raise ParseError(f"{what} debe ser entero: {token!r}", line_no)
    return int(value)


# ----------------------------------------------------------------------
# Detecciones
# ----------------------------------------------------------------------

def parse_detections(text: str) -> DetectionSequence:
    """
    Parsea el CSV de detecciones extendido:
    cabecera "# ngt-det v1 d=<int> [name=<token>]" y filas
    frame,bb_left,bb_top,bb_width,bb_height,conf,e0,...,e{d-1}
    """
    lines = text.splitlines()
    if not lines:
        raise ParseError("archivo vacío, falta la cabecera", 1)
    match = _HEADER_RE.match(lines[0].strip())
    if not match:
        raise ParseError(f"cabecera inválida: {lines[0]!r}", 1)
    header = DetFileHeader(int(match.group(1)), match.group(2))
    if header.dim < 1:
        raise ParseError("d debe ser >= 1", 1)

    n_cols = 6 + header.dim
    by_frame: Dict[int, List[Detection]] = {}
    last_frame = 0
    for line_no, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        tokens = line.split(",")
        if len(tokens) != n_cols:
            raise ParseError(f"se esperaban {n_cols} columnas, hay {len(tokens)}", line_no)
        frame = _parse_int(tokens[0], line_no, "frame")
        if frame < 1:
            raise ParseError(f"frame inválido: {frame}", line_no)
        if frame < last_frame:
            raise ParseError(f"frame {frame} después del frame {last_frame}", line_no)
        last_frame = frame
        left, top, width, height, conf = (
            _parse_float(t, line_no, name) for t, name in
            zip(tokens[1:6], ("bb_left", "bb_top", "bb_width", "bb_height", "conf")))
        embedding = np.array([_parse_float(t, line_no, "embedding") for t in tokens[6:]])
        try:
            det = Detection(frame, BoundingBox(left, top, width, height), conf, embedding)
        except ValueError as e:
            raise ParseError(str(e), line_no) from e
        by_frame.setdefault(frame, []).append(det)

    n_frames = max(by_frame) if by_frame else 0
    return DetectionSequence(header, [by_frame.get(f, []) for f in range(1, n_frames + 1)])


def read_detections(path: PathLike) -> DetectionSequence:
    with open(path, "r", encoding="utf-8") as f:
        return parse_detections(f.read())


def _fmt_real(value: float) -> str:
    return format(float(value), ".17g")


def format_detections(sequence: DetectionSequence) -> str:
    lines = [sequence.header.format()]
    for dets in sequence.frames:
        for det in dets:
            b = det.box
            values = [b.left, b.top, b.width, b.height, det.confidence, *det.embedding]
            lines.append(",".join([str(det.frame)] + [_fmt_real(v) for v in values]))
    return "\n".join(lines) + "\n"


def write_detections(path: PathLike, sequence: DetectionSequence):
    Path(path).write_text(format_detections(sequence), encoding="utf-8")


# ----------------------------------------------------------------------
# Resultados y ground truth (MOT Challenge)
# ----------------------------------------------------------------------

def format_results(outputs: Sequence[Sequence[Tuple[int, BoundingBox]]]) -> str:
    """
    Una línea por caja "frame,id,left,top,width,height,1,-1,-1,-1" con 2
    decimales, ordenadas por frame y luego por id. outputs[i] es el frame i + 1.
    """
    lines = []
    for frame, frame_outputs in enumerate(outputs, start=1):
        for track_id, box in sorted(frame_outputs, key=lambda o: o[0]):
            lines.append(f"{frame},{track_id},{box.left:.2f},{box.top:.2f},"
                         f"{box.width:.2f},{box.height:.2f},1,-1,-1,-1")
    return "\n".join(lines) + ("\n" if lines else "")


def write_results(path: PathLike, outputs: Sequence[Sequence[Tuple[int, BoundingBox]]]):
    Path(path).write_text(format_results(outputs), encoding="utf-8")


def format_result_frame(df: pd.DataFrame) -> str:
    """Forma canónica de una tabla de resultados ya leída"""
    df = df.sort_values(["frame", "id"], kind="mergesort")
    lines = [f"{int(r.frame)},{int(r.id)},{r.left:.2f},{r.top:.2f},{r.width:.2f},{r.height:.2f},1,-1,-1,-1"
             for r in df.itertuples(index=False)]
    return "\n".join(lines) + ("\n" if lines else "")


def _parse_mot_rows(lines: Sequence[str], min_cols: int, max_cols: int,
                    skip_ignored: bool) -> pd.DataFrame:
    rows = []
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        tokens = line.split(",")
        if not min_cols <= len(tokens) <= max_cols:
            expected = str(min_cols) if min_cols == max_cols else f"{min_cols}-{max_cols}"
            raise ParseError(f"se esperaban {expected} columnas, hay {len(tokens)}", line_no)
        frame = _parse_int(tokens[0], line_no, "frame")
        track_id = _parse_int(tokens[1], line_no, "id")
        if frame < 1 or track_id < 1:
            raise ParseError(f"frame e id deben ser positivos: {frame}, {track_id}", line_no)
        left, top, width, height = (_parse_float(t, line_no, "caja") for t in tokens[2:6])
        if width <= 0 or height <= 0:
            raise ParseError(f"caja con ancho/alto no positivo: {width}, {height}", line_no)
        if skip_ignored and len(tokens) > 6 and _parse_float(tokens[6], line_no, "conf") == 0:
            continue
        rows.append((frame, track_id, left, top, width, height))
    return pd.DataFrame(rows, columns=RESULT_COLUMNS).astype(
        {"frame": int, "id": int, "left": float, "top": float, "width": float, "height": float})


def read_results(path: PathLike) -> pd.DataFrame:
    """Archivo de resultados de 10 columnas -> DataFrame (frame, id, left, top, width, height)"""
    return _parse_mot_rows(_read_lines(path), 10, 10, skip_ignored=False)


def read_ground_truth(path: PathLike) -> pd.DataFrame:
    """
    Ground truth MOT tolerante: 6 a 10 columnas (p.ej. visibilidad al final).
    Las filas con la 7ª columna a 0 se ignoran (convención MOT).
    """
    return _parse_mot_rows(_read_lines(path), 6, 10, skip_ignored=True)


def parse_ground_truth(text: str) -> pd.DataFrame:
    return _parse_mot_rows(text.splitlines(), 6, 10, skip_ignored=True)


def outputs_to_frame(outputs: Sequence[Sequence[Tuple[int, BoundingBox]]]) -> pd.DataFrame:
    """Salidas del tracker -> DataFrame redondeado como en el archivo escrito"""
    rows = [(frame, tid, round(b.left, 2), round(b.top, 2), round(b.width, 2), round(b.height, 2))
            for frame, frame_outputs in enumerate(outputs, start=1)
            for tid, b in frame_outputs]
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


# ----------------------------------------------------------------------
# Pesos de la GCN
# ----------------------------------------------------------------------

def _require(doc: Dict[str, Any], key: str, locator: str):
    if key not in doc:
        raise SchemaError("campo obligatorio ausente", f"{locator}{key}")
    return doc[key]


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def model_from_dict(doc: Dict[str, Any]) -> GcnModel:
    if not isinstance(doc, dict):
        raise SchemaError("el documento de pesos debe ser un objeto JSON")
    dims = _require(doc, "dims", "")
    layers = _require(doc, "layers", "")
    if not isinstance(dims, list) or len(dims) < 2 or not all(_is_int(d) and d >= 1 for d in dims):
        raise SchemaError(f"lista de enteros positivos (>=2) esperada: {dims!r}", "dims")
    if not isinstance(layers, list) or len(layers) != len(dims) - 1:
        raise SchemaError(f"se esperaban {len(dims) - 1} capas", "layers")

    weights = []
    for i, layer in enumerate(layers):
        loc = f"layers[{i}]"
        if not isinstance(layer, dict):
            raise SchemaError("la capa debe ser un objeto", loc)
        rows = _require(layer, "rows", f"{loc}.")
        cols = _require(layer, "cols", f"{loc}.")
        data = _require(layer, "data", f"{loc}.")
        if not _is_int(rows) or not _is_int(cols):
            raise SchemaError("rows/cols deben ser enteros", loc)
        if (rows, cols) != (dims[i], dims[i + 1]):
            raise SchemaError(f"forma {rows}x{cols} no coincide con dims ({dims[i]}x{dims[i + 1]})", loc)
        if not isinstance(data, list) or len(data) != rows * cols:
            raise SchemaError(f"longitud {len(data) if isinstance(data, list) else '?'} != {rows * cols}",
                              f"{loc}.data")
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)
                   for v in data):
            raise SchemaError("valores no numéricos o no finitos", f"{loc}.data")
        weights.append(np.array(data, dtype=float).reshape(rows, cols))
    return GcnModel(weights)


def format_weights(model: GcnModel) -> str:
    """JSON canónico: reales con 17 cifras significativas"""
    layers = []
    for w in model.weights:
        data = ",".join(_fmt_real(v) for v in w.ravel())
        layers.append(f'{{"rows":{w.shape[0]},"cols":{w.shape[1]},"data":[{data}]}}')
    dims = ",".join(str(d) for d in model.dims)
    return f'{{"dims":[{dims}],"layers":[{",".join(layers)}]}}\n'


def read_weights(path: PathLike) -> GcnModel:
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(f"JSON inválido: {e.msg}", e.lineno) from e
    return model_from_dict(doc)


def write_weights(path: PathLike, model: GcnModel):
    Path(path).write_text(format_weights(model), encoding="utf-8")


# ----------------------------------------------------------------------
# Configuración
# ----------------------------------------------------------------------

def config_from_dict(doc: Dict[str, Any]) -> TrackerConfig:
    """Claves ausentes toman los valores por defecto; las desconocidas son error"""
    if not isinstance(doc, dict):
        raise ConfigError("la configuración debe ser un objeto JSON")
    known = {f.name for f in fields(TrackerConfig)}
    for key in doc:
        if key not in known:
            raise ConfigError("clave desconocida", key)
    return TrackerConfig(**doc)


def config_to_dict(config: TrackerConfig) -> Dict[str, Any]:
    return {f.name: getattr(config, f.name) for f in fields(TrackerConfig)}


def read_config(path: PathLike) -> TrackerConfig:
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(f"JSON inválido: {e.msg}", e.lineno) from e
    return config_from_dict(doc)


def write_config(path: PathLike, config: TrackerConfig):
    Path(path).write_text(json.dumps(config_to_dict(config), indent=2) + "\n", encoding="utf-8")
