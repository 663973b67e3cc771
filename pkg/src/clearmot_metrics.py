"""
CLEAR MOT Metrics
Evaluador CLEAR MOT (MOTA, FP, FN, IDS, MT/PT/ML) y de identidad (IDF1)
sobre tablas de cajas etiquetadas por frame
"""

from collections import OrderedDict
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.assignment import FORBIDDEN, solve_assignment
from src.core_model import BoundingBox, InvalidInputError

BOX_COLUMNS = ["frame", "id", "left", "top", "width", "height"]
EVENT_COLUMNS = ["Frame", "Type", "OId", "HId", "D"]


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersección sobre unión de dos cajas"""
    ix = max(0.0, min(a.left + a.width, b.left + b.width) - max(a.left, b.left))
    iy = max(0.0, min(a.top + a.height, b.top + b.height) - max(a.top, b.top))
    intersection = ix * iy
    union = a.width * a.height + b.width * b.height - intersection
    if union <= 0:
        return 0.0
    return float(min(1.0, max(0.0, intersection / union)))


def _iou_matrix(gt: np.ndarray, hyp: np.ndarray) -> np.ndarray:
    """IoU vectorizada entre filas (left, top, width, height)"""
    if len(gt) == 0 or len(hyp) == 0:
        return np.zeros((len(gt), len(hyp)))
    g = gt[:, None, :]
    h = hyp[None, :, :]
    ix = np.clip(np.minimum(g[..., 0] + g[..., 2], h[..., 0] + h[..., 2])
                 - np.maximum(g[..., 0], h[..., 0]), 0.0, None)
    iy = np.clip(np.minimum(g[..., 1] + g[..., 3], h[..., 1] + h[..., 3])
                 - np.maximum(g[..., 1], h[..., 1]), 0.0, None)
    intersection = ix * iy
    union = g[..., 2] * g[..., 3] + h[..., 2] * h[..., 3] - intersection
    return np.clip(intersection / union, 0.0, 1.0)


@dataclass
class EvalReport:
    """Resumen CLEAR MOT + identidad de una secuencia"""

    mota: float
    idf1: float
    idp: float
    idr: float
    fp: int
    fn: int
    ids: int
    mt: int
    pt: int
    ml: int
    num_gt_ids: int
    gt_total: int
    hyp_total: int
    matches: int
    frames: int
    recall: float
    precision: float

    @property
    def mt_pct(self) -> float:
        return 100.0 * self.mt / self.num_gt_ids if self.num_gt_ids else float("nan")

    @property
    def ml_pct(self) -> float:
        return 100.0 * self.ml / self.num_gt_ids if self.num_gt_ids else float("nan")

    def as_dict(self) -> Dict[str, float]:
        values = asdict(self)
        ordered = OrderedDict()
        ordered["MOTA"] = values["mota"]
        ordered["IDF1"] = values["idf1"]
        ordered["IDP"] = values["idp"]
        ordered["IDR"] = values["idr"]
        ordered["FP"] = values["fp"]
        ordered["FN"] = values["fn"]
        ordered["IDS"] = values["ids"]
        ordered["MT"] = values["mt"]
        ordered["PT"] = values["pt"]
        ordered["ML"] = values["ml"]
        ordered["MT%"] = self.mt_pct
        ordered["ML%"] = self.ml_pct
        ordered["GT_IDS"] = values["num_gt_ids"]
        ordered["GT"] = values["gt_total"]
        ordered["HYP"] = values["hyp_total"]
        ordered["MATCHES"] = values["matches"]
        ordered["FRAMES"] = values["frames"]
        ordered["RECALL"] = values["recall"]
        ordered["PRECISION"] = values["precision"]
        return ordered

    def to_frame(self, name: str = "seq") -> pd.DataFrame:
        return pd.DataFrame(self.as_dict(), index=[name])


def _safe_div(a: float, b: float) -> float:
    return a / b if b != 0 else float("nan")


def _check_boxes(df: pd.DataFrame, label: str) -> pd.DataFrame:
    missing = [c for c in BOX_COLUMNS if c not in df.columns]
    if missing:
        raise InvalidInputError(f"{label}: faltan columnas {missing}")
    df = df[BOX_COLUMNS].copy()
    if df.empty:
        return df
    if (df["frame"] < 1).any() or (df["id"] < 1).any():
        raise InvalidInputError(f"{label}: frames e ids deben ser positivos")
    if (df["width"] <= 0).any() or (df["height"] <= 0).any():
        raise InvalidInputError(f"{label}: cajas con ancho/alto no positivo")
    if df.duplicated(["frame", "id"]).any():
        dup = df[df.duplicated(["frame", "id"])].iloc[0]
        raise InvalidInputError(f"{label}: id {int(dup['id'])} repetido en el frame {int(dup['frame'])}")
    return df


class ClearMotEvaluator:
    """
    Acumula eventos MATCH / SWITCH / FP / MISS frame a frame con
    persistencia de asociaciones (protocolo CLEAR) y calcula el resumen.
    """

    def __init__(self, iou_threshold: float = 0.5):
        if not 0.0 < iou_threshold <= 1.0:
            raise InvalidInputError(f"umbral de IoU fuera de (0,1]: {iou_threshold}")
        self.iou_threshold = iou_threshold
        self.events = pd.DataFrame(columns=EVENT_COLUMNS)

    def _match_frame(self, frame: int, gt_ids: np.ndarray, gt_boxes: np.ndarray,
                     hyp_ids: np.ndarray, hyp_boxes: np.ndarray,
                     current: Dict[int, int], last_hyp: Dict[int, int],
                     events: List[Tuple]) -> List[Tuple[int, int]]:
        overlaps = _iou_matrix(gt_boxes, hyp_boxes)
        matched_gt, matched_hyp = set(), set()
        pairs = []

        # Persistencia: mantener la asociación previa si sigue por encima del umbral
        hyp_col = {int(h): j for j, h in enumerate(hyp_ids)}
        for i, g in enumerate(gt_ids):
            h = current.get(int(g))
            j = hyp_col.get(h) if h is not None else None
            if j is not None and j not in matched_hyp and overlaps[i, j] >= self.iou_threshold:
                matched_gt.add(i)
                matched_hyp.add(j)
                pairs.append((i, j))
                events.append((frame, "MATCH", int(g), h, 1.0 - overlaps[i, j]))

        rows = [i for i in range(len(gt_ids)) if i not in matched_gt]
        cols = [j for j in range(len(hyp_ids)) if j not in matched_hyp]
        if rows and cols:
            sub = overlaps[np.ix_(rows, cols)]
            affinity = np.where(sub >= self.iou_threshold, sub, FORBIDDEN)
            for r, c in solve_assignment(affinity):
                i, j = rows[r], cols[c]
                g, h = int(gt_ids[i]), int(hyp_ids[j])
                kind = "SWITCH" if g in last_hyp and last_hyp[g] != h else "MATCH"
                matched_gt.add(i)
                matched_hyp.add(j)
                pairs.append((i, j))
                events.append((frame, kind, g, h, 1.0 - overlaps[i, j]))

        for i, g in enumerate(gt_ids):
            if i not in matched_gt:
                events.append((frame, "MISS", int(g), np.nan, np.nan))
        for j, h in enumerate(hyp_ids):
            if j not in matched_hyp:
                events.append((frame, "FP", np.nan, int(h), np.nan))
        return [(int(gt_ids[i]), int(hyp_ids[j])) for i, j in pairs]

    def evaluate(self, gt: pd.DataFrame, hyp: pd.DataFrame) -> EvalReport:
        """
        Evalúa hipótesis contra ground truth.

        Args:
            gt: DataFrame con columnas frame, id, left, top, width, height
            hyp: DataFrame con las mismas columnas

        Returns:
            EvalReport; self.events guarda el log de eventos por frame
        """
        gt = _check_boxes(gt, "gt")
        hyp = _check_boxes(hyp, "hyp")

        frames = sorted(set(gt["frame"].astype(int)) | set(hyp["frame"].astype(int)))
        gt_groups = {int(f): g for f, g in gt.groupby("frame")}
        hyp_groups = {int(f): h for f, h in hyp.groupby("frame")}
        empty = pd.DataFrame(columns=BOX_COLUMNS)
        box_cols = ["left", "top", "width", "height"]

        current: Dict[int, int] = {}
        last_hyp: Dict[int, int] = {}
        events: List[Tuple] = []
        for frame in frames:
            g = gt_groups.get(frame, empty)
            h = hyp_groups.get(frame, empty)
            pairs = self._match_frame(
                frame,
                g["id"].to_numpy(dtype=int), g[box_cols].to_numpy(dtype=float),
                h["id"].to_numpy(dtype=int), h[box_cols].to_numpy(dtype=float),
                current, last_hyp, events,
            )
            current = dict(pairs)
            last_hyp.update(current)

        self.events = pd.DataFrame(events, columns=EVENT_COLUMNS)
        return self._summarize(gt, hyp, len(frames))

    def _identity_counts(self, gt: pd.DataFrame, hyp: pd.DataFrame) -> int:
        """IDTP: asignación global gt <-> hyp que maximiza los frames coincidentes"""
        gt_ids = sorted(gt["id"].astype(int).unique())
        hyp_ids = sorted(hyp["id"].astype(int).unique())
        if not gt_ids or not hyp_ids:
            return 0
        gi = {g: i for i, g in enumerate(gt_ids)}
        hi = {h: j for j, h in enumerate(hyp_ids)}
        counts = np.zeros((len(gt_ids), len(hyp_ids)))
        box_cols = ["left", "top", "width", "height"]
        hyp_groups = {int(f): h for f, h in hyp.groupby("frame")}
        for frame, g in gt.groupby("frame"):
            h = hyp_groups.get(int(frame))
            if h is None:
                continue
            overlaps = _iou_matrix(g[box_cols].to_numpy(dtype=float), h[box_cols].to_numpy(dtype=float))
            for i, j in zip(*np.nonzero(overlaps >= self.iou_threshold)):
                counts[gi[int(g["id"].iloc[i])], hi[int(h["id"].iloc[j])]] += 1
        if counts.max() == 0:
            return 0
        matches = solve_assignment(counts / counts.max())
        return int(sum(counts[r, c] for r, c in matches))

    def _summarize(self, gt: pd.DataFrame, hyp: pd.DataFrame, n_frames: int) -> EvalReport:
        ev = self.events
        n_match = int((ev["Type"] == "MATCH").sum())
        n_switch = int((ev["Type"] == "SWITCH").sum())
        n_fp = int((ev["Type"] == "FP").sum())
        n_miss = int((ev["Type"] == "MISS").sum())
        n_correct = n_match + n_switch
        gt_total = len(gt)
        hyp_total = len(hyp)

        # Ratio de frames recuperados por identidad de GT
        objs = ev.loc[ev["OId"].notna(), "OId"].value_counts()
        tracked = ev.loc[ev["Type"].isin(["MATCH", "SWITCH"]), "OId"].value_counts()
        ratio = tracked.reindex(objs.index, fill_value=0).div(objs) if len(objs) else objs
        mt = int((ratio >= 0.8).sum())
        ml = int((ratio < 0.2).sum())
        pt = int(len(ratio) - mt - ml)

        idtp = self._identity_counts(gt, hyp)
        return EvalReport(
            mota=1.0 - _safe_div(n_miss + n_switch + n_fp, gt_total),
            idf1=_safe_div(2.0 * idtp, gt_total + hyp_total),
            idp=_safe_div(idtp, hyp_total),
            idr=_safe_div(idtp, gt_total),
            fp=n_fp,
            fn=n_miss,
            ids=n_switch,
            mt=mt,
            pt=pt,
            ml=ml,
            num_gt_ids=int(len(objs)),
            gt_total=gt_total,
            hyp_total=hyp_total,
            matches=n_correct,
            frames=n_frames,
            recall=_safe_div(n_correct, gt_total),
            precision=_safe_div(n_correct, n_fp + n_correct),
        )


def evaluate(gt: pd.DataFrame, hyp: pd.DataFrame, iou_threshold: float = 0.5) -> EvalReport:
    return ClearMotEvaluator(iou_threshold).evaluate(gt, hyp)


def boxes_frame(records: List[Tuple[int, int, BoundingBox]]) -> pd.DataFrame:
    """DataFrame de columnas BOX_COLUMNS a partir de (frame, id, caja)"""
    rows = [(f, i, b.left, b.top, b.width, b.height) for f, i, b in records]
    return pd.DataFrame(rows, columns=BOX_COLUMNS)


def report_table(reports: Dict[str, EvalReport], columns: Optional[List[str]] = None) -> pd.DataFrame:
    """Tabla comparativa con una fila por variante"""
    table = pd.concat([r.to_frame(name) for name, r in reports.items()])
    return table[columns] if columns else table
