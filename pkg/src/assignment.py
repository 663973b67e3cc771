"""
Assignment
Solver húngaro rectangular exacto y filtrado de matches por umbral
"""

from typing import List, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from src.core_model import InvalidInputError

# Centinela de pares vetados por el gating en las matrices de afinidad
FORBIDDEN = -1.0

# Peso interno de un par vetado: equivale a dejar la fila sin asignar
_GATED_WEIGHT = 0.0

AffinityMatrix = np.ndarray


def validate_affinity(affinity: AffinityMatrix) -> np.ndarray:
    """Comprueba forma 2D y que las entradas no vetadas son finitas en [0,1]"""
    affinity = np.asarray(affinity, dtype=float)
    if affinity.ndim != 2:
        raise InvalidInputError(f"la matriz de afinidad debe ser 2D, forma {affinity.shape}")
    legal = affinity != FORBIDDEN
    values = affinity[legal]
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("matriz de afinidad con valores no finitos")
    if values.size and (values.min() < 0.0 or values.max() > 1.0):
        raise InvalidInputError(
            f"afinidades fuera de [0,1]: min={values.min():.6g}, max={values.max():.6g}"
        )
    return affinity


def solve_assignment(affinity: AffinityMatrix) -> List[Tuple[int, int]]:
    """
    Matching de similitud total máxima (coste = 1 - similitud) sobre las
    entradas no vetadas.

    Args:
        affinity: matriz tracks x detecciones con similitudes en [0,1] o FORBIDDEN

    Returns:
        Lista de pares (fila, columna); filas/columnas que solo tienen pares
        vetados quedan sin asignar
    """
    affinity = validate_affinity(affinity)
    if affinity.size == 0:
        return []

    forbidden = affinity == FORBIDDEN
    weights = np.where(forbidden, _GATED_WEIGHT, affinity)
    rows, cols = linear_sum_assignment(weights, maximize=True)

    matches = [(int(r), int(c)) for r, c in zip(rows, cols) if not forbidden[r, c]]
    return _fill_zero_pairs(matches, forbidden)


def _fill_zero_pairs(matches: List[Tuple[int, int]], forbidden: np.ndarray) -> List[Tuple[int, int]]:
    """
    Empareja filas y columnas libres a través de celdas legales. En el óptimo
    esas celdas valen 0 (si no, intercambiarlas mejoraría el total), así que
    el total no cambia y un par legal nunca queda detrás de uno vetado.
    """
    free_rows = sorted(set(range(forbidden.shape[0])) - {r for r, _ in matches})
    free_cols = set(range(forbidden.shape[1])) - {c for _, c in matches}
    for r in free_rows:
        for c in sorted(free_cols):
            if not forbidden[r, c]:
                matches.append((r, c))
                free_cols.discard(c)
                break
    return sorted(matches)


def filter_matches(matches: Sequence[Tuple[int, int]], affinity: AffinityMatrix,
                   threshold: float) -> Tuple[List[Tuple[int, int]], List[int], List[int]]:
    """
    Conserva un match (r, c) si affinity[r, c] >= threshold; los que quedan
    estrictamente por debajo se degradan al conjunto no asociado.

    Returns:
        (kept, demoted_rows, demoted_cols)
    """
    affinity = np.asarray(affinity, dtype=float)
    kept, demoted_rows, demoted_cols = [], [], []
    for r, c in matches:
        if affinity[r, c] >= threshold:
            kept.append((r, c))
        else:
            demoted_rows.append(r)
            demoted_cols.append(c)
    return kept, demoted_rows, demoted_cols


def total_affinity(matches: Sequence[Tuple[int, int]], affinity: AffinityMatrix) -> float:
    affinity = np.asarray(affinity, dtype=float)
    return float(sum(affinity[r, c] for r, c in matches))
