"""
Neighbor Graph
Grafo estrella de vecinos (target en el nodo 1), propagación GCN con ReLU,
pérdida coseno y sus gradientes analíticos
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from src.core_model import InvalidInputError

READOUTS = ("target", "mean")


@dataclass(eq=False)
class NeighborGraph:
    """X (N x d) con el target en la fila 0 y la adyacencia A (N x N)"""

    features: np.ndarray
    adjacency: np.ndarray
    n_real_neighbors: int = 0

    @property
    def n_nodes(self) -> int:
        return int(self.features.shape[0])

    @property
    def n_padded(self) -> int:
        return self.n_nodes - 1 - self.n_real_neighbors


@dataclass(eq=False)
class GcnModel:
    """Matrices W^(l) encadenadas: dims[i] x dims[i+1]"""

    weights: List[np.ndarray]

    def __post_init__(self):
        if not self.weights:
            raise InvalidInputError("la GCN necesita al menos una capa")
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        for i, w in enumerate(self.weights):
            if w.ndim != 2:
                raise InvalidInputError(f"capa {i}: matriz 2D esperada, forma {w.shape}")
            if i > 0 and self.weights[i - 1].shape[1] != w.shape[0]:
                raise InvalidInputError(
                    f"capa {i}: dimensiones encadenadas inconsistentes "
                    f"({self.weights[i - 1].shape[1]} != {w.shape[0]})"
                )

    @property
    def dims(self) -> List[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "GcnModel":
        return GcnModel([w.copy() for w in self.weights])


def star_adjacency(n_nodes: int) -> np.ndarray:
    """A[i][j] = 1 si i es el target, j es el target o i == j"""
    adjacency = np.eye(n_nodes)
    adjacency[0, :] = 1.0
    adjacency[:, 0] = 1.0
    return adjacency


def build_graph(target_feature: np.ndarray, neighbor_features: Sequence[np.ndarray],
                k: int) -> Optional[NeighborGraph]:
    """
    Construye el grafo de N = K + 1 nodos. Si hay menos de K vecinos reales
    se rellena con copias del target; con K = 0 el grafo se descarta (None).
    """
    if k < 0:
        raise InvalidInputError(f"K negativo: {k}")
    if len(neighbor_features) > k:
        raise InvalidInputError(f"{len(neighbor_features)} vecinos para K={k}")
    if k == 0:
        return None

    target = np.asarray(target_feature, dtype=float)
    if target.ndim != 1:
        raise InvalidInputError(f"feature del target debe ser un vector, forma {target.shape}")
    rows = [target]
    for i, feature in enumerate(neighbor_features):
        feature = np.asarray(feature, dtype=float)
        if feature.shape != target.shape:
            raise InvalidInputError(
                f"vecino {i}: dimensión {feature.shape} distinta del target {target.shape}"
            )
        rows.append(feature)
    n_real = len(rows) - 1
    rows.extend([target] * (k - n_real))

    features = np.vstack(rows)
    return NeighborGraph(features, star_adjacency(k + 1), n_real_neighbors=n_real)


def normalize_adjacency(adjacency: np.ndarray) -> np.ndarray:
    """Normalización simétrica D^-1/2 A D^-1/2 con D = suma por filas"""
    adjacency = np.asarray(adjacency, dtype=float)
    degree = adjacency.sum(axis=1)
    if np.any(degree <= 0):
        raise InvalidInputError("adyacencia con filas de suma nula")
    inv_sqrt = 1.0 / np.sqrt(degree)
    return adjacency * inv_sqrt[:, None] * inv_sqrt[None, :]


def _check_input(graph: NeighborGraph, model: GcnModel):
    if graph.features.shape[1] != model.dims[0]:
        raise InvalidInputError(
            f"dimensión de nodo {graph.features.shape[1]} != entrada de la GCN {model.dims[0]}"
        )


def forward_activations(graph: NeighborGraph, model: GcnModel):
    """Devuelve las activaciones H^(l) y las pre-activaciones P^(l) de cada capa"""
    _check_input(graph, model)
    a_hat = normalize_adjacency(graph.adjacency)
    activations = [graph.features]
    pre_activations = []
    for w in model.weights:
        pre = a_hat @ activations[-1] @ w
        pre_activations.append(pre)
        activations.append(np.maximum(pre, 0.0))
    return a_hat, activations, pre_activations


def _readout(output: np.ndarray, readout: str) -> np.ndarray:
    if readout == "target":
        return output[0].copy()
    if readout == "mean":
        return output.mean(axis=0)
    raise InvalidInputError(f"readout desconocido: {readout!r}")


def gcn_forward(graph: NeighborGraph, model: GcnModel, readout: str = "target") -> np.ndarray:
    """
    Aplica Z^(l+1) = ReLU(Â Z^(l) W^(l)) en todas las capas y devuelve la
    feature del grafo (fila del target, o media de nodos con readout='mean').
    """
    _, activations, _ = forward_activations(graph, model)
    return _readout(activations[-1], readout)


def cosine_loss(pred: np.ndarray, label: np.ndarray) -> float:
    """1 - coseno(pred, label); una predicción nula tiene pérdida 1"""
    pred = np.asarray(pred, dtype=float)
    label = np.asarray(label, dtype=float)
    if pred.shape != label.shape:
        raise InvalidInputError(f"dimensiones distintas: {pred.shape} vs {label.shape}")
    label_norm = np.linalg.norm(label)
    if label_norm == 0:
        raise InvalidInputError("label nulo en la pérdida coseno")
    pred_norm = np.linalg.norm(pred)
    if pred_norm == 0:
        return 1.0
    return float(1.0 - np.dot(pred, label) / (pred_norm * label_norm))


def _cosine_loss_output_grad(pred: np.ndarray, label: np.ndarray) -> np.ndarray:
    pred_norm = np.linalg.norm(pred)
    label_norm = np.linalg.norm(label)
    if pred_norm == 0:
        return np.zeros_like(pred)
    cos = np.dot(pred, label) / (pred_norm * label_norm)
    return -(label / (pred_norm * label_norm) - cos * pred / pred_norm ** 2)


def cosine_loss_grad(graph: NeighborGraph, model: GcnModel, label: np.ndarray,
                     readout: str = "target") -> List[np.ndarray]:
    """
    Gradientes analíticos de cosine_loss(gcn_forward(graph), label) respecto
    a cada W^(l). Subgradiente 0 en los codos de la ReLU.
    """
    a_hat, activations, pre_activations = forward_activations(graph, model)
    output = activations[-1]
    pred = _readout(output, readout)
    label = np.asarray(label, dtype=float)
    if label.shape != pred.shape:
        raise InvalidInputError(f"label de dimensión {label.shape}, salida {pred.shape}")
    if np.linalg.norm(label) == 0:
        raise InvalidInputError("label nulo en la pérdida coseno")

    grad_pred = _cosine_loss_output_grad(pred, label)
    grad_h = np.zeros_like(output)
    if readout == "target":
        grad_h[0] = grad_pred
    else:
        grad_h[:] = grad_pred / output.shape[0]

    grads: List[Optional[np.ndarray]] = [None] * model.n_layers
    for layer in reversed(range(model.n_layers)):
        grad_pre = grad_h * (pre_activations[layer] > 0)
        aggregated = a_hat @ activations[layer]
        grads[layer] = aggregated.T @ grad_pre
        if layer > 0:
            # Â es simétrica
            grad_h = a_hat.T @ grad_pre @ model.weights[layer].T
    return grads


def init_model(dims: Sequence[int], seed: int) -> GcnModel:
    """Pesos Glorot-uniform deterministas por semilla"""
    dims = [int(d) for d in dims]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise InvalidInputError(f"dimensiones de capas inválidas: {dims}")
    rng = np.random.default_rng(seed)
    weights = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
    return GcnModel(weights)


def mean_loss(model: GcnModel, graphs: Sequence[NeighborGraph], labels: Sequence[np.ndarray],
              readout: str = "target") -> float:
    return float(np.mean([cosine_loss(gcn_forward(g, model, readout), y)
                          for g, y in zip(graphs, labels)]))


def train_graph_model(model: GcnModel, graphs: Sequence[NeighborGraph],
                      labels: Sequence[np.ndarray], step: float = 0.1, n_steps: int = 500,
                      readout: str = "target") -> Tuple[GcnModel, List[float]]:
    """
    Ajuste de juguete: descenso por gradiente de paso fijo sobre la pérdida
    coseno media. No modifica el modelo de entrada.

    Returns:
        (modelo ajustado, historia de la pérdida media por paso; el último
        valor es la pérdida tras el último paso)
    """
    if len(graphs) != len(labels) or not graphs:
        raise InvalidInputError("se necesitan tantos labels como grafos (al menos uno)")
    fitted = model.copy()
    history = []
    for i in range(n_steps):
        history.append(mean_loss(fitted, graphs, labels, readout))
        total = [np.zeros_like(w) for w in fitted.weights]
        for graph, label in zip(graphs, labels):
            for acc, g in zip(total, cosine_loss_grad(graph, fitted, label, readout)):
                acc += g
        for w, g in zip(fitted.weights, total):
            w -= step * g / len(graphs)
        if i % 100 == 0:
            logger.debug(f"paso {i}: pérdida media {history[-1]:.4f}")
    history.append(mean_loss(fitted, graphs, labels, readout))
    return fitted, history
