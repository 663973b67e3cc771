"""
Motion
Filtro de Kalman de velocidad constante sobre (cx, cy, aspect, height)
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from src.core_model import BoundingBox, InvalidInputError, NumericalError

# Cuantil 0.95 de chi-cuadrado con 4 grados de libertad
CHI2_GATE_4DOF = 9.4877


@dataclass(frozen=True, eq=False)
class KalmanState:
    """Media (8,) y covarianza (8, 8) del estado"""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        covariance = np.asarray(self.covariance, dtype=float)
        if mean.shape != (8,) or covariance.shape != (8, 8):
            raise InvalidInputError(
                f"estado de Kalman con formas inválidas: {mean.shape}, {covariance.shape}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", covariance)

    def to_box(self) -> BoundingBox:
        return BoundingBox.from_xyah(self.mean[:4])


class KalmanBoxFilter:
    """
    Filtro de velocidad constante con ruido proporcional a la altura
    (posición 1/20, velocidad 1/160 de la altura por paso).
    """

    def __init__(self, dt: float = 1.0):
        ndim = 4
        self._motion_mat = np.eye(2 * ndim)
        for i in range(ndim):
            self._motion_mat[i, ndim + i] = dt
        self._update_mat = np.eye(ndim, 2 * ndim)

        self._std_weight_position = 1.0 / 20
        self._std_weight_velocity = 1.0 / 160

    def initiate(self, box: BoundingBox) -> KalmanState:
        measurement = box.to_xyah()
        mean = np.r_[measurement, np.zeros(4)]
        height = measurement[3]
        std = [2 * self._std_weight_position * height,
               2 * self._std_weight_position * height,
               1e-2,
               2 * self._std_weight_position * height,
               10 * self._std_weight_velocity * height,
               10 * self._std_weight_velocity * height,
               1e-5,
               10 * self._std_weight_velocity * height]
        return KalmanState(mean, np.diag(np.square(std)))

    def predict(self, state: KalmanState) -> KalmanState:
        height = state.mean[3]
        std_pos = [self._std_weight_position * height,
                   self._std_weight_position * height,
                   1e-2,
                   self._std_weight_position * height]
        std_vel = [self._std_weight_velocity * height,
                   self._std_weight_velocity * height,
                   1e-5,
                   self._std_weight_velocity * height]
        motion_cov = np.diag(np.square(np.r_[std_pos, std_vel]))

        mean = self._motion_mat @ state.mean
        covariance = np.linalg.multi_dot(
            (self._motion_mat, state.covariance, self._motion_mat.T)) + motion_cov
        return KalmanState(mean, _symmetrize(covariance))

    def project(self, state: KalmanState):
        """Distribución predicha de la medida: (media (4,), covarianza (4, 4))"""
        height = state.mean[3]
        std = [self._std_weight_position * height,
               self._std_weight_position * height,
               1e-1,
               self._std_weight_position * height]
        innovation_cov = np.diag(np.square(std))

        mean = self._update_mat @ state.mean
        covariance = np.linalg.multi_dot(
            (self._update_mat, state.covariance, self._update_mat.T))
        return mean, covariance + innovation_cov

    def update(self, state: KalmanState, box: BoundingBox) -> KalmanState:
        projected_mean, projected_cov = self.project(state)
        try:
            chol_factor, lower = linalg.cho_factor(projected_cov, lower=True, check_finite=False)
        except linalg.LinAlgError as e:
            raise NumericalError(f"covarianza de innovación no invertible: {e}") from e
        kalman_gain = linalg.cho_solve(
            (chol_factor, lower), (state.covariance @ self._update_mat.T).T,
            check_finite=False).T
        innovation = box.to_xyah() - projected_mean

        new_mean = state.mean + innovation @ kalman_gain.T
        new_covariance = state.covariance - np.linalg.multi_dot(
            (kalman_gain, projected_cov, kalman_gain.T))
        return KalmanState(new_mean, _symmetrize(new_covariance))

    def gating_distance(self, state: KalmanState, box: BoundingBox) -> float:
        """Distancia de Mahalanobis al cuadrado de la caja a la medida predicha"""
        mean, covariance = self.project(state)
        return squared_mahalanobis(mean, covariance, box.to_xyah())


def _symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def squared_mahalanobis(mean: np.ndarray, covariance: np.ndarray,
                        measurement: np.ndarray) -> float:
    try:
        cholesky_factor = np.linalg.cholesky(covariance)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"covarianza no definida positiva: {e}") from e
    d = np.asarray(measurement, dtype=float) - np.asarray(mean, dtype=float)
    z = linalg.solve_triangular(cholesky_factor, d, lower=True, check_finite=False)
    return float(np.dot(z, z))


def squared_mahalanobis_batch(mean: np.ndarray, covariance: np.ndarray,
                              measurements: np.ndarray) -> np.ndarray:
    """Igual que squared_mahalanobis para cada fila (M, 4) de measurements"""
    measurements = np.asarray(measurements, dtype=float).reshape(-1, len(mean))
    if measurements.shape[0] == 0:
        return np.zeros(0)
    try:
        cholesky_factor = np.linalg.cholesky(covariance)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"covarianza no definida positiva: {e}") from e
    d = measurements - np.asarray(mean, dtype=float)
    z = linalg.solve_triangular(cholesky_factor, d.T, lower=True, check_finite=False)
    return np.sum(z * z, axis=0)


def affinity_from_mahalanobis(squared_distance: float) -> float:
    """exp(-1/2 * d^2) acotada a [0,1]"""
    return float(min(1.0, max(0.0, np.exp(-0.5 * squared_distance))))


_DEFAULT_FILTER = KalmanBoxFilter()


def kf_initiate(box: BoundingBox) -> KalmanState:
    return _DEFAULT_FILTER.initiate(box)


def kf_predict(state: KalmanState) -> KalmanState:
    return _DEFAULT_FILTER.predict(state)


def kf_update(state: KalmanState, box: BoundingBox) -> KalmanState:
    return _DEFAULT_FILTER.update(state, box)


def gating_distance(state: KalmanState, box: BoundingBox) -> float:
    return _DEFAULT_FILTER.gating_distance(state, box)


def motion_affinity(state: KalmanState, box: BoundingBox) -> float:
    """Afinidad de movimiento en [0,1] de la caja respecto a la predicción"""
    return affinity_from_mahalanobis(gating_distance(state, box))
