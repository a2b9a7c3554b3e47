"""k vizinhos mais próximos: probabilidade = voto (ponderado) dos k vizinhos."""
import numpy as np
from scipy.spatial.distance import cdist

WEIGHTS = ("uniform", "distance")


def predict_knn(X_train: np.ndarray, y_train: np.ndarray, X: np.ndarray, n_classes: int,
                n_neighbors: int = 5, weights: str = "uniform", metric: str = "euclidean") -> np.ndarray:
    k = min(n_neighbors, len(X_train))
    distances = cdist(X, X_train, metric=metric)
    # ordenação estável: em empate de distância vence o menor índice de treino
    neighbors = np.argsort(distances, axis=1, kind="stable")[:, :k]
    near = np.take_along_axis(distances, neighbors, axis=1)

    if weights == "distance":
        exact = near <= 0.0
        w = np.where(exact.any(axis=1, keepdims=True), exact.astype(np.float64),
                     1.0 / np.where(exact, 1.0, near))
    else:
        w = np.ones_like(near)

    probs = np.zeros((len(X), n_classes))
    rows = np.repeat(np.arange(len(X)), k)
    np.add.at(probs, (rows, y_train[neighbors].ravel()), w.ravel())
    return probs / probs.sum(axis=1, keepdims=True)
