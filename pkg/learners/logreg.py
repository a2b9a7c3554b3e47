"""
Regressão logística multiclasse (softmax) com penalidade L2, treinada por
gradiente descendente em lote completo com busca de passo por backtracking.

Parâmetros achatados em um único vetor: theta = [W.ravel() (D×C), b (C)].
"""
import logging
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import log_softmax, softmax

logger = logging.getLogger(__name__)

MIN_STEP = 1e-12


def unpack(theta: np.ndarray, n_features: int, n_classes: int) -> Tuple[np.ndarray, np.ndarray]:
    split = n_features * n_classes
    return theta[:split].reshape(n_features, n_classes), theta[split:]


def _infer_classes(theta: np.ndarray, n_features: int) -> int:
    if theta.size % (n_features + 1):
        raise ValueError(f"theta de tamanho {theta.size} incompatível com D={n_features}")
    return theta.size // (n_features + 1)


def logreg_loss(theta: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float,
                n_classes: Optional[int] = None) -> float:
    """Entropia cruzada média + l2·||theta||²."""
    n, d = X.shape
    c = n_classes or _infer_classes(theta, d)
    W, b = unpack(theta, d, c)
    data = 0.0
    if n:
        logp = log_softmax(X @ W + b, axis=1)
        data = -float(logp[np.arange(n), y].mean())
    return data + l2 * float(theta @ theta)


def logreg_gradient(params: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float,
                    n_classes: Optional[int] = None) -> np.ndarray:
    """Gradiente analítico de ``logreg_loss`` em relação a theta."""
    params = np.asarray(params, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    c = n_classes or _infer_classes(params, d)
    W, b = unpack(params, d, c)
    grad = 2.0 * l2 * params
    if n:
        residual = softmax(X @ W + b, axis=1)
        residual[np.arange(n), y] -= 1.0
        residual /= n
        grad[: d * c] += (X.T @ residual).ravel()
        grad[d * c:] += residual.sum(axis=0)
    return grad


def fit_logreg(X: np.ndarray, y: np.ndarray, n_classes: int, l2: float = 1e-4,
               learning_rate: float = 0.5, max_iter: int = 200, tol: float = 1e-9) -> Tuple[np.ndarray, List[float]]:
    """Devolve (theta, histórico de perda). A perda nunca aumenta entre épocas."""
    d = X.shape[1]
    theta = np.zeros(d * n_classes + n_classes)
    loss = logreg_loss(theta, X, y, l2, n_classes)
    history = [loss]

    for _ in range(max_iter):
        grad = logreg_gradient(theta, X, y, l2, n_classes)
        step = learning_rate
        while step >= MIN_STEP:
            candidate = theta - step * grad
            cand_loss = logreg_loss(candidate, X, y, l2, n_classes)
            if cand_loss <= loss:
                break
            step /= 2.0
        else:
            break
        improvement = loss - cand_loss
        theta, loss = candidate, cand_loss
        history.append(loss)
        if improvement < tol:
            break

    logger.debug(f"[LEARNER] logreg: {len(history) - 1} épocas, perda final {loss:.6f}")
    return theta, history


def predict_logreg(theta: np.ndarray, X: np.ndarray, n_classes: int) -> np.ndarray:
    W, b = unpack(np.asarray(theta), X.shape[1], n_classes)
    return softmax(X @ W + b, axis=1)
