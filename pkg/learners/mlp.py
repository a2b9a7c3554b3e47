"""
Perceptron multicamadas (camadas ocultas tanh ou relu, saída softmax),
treinado em lote completo com backtracking, como a regressão logística.
"""
import logging
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import log_softmax, softmax

logger = logging.getLogger(__name__)

Layers = List[Tuple[np.ndarray, np.ndarray]]

ACTIVATIONS = ("tanh", "relu")
MIN_STEP = 1e-12


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    return np.tanh(z) if activation == "tanh" else np.maximum(z, 0.0)


def _activation_grad(z: np.ndarray, h: np.ndarray, activation: str) -> np.ndarray:
    return 1.0 - h ** 2 if activation == "tanh" else (z > 0).astype(np.float64)


def init_layers(n_features: int, hidden: Sequence[int], n_classes: int, seed: int) -> Layers:
    """Inicialização Glorot uniforme, semeada."""
    rng = np.random.default_rng(seed)
    sizes = [n_features, *hidden, n_classes]
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append((rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return layers


def _forward(layers: Layers, X: np.ndarray, activation: str):
    zs, hs = [], [X]
    h = X
    for W, b in layers[:-1]:
        z = h @ W + b
        h = _activate(z, activation)
        zs.append(z)
        hs.append(h)
    W, b = layers[-1]
    return zs, hs, h @ W + b


def mlp_loss(layers: Layers, X: np.ndarray, y: np.ndarray, alpha: float, activation: str) -> float:
    """Entropia cruzada média + alpha·Σ||W||² (vieses sem penalidade)."""
    penalty = alpha * sum(float(np.sum(W * W)) for W, _ in layers)
    if not len(X):
        return penalty
    _, _, logits = _forward(layers, X, activation)
    logp = log_softmax(logits, axis=1)
    return -float(logp[np.arange(len(X)), y].mean()) + penalty


def mlp_gradient(layers: Layers, X: np.ndarray, y: np.ndarray, alpha: float, activation: str) -> Layers:
    """Retropropagação: gradiente (dW, db) de cada camada."""
    grads: Layers = [(2.0 * alpha * W, np.zeros_like(b)) for W, b in layers]
    n = len(X)
    if not n:
        return grads
    zs, hs, logits = _forward(layers, X, activation)
    delta = softmax(logits, axis=1)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    for i in range(len(layers) - 1, -1, -1):
        dW, db = grads[i]
        grads[i] = (dW + hs[i].T @ delta, db + delta.sum(axis=0))
        if i:
            delta = (delta @ layers[i][0].T) * _activation_grad(zs[i - 1], hs[i], activation)
    return grads


def _step(layers: Layers, grads: Layers, size: float) -> Layers:
    return [(W - size * dW, b - size * db) for (W, b), (dW, db) in zip(layers, grads)]


def fit_mlp(X: np.ndarray, y: np.ndarray, n_classes: int, hidden_layer_sizes: Sequence[int] = (50,),
            activation: str = "relu", alpha: float = 1e-4, learning_rate_init: float = 0.1,
            max_iter: int = 200, tol: float = 1e-9, seed: int = 0) -> Tuple[Layers, List[float]]:
    if activation not in ACTIVATIONS:
        raise ValueError(f"ativação desconhecida: '{activation}'")
    layers = init_layers(X.shape[1], hidden_layer_sizes, n_classes, seed)
    loss = mlp_loss(layers, X, y, alpha, activation)
    history = [loss]

    for _ in range(max_iter):
        grads = mlp_gradient(layers, X, y, alpha, activation)
        size = learning_rate_init
        while size >= MIN_STEP:
            candidate = _step(layers, grads, size)
            cand_loss = mlp_loss(candidate, X, y, alpha, activation)
            if cand_loss <= loss:
                break
            size /= 2.0
        else:
            break
        improvement = loss - cand_loss
        layers, loss = candidate, cand_loss
        history.append(loss)
        if improvement < tol:
            break

    logger.debug(f"[LEARNER] mlp {tuple(hidden_layer_sizes)}/{activation}: {len(history) - 1} épocas, perda {loss:.6f}")
    return layers, history


def predict_mlp(layers: Layers, X: np.ndarray, activation: str) -> np.ndarray:
    _, _, logits = _forward(layers, X, activation)
    return softmax(logits, axis=1)
