"""Classical building blocks written directly on numpy.

Preprocessing (standardisation, min-max scaling, PCA), a kernel SVM trained
with SMO, logistic regression, a ReLU multilayer perceptron and a small
convolutional network with hand-written backpropagation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autodiff import AdamState, LossWindow, TrainingError, adam_step, has_converged


class NotFittedError(RuntimeError):
    pass


class KernelError(ValueError):
    pass


def sign(values) -> np.ndarray:
    """Elementwise sign with ``sign(0) = +1``."""
    return np.where(np.asarray(values) >= 0, 1, -1)


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_sigmoid(z):
    z = np.asarray(z, dtype=float)
    return -np.logaddexp(0.0, -z)


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------


class StandardScaler:
    """Zero mean, unit variance per feature, with statistics from the fit data."""

    def __init__(self):
        self.mean_ = None
        self.scale_ = None

    def fit(self, X):
        X = np.asarray(X, dtype=float)
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.scale_ = np.where(std > 0, std, 1.0)
        return self

    def transform(self, X):
        if self.mean_ is None:
            raise NotFittedError("StandardScaler.transform called before fit")
        return (np.asarray(X, dtype=float) - self.mean_) / self.scale_

    def fit_transform(self, X):
        return self.fit(X).transform(X)


class MinMaxScaler:
    """Affine map of each training feature range onto ``[low, high]``."""

    def __init__(self, low: float = -np.pi / 2, high: float = np.pi / 2):
        self.low, self.high = low, high
        self.min_ = None
        self.span_ = None

    def fit(self, X):
        X = np.asarray(X, dtype=float)
        self.min_ = X.min(axis=0)
        span = X.max(axis=0) - self.min_
        self.span_ = np.where(span > 0, span, 1.0)
        return self

    def transform(self, X):
        if self.min_ is None:
            raise NotFittedError("MinMaxScaler.transform called before fit")
        unit = (np.asarray(X, dtype=float) - self.min_) / self.span_
        return self.low + unit * (self.high - self.low)

    def fit_transform(self, X):
        return self.fit(X).transform(X)


@dataclass
class PCAProjector:
    components: np.ndarray  # (d_out, d_in), rows orthonormal
    mean: np.ndarray
    explained_variance: np.ndarray

    def transform(self, X):
        return (np.atleast_2d(np.asarray(X, dtype=float)) - self.mean) @ self.components.T


def pca_fit(X, d_out: int) -> PCAProjector:
    """Top ``d_out`` principal directions of ``X`` (descending variance).

    Each component is flipped so that its largest-magnitude entry is positive.
    """
    X = np.asarray(X, dtype=float)
    N, d_in = X.shape
    if d_out > min(N, d_in) or d_out < 1:
        raise ValueError(f"cannot keep {d_out} components of a {N}x{d_in} matrix")
    mean = X.mean(axis=0)
    cov = np.cov(X - mean, rowvar=False, bias=True).reshape(d_in, d_in)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:d_out]
    comps = evecs[:, order].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    return PCAProjector(comps, mean, evals[order])


def pca_transform(projector: PCAProjector, X) -> np.ndarray:
    return projector.transform(X)


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    """``exp(-gamma ||a - b||^2)`` for every pair of rows."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    sq = (A**2).sum(1)[:, None] + (B**2).sum(1)[None, :] - 2 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


# ---------------------------------------------------------------------------
# Support vector machine
# ---------------------------------------------------------------------------


def check_kernel_matrix(K, tol: float = 1e-8):
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise KernelError(f"Gram matrix must be square, got {K.shape}")
    if not np.all(np.isfinite(K)):
        raise KernelError("Gram matrix has non-finite entries")
    if np.max(np.abs(K - K.T)) > tol:
        raise KernelError("Gram matrix is not symmetric")
    lam = np.linalg.eigvalsh((K + K.T) / 2).min()
    if lam < -tol:
        raise KernelError(f"Gram matrix is not PSD (min eigenvalue {lam:.3e})")
    return K


@dataclass
class SVMModel:
    dual_coef: np.ndarray  # alpha_i * y_i over support vectors
    support: np.ndarray  # indices into the training set
    bias: float
    C: float
    alpha: np.ndarray  # full alpha vector
    converged: bool
    n_iter: int
    kernel: str = "precomputed"
    gamma: float | None = None
    support_vectors: np.ndarray | None = None

    def decision_from_kernel(self, K_test_train) -> np.ndarray:
        """``K_test_train`` has shape ``(n_test, n_train)``."""
        K = np.atleast_2d(K_test_train)
        return K[:, self.support] @ self.dual_coef + self.bias


def smo_solve(K, y, C: float, tol: float = 1e-3, max_iter: int | None = None):
    """Dual soft-margin SVM by SMO with maximal-violating-pair selection.

    Minimises ``0.5 a^T Q a - sum(a)``, ``Q_ij = y_i y_j K_ij``, subject to
    ``0 <= a <= C`` and ``y^T a = 0``. Returns ``(alpha, bias, converged, n_iter)``.
    """
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    max_iter = max_iter or max(10_000, 100 * n)
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient Q a - e
    diag = np.diag(K)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        yG = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        if not up.any() or not low.any():
            converged = True
            break
        i = np.flatnonzero(up)[np.argmax(yG[up])]
        j = np.flatnonzero(low)[np.argmin(yG[low])]
        gap = yG[i] - yG[j]
        if gap < tol:
            converged = True
            break
        curv = diag[i] + diag[j] - 2 * K[i, j]
        delta = gap / max(curv, 1e-12)
        # keep both coordinates inside the box
        lim_i = C - alpha[i] if y[i] > 0 else alpha[i]
        lim_j = alpha[j] if y[j] > 0 else C - alpha[j]
        delta = min(delta, lim_i, lim_j)
        alpha[i] += y[i] * delta
        alpha[j] -= y[j] * delta
        alpha[i] = min(max(alpha[i], 0.0), C)
        alpha[j] = min(max(alpha[j], 0.0), C)
        G += delta * y * (K[:, i] - K[:, j])
    yG = -y * G
    free = (alpha > 1e-12) & (alpha < C - 1e-12)
    if free.any():
        bias = float(yG[free].mean())
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        hi = yG[up].max() if up.any() else 0.0
        lo = yG[low].min() if low.any() else 0.0
        bias = float((hi + lo) / 2)
    return alpha, bias, converged, it


def dual_objective(K, y, alpha) -> float:
    v = alpha * y
    return float(alpha.sum() - 0.5 * v @ K @ v)


def primal_objective(K, y, alpha, bias, C) -> float:
    v = alpha * y
    f = K @ v + bias
    return float(0.5 * v @ K @ v + C * np.maximum(0.0, 1 - y * f).sum())


def svm_fit(K_or_X, y, C: float = 1.0, kernel: str = "precomputed", gamma: float | None = None,
            tol: float = 1e-3) -> SVMModel:
    """Train a kernel SVM.

    With ``kernel="precomputed"`` the first argument is the training Gram
    matrix; with ``kernel="rbf"`` it is the training inputs and ``gamma`` the
    bandwidth of ``exp(-gamma ||x - x'||^2)``.
    """
    y = np.asarray(y).ravel()
    if set(np.unique(y)) - {-1, 1}:
        raise ValueError("labels must be -1 or +1")
    if np.unique(y).size < 2:
        raise ValueError("SVM training needs both classes")
    if kernel == "rbf":
        X = np.asarray(K_or_X, dtype=float)
        K = rbf_kernel(X, X, gamma)
    elif kernel == "precomputed":
        X = None
        K = check_kernel_matrix(K_or_X)
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    alpha, bias, converged, n_iter = smo_solve(K, y.astype(float), C, tol)
    support = np.flatnonzero(alpha > 1e-10)
    return SVMModel(alpha[support] * y[support], support, bias, C, alpha, converged, n_iter,
                    kernel, gamma, None if X is None else X[support])


def svm_decision(model: SVMModel, K_test_train_or_X) -> np.ndarray:
    if model.kernel == "rbf":
        K = rbf_kernel(K_test_train_or_X, model.support_vectors, model.gamma)
        return K @ model.dual_coef + model.bias
    return model.decision_from_kernel(K_test_train_or_X)


def svm_predict(model: SVMModel, K_test_train_or_X) -> np.ndarray:
    return sign(svm_decision(model, K_test_train_or_X))


# ---------------------------------------------------------------------------
# Logistic regression
# ---------------------------------------------------------------------------


@dataclass
class LogisticModel:
    weights: np.ndarray
    intercept: float
    loss_history: list[float] = field(default_factory=list)
    converged: bool = True

    def decision(self, Z):
        return np.atleast_2d(Z) @ self.weights + self.intercept


def _logistic_loss(Z, y, w, b, l2):
    m = y * (Z @ w + b)
    return float(-log_sigmoid(m).mean() + 0.5 * l2 * w @ w / len(y))


def logistic_fit(Z, y, l2: float = 1.0, max_iter: int = 5000, tol: float = 1e-4) -> LogisticModel:
    """Binary cross entropy with an L2 penalty ``l2/2 ||w||^2`` (summed-loss scale).

    Plain gradient descent with Armijo backtracking, so the objective never
    increases between iterations. Stops when the largest gradient entry
    falls below ``tol``.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    N, d = Z.shape
    w = np.zeros(d)
    b = 0.0
    loss = _logistic_loss(Z, y, w, b, l2)
    history = [loss]
    step = 1.0
    converged = False
    for _ in range(max_iter):
        m = y * (Z @ w + b)
        r = -y * sigmoid(-m) / N
        gw = Z.T @ r + l2 * w / N
        gb = r.sum()
        gnorm2 = gw @ gw + gb * gb
        if max(np.max(np.abs(gw), initial=0.0), abs(gb)) < tol:
            converged = True
            break
        step *= 2.0
        while True:
            w_new, b_new = w - step * gw, b - step * gb
            new_loss = _logistic_loss(Z, y, w_new, b_new, l2)
            if new_loss <= loss - 0.5 * step * gnorm2 or step < 1e-12:
                break
            step /= 2.0
        if new_loss > loss:
            converged = True
            break
        w, b, loss = w_new, b_new, new_loss
        history.append(loss)
    return LogisticModel(w, b, history, converged)


def logistic_predict(model: LogisticModel, Z) -> np.ndarray:
    return sign(model.decision(Z))


# ---------------------------------------------------------------------------
# Multilayer perceptron
# ---------------------------------------------------------------------------


@dataclass
class MLPModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_layer_sizes: tuple[int, ...]
    loss_history: list[float] = field(default_factory=list)
    converged: bool = False

    def logits(self, X):
        return mlp_forward(self.weights, self.biases, X)[0]


def mlp_init(d_in: int, hidden: tuple[int, ...], rng) -> tuple[list, list]:
    sizes = [d_in, *hidden, 1]
    Ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        # Glorot uniform; the sigmoid output layer uses the wider bound
        factor = 2.0 if fan_out == 1 else 6.0
        bound = np.sqrt(factor / (fan_in + fan_out))
        Ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        bs.append(rng.uniform(-bound, bound, size=fan_out))
    return Ws, bs


def mlp_forward(Ws, bs, X):
    acts = [np.atleast_2d(np.asarray(X, dtype=float))]
    for k, (W, b) in enumerate(zip(Ws, bs)):
        z = acts[-1] @ W + b
        acts.append(z if k == len(Ws) - 1 else np.maximum(z, 0.0))
    return acts[-1][:, 0], acts


def mlp_loss_and_grads(Ws, bs, X, y, alpha: float):
    """Mean binary cross entropy plus ``alpha / (2N) * sum ||W||^2``."""
    y = np.asarray(y, dtype=float)
    N = y.size
    logit, acts = mlp_forward(Ws, bs, X)
    loss = float(-log_sigmoid(y * logit).mean() + alpha / (2 * N) * sum((W**2).sum() for W in Ws))
    delta = (-y * sigmoid(-y * logit) / N)[:, None]
    gWs, gbs = [None] * len(Ws), [None] * len(Ws)
    for k in range(len(Ws) - 1, -1, -1):
        gWs[k] = acts[k].T @ delta + alpha / N * Ws[k]
        gbs[k] = delta.sum(axis=0)
        if k:
            delta = (delta @ Ws[k].T) * (acts[k] > 0)
    return loss, gWs, gbs


def _flatten(arrs):
    return np.concatenate([a.ravel() for a in arrs])


def _unflatten(vec, like):
    out, k = [], 0
    for a in like:
        out.append(vec[k:k + a.size].reshape(a.shape))
        k += a.size
    return out


def mlp_fit(X, y, hidden_layer_sizes=(100,), learning_rate: float = 1e-3, alpha: float = 1e-4,
            max_epochs: int = 3000, batch_size: int = 200, tol: float = 1e-4,
            n_iter_no_change: int = 10, rng=None) -> MLPModel:
    """Adam on minibatches; stops when the epoch loss fails to improve by ``tol``
    for ``n_iter_no_change`` consecutive epochs, or after ``max_epochs``."""
    rng = np.random.default_rng(rng)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    N = y.size
    Ws, bs = mlp_init(X.shape[1], tuple(hidden_layer_sizes), rng)
    like = Ws + bs
    params = _flatten(like)
    state = AdamState.init(params.size, learning_rate)
    bsz = min(batch_size, N)
    best, stall = np.inf, 0
    history = []
    converged = False
    for _ in range(max_epochs):
        order = rng.permutation(N)
        epoch_loss = 0.0
        for start in range(0, N, bsz):
            idx = order[start:start + bsz]
            parts = _unflatten(params, like)
            loss, gWs, gbs = mlp_loss_and_grads(parts[:len(Ws)], parts[len(Ws):], X[idx], y[idx], alpha)
            if not np.isfinite(loss):
                raise TrainingError("MLP loss became non-finite")
            params, state = adam_step(state, params, _flatten(gWs + gbs))
            epoch_loss += loss * idx.size
        epoch_loss /= N
        history.append(epoch_loss)
        if epoch_loss > best - tol:
            stall += 1
        else:
            stall = 0
        best = min(best, epoch_loss)
        if stall >= n_iter_no_change:
            converged = True
            break
    parts = _unflatten(params, like)
    return MLPModel(parts[:len(Ws)], parts[len(Ws):], tuple(hidden_layer_sizes), history, converged)


def mlp_predict(model: MLPModel, X) -> np.ndarray:
    return sign(model.logits(X))


# ---------------------------------------------------------------------------
# Convolutional network
# ---------------------------------------------------------------------------


def _same_pad(k):
    lo = (k - 1) // 2
    return lo, k - 1 - lo


def conv2d_forward(x, W, b):
    """SAME-padded stride-1 convolution. ``x``: (B, C, H, W), ``W``: (O, C, k, k)."""
    k = W.shape[-1]
    lo, hi = _same_pad(k)
    xp = np.pad(x, ((0, 0), (0, 0), (lo, hi), (lo, hi)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # (B, C, H, W, k, k)
    out = np.einsum("bchwij,ocij->bohw", win, W, optimize=True) + b[None, :, None, None]
    return out, xp


def conv2d_backward(dout, xp, W, x_shape):
    k = W.shape[-1]
    lo, _ = _same_pad(k)
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    dW = np.einsum("bchwij,bohw->ocij", win, dout, optimize=True)
    db = dout.sum(axis=(0, 2, 3))
    H, Wd = x_shape[2], x_shape[3]
    dxp = np.zeros_like(xp)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + H, j:j + Wd] += np.einsum("bohw,oc->bchw", dout, W[:, :, i, j], optimize=True)
    return dxp[:, :, lo:lo + H, lo:lo + Wd], dW, db


def maxpool_forward(x):
    """2x2 max pooling, stride 2; odd edges keep their partial window."""
    B, C, H, W = x.shape
    Hp, Wp = -(-H // 2) * 2, -(-W // 2) * 2
    xp = np.full((B, C, Hp, Wp), -np.inf)
    xp[:, :, :H, :W] = x
    blocks = xp.reshape(B, C, Hp // 2, 2, Wp // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, Hp // 2, Wp // 2, 4)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, (arg, x.shape)


def maxpool_backward(dout, cache):
    arg, shape = cache
    B, C, H, W = shape
    Hp, Wp = -(-H // 2) * 2, -(-W // 2) * 2
    blocks = np.zeros(dout.shape + (4,))
    np.put_along_axis(blocks, arg[..., None], dout[..., None], axis=-1)
    dx = blocks.reshape(B, C, Hp // 2, Wp // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, Hp, Wp)
    return dx[:, :, :H, :W]


CNN_CHANNELS = (32, 64)
CNN_HIDDEN = 128


@dataclass
class CNNModel:
    params: dict
    kernel_shape: int
    image_shape: tuple[int, int, int]  # (channels, height, width)
    loss_history: list[float] = field(default_factory=list)
    converged: bool = False

    def logits(self, images):
        return cnn_forward(self.params, as_images(images, self.image_shape))[0]


def as_images(X, image_shape):
    X = np.asarray(X, dtype=float)
    C, H, W = image_shape
    return X.reshape(X.shape[0], C, H, W)


def cnn_init(in_channels: int, height: int, width: int, kernel_shape: int, rng) -> dict:
    def lecun(shape, fan_in):
        return rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape)

    c1, c2 = CNN_CHANNELS
    k = kernel_shape
    h = -(-(-(-height // 2)) // 2)
    w = -(-(-(-width // 2)) // 2)
    flat = c2 * h * w
    return {
        "conv1_w": lecun((c1, in_channels, k, k), in_channels * k * k), "conv1_b": np.zeros(c1),
        "conv2_w": lecun((c2, c1, k, k), c1 * k * k), "conv2_b": np.zeros(c2),
        "dense1_w": lecun((flat, CNN_HIDDEN), flat), "dense1_b": np.zeros(CNN_HIDDEN),
        "dense2_w": lecun((CNN_HIDDEN, 1), CNN_HIDDEN), "dense2_b": np.zeros(1),
    }


def cnn_forward(p, x):
    z1, xp1 = conv2d_forward(x, p["conv1_w"], p["conv1_b"])
    a1 = np.maximum(z1, 0.0)
    m1, pc1 = maxpool_forward(a1)
    z2, xp2 = conv2d_forward(m1, p["conv2_w"], p["conv2_b"])
    a2 = np.maximum(z2, 0.0)
    m2, pc2 = maxpool_forward(a2)
    flat = m2.reshape(m2.shape[0], -1)
    h = flat @ p["dense1_w"] + p["dense1_b"]
    ha = np.maximum(h, 0.0)
    logit = (ha @ p["dense2_w"] + p["dense2_b"])[:, 0]
    cache = (x, z1, xp1, m1, pc1, z2, xp2, m2, pc2, flat, h, ha)
    return logit, cache


def cnn_backward(p, dlogit, cache):
    x, z1, xp1, m1, pc1, z2, xp2, m2, pc2, flat, h, ha = cache
    g = {}
    d = dlogit[:, None]
    g["dense2_w"] = ha.T @ d
    g["dense2_b"] = d.sum(axis=0)
    dh = (d @ p["dense2_w"].T) * (h > 0)
    g["dense1_w"] = flat.T @ dh
    g["dense1_b"] = dh.sum(axis=0)
    dm2 = (dh @ p["dense1_w"].T).reshape(m2.shape)
    da2 = maxpool_backward(dm2, pc2)
    dz2 = da2 * (z2 > 0)
    dm1, g["conv2_w"], g["conv2_b"] = conv2d_backward(dz2, xp2, p["conv2_w"], m1.shape)
    da1 = maxpool_backward(dm1, pc1)
    dz1 = da1 * (z1 > 0)
    _, g["conv1_w"], g["conv1_b"] = conv2d_backward(dz1, xp1, p["conv1_w"], x.shape)
    return g


def cnn_loss_and_grads(p, x, y):
    y = np.asarray(y, dtype=float)
    logit, cache = cnn_forward(p, x)
    loss = float(-log_sigmoid(y * logit).mean())
    dlogit = -y * sigmoid(-y * logit) / y.size
    return loss, cnn_backward(p, dlogit, cache)


def cnn_fit(images, y, kernel_shape: int = 3, learning_rate: float = 1e-3, batch_size: int = 32,
            max_steps: int = 10_000, rng=None, image_shape=None) -> CNNModel:
    """Train the two-conv network with Adam until the loss window converges."""
    rng = np.random.default_rng(rng)
    y = np.asarray(y, dtype=float).ravel()
    if image_shape is None:
        side = int(round(np.sqrt(np.asarray(images).shape[1])))
        image_shape = (1, side, side)
    x = as_images(images, image_shape)
    C, H, W = image_shape
    if H < kernel_shape or W < kernel_shape:
        raise ValueError(f"{H}x{W} image is smaller than the {kernel_shape}x{kernel_shape} kernel")
    p = cnn_init(C, H, W, kernel_shape, rng)
    keys = list(p)
    vec = np.concatenate([p[k].ravel() for k in keys])
    state = AdamState.init(vec.size, learning_rate)
    window = LossWindow()
    history = []
    converged = False
    N = y.size
    for _ in range(max_steps):
        idx = rng.choice(N, size=batch_size, replace=N < batch_size)
        loss, g = cnn_loss_and_grads(p, x[idx], y[idx])
        if not np.isfinite(loss):
            raise TrainingError("CNN loss became non-finite")
        vec, state = adam_step(state, vec, np.concatenate([g[k].ravel() for k in keys]))
        k0 = 0
        for k in keys:
            p[k] = vec[k0:k0 + p[k].size].reshape(p[k].shape)
            k0 += p[k].size
        history.append(loss)
        window.push(loss)
        if has_converged(window):
            converged = True
            break
    return CNNModel(p, kernel_shape, tuple(image_shape), history, converged)


def cnn_predict(model: CNNModel, images) -> np.ndarray:
    return sign(model.logits(images))
