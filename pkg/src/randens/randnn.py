"""Randomized single-hidden-layer network with closed-form output weights.

Training has three steps:

1. hidden weights are drawn i.i.d. from ``U(-u, u)`` with ``u = 4 tan(alpha_max)``,
   and each node's bias is placed so that the sigmoid's inflection point sits
   on a randomly chosen training x-pattern (``b_j = -a_j . x*_j``);
2. the hidden-layer output matrix ``H`` is computed with logistic sigmoids;
3. output weights are the minimum-norm least-squares solution ``beta = pinv(H) Y``.

Random numbers come from ``numpy.random.default_rng(seed)`` (PCG64). Within one
call the weight matrix is drawn first (``rng.uniform(-u, u, (m, n))``), then the
anchor indices (``rng.integers(0, len(pool), m)``).
"""

from __future__ import annotations

import base64
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import (
    DimensionMismatch,
    EmptyGrid,
    EmptyPool,
    InsufficientData,
    InvalidAngle,
    InvalidParameter,
    NonFinite,
)
from .patterns import InputPattern, OutputPattern, TrainingSet

MODEL_FORMAT_VERSION = 1


def weight_bound(alpha_max: float) -> float:
    """Half-width ``u = 4 tan(alpha_max)`` of the weight interval, angle in degrees."""
    if not 0.0 < alpha_max < 90.0:
        raise InvalidAngle(f"alpha_max must lie in (0, 90) degrees, got {alpha_max}")
    return 4.0 * math.tan(math.radians(alpha_max))


@dataclass(frozen=True)
class RandNNConfig:
    m: int = 40
    alpha_max: float = 70.0
    seed: int = 0

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise InvalidParameter(f"m must be a positive integer, got {self.m}")
        weight_bound(self.alpha_max)
        if int(self.seed) != self.seed or self.seed < 0:
            raise InvalidParameter(f"seed must be a non-negative integer, got {self.seed}")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "alpha_max", float(self.alpha_max))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def u(self) -> float:
        return weight_bound(self.alpha_max)


def _as_matrix(patterns) -> np.ndarray:
    if isinstance(patterns, np.ndarray):
        return np.atleast_2d(patterns.astype(float, copy=False))
    rows = [p.x if isinstance(p, InputPattern) else p for p in patterns]
    return np.atleast_2d(np.asarray(rows, dtype=float))


def generate_hidden_params(n: int, config: RandNNConfig, x_pool, rng: np.random.Generator, *, return_anchors: bool = False):
    """Draw hidden weights (``m x n``) and data-placed biases (``m``).

    ``x_pool`` holds candidate anchor patterns (rows, or ``InputPattern``s).
    Anchors are drawn with replacement. With ``return_anchors`` the indices of
    the chosen anchors in ``x_pool`` are returned as a third element.
    """
    pool = _as_matrix(x_pool) if len(x_pool) else np.empty((0, n))
    if pool.shape[0] == 0:
        raise EmptyPool("anchor pool is empty")
    if pool.shape[1] != n:
        raise DimensionMismatch(f"anchor patterns have length {pool.shape[1]}, expected {n}")
    u = config.u
    weights = rng.uniform(-u, u, size=(config.m, n))
    anchors = rng.integers(0, pool.shape[0], size=config.m)
    biases = -np.einsum("jt,jt->j", weights, pool[anchors])
    if return_anchors:
        return weights, biases, anchors
    return weights, biases


def hidden_output(hidden_weights, hidden_biases, X) -> np.ndarray:
    """``H[i, j] = sigmoid(a_j . x_i + b_j)`` for the rows ``x_i`` of ``X``."""
    X = _as_matrix(X)
    W = np.asarray(hidden_weights, dtype=float)
    if X.shape[1] != W.shape[1]:
        raise DimensionMismatch(f"inputs have {X.shape[1]} features, weights expect {W.shape[1]}")
    return expit(X @ W.T + np.asarray(hidden_biases, dtype=float))


def pinv_rcond(shape) -> float:
    """Relative singular-value cutoff ``max(N, m) * eps`` used by the pseudoinverse."""
    return max(shape) * np.finfo(float).eps


def fit_output_weights(H, Y) -> np.ndarray:
    """Minimum-norm least-squares solution of ``H beta = Y`` via a thin SVD.

    Singular values below ``max(N, m) * eps * sigma_max`` are treated as zero.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if H.shape[0] != Y.shape[0]:
        raise DimensionMismatch(f"H has {H.shape[0]} rows but Y has {Y.shape[0]}")
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(Y))):
        raise NonFinite("H and Y must be finite")
    U, s, Vt = np.linalg.svd(H, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((H.shape[1], Y.shape[1]))
    keep = s > pinv_rcond(H.shape) * s[0]
    beta = Vt[keep].T @ ((U[:, keep].T @ Y) / s[keep, None])
    if not np.all(np.isfinite(beta)):
        raise NonFinite("output weights are not finite")
    return beta


@dataclass(frozen=True, eq=False)
class RandNNModel:
    hidden_weights: np.ndarray
    hidden_biases: np.ndarray
    output_weights: np.ndarray
    config: RandNNConfig = field(default_factory=RandNNConfig)
    feature_mask: np.ndarray | None = None

    def __post_init__(self):
        # One memory layout for trained and deserialized models keeps BLAS results bitwise equal.
        for name in ("hidden_weights", "hidden_biases", "output_weights"):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=float))
        if self.feature_mask is not None:
            object.__setattr__(self, "feature_mask", np.ascontiguousarray(self.feature_mask, dtype=bool))

    @property
    def m(self) -> int:
        return self.hidden_weights.shape[0]

    @property
    def n_inputs(self) -> int:
        """Number of active input features."""
        return self.hidden_weights.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.output_weights.shape[1]

    def restrict(self, X) -> np.ndarray:
        """Select the active features from full-length inputs (no-op otherwise)."""
        X = _as_matrix(X)
        if self.feature_mask is not None and X.shape[1] == self.feature_mask.size and X.shape[1] != self.n_inputs:
            X = X[:, self.feature_mask]
        if X.shape[1] != self.n_inputs:
            raise DimensionMismatch(f"model expects {self.n_inputs} input features, got {X.shape[1]}")
        return X

    def predict_matrix(self, X) -> np.ndarray:
        H = hidden_output(self.hidden_weights, self.hidden_biases, self.restrict(X))
        return H @ self.output_weights

    def equals(self, other: RandNNModel) -> bool:
        """Bitwise equality of all parameters."""
        def same(a, b):
            if a is None or b is None:
                return a is b
            return a.shape == b.shape and a.dtype == b.dtype and a.tobytes() == b.tobytes()

        return (
            self.config == other.config
            and same(self.hidden_weights, other.hidden_weights)
            and same(self.hidden_biases, other.hidden_biases)
            and same(self.output_weights, other.output_weights)
            and same(self.feature_mask, other.feature_mask)
        )

    def to_dict(self) -> dict:
        return {
            "format": "randnn",
            "version": MODEL_FORMAT_VERSION,
            "config": {"m": self.config.m, "alpha_max": self.config.alpha_max, "seed": self.config.seed},
            "hidden_weights": encode_array(self.hidden_weights),
            "hidden_biases": encode_array(self.hidden_biases),
            "output_weights": encode_array(self.output_weights),
            "feature_mask": None if self.feature_mask is None else encode_array(self.feature_mask),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> RandNNModel:
        if payload.get("format") != "randnn" or payload.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError("not a serialized RandNN model of a supported version")
        mask = payload.get("feature_mask")
        return cls(
            decode_array(payload["hidden_weights"]),
            decode_array(payload["hidden_biases"]),
            decode_array(payload["output_weights"]),
            RandNNConfig(**payload["config"]),
            None if mask is None else decode_array(mask),
        )


def encode_array(a: np.ndarray) -> dict:
    """JSON-safe, bit-exact array encoding (little-endian raw bytes in base64)."""
    a = np.ascontiguousarray(a)
    dtype = a.dtype.newbyteorder("<") if a.dtype.byteorder not in "|" else a.dtype
    return {
        "dtype": dtype.str,
        "shape": list(a.shape),
        "data": base64.b64encode(a.astype(dtype, copy=False).tobytes()).decode("ascii"),
    }


def decode_array(payload: dict) -> np.ndarray:
    raw = base64.b64decode(payload["data"])
    return np.frombuffer(raw, dtype=np.dtype(payload["dtype"])).reshape(payload["shape"]).copy()


def fit_with_hidden(weights, biases, phi: TrainingSet | tuple, config: RandNNConfig, feature_mask=None) -> RandNNModel:
    """Fit output weights for fixed hidden parameters on ``(X, Y)``."""
    X, Y = (phi.X, phi.Y) if isinstance(phi, TrainingSet) else phi
    if feature_mask is not None:
        X = X[:, feature_mask]
    beta = fit_output_weights(hidden_output(weights, biases, X), Y)
    return RandNNModel(weights, biases, beta, config, feature_mask)


def train(phi: TrainingSet, config: RandNNConfig, rng: np.random.Generator | None = None) -> RandNNModel:
    """Train one network; deterministic given ``(phi, config.seed)``."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    weights, biases = generate_hidden_params(phi.X.shape[1], config, phi.X, rng)
    return fit_with_hidden(weights, biases, phi, config)


def predict(model: RandNNModel, x) -> OutputPattern:
    """Forecast pattern for one input pattern (full-length or already restricted)."""
    source = x.source_index if isinstance(x, InputPattern) else 0
    vec = np.asarray(x.x if isinstance(x, InputPattern) else x, dtype=float)
    if vec.ndim != 1:
        raise DimensionMismatch("predict expects a single pattern; use predict_matrix for batches")
    return OutputPattern(model.predict_matrix(vec[None, :])[0], source)


def contiguous_folds(N: int, folds: int) -> list[np.ndarray]:
    """Split ``range(N)`` into ``folds`` contiguous blocks of near-equal size."""
    return [np.asarray(block) for block in np.array_split(np.arange(N), folds)]


def cv_scores(phi: TrainingSet, m_grid, alpha_grid, folds: int = 5, seed: int = 0) -> dict:
    """Mean validation MAE (pattern space) for every ``(m, alpha_max)`` cell."""
    m_grid, alpha_grid = list(m_grid), list(alpha_grid)
    if not m_grid or not alpha_grid:
        raise EmptyGrid("grid search needs at least one m and one alpha_max")
    if folds < 2:
        raise InvalidParameter("folds must be at least 2")
    if phi.N < folds:
        raise InsufficientData(f"{phi.N} training pairs cannot be split into {folds} folds")
    blocks = contiguous_folds(phi.N, folds)
    scores = {}
    for m, alpha in itertools.product(m_grid, alpha_grid):
        config = RandNNConfig(m, alpha, seed)
        maes = []
        for k, val in enumerate(blocks):
            fit_rows = np.concatenate([b for j, b in enumerate(blocks) if j != k])
            model = train(phi.subset(fit_rows), config)
            pred = model.predict_matrix(phi.X[val])
            maes.append(np.mean(np.abs(pred - phi.Y[val])))
        scores[(config.m, config.alpha_max)] = float(np.mean(maes))
    return scores


def grid_search_cv(phi: TrainingSet, m_grid, alpha_grid, folds: int = 5, seed: int = 0) -> tuple[int, float]:
    """Pick ``(m, alpha_max)`` minimising cross-validated MAE.

    Folds are contiguous blocks in temporal order. Ties go to the smaller ``m``,
    then the smaller ``alpha_max``.
    """
    scores = cv_scores(phi, m_grid, alpha_grid, folds, seed)
    return min(scores, key=lambda cell: (scores[cell], cell[0], cell[1]))
