"""Ensembles of randomized networks and the six diversity strategies.

E1  re-draw all hidden parameters per member; diversity set by ``alpha_max``.
E2  shared hidden parameters, each member refits on a subsample of ``eta * N`` pairs.
E3  shared weight matrix, each member uses ``kappa * n`` randomly chosen input features.
E4  template with ``base_m`` nodes, each member keeps ``rho * base_m`` of them.
E5  template, each member zeroes ``lambda * m * n`` randomly chosen hidden weights.
E6  shared hidden parameters, each member refits on multiplicatively noised patterns.

Member ``k`` (0-based) draws from ``default_rng(seed_base + k)``; the shared
template draws from ``default_rng([seed_base, TEMPLATE_STREAM])``, a stream
disjoint from every member stream.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySubsample, InvalidParameter
from .patterns import CodingVariables, SeasonalSequence, TrainingSet, decode, encode_input
from .randnn import (
    RandNNConfig,
    RandNNModel,
    fit_with_hidden,
    generate_hidden_params,
    hidden_output,
    fit_output_weights,
    train,
    weight_bound,
)

ENSEMBLE_FORMAT_VERSION = 1
TEMPLATE_STREAM = 0x7E3A
STRATEGIES = ("E1", "E2", "E3", "E4", "E5", "E6")
DEFAULT_M = 100


def _check_domain(kind: str, p: float) -> None:
    ok = {
        "E1": lambda: 0.0 < p < 90.0,
        "E2": lambda: 0.0 < p <= 1.0,
        "E3": lambda: 0.0 < p <= 1.0,
        "E4": lambda: 0.0 < p <= 1.0,
        "E5": lambda: 0.0 <= p < 1.0,
        "E6": lambda: p >= 0.0,
    }[kind]()
    if not (np.isfinite(p) and ok):
        names = {"E1": "alpha_max", "E2": "eta", "E3": "kappa", "E4": "rho", "E5": "lambda", "E6": "sigma"}
        raise InvalidParameter(f"parameter ({names[kind]}) = {p} is outside the domain of {kind}")


@dataclass(frozen=True)
class DiversityStrategy:
    """Strategy kind with its diversity parameter.

    ``parameter`` is alpha_max in degrees for E1, eta for E2, kappa for E3, rho
    for E4, lambda for E5 and sigma for E6. ``base_m`` overrides the template
    network size (defaults to the base config's ``m``). ``reuse_template_biases``
    only affects E3: members then keep the full-feature biases instead of
    re-placing them on the restricted anchors.
    """

    kind: str
    parameter: float
    base_m: int | None = None
    reuse_template_biases: bool = False

    def __post_init__(self):
        kind = str(self.kind).upper()
        if kind not in STRATEGIES:
            raise InvalidParameter(f"unknown strategy {self.kind!r}; expected one of {', '.join(STRATEGIES)}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "parameter", float(self.parameter))
        _check_domain(kind, self.parameter)
        if self.base_m is not None and (int(self.base_m) != self.base_m or self.base_m < 1):
            raise InvalidParameter(f"base_m must be a positive integer, got {self.base_m}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "parameter": self.parameter,
            "base_m": self.base_m,
            "reuse_template_biases": self.reuse_template_biases,
        }


def fraction_count(fraction: float, total: int, minimum: int = 1) -> int:
    """``fraction * total`` rounded half-up and clipped to ``[minimum, total]``."""
    return int(min(total, max(minimum, math.floor(fraction * total + 0.5))))


def member_rng(seed_base: int, k: int) -> np.random.Generator:
    return np.random.default_rng(seed_base + k)


def template_rng(seed_base: int) -> np.random.Generator:
    return np.random.default_rng([seed_base, TEMPLATE_STREAM])


@dataclass(frozen=True, eq=False)
class Template:
    """Hidden parameters shared by the members of E2-E6."""

    weights: np.ndarray
    biases: np.ndarray
    anchors: np.ndarray


@dataclass(frozen=True, eq=False)
class Ensemble:
    members: list
    strategy: DiversityStrategy
    base_config: RandNNConfig = field(default_factory=RandNNConfig)
    template: Template | None = None

    @property
    def M(self) -> int:
        return len(self.members)

    def to_dict(self) -> dict:
        from .randnn import encode_array

        tpl = None
        if self.template is not None:
            tpl = {
                "weights": encode_array(self.template.weights),
                "biases": encode_array(self.template.biases),
                "anchors": encode_array(self.template.anchors),
            }
        cfg = self.base_config
        return {
            "format": "randnn-ensemble",
            "version": ENSEMBLE_FORMAT_VERSION,
            "strategy": self.strategy.to_dict(),
            "base_config": {"m": cfg.m, "alpha_max": cfg.alpha_max, "seed": cfg.seed},
            "template": tpl,
            "members": [m.to_dict() for m in self.members],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> Ensemble:
        from .randnn import decode_array

        if payload.get("format") != "randnn-ensemble" or payload.get("version") != ENSEMBLE_FORMAT_VERSION:
            raise ValueError("not a serialized ensemble of a supported version")
        tpl = payload.get("template")
        template = None
        if tpl is not None:
            template = Template(decode_array(tpl["weights"]), decode_array(tpl["biases"]), decode_array(tpl["anchors"]))
        return cls(
            [RandNNModel.from_dict(m) for m in payload["members"]],
            DiversityStrategy(**payload["strategy"]),
            RandNNConfig(**payload["base_config"]),
            template,
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> Ensemble:
        return cls.from_dict(json.loads(text))


def _build_member(k: int, phi: TrainingSet, strategy: DiversityStrategy, base: RandNNConfig,
                  template: Template | None, H_template: np.ndarray | None) -> RandNNModel:
    kind, p = strategy.kind, strategy.parameter
    seed = base.seed + k
    rng = member_rng(base.seed, k)
    N, n = phi.X.shape

    if kind == "E1":
        return train(phi, RandNNConfig(base.m, p, seed), rng)

    config = RandNNConfig(template.weights.shape[0], base.alpha_max, seed)
    W, b = template.weights, template.biases

    if kind == "E2":
        size = fraction_count(p, N)
        rows = np.sort(rng.choice(N, size=size, replace=False))
        if rows.size == 0:
            raise EmptySubsample("E2 subsample is empty")
        return RandNNModel(W, b, fit_output_weights(H_template[rows], phi.Y[rows]), config)

    if kind == "E3":
        size = fraction_count(p, n)
        cols = np.sort(rng.choice(n, size=size, replace=False))
        mask = np.zeros(n, dtype=bool)
        mask[cols] = True
        W_k = W[:, mask]
        if strategy.reuse_template_biases:
            b_k = b
        else:
            b_k = -np.einsum("jt,jt->j", W_k, phi.X[template.anchors][:, mask])
        return fit_with_hidden(W_k, b_k, phi, config, feature_mask=mask)

    if kind == "E4":
        m = W.shape[0]
        keep = np.sort(rng.choice(m, size=fraction_count(p, m), replace=False))
        beta = fit_output_weights(H_template[:, keep], phi.Y)
        return RandNNModel(W[keep], b[keep], beta, RandNNConfig(keep.size, base.alpha_max, seed))

    if kind == "E5":
        m = W.shape[0]
        count = fraction_count(p, m * n, minimum=0)
        if count == 0:
            return RandNNModel(W, b, fit_output_weights(H_template, phi.Y), config)
        flat = rng.choice(m * n, size=count, replace=False)
        W_k = W.copy()
        W_k.flat[flat] = 0.0
        return fit_with_hidden(W_k, b, phi, config)

    # E6
    zeta = rng.normal(0.0, p, size=phi.X.shape)
    xi = rng.normal(0.0, p, size=phi.Y.shape)
    X_noisy, Y_noisy = phi.X * (1.0 + zeta), phi.Y * (1.0 + xi)
    return RandNNModel(W, b, fit_output_weights(hidden_output(W, b, X_noisy), Y_noisy), config)


def train_ensemble(phi: TrainingSet, strategy: DiversityStrategy, M: int = DEFAULT_M,
                   base_config: RandNNConfig | None = None, jobs: int = 1) -> Ensemble:
    """Train ``M`` members under ``strategy``.

    ``base_config.seed`` is the seed base. For E1 the strategy parameter
    replaces ``base_config.alpha_max``. Members are independent given the
    template, so ``jobs > 1`` trains them in a thread pool with results
    identical to the sequential order.
    """
    base_config = base_config or RandNNConfig()
    if int(M) != M or M < 1:
        raise InvalidParameter(f"M must be a positive integer, got {M}")
    template = H_template = None
    if strategy.kind != "E1":
        m = strategy.base_m or base_config.m
        tpl_cfg = RandNNConfig(m, base_config.alpha_max, base_config.seed)
        W, b, anchors = generate_hidden_params(phi.X.shape[1], tpl_cfg, phi.X, template_rng(base_config.seed), return_anchors=True)
        template = Template(W, b, anchors)
        if strategy.kind in ("E2", "E4", "E5"):
            H_template = hidden_output(W, b, phi.X)

    def build(k):
        return _build_member(k, phi, strategy, base_config, template, H_template)

    if jobs > 1 and M > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            members = list(pool.map(build, range(M)))
    else:
        members = [build(k) for k in range(M)]
    return Ensemble(members, strategy, base_config, template)


def _shifted_mean(stack: np.ndarray) -> np.ndarray:
    # Relative to the first member so that identical members average exactly.
    return stack[0] + (stack - stack[0]).mean(axis=0)


def member_forecasts(ens: Ensemble, query, coding: CodingVariables | None = None) -> np.ndarray:
    """Decoded forecast of every member for one query cycle, shape ``(M, n)``.

    All members are decoded with the query's coding variables.
    """
    if coding is None:
        x, coding = encode_input(query)
        x = x.x
    else:
        values = query.values if isinstance(query, SeasonalSequence) else np.asarray(query, dtype=float)
        x = (values - coding.mean) / coding.dispersion
    return np.stack([decode(member.predict_matrix(x[None, :])[0], coding) for member in ens.members])


def predict_ensemble(ens: Ensemble, query, coding: CodingVariables | None = None) -> np.ndarray:
    """Element-wise mean of the members' decoded forecasts."""
    return _shifted_mean(member_forecasts(ens, query, coding))


@dataclass(frozen=True)
class DiversityReport:
    value: float
    test_set_size: int


def diversity(member_forecasts) -> DiversityReport:
    """Population standard deviation across members, averaged over all positions.

    ``member_forecasts`` has shape ``(M, |test set|, n)``; a 2-d ``(M, n)``
    array is treated as a single test cycle.
    """
    F = np.asarray(member_forecasts, dtype=float)
    if F.ndim == 2:
        F = F[:, None, :]
    if F.ndim != 3 or F.shape[0] < 1 or F.shape[1] < 1:
        raise ValueError("expected an (M, |test set|, n) array with M >= 1 and a non-empty test set")
    dev = F - F[0]
    dev = dev - dev.mean(axis=0)
    std = np.sqrt(np.mean(dev * dev, axis=0))
    return DiversityReport(float(std.mean()), F.shape[1])


__all__ = [
    "DEFAULT_M",
    "DiversityReport",
    "DiversityStrategy",
    "Ensemble",
    "STRATEGIES",
    "Template",
    "diversity",
    "fraction_count",
    "member_forecasts",
    "predict_ensemble",
    "train_ensemble",
    "weight_bound",
]
