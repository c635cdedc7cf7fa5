"""Feedforward trading networks with monthly parameter sharing.

Each sub-network maps the normalized features of one day to ``output_dim``
numbers in (0, 1): affine layers separated by sigmoids, with a final sigmoid so
the output can be stretched onto the day's admissible interval.

Features are ``(day, level, spot)`` for the spot-only model and
``(day, level, spot, front-month forward)`` for the spot-and-forward model.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from gas_storage import autodiff as ad

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "gas-storage-policy"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True, eq=False)
class NormStats:
    shift: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        shift = np.asarray(self.shift, dtype=float)
        scale = np.asarray(self.scale, dtype=float).copy()
        if shift.shape != scale.shape:
            raise ValueError("shift and scale differ in shape")
        zero = ~(scale > 0)
        if np.any(zero):
            logger.warning("constant feature(s) %s: scale replaced by 1", np.nonzero(zero)[0].tolist())
            scale[zero] = 1.0
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "scale", scale)


def fit_norm_stats(n_days: int, capacity: float, spot, forwards=None) -> NormStats:
    """Day -> k/(K-1), level -> H/c, prices standardized by their sample
    moments. Pass training rows only."""
    spot = np.asarray(spot, dtype=float)
    shift = [0.0, 0.0, float(np.mean(spot))]
    scale = [float(max(n_days - 1, 1)), float(capacity), float(np.std(spot))]
    if forwards is not None:
        f = np.asarray(forwards, dtype=float)
        f = f[np.isfinite(f)]
        shift.append(float(np.mean(f)))
        scale.append(float(np.std(f)))
    return NormStats(np.array(shift), np.array(scale))


def normalize_input(raw, stats: NormStats):
    """(x - shift) / scale per feature; ``raw`` is a list of feature columns."""
    if len(raw) != stats.shift.size:
        raise ValueError(f"expected {stats.shift.size} features, got {len(raw)}")
    return [ad.mul(ad.sub(x, s), 1.0 / d) for x, s, d in zip(raw, stats.shift, stats.scale)]


@dataclass(frozen=True, eq=False)
class PolicyParams:
    """``layers[n]`` is the list of (weight, bias) pairs of sub-network n."""

    layers: tuple
    day_to_subnet: np.ndarray
    norm_stats: NormStats
    output_dim: int

    def __post_init__(self):
        if len(self.layers) == 0:
            raise ValueError("need at least one sub-network")
        dims = _dims(self.layers[0])
        for n, sub in enumerate(self.layers):
            d = _dims(sub)
            if d != dims:
                raise ValueError(f"sub-network {n} has dims {d}, expected {dims}")
        if dims[-1] != self.output_dim:
            raise ValueError(f"output layer width {dims[-1]} != output_dim {self.output_dim}")
        if dims[0] != self.norm_stats.shift.size:
            raise ValueError(f"input width {dims[0]} != {self.norm_stats.shift.size} normalized features")
        d2s = np.asarray(self.day_to_subnet, dtype=int)
        if d2s.ndim != 1 or np.any(d2s < 0) or np.any(d2s >= len(self.layers)):
            raise ValueError("day_to_subnet must map every day to an existing sub-network")
        if len(self.layers) > d2s.size:
            raise ValueError(f"{len(self.layers)} sub-networks for only {d2s.size} days")
        object.__setattr__(self, "day_to_subnet", d2s)

    @property
    def dims(self) -> list[int]:
        return _dims(self.layers[0])

    @property
    def n_subnets(self) -> int:
        return len(self.layers)

    def flat(self) -> list:
        return [a for sub in self.layers for wb in sub for a in wb]

    def with_flat(self, flat) -> "PolicyParams":
        it = iter(flat)
        layers = tuple(tuple((next(it), next(it)) for _ in sub) for sub in self.layers)
        return PolicyParams(layers, self.day_to_subnet, self.norm_stats, self.output_dim)


def _dims(sub) -> list[int]:
    dims = [np.shape(sub[0][0])[0]]
    for w, b in sub:
        ws = np.shape(w)
        if len(ws) != 2 or ws[0] != dims[-1] or np.shape(b) != (ws[1],):
            raise ValueError(f"layer shapes {ws} / {np.shape(b)} do not chain from width {dims[-1]}")
        dims.append(ws[1])
    return dims


def monthly_subnets(month_starts, n_days: int) -> np.ndarray:
    return np.searchsorted(np.asarray(month_starts), np.arange(n_days), side="right") - 1


def init_params(
    dims,
    day_to_subnet,
    norm_stats: NormStats,
    seed: int,
    n_subnets: int | None = None,
) -> PolicyParams:
    """Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases."""
    day_to_subnet = np.asarray(day_to_subnet, dtype=int)
    n = int(day_to_subnet.max()) + 1 if n_subnets is None else n_subnets
    rng = np.random.default_rng(seed)
    layers = []
    for _ in range(n):
        sub = []
        for din, dout in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(din)
            sub.append((rng.uniform(-bound, bound, size=(din, dout)), np.zeros(dout)))
        layers.append(tuple(sub))
    return PolicyParams(tuple(layers), day_to_subnet, norm_stats, dims[-1])


def forward(params: PolicyParams, day: int, inputs, layers=None):
    """Network output in (0, 1)^output_dim for a (B, d_in) batch of normalized
    inputs. ``layers`` optionally overrides ``params.layers`` (taped weights)."""
    sub = (params.layers if layers is None else layers)[params.day_to_subnet[day]]
    x = inputs
    for w, b in sub:
        x = ad.sigmoid(ad.affine(x, w, b))
    return x


def squash_action(raw, lo, hi):
    """lo + raw * (hi - lo): maps (0, 1) onto [lo, hi]."""
    return ad.add(lo, ad.mul(raw, ad.sub(hi, lo)))


def embed_spot_policy(smod: PolicyParams, forward_stats: tuple[float, float]) -> PolicyParams:
    """Two-head policy whose spot head reproduces ``smod`` exactly.

    The forward-price input gets zero weights and the forward head copies the
    spot head's output layer. Used to compare the two models on equal terms.
    """
    layers = []
    for sub in smod.layers:
        (w0, b0), *rest = sub
        new = [(np.vstack([w0, np.zeros((1, w0.shape[1]))]), b0.copy())]
        for w, b in rest[:-1]:
            new.append((w.copy(), b.copy()))
        if rest:
            w, b = rest[-1]
            new.append((np.hstack([w, w]), np.concatenate([b, b])))
        else:
            w, b = new[0]
            new[0] = (np.hstack([w, w]), np.concatenate([b, b]))
        layers.append(tuple(new))
    ns = smod.norm_stats
    stats = NormStats(np.append(ns.shift, forward_stats[0]), np.append(ns.scale, forward_stats[1]))
    return PolicyParams(tuple(layers), smod.day_to_subnet, stats, 2)


def save_checkpoint(params: PolicyParams, path, meta: dict | None = None) -> None:
    """JSON checkpoint; floats are written with repr so reloading is exact."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "output_dim": params.output_dim,
        "day_to_subnet": params.day_to_subnet.tolist(),
        "norm_stats": {"shift": params.norm_stats.shift.tolist(), "scale": params.norm_stats.scale.tolist()},
        "subnets": [
            [{"weight": w.tolist(), "bias": b.tolist()} for w, b in sub] for sub in params.layers
        ],
        "meta": meta or {},
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_checkpoint(path) -> tuple[PolicyParams, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a policy checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    layers = tuple(
        tuple((np.array(l["weight"], dtype=float), np.array(l["bias"], dtype=float)) for l in sub)
        for sub in doc["subnets"]
    )
    stats = NormStats(np.array(doc["norm_stats"]["shift"]), np.array(doc["norm_stats"]["scale"]))
    params = PolicyParams(layers, np.array(doc["day_to_subnet"]), stats, doc["output_dim"])
    return params, doc.get("meta", {})
