"""Least-squares Monte-Carlo benchmark for the spot-only storage problem.

Backward induction over a storage grid. At day k the grid spans
``[0, min(c, drain_k)]``, i.e. exactly the levels that can still be emptied by
maturity, so the terminal condition "empty at K" is a grid of zeros rather
than a -inf penalty. Continuation values at each grid level are regressed on a
polynomial in the standardized spot price of day k (ridge on the non-constant
terms) across scenarios. Decisions maximize cash plus the fitted continuation,
linearly interpolated in the level; the value carried backwards is the
realized one (Longstaff-Schwartz style). Candidate actions are an even grid
over the day's admissible interval plus "do nothing".
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from gas_storage.report import PnLReport
from gas_storage.storage import EpisodeLedger, StorageSpec, effective_bounds, step_cash

logger = logging.getLogger(__name__)

TABLE_FORMAT = "gas-storage-lsmc"
TABLE_VERSION = 1


@dataclass(frozen=True)
class LsmcConfig:
    storage_grid_size: int = 51
    action_grid_size: int = 11
    basis_degree: int = 2
    regularization: float = 1e-8

    def validate(self) -> None:
        problems = []
        if self.storage_grid_size < 2:
            problems.append("storage_grid_size must be >= 2")
        if self.action_grid_size < 2:
            problems.append("action_grid_size must be >= 2")
        if self.basis_degree < 1:
            problems.append("basis_degree must be >= 1")
        if self.regularization < 0:
            problems.append("regularization must be >= 0")
        if problems:
            raise ValueError("invalid LSMC config: " + "; ".join(problems))


@dataclass
class LsmcPolicy:
    """Regression table: ``coefficients[k]`` (p, G) maps the basis of day-k
    prices to continuation values at the day-(k+1) grid levels."""

    config: LsmcConfig
    grid_tops: np.ndarray
    coefficients: np.ndarray
    price_shift: np.ndarray
    price_scale: np.ndarray
    incidents: list[str] = field(default_factory=list)

    def grid(self, day: int) -> np.ndarray:
        return np.linspace(0.0, self.grid_tops[day], self.config.storage_grid_size)

    def basis(self, day: int, prices) -> np.ndarray:
        z = (np.asarray(prices, dtype=float) - self.price_shift[day]) / self.price_scale[day]
        return _poly(z, self.config.basis_degree)

    def save(self, path) -> None:
        doc = {
            "format": TABLE_FORMAT,
            "version": TABLE_VERSION,
            "config": asdict(self.config),
            "grid_tops": self.grid_tops.tolist(),
            "coefficients": self.coefficients.tolist(),
            "price_shift": self.price_shift.tolist(),
            "price_scale": self.price_scale.tolist(),
        }
        Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "LsmcPolicy":
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != TABLE_FORMAT or doc.get("version") != TABLE_VERSION:
            raise ValueError(f"{path}: not a version-{TABLE_VERSION} LSMC table")
        return cls(
            LsmcConfig(**doc["config"]),
            np.array(doc["grid_tops"]),
            np.array(doc["coefficients"]),
            np.array(doc["price_shift"]),
            np.array(doc["price_scale"]),
        )


def _poly(z, degree):
    return np.stack([z**d for d in range(degree + 1)], axis=-1)


def _ridge(X, Y, lam, incidents, day):
    p = X.shape[1]
    penalty = np.eye(p) * lam * X.shape[0]
    penalty[0, 0] = 0.0
    A = X.T @ X
    b = X.T @ Y
    while True:
        M = A + penalty
        if np.linalg.cond(M) < 1e12:
            return np.linalg.solve(M, b)
        bump = max(lam, 1e-10) * 10.0
        incidents.append(f"day {day}: ill-conditioned regression, regularization {lam:g} -> {bump:g}")
        logger.warning(incidents[-1])
        lam = bump
        penalty = np.eye(p) * lam * X.shape[0]
        penalty[0, 0] = 0.0


def _candidates(lo, hi, n):
    """Even grid over [lo, hi] plus the action closest to zero, last axis."""
    t = np.linspace(0.0, 1.0, n)
    lo = np.asarray(lo)[..., None]
    hi = np.asarray(hi)[..., None]
    grid = lo + t * (hi - lo)
    idle = np.clip(0.0, lo, hi)
    return np.concatenate([idle, grid], axis=-1)


def lsmc_solve(spot, spec: StorageSpec, config: LsmcConfig = LsmcConfig()):
    """Fit the regression table on ``spot`` (M, K) and replay it there.

    Returns ``(policy, pnl, ledger)``.
    """
    config.validate()
    spot = np.atleast_2d(np.asarray(spot, dtype=float))
    M, K = spot.shape
    if K != spec.n_days:
        raise ValueError(f"prices span {K} days, storage spec {spec.n_days}")
    G, A = config.storage_grid_size, config.action_grid_size
    tops = np.minimum(spec.capacity, spec.drain)
    shift = spot.mean(axis=0)
    scale = spot.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    coef = np.zeros((K, config.basis_degree + 1, G))
    incidents: list[str] = []
    policy = LsmcPolicy(config, tops, coef, shift, scale, incidents)

    realized = np.zeros((M, G))  # value from day k+1 on, per grid level of k+1
    for k in range(K - 1, -1, -1):
        X = policy.basis(k, spot[:, k])
        beta = _ridge(X, realized, config.regularization, incidents, k)
        coef[k] = beta
        fitted = X @ beta
        levels = policy.grid(k)
        lo, hi = effective_bounds(spec, levels, k, strict=False, keep_reachable=True)
        acts = _candidates(lo, hi, A)  # (G, A+1)
        nxt = levels[:, None] + acts
        cash = step_cash(acts[None, :, :], spot[:, k, None, None], spec.kappa)  # (M, G, A+1)
        cont_hat = _interp_rows(fitted, tops[k + 1], nxt)
        best = np.argmax(cash + cont_hat, axis=-1)  # (M, G)
        cont_real = _interp_rows(realized, tops[k + 1], nxt)
        pick = best[..., None]
        realized = (np.take_along_axis(cash, pick, -1) + np.take_along_axis(cont_real, pick, -1))[..., 0]

    ledger = replay_policy(policy, spot, spec)
    return policy, ledger.cash, ledger


def _interp_rows(values, top, x):
    """values (M, G) on linspace(0, top, G); x (G', A) shared by all rows."""
    G = values.shape[1]
    if top <= 0:
        return np.broadcast_to(values[:, :1, None], (values.shape[0],) + x.shape)
    pos = np.clip(x / top * (G - 1), 0.0, G - 1)
    i = np.minimum(np.floor(pos).astype(int), G - 2)
    w = pos - i
    return values[:, i] * (1.0 - w) + values[:, i + 1] * w


def replay_policy(policy: LsmcPolicy, spot, spec: StorageSpec) -> EpisodeLedger:
    """Greedy forward pass of the table over every scenario of ``spot``."""
    spot = np.atleast_2d(np.asarray(spot, dtype=float))
    M, K = spot.shape
    if K != policy.coefficients.shape[0]:
        raise ValueError(f"table covers {policy.coefficients.shape[0]} days, prices {K}")
    A = policy.config.action_grid_size
    storage = np.zeros((M, K + 1))
    actions = np.zeros((M, K))
    lows = np.zeros((M, K))
    highs = np.zeros((M, K))
    flows = np.zeros((M, K))
    level = np.zeros(M)
    rows = np.arange(M)
    for k in range(K):
        lo, hi = effective_bounds(spec, level, k, strict=False, keep_reachable=True)
        acts = _candidates(lo, hi, A)  # (M, A+1)
        cash = step_cash(acts, spot[:, k, None], spec.kappa)
        fitted = policy.basis(k, spot[:, k]) @ policy.coefficients[k]  # (M, G)
        top = policy.grid_tops[k + 1]
        G = fitted.shape[1]
        if top <= 0:
            cont = np.broadcast_to(fitted[:, :1], acts.shape)
        else:
            pos = np.clip((level[:, None] + acts) / top * (G - 1), 0.0, G - 1)
            i = np.minimum(np.floor(pos).astype(int), G - 2)
            w = pos - i
            cont = fitted[rows[:, None], i] * (1.0 - w) + fitted[rows[:, None], i + 1] * w
        best = np.argmax(cash + cont, axis=-1)
        a = acts[rows, best]
        storage[:, k] = level
        actions[:, k] = a
        lows[:, k] = lo
        highs[:, k] = hi
        flows[:, k] = cash[rows, best]
        level = level + a
    storage[:, K] = level
    return EpisodeLedger(
        storage,
        actions,
        lows,
        highs,
        flows,
        np.zeros((M, K), dtype=bool),
        np.zeros(M),
        spec.overhead,
    )


def lsmc_evaluate(policy: LsmcPolicy, spot, spec: StorageSpec, method: str = "lsmc"):
    """Out-of-sample replay; returns ``(report, ledger)``."""
    ledger = replay_policy(policy, spot, spec)
    return PnLReport(method, ledger.cash, spec.capacity, ledger.storage), ledger
