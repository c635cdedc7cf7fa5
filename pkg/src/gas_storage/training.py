"""Utility-based training loop shared by the spot-only and spot-and-forward
models.

Training minimizes the batch mean of ``-U(W / numeraire - penalty)`` where
``U(x) = (1 - exp(-r x)) / r`` and ``W`` is terminal wealth. The numeraire
(capacity times mean training price by default) keeps ``r x`` of order one.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from gas_storage import autodiff as ad
from gas_storage.policy import PolicyParams

logger = logging.getLogger(__name__)

# exp(-r x) is clamped at exp(MAX_EXPONENT)
MAX_EXPONENT = 50.0


class TrainingDiverged(RuntimeError):
    def __init__(self, msg, last_good: PolicyParams, log: list):
        super().__init__(msg)
        self.last_good = last_good
        self.log = log


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 64
    learning_rate: float = 0.05
    risk_aversion: float = 3.0
    n_train: int = 900
    n_val: int = 100
    seed: int = 0
    penalty_weight: float = 10.0
    numeraire: float | None = None
    hidden: tuple[int, ...] = (16,)
    n_subnets: int | None = None
    keep_best: bool = True

    def validate(self) -> None:
        problems = []
        if self.epochs < 1:
            problems.append(f"epochs must be >= 1 (got {self.epochs})")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1 (got {self.batch_size})")
        if self.n_train < 1:
            problems.append(f"n_train must be >= 1 (got {self.n_train})")
        if self.n_val < 0:
            problems.append(f"n_val must be >= 0 (got {self.n_val})")
        if self.batch_size > self.n_train:
            problems.append(f"batch_size {self.batch_size} exceeds training set size {self.n_train}")
        if not self.learning_rate > 0:
            problems.append(f"learning_rate must be > 0 (got {self.learning_rate})")
        if not self.risk_aversion > 0:
            problems.append(f"risk_aversion must be > 0 (got {self.risk_aversion})")
        if not self.penalty_weight > 0:
            problems.append(f"penalty_weight must be > 0 (got {self.penalty_weight})")
        if self.numeraire is not None and not self.numeraire > 0:
            problems.append(f"numeraire must be > 0 (got {self.numeraire})")
        if any(h < 1 for h in self.hidden):
            problems.append(f"hidden widths must be >= 1 (got {self.hidden})")
        if problems:
            raise ValueError("invalid training config: " + "; ".join(problems))


@dataclass(frozen=True)
class SfmodConfig(TrainConfig):
    batch_size: int = 100
    risk_aversion: float = 10.0
    alpha: float = 0.1

    def validate(self) -> None:
        super().validate()
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"invalid training config: alpha must lie in [0, 1] (got {self.alpha})")


def exp_utility(x, r: float, incidents: list | None = None):
    """U(x) = (1 - exp(-r x)) / r, with the exponent clamped for very negative x."""
    z = ad.mul(x, -r)
    zv = np.asarray(ad.value(z))
    if np.any(zv > MAX_EXPONENT):
        if incidents is not None:
            incidents.append(f"utility exponent clamped for {int(np.sum(zv > MAX_EXPONENT))} value(s)")
        z = ad.minimum(z, MAX_EXPONENT)
    return ad.mul(ad.sub(1.0, ad.exp(z)), 1.0 / r)


def objective(wealth, violation, numeraire: float, config: TrainConfig, incidents=None):
    """Mean negative utility of numeraire-scaled wealth net of the penalty."""
    x = ad.sub(ad.mul(wealth, 1.0 / numeraire), config.penalty_weight * np.asarray(violation))
    return ad.neg(ad.mean(exp_utility(x, config.risk_aversion, incidents)))


@dataclass
class TrainResult:
    params: PolicyParams
    log: list[dict]
    best_epoch: int
    numeraire: float
    incidents: list[str] = field(default_factory=list)

    def log_lines(self) -> str:
        return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in self.log)


Simulator = Callable[..., tuple]
"""``simulate(params, rows, layers=None) -> (wealth, violation)`` on a row
index array of the scenario data."""


def fit(
    simulate: Simulator,
    params: PolicyParams,
    train_rows: np.ndarray,
    val_rows: np.ndarray,
    numeraire: float,
    config: TrainConfig,
    progress: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Adam on mini-batches; returns the best-by-validation parameters."""
    incidents: list[str] = []
    flat = params.flat()
    state = ad.AdamState.zeros_like(flat)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    log: list[dict] = []
    best = (math.inf, params, 0)

    def evaluate(p, rows):
        if rows.size == 0:
            return math.nan, math.nan
        w, viol = simulate(p, rows)
        loss = float(objective(w, viol, numeraire, config))
        return loss, float(np.mean(w))

    current = params
    for epoch in range(1, config.epochs + 1):
        order = train_rows[rng.permutation(train_rows.size)]
        for start in range(0, order.size, config.batch_size):
            batch = order[start : start + config.batch_size]
            tape = ad.Tape()
            leaves = [tape.var(a) for a in flat]
            layers = current.with_flat(leaves).layers
            w, viol = simulate(current, batch, layers)
            loss = objective(w, viol, numeraire, config, incidents)
            if not np.isfinite(loss.value):
                raise TrainingDiverged(
                    f"non-finite loss in epoch {epoch}", best[1] if best[0] < math.inf else current, log
                )
            grads = tape.backward(loss, leaves)
            flat, state = ad.adam_step(flat, grads, state, config.learning_rate)
            current = current.with_flat(flat)

        train_loss, train_pnl = evaluate(current, train_rows)
        val_loss, val_pnl = evaluate(current, val_rows)
        if not (np.isfinite(train_loss) and (val_rows.size == 0 or np.isfinite(val_loss))):
            raise TrainingDiverged(f"non-finite loss after epoch {epoch}", best[1], log)
        rec = {
            "epoch": epoch,
            "train_loss": train_loss,
            "val_loss": val_loss if val_rows.size else None,
            "mean_pnl": train_pnl,
            "val_mean_pnl": val_pnl if val_rows.size else None,
        }
        log.append(rec)
        if progress is not None:
            progress(rec)
        score = val_loss if val_rows.size else train_loss
        if not config.keep_best or score < best[0]:
            best = (score, current, epoch)

    incidents.extend(state.incidents)
    return TrainResult(best[1], log, best[2], numeraire, incidents)


def split_rows(n_scenarios: int, config: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    """First ``n_train`` rows train, the next ``n_val`` validate."""
    if config.n_train + config.n_val > n_scenarios:
        raise ValueError(
            f"n_train + n_val = {config.n_train + config.n_val} exceeds {n_scenarios} scenarios"
        )
    rows = np.arange(n_scenarios)
    return rows[: config.n_train], rows[config.n_train : config.n_train + config.n_val]


def config_dict(config: TrainConfig) -> dict:
    d = asdict(config)
    d["hidden"] = list(config.hidden)
    return d
