"""Run configuration: YAML file -> validated ``RunConfig``.

Example::

    model: smod
    seed: 1
    out: runs/smod
    scenarios:
      n_scenarios: 1000
      n_days: 351
      market: {volatility: 0.03}
    storage:
      preset: paper
      capacity: 250000
    train:
      epochs: 200

``scenarios.csv`` replaces the simulated set (``market`` is then only used to
price forwards). ``storage`` is either ``preset: paper`` plus overrides, or an
inline facility with scalar or per-day ``injection``/``withdrawal``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from gas_storage.lsmc import LsmcConfig
from gas_storage.market import MarketModelParams, ScenarioError, default_month_starts
from gas_storage.storage import StorageSpec, paper_preset
from gas_storage.training import SfmodConfig, TrainConfig

MODELS = ("smod", "sfmod", "lsmc")
PRESETS = ("paper-smod", "paper-sfmod")
# forwards in the spot-and-forward preset trade below the expected spot
PAPER_SFMOD_RISK_PREMIUM = 0.05


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))
        self.problems = problems


@dataclass
class ScenarioSource:
    n_scenarios: int = 1000
    n_days: int = 351
    market: MarketModelParams = field(default_factory=MarketModelParams)
    csv: str | None = None
    csv_header: bool = False
    month_starts: list[int] | None = None


@dataclass
class StorageSource:
    preset: str | None = "paper"
    capacity: float = 250_000.0
    injection: float | list[float] | None = None
    withdrawal: float | list[float] | None = None
    kappa: float = 0.0
    overhead: float = 0.0

    def build(self, n_days: int, month_starts, alpha: float = 0.0) -> StorageSpec:
        kw = dict(kappa=self.kappa, overhead=self.overhead, month_starts=month_starts, alpha=alpha)
        if self.preset == "paper":
            spec = paper_preset(n_days, self.capacity, **kw)
            if self.injection is None and self.withdrawal is None:
                return spec
            inj = spec.injection if self.injection is None else _per_day(self.injection, n_days)
            wd = spec.withdrawal if self.withdrawal is None else _per_day(self.withdrawal, n_days)
            return spec.with_(injection=inj, withdrawal=wd)
        return StorageSpec(
            self.capacity, _per_day(self.injection, n_days), _per_day(self.withdrawal, n_days), **kw
        )


def _per_day(v, n_days):
    a = np.asarray(v, dtype=float)
    return np.full(n_days, float(a)) if a.ndim == 0 else a


@dataclass(frozen=True)
class LsmcSettings(LsmcConfig):
    # fit on every scenario instead of the training rows only
    fit_all_scenarios: bool = False

    def core(self) -> LsmcConfig:
        return LsmcConfig(
            self.storage_grid_size, self.action_grid_size, self.basis_degree, self.regularization
        )


@dataclass
class RunConfig:
    model: str = "smod"
    seed: int = 0
    out: str = "out"
    scenarios: ScenarioSource = field(default_factory=ScenarioSource)
    storage: StorageSource = field(default_factory=StorageSource)
    train: TrainConfig = field(default_factory=TrainConfig)
    lsmc: LsmcSettings = field(default_factory=LsmcSettings)

    @property
    def month_starts(self) -> np.ndarray:
        if self.scenarios.month_starts is not None:
            return np.asarray(self.scenarios.month_starts, dtype=int)
        n = self.scenarios.n_days
        return default_month_starts(n, min(12, n))

    def storage_spec(self, n_days: int | None = None, month_starts=None) -> StorageSpec:
        n = self.scenarios.n_days if n_days is None else n_days
        ms = self.month_starts if month_starts is None else month_starts
        alpha = getattr(self.train, "alpha", 0.0)
        return self.storage.build(n, ms, alpha)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["train"]["hidden"] = list(self.train.hidden)
        return d


def preset(name: str) -> RunConfig:
    """Full-scale defaults for the spot-only or spot-and-forward model."""
    if name == "paper-smod":
        return RunConfig(model="smod", train=TrainConfig())
    if name == "paper-sfmod":
        market = MarketModelParams(risk_premium=PAPER_SFMOD_RISK_PREMIUM)
        return RunConfig(model="sfmod", scenarios=ScenarioSource(market=market), train=SfmodConfig())
    raise ConfigError([f"unknown preset {name!r} (choose from {', '.join(PRESETS)})"])


def _build(cls, raw, where: str, problems: list[str], base=None):
    """Instantiate dataclass ``cls`` from a mapping, recording unknown keys."""
    base = cls() if base is None else base
    if raw is None:
        return base
    if not isinstance(raw, dict):
        problems.append(f"{where}: expected a mapping, got {type(raw).__name__}")
        return base
    names = {f.name for f in dataclasses.fields(cls)}
    for key in raw:
        if key not in names:
            problems.append(f"{where}.{key}: unknown field")
    kw = {k: v for k, v in raw.items() if k in names}
    try:
        return cls(**{**_fields(base, names), **kw})
    except (TypeError, ValueError, ScenarioError) as e:
        problems.append(f"{where}: {e}")
        return base


def _fields(obj, names):
    return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj) if f.name in names}


def parse(doc: dict | None, base: RunConfig | None = None) -> RunConfig:
    """Build and validate a RunConfig, listing every problem in one error."""
    doc = doc or {}
    problems: list[str] = []
    cfg = base or RunConfig()
    if not isinstance(doc, dict):
        raise ConfigError([f"top level: expected a mapping, got {type(doc).__name__}"])
    known = {f.name for f in dataclasses.fields(RunConfig)}
    for key in doc:
        if key not in known:
            problems.append(f"{key}: unknown field")

    model = doc.get("model", cfg.model)
    seed = doc.get("seed", cfg.seed)
    out = doc.get("out", cfg.out)

    sc_raw = doc.get("scenarios")
    market = cfg.scenarios.market
    if isinstance(sc_raw, dict) and "market" in sc_raw:
        market = _build(MarketModelParams, sc_raw["market"], "scenarios.market", problems, market)
        sc_raw = {k: v for k, v in sc_raw.items() if k != "market"}
    scenarios = _build(ScenarioSource, sc_raw, "scenarios", problems, cfg.scenarios)
    scenarios = dataclasses.replace(scenarios, market=market)
    storage = _build(StorageSource, doc.get("storage"), "storage", problems, cfg.storage)

    train_cls = SfmodConfig if model == "sfmod" else TrainConfig
    train_base = cfg.train if type(cfg.train) is train_cls else train_cls()
    train_raw = doc.get("train")
    if isinstance(train_raw, dict) and "hidden" in train_raw:
        train_raw = {**train_raw, "hidden": tuple(train_raw["hidden"])}
    train = _build(train_cls, train_raw, "train", problems, train_base)
    lsmc = _build(LsmcSettings, doc.get("lsmc"), "lsmc", problems, cfg.lsmc)

    cfg = RunConfig(model, seed, out, scenarios, storage, train, lsmc)
    problems.extend(validate(cfg))
    if problems:
        raise ConfigError(problems)
    return cfg


def validate(cfg: RunConfig) -> list[str]:
    problems = []
    if cfg.model not in MODELS:
        problems.append(f"model: {cfg.model!r} is not one of {', '.join(MODELS)}")
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool) or cfg.seed < 0:
        problems.append(f"seed: must be a non-negative integer, got {cfg.seed!r}")
    if not cfg.out:
        problems.append("out: output directory must be set")
    sc = cfg.scenarios
    if sc.csv is None:
        if not isinstance(sc.n_scenarios, int) or sc.n_scenarios < 1:
            problems.append(f"scenarios.n_scenarios: must be >= 1, got {sc.n_scenarios!r}")
        if not isinstance(sc.n_days, int) or sc.n_days < 2:
            problems.append(f"scenarios.n_days: must be >= 2, got {sc.n_days!r}")
    elif not Path(sc.csv).is_file():
        problems.append(f"scenarios.csv: file {sc.csv!r} not found")
    st = cfg.storage
    if st.preset not in (None, "paper"):
        problems.append(f"storage.preset: unknown preset {st.preset!r} (only 'paper')")
    if st.preset is None and (st.injection is None or st.withdrawal is None):
        problems.append("storage: an inline facility needs both injection and withdrawal")
    if sc.csv is None and isinstance(sc.n_days, int) and sc.n_days >= 2:
        try:
            cfg.storage_spec()
        except (ValueError, TypeError) as e:
            problems.append(f"storage: {e}")
    try:
        cfg.train.validate()
    except ValueError as e:
        problems.extend("train: " + p for p in str(e).split(": ", 1)[-1].split("; "))
    try:
        cfg.lsmc.validate()
    except ValueError as e:
        problems.extend("lsmc: " + p for p in str(e).split(": ", 1)[-1].split("; "))
    if sc.csv is None and isinstance(sc.n_scenarios, int) and cfg.model != "lsmc":
        need = cfg.train.n_train + cfg.train.n_val
        if need > sc.n_scenarios:
            problems.append(f"train: n_train + n_val = {need} exceeds scenarios.n_scenarios = {sc.n_scenarios}")
    return problems


def load(path=None, preset_name: str | None = None) -> RunConfig:
    base = preset(preset_name) if preset_name else None
    doc = {}
    if path is not None:
        try:
            doc = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError([f"{path}: {e}"]) from None
    if base is not None and doc and "model" not in doc:
        doc = {**doc, "model": base.model}
    return parse(doc, base)
