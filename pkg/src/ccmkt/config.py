"""Experiment configuration: YAML in, validated ExperimentConfig out."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .equilibrium import TatonnementSettings
from .exceptions import ParseError, SemanticError
from .forecast import Normal, ScaledBeta
from .market import MarketConfig, Prices, ProducerParams

MODES = ("baseline", "learning", "sharing")

# two-producer test system
DEFAULTS = {
    "market": {
        "load": 100.0,
        "wind_forecast": 50.0,
        "spill_cost": 100.0,
        "shed_cost": 300.0,
        "producers": [
            {"p_min": 10.0, "p_max": 32.0, "r_max": 10.0, "c1": 10.0, "c2": 1.0},
            {"p_min": 10.0, "p_max": 44.0, "r_max": 10.0, "c1": 3.0, "c2": 3.0},
        ],
    },
    "distribution": {"kind": "normal", "variance": 50.0},
    "sample_sizes": [10, 30, 50, 100, 300, 500, 1000, 1500, 10000],
    "runs": 10,
    "oos_count": 10000,
    "generated_count": None,
    "base_seed": 0,
    "mode": "baseline",
    "solver": {
        "rho": 1e-5,
        "tol": 1e-3,
        "max_iter": 20_000_000,
        "initial_prices": [0.0, 0.0],
        "alpha_regularization": 1e-9,
    },
    "output_dir": "results",
    "trace_every": None,
}

_PRODUCER_KEYS = ("p_min", "p_max", "r_max", "c1", "c2")


@dataclass(frozen=True)
class ExperimentConfig:
    market: MarketConfig
    distribution: Normal | ScaledBeta
    sample_sizes: tuple = (10, 30, 50, 100, 300, 500, 1000, 1500, 10000)
    runs: int = 10
    oos_count: int = 10_000
    base_seed: int = 0
    mode: str = "baseline"
    solver: TatonnementSettings = field(default_factory=TatonnementSettings)
    output_dir: Path = Path("results")
    generated_count: int | None = None
    trace_every: int | None = None
    defaulted: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "sample_sizes", tuple(int(s) for s in self.sample_sizes))
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        _check_invariants(self)

    @property
    def augment_count(self):
        """Synthetic draws added per producer in learning mode (defaults to oos_count)."""
        return self.oos_count if self.generated_count is None else self.generated_count

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self


def _check_invariants(cfg):
    if not cfg.sample_sizes:
        raise SemanticError("grid is empty", "sample_sizes")
    if any(s < 1 for s in cfg.sample_sizes):
        raise SemanticError("sizes must be positive", "sample_sizes")
    if any(b <= a for a, b in zip(cfg.sample_sizes, cfg.sample_sizes[1:])):
        raise SemanticError("sizes must be strictly increasing", "sample_sizes")
    if cfg.runs < 1:
        raise SemanticError("must be at least 1", "runs")
    if cfg.oos_count < 1:
        raise SemanticError("must be at least 1", "oos_count")
    if cfg.generated_count is not None and cfg.generated_count < 0:
        raise SemanticError("must be non-negative", "generated_count")
    if cfg.trace_every is not None and cfg.trace_every < 1:
        raise SemanticError("must be at least 1", "trace_every")
    if cfg.mode not in MODES:
        raise SemanticError(f"must be one of {', '.join(MODES)}", "mode")
    if cfg.mode == "learning" and not isinstance(cfg.distribution, ScaledBeta):
        raise SemanticError("learning mode fits a scaled beta; use kind: scaled_beta", "distribution")


class _LineLoader(yaml.SafeLoader):
    """SafeLoader that records the line of every mapping key."""


def _construct_mapping(loader, node, deep=False):
    mapping = yaml.SafeLoader.construct_mapping(loader, node, deep=deep)
    lines = {}
    for key_node, _ in node.value:
        lines[key_node.value] = key_node.start_mark.line + 1
    mapping["__lines__"] = lines
    return mapping


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


class _Reader:
    def __init__(self):
        self.defaulted = []

    def section(self, raw, key, path):
        if raw is None or key not in raw:
            self.defaulted.append(path)
            return None
        value = raw[key]
        if value is None:
            self.defaulted.append(path)
        return value

    def number(self, raw, key, path, default, kind=float):
        value = self.section(raw, key, path)
        if value is None:
            return default
        line = raw.get("__lines__", {}).get(key)
        if isinstance(value, bool):
            raise ParseError(f"expected a number, got {value!r}", line, path)
        try:
            # YAML 1.1 reads "1e-5" as a string; accept it anyway
            number = float(value)
        except (TypeError, ValueError):
            raise ParseError(f"expected a number, got {value!r}", line, path) from None
        if kind is int:
            if number != int(number):
                raise ParseError(f"expected an integer, got {value!r}", line, path)
            return int(number)
        return number


def _build_producers(reader, raw_market, lines):
    raw = reader.section(raw_market, "producers", "market.producers")
    if raw is None:
        raw = copy.deepcopy(DEFAULTS["market"]["producers"])
    if not isinstance(raw, list) or not raw:
        raise ParseError("expected a non-empty list", lines.get("producers"), "market.producers")
    out = []
    for i, item in enumerate(raw):
        path = f"market.producers[{i}]"
        if not isinstance(item, dict):
            raise ParseError("expected a mapping", lines.get("producers"), path)
        fallback = DEFAULTS["market"]["producers"][i] if i < len(DEFAULTS["market"]["producers"]) else None
        values = {}
        for key in _PRODUCER_KEYS:
            if key not in item and fallback is None:
                raise SemanticError("missing with no default", f"{path}.{key}")
            values[key] = reader.number(item, key, f"{path}.{key}", fallback[key] if fallback else None)
        unknown = set(item) - set(_PRODUCER_KEYS) - {"__lines__"}
        if unknown:
            raise ParseError(f"unknown keys {sorted(unknown)}", item["__lines__"].get(sorted(unknown)[0]), path)
        try:
            out.append(ProducerParams(**values))
        except ValueError as exc:
            raise SemanticError(str(exc), path) from None
    return out


def _build_market(reader, raw):
    raw_market = reader.section(raw, "market", "market") or {}
    lines = raw_market.get("__lines__", {})
    d = DEFAULTS["market"]
    producers = _build_producers(reader, raw_market, lines)
    vals = {k: reader.number(raw_market, k, f"market.{k}", d[k]) for k in ("load", "wind_forecast", "spill_cost", "shed_cost")}
    try:
        return MarketConfig(producers=tuple(producers), **vals)
    except ValueError as exc:
        raise SemanticError(str(exc), "market") from None


def _build_distribution(reader, raw):
    rd = reader.section(raw, "distribution", "distribution") or {"kind": "normal"}
    lines = rd.get("__lines__", {})
    kind = rd.get("kind", "normal")
    try:
        if kind == "normal":
            return Normal(reader.number(rd, "variance", "distribution.variance", 50.0))
        if kind == "scaled_beta":
            centered = rd.get("centered", True)
            if not isinstance(centered, bool):
                raise ParseError("expected true or false", lines.get("centered"), "distribution.centered")
            return ScaledBeta(
                reader.number(rd, "alpha", "distribution.alpha", 5.0),
                reader.number(rd, "beta", "distribution.beta", 10.0),
                reader.number(rd, "scale", "distribution.scale", 65.0),
                centered=centered,
            )
    except ValueError as exc:
        raise SemanticError(str(exc), "distribution") from None
    raise ParseError(f"unknown distribution kind {kind!r}", lines.get("kind"), "distribution.kind")


def _build_solver(reader, raw):
    rs = reader.section(raw, "solver", "solver") or {}
    d = DEFAULTS["solver"]
    init = rs.get("initial_prices", d["initial_prices"])
    if not isinstance(init, list) or len(init) != 2:
        raise ParseError("expected [energy, reserve]", rs.get("__lines__", {}).get("initial_prices"), "solver.initial_prices")
    try:
        return TatonnementSettings(
            rho=reader.number(rs, "rho", "solver.rho", d["rho"]),
            tol=reader.number(rs, "tol", "solver.tol", d["tol"]),
            max_iter=reader.number(rs, "max_iter", "solver.max_iter", d["max_iter"], int),
            initial_prices=Prices(float(init[0]), float(init[1])),
            alpha_regularization=reader.number(rs, "alpha_regularization", "solver.alpha_regularization", d["alpha_regularization"]),
        )
    except ValueError as exc:
        raise SemanticError(str(exc), "solver") from None


def config_from_dict(raw) -> ExperimentConfig:
    """Build a config from a parsed mapping; absent fields take the defaults."""
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ParseError("top level must be a mapping")
    lines = raw.get("__lines__", {})
    known = set(DEFAULTS) | {"__lines__"}
    for key in raw:
        if key not in known:
            raise ParseError(f"unknown key {key!r}", lines.get(key), key)
    reader = _Reader()
    market = _build_market(reader, raw)
    distribution = _build_distribution(reader, raw)
    solver = _build_solver(reader, raw)
    sizes = reader.section(raw, "sample_sizes", "sample_sizes")
    if sizes is None:
        sizes = DEFAULTS["sample_sizes"]
    if not isinstance(sizes, list) or any(isinstance(s, bool) or not isinstance(s, (int, float)) or s != int(s) for s in sizes):
        raise ParseError("expected a list of integers", lines.get("sample_sizes"), "sample_sizes")
    mode = reader.section(raw, "mode", "mode") or DEFAULTS["mode"]
    out_dir = reader.section(raw, "output_dir", "output_dir") or DEFAULTS["output_dir"]
    generated = raw.get("generated_count")
    trace_every = raw.get("trace_every")
    return ExperimentConfig(
        market=market,
        distribution=distribution,
        sample_sizes=tuple(int(s) for s in sizes),
        runs=reader.number(raw, "runs", "runs", DEFAULTS["runs"], int),
        oos_count=reader.number(raw, "oos_count", "oos_count", DEFAULTS["oos_count"], int),
        base_seed=reader.number(raw, "base_seed", "base_seed", DEFAULTS["base_seed"], int),
        mode=str(mode),
        solver=solver,
        output_dir=Path(out_dir),
        generated_count=None if generated is None else reader.number(raw, "generated_count", "generated_count", None, int),
        trace_every=None if trace_every is None else reader.number(raw, "trace_every", "trace_every", None, int),
        defaulted=tuple(p for p in reader.defaulted if p not in ("generated_count", "trace_every")),
    )


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(str(getattr(exc, "problem", None) or exc), mark.line + 1 if mark else None) from None
    return config_from_dict(raw)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def default_config() -> ExperimentConfig:
    return config_from_dict({})


def config_to_dict(cfg: ExperimentConfig) -> dict:
    dist = cfg.distribution
    if isinstance(dist, Normal):
        dist_d = {"kind": "normal", "variance": dist.variance}
    else:
        dist_d = {"kind": "scaled_beta", "alpha": dist.alpha_shape, "beta": dist.beta_shape,
                  "scale": dist.scale, "centered": dist.centered}
    m = cfg.market
    s = cfg.solver
    return {
        "market": {
            "load": m.load,
            "wind_forecast": m.wind_forecast,
            "spill_cost": m.spill_cost,
            "shed_cost": m.shed_cost,
            "producers": [{k: getattr(g, k) for k in _PRODUCER_KEYS} for g in m.producers],
        },
        "distribution": dist_d,
        "sample_sizes": list(cfg.sample_sizes),
        "runs": cfg.runs,
        "oos_count": cfg.oos_count,
        "generated_count": cfg.generated_count,
        "base_seed": cfg.base_seed,
        "mode": cfg.mode,
        "solver": {
            "rho": s.rho,
            "tol": s.tol,
            "max_iter": int(s.max_iter),
            "initial_prices": [s.initial_prices.energy, s.initial_prices.reserve],
            "alpha_regularization": s.alpha_regularization,
        },
        "output_dir": str(cfg.output_dir),
        "trace_every": cfg.trace_every,
    }


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=False))


def validate_config(cfg: ExperimentConfig) -> list:
    """Warnings for a parsed config: defaulted fields and questionable settings."""
    warnings = [f"{p} missing; using default" for p in cfg.defaulted]
    warnings += cfg.market.sanity_warnings()
    total_reserve = sum(g.r_max for g in cfg.market.producers)
    if total_reserve <= 0:
        warnings.append("no producer offers reserve; the reserve market cannot clear")
    if cfg.solver.rho > 1.0:
        warnings.append(f"rho={cfg.solver.rho} is large; the price iteration may oscillate")
    lo = sum(g.p_min for g in cfg.market.producers)
    hi = sum(g.p_max for g in cfg.market.producers)
    if not lo <= cfg.market.net_load <= hi:
        warnings.append(f"net load {cfg.market.net_load} outside total capacity [{lo}, {hi}]")
    return warnings
