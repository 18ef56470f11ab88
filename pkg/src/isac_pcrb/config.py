"""Experiment configuration: JSON in, validated SI-unit scenario out.

Logarithmic units live only in the file.  :func:`load_config` converts them
once, so everything downstream works in watts and linear ratios.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .beamopt import ConvexInstance, Tolerances
from .fisher import SensingLinkBudget, SensingMatrices, assemble_matrices
from .geometry import SceneAngles, UpaGeometry, UserLocation, user_channel
from .prior import VonMisesMixture

SCHEMES = ("proposed", "b1", "b2", "b3")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def dbm_to_watt(x: float) -> float:
    return 10.0 ** (x / 10.0) * 1e-3


def db_to_linear(x: float) -> float:
    return 10.0 ** (x / 10.0)


@dataclass
class GeometryConfig:
    tx_rows: int = 4
    tx_cols: int = 4
    rx_rows: int = 4
    rx_cols: int = 5
    spacing_over_wavelength: float = 0.5
    bs_height_m: float = 10.0


@dataclass
class TargetConfig:
    range_m: float = 100.0
    height_m: float = 0.0


@dataclass
class ComponentConfig:
    mean_rad: float
    concentration: float
    weight: float


@dataclass
class PriorConfig:
    components: list = field(default_factory=lambda: [
        ComponentConfig(-1.2, 300.0, 0.54),
        ComponentConfig(-0.6, 80.0, 0.46),
    ])


@dataclass
class LinkConfig:
    power_dbm: float = 10.0
    comm_noise_dbm: float = -90.0
    sense_noise_dbm: float = -90.0
    beta0_db: float = -30.0
    symbols: int = 25
    sensing_snr_db: float = -8.0


@dataclass
class UserConfig:
    height_m: float = 1.0
    azimuth_rad: float = 0.85
    range_m: float = 600.0


@dataclass
class SweepConfig:
    points: int = 20
    min_bpshz: float = 0.1
    max_fraction_of_mrt: float = 0.99
    rate_targets_bpshz: list | None = None
    schemes: list = field(default_factory=lambda: list(SCHEMES))


@dataclass
class McConfig:
    trials: int = 2000
    seed: int = 0
    grid_size: int = 8192


@dataclass
class Scenario:
    """Everything the solvers need, in SI units."""

    geom: UpaGeometry
    angles: SceneAngles
    prior: VonMisesMixture
    power: float
    comm_noise: float
    sense_noise: float
    beta0: float
    symbols: int
    alpha_sq: float
    user: UserLocation
    channel: np.ndarray
    tol: Tolerances

    @property
    def link(self) -> SensingLinkBudget:
        return SensingLinkBudget(math.sqrt(self.alpha_sq), self.symbols, self.sense_noise)

    @property
    def mrt_capacity(self) -> float:
        return float(np.log2(1.0 + self.power * np.linalg.norm(self.channel) ** 2 / self.comm_noise))

    def matrices(self) -> SensingMatrices:
        return assemble_matrices(self.geom, self.angles, self.prior)

    def instance(self, rate_target: float = 0.0, mat: SensingMatrices | None = None) -> ConvexInstance:
        return ConvexInstance(mat if mat is not None else self.matrices(), self.link, self.channel,
                              self.power, self.comm_noise, float(rate_target))


@dataclass
class ExperimentConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    target: TargetConfig = field(default_factory=TargetConfig)
    prior: PriorConfig = field(default_factory=PriorConfig)
    link: LinkConfig = field(default_factory=LinkConfig)
    user: UserConfig = field(default_factory=UserConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    mc: McConfig = field(default_factory=McConfig)
    tolerances: dict = field(default_factory=dict)
    scenario: Scenario | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("scenario")
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def rate_grid(self) -> np.ndarray:
        """Rate targets in bps/Hz, ascending."""
        sw = self.sweep
        if sw.rate_targets_bpshz is not None:
            return np.array(sw.rate_targets_bpshz, dtype=float)
        top = sw.max_fraction_of_mrt * self.scenario.mrt_capacity
        return np.linspace(sw.min_bpshz, top, sw.points)


_SECTIONS = {
    "geometry": GeometryConfig,
    "target": TargetConfig,
    "prior": PriorConfig,
    "link": LinkConfig,
    "user": UserConfig,
    "sweep": SweepConfig,
    "mc": McConfig,
}
_INT_FIELDS = {"tx_rows", "tx_cols", "rx_rows", "rx_cols", "symbols", "points", "trials", "seed", "grid_size"}


def _number(value, path, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if integer:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return int(value)
    if not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    return float(value)


def _section(cls, raw, path):
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected an object")
    known = {f.name for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown field")
    base = cls() if cls is not ComponentConfig else None
    out = {}
    for f in fields(cls):
        p = f"{path}.{f.name}"
        if f.name not in raw:
            if base is None:
                raise ConfigError(p, "missing")
            continue
        v = raw[f.name]
        if f.name == "components":
            if not isinstance(v, list) or not v:
                raise ConfigError(p, "expected a non-empty list")
            out[f.name] = [_section(ComponentConfig, c, f"{p}[{i}]") for i, c in enumerate(v)]
        elif f.name == "schemes":
            if not isinstance(v, list) or any(s not in SCHEMES for s in v):
                raise ConfigError(p, f"expected a list drawn from {list(SCHEMES)}")
            out[f.name] = list(v)
        elif f.name == "rate_targets_bpshz":
            if v is None:
                out[f.name] = None
            elif not isinstance(v, list) or not v:
                raise ConfigError(p, "expected null or a non-empty list")
            else:
                out[f.name] = [_number(x, f"{p}[{i}]") for i, x in enumerate(v)]
        else:
            out[f.name] = _number(v, p, integer=f.name in _INT_FIELDS)
    return cls(**out) if base is None else _replace(base, out)


def _replace(obj, values):
    for k, v in values.items():
        setattr(obj, k, v)
    return obj


def _check(cond, path, message):
    if not cond:
        raise ConfigError(path, message)


def build_scenario(cfg: ExperimentConfig) -> Scenario:
    """Validate cross-field invariants and convert to SI units."""
    g = cfg.geometry
    try:
        geom = UpaGeometry(g.tx_rows, g.tx_cols, g.rx_rows, g.rx_cols, g.spacing_over_wavelength, g.bs_height_m)
    except ValueError as e:
        raise ConfigError("geometry", str(e)) from None
    try:
        angles = SceneAngles.from_range(geom, cfg.target.range_m, cfg.target.height_m)
    except ValueError as e:
        raise ConfigError("target.range_m", str(e)) from None

    comps = cfg.prior.components
    for i, c in enumerate(comps):
        _check(c.concentration > 0, f"prior.components[{i}].concentration", "must be > 0")
        _check(0 <= c.weight <= 1, f"prior.components[{i}].weight", "must lie in [0, 1]")
    total = sum(c.weight for c in comps)
    _check(abs(total - 1.0) <= 1e-12, "prior.components", f"weights sum to {total!r}, expected 1")
    prior = VonMisesMixture([(c.mean_rad, c.concentration, c.weight) for c in comps])

    lk = cfg.link
    _check(lk.symbols >= 1, "link.symbols", "must be >= 1")
    power = dbm_to_watt(lk.power_dbm)
    sense = dbm_to_watt(lk.sense_noise_dbm)
    alpha_sq = db_to_linear(lk.sensing_snr_db) * sense / (power * lk.symbols)

    u = cfg.user
    _check(u.range_m > 0, "user.range_m", "must be > 0")
    _check(abs(u.height_m - g.bs_height_m) <= u.range_m, "user.height_m",
           "height difference to the BS exceeds the user range")
    user = UserLocation(u.height_m, u.azimuth_rad, u.range_m)
    beta0 = db_to_linear(lk.beta0_db)

    sw = cfg.sweep
    _check(sw.points >= 1, "sweep.points", "must be >= 1")
    _check(0 < sw.max_fraction_of_mrt <= 1, "sweep.max_fraction_of_mrt", "must lie in (0, 1]")
    _check(sw.min_bpshz >= 0, "sweep.min_bpshz", "must be >= 0")
    _check(len(set(sw.schemes)) == len(sw.schemes), "sweep.schemes", "duplicate scheme")

    mc = cfg.mc
    _check(mc.trials >= 1, "mc.trials", "must be >= 1")
    _check(mc.seed >= 0, "mc.seed", "must be >= 0")
    _check(mc.grid_size >= 512, "mc.grid_size", "must be >= 512")

    known = {f.name for f in fields(Tolerances)}
    for k, v in cfg.tolerances.items():
        _check(k in known, f"tolerances.{k}", "unknown tolerance")
        _check(v > 0, f"tolerances.{k}", "must be > 0")
    tol = Tolerances(**cfg.tolerances)

    sc = Scenario(geom, angles, prior, power, dbm_to_watt(lk.comm_noise_dbm), sense, beta0,
                  lk.symbols, alpha_sq, user, user_channel(geom, user, beta0), tol)

    cap = sc.mrt_capacity
    _check(sw.min_bpshz <= sw.max_fraction_of_mrt * cap, "sweep.min_bpshz",
           f"exceeds the top of the grid ({sw.max_fraction_of_mrt * cap:.6g} bps/Hz)")
    if sw.rate_targets_bpshz is not None:
        for i, r in enumerate(sw.rate_targets_bpshz):
            _check(0 <= r <= cap, f"sweep.rate_targets_bpshz[{i}]",
                   f"{r} bps/Hz is outside [0, MRT capacity {cap:.6g}]")
    return sc


def config_from_dict(raw) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("", "top level must be an object")
    known = set(_SECTIONS) | {"tolerances"}
    for key in raw:
        if key not in known:
            raise ConfigError(key, "unknown section")
    parts = {name: _section(cls, raw[name], name) for name, cls in _SECTIONS.items() if name in raw}
    tol = raw.get("tolerances", {})
    if not isinstance(tol, dict):
        raise ConfigError("tolerances", "expected an object")
    parts["tolerances"] = {k: _number(v, f"tolerances.{k}") for k, v in tol.items()}
    cfg = ExperimentConfig(**parts)
    cfg.scenario = build_scenario(cfg)
    return cfg


def loads_config(text: str) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("", f"not valid JSON ({e})") from None
    return config_from_dict(raw)


def load_config(path: str | Path | None = None) -> ExperimentConfig:
    """Read and validate a config file; ``None`` loads the shipped default."""
    if path is None:
        text = resources.files("isac_pcrb").joinpath("data/default_config.json").read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError("", f"cannot read {path}: {e.strerror}") from None
    return loads_config(text)


def default_config() -> ExperimentConfig:
    return load_config(None)
