"""INI pipeline configuration with strict keys.

Sections: [model] [frequency] [perturbation] [regularize] [kam] [evolution]
[oracle] [output]. Unknown sections or keys raise ConfigError.
"""
from __future__ import annotations

import configparser
import dataclasses
import warnings
from dataclasses import dataclass, field

from .errors import ConfigError


@dataclass
class ModelSection:
    kind: str = "circle"
    k_max: int = 16
    # synthetic models only
    n: int = 2
    lambda_shift: float = 0.5
    eta_bar: float = 0.0
    seed: int = 0


@dataclass
class FrequencySection:
    d: int = 2
    n_max: int = 6
    epsilon: float = 1e-3
    alpha: float = 0.5
    scheme: str = "low_discrepancy"
    count: int = 24
    seed: int = 0
    l_max: int = 12
    tau: float = 0.0  # 0 means d + 1


@dataclass
class PerturbationSection:
    delta: float = 0.5
    sigma_l: float = 4.0
    sigma_k: float = 8.0
    seed: int = 0
    sub_amp: float = 0.5
    off_amp: float = 0.5
    magnitude: float = 1.0


@dataclass
class RegularizeSection:
    target_order: float = -2.0
    max_steps: int = 8


@dataclass
class KamSection:
    N0: float = 8.0
    chi: float = 1.5
    nu_max: int = 6
    tol_R: float = 1e-10
    decay_gate: float = 0.2
    kappa: float = -1.0  # negative means the default 1 - 2 delta clipped to [0, 1]
    n_psi: int = 12
    b: float = 0.0  # 0 means the default
    a: float = 0.0
    rho: float = 0.0
    s0: float = 0.0
    s: float = 0.0


@dataclass
class EvolutionSection:
    enabled: bool = True
    n_omega: int = 5
    n_initial: int = 3
    t_max: float = 1000.0
    h: float = 0.01
    record_every: int = 100
    integrator: str = "exp_midpoint"
    s_list: str = "2"
    c_gate: float = 10.0
    conj_tol: float = 1e-6
    l2_tol: float = 1e-7
    seed: int = 0


@dataclass
class OracleSection:
    enabled: bool = True
    n_lattice: int = 3
    cap: int = 4000
    tol: float = 1e-7


@dataclass
class OutputSection:
    dir: str = "zkam_out"
    save_transforms: bool = False


@dataclass
class PipelineConfig:
    model: ModelSection = field(default_factory=ModelSection)
    frequency: FrequencySection = field(default_factory=FrequencySection)
    perturbation: PerturbationSection = field(default_factory=PerturbationSection)
    regularize: RegularizeSection = field(default_factory=RegularizeSection)
    kam: KamSection = field(default_factory=KamSection)
    evolution: EvolutionSection = field(default_factory=EvolutionSection)
    oracle: OracleSection = field(default_factory=OracleSection)
    output: OutputSection = field(default_factory=OutputSection)

    @property
    def gamma(self) -> float:
        return self.frequency.epsilon ** self.frequency.alpha if self.frequency.epsilon > 0 else 0.0

    @property
    def tau(self) -> float:
        return self.frequency.tau if self.frequency.tau > 0 else self.frequency.d + 1.0

    def validate(self) -> "PipelineConfig":
        f, p = self.frequency, self.perturbation
        if not 0.0 <= f.epsilon < 1.0:
            raise ConfigError("frequency.epsilon must lie in [0, 1)")
        if not 0.0 < f.alpha < 1.0:
            raise ConfigError("frequency.alpha must lie in (0, 1)")
        if p.delta >= 1.0:
            raise ConfigError("perturbation.delta must be below 1")
        if p.delta > 0.5:
            warnings.warn("delta above 1/2: only the regularization stage is covered", UserWarning)
        if self.model.kind not in ("circle", "sphere", "synthetic"):
            raise ConfigError(f"unknown model.kind {self.model.kind!r}")
        if self.kam.chi <= 1.0:
            raise ConfigError("kam.chi must exceed 1")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _convert(raw: str, default, where: str):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {type(default).__name__}") from None


def parse_config(text: str) -> PipelineConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    cfg = PipelineConfig()
    names = {f.name for f in dataclasses.fields(cfg)}
    for sec in cp.sections():
        if sec not in names:
            raise ConfigError(f"unknown section [{sec}]")
        obj = getattr(cfg, sec)
        keys = {f.name: f for f in dataclasses.fields(obj)}
        for key, raw in cp.items(sec):
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            setattr(obj, key, _convert(raw, getattr(obj, key), f"{sec}.{key}"))
    return cfg.validate()


def load_config(path) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(cfg: PipelineConfig) -> str:
    lines = []
    for sec, vals in cfg.to_dict().items():
        lines.append(f"[{sec}]")
        lines += [f"{k} = {v}" for k, v in vals.items()]
        lines.append("")
    return "\n".join(lines)
