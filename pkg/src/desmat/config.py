"""Plain-text experiment configuration (INI-style sections of key = value).

Example::

    [experiment]
    kind = sweep
    seed = 7
    trials = 50
    snr_grid = 10, 100, 1000

    [design]
    n_H = 100
    n_L = 400
    k_H = 10
    k_L = 10
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .decoder import DecoderConfig
from .density_evolution import DEConfig
from .design import PreferentialDesignProblem, RegularDesignProblem
from .priors import Gaussian, Laplacian, PriorModel, SparseGaussian, SpikeDiscrete

KINDS = ("design", "de-run", "sample-matrix", "decode", "sweep", "image")


class ConfigError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 0
    out_dir: Path = Path("out")
    trials: int = 1
    snr_grid: list = field(default_factory=lambda: [100.0])
    plots: bool = False
    workers: int = 1
    sections: dict = field(default_factory=dict)
    source_text: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.snr_grid or any(s <= 0 for s in self.snr_grid):
            raise ConfigError("snr values must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.source_text.encode("utf-8")).hexdigest()[:16]

    def section(self, name: str) -> dict:
        return self.sections.get(name, {})

    def get(self, sec: str, key: str, default=None, cast=str):
        raw = self.section(sec).get(key)
        if raw is None:
            return default
        try:
            if cast is bool:
                return raw.strip().lower() in ("1", "true", "yes", "on")
            return cast(raw)
        except ValueError as exc:
            raise ConfigError(f"[{sec}] {key}: {exc}") from None

    # -- typed views --
    def de_config(self) -> DEConfig:
        try:
            return DEConfig(
                noise_variance=self.get("de", "noise_variance", 0.0, float),
                quadrature_order=self.get("de", "quadrature_order", 61, int),
                max_iterations=self.get("de", "max_iterations", 500, int),
                convergence_tolerance=self.get("de", "tolerance", 1e-10, float),
                decoder_mode=self.get("de", "mode", "MAP"),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def decoder_config(self, noise_variance: float = 0.0) -> DecoderConfig:
        try:
            return DecoderConfig(
                mode=self.get("decoder", "mode", "MAP"),
                max_iterations=self.get("decoder", "max_iterations", 100, int),
                damping=self.get("decoder", "damping", 0.5, float),
                tolerance=self.get("decoder", "tolerance", 1e-8, float),
                noise_variance=noise_variance,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def preferential_problem(self) -> PreferentialDesignProblem:
        g = lambda k, d=None, c=int: self.get("design", k, d, c)
        try:
            return PreferentialDesignProblem(
                n_H=g("n_H"), n_L=g("n_L"), k_H=g("k_H"), k_L=g("k_L"),
                dv_max=g("dv_max", 50), dc_H=g("dc_H", 5), dc_L=g("dc_L", 5),
                beta_H=g("beta_H", None, float), beta_L=g("beta_L", None, float),
                T=g("T", 10), polygon_sides=g("polygon_sides", 64))
        except TypeError:
            raise ConfigError("[design] needs n_H, n_L, k_H, k_L") from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def regular_problem(self) -> RegularDesignProblem:
        g = lambda k, d=None, c=int: self.get("design", k, d, c)
        try:
            return RegularDesignProblem(n=g("n"), k=g("k"), c0=g("c0", 1.0, float),
                                        dv_max=g("dv_max", 20), dc_max=g("dc_max", 60))
        except TypeError:
            raise ConfigError("[design] needs n and k") from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def prior_from_section(sec: dict) -> PriorModel:
    kind = sec.get("kind", "spike").strip().lower()
    f = lambda k, d=None: float(sec[k]) if k in sec else d
    try:
        if kind in ("spike", "spike_discrete"):
            sym = sec.get("symmetric", "false").strip().lower() in ("1", "true", "yes")
            return SpikeDiscrete(f("sparsity"), f("amplitude", 1.0), sym)
        if kind == "laplacian":
            return Laplacian(f("beta"))
        if kind == "gaussian":
            return Gaussian(f("variance", 1.0))
        if kind in ("sparse_gaussian", "sparsegaussian"):
            return SparseGaussian(f("sparsity"), f("mean", 0.0), f("variance", 1.0))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[prior] {exc}") from None
    raise ConfigError(f"unknown prior kind {kind!r}")


def parse_config(text: str, kind: Optional[str] = None) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    sections = {name: dict(cp[name]) for name in cp.sections()}
    exp = sections.get("experiment", {})
    k = kind or exp.get("kind")
    if k is None:
        raise ConfigError("experiment kind missing")
    try:
        return ExperimentConfig(
            kind=k.strip(),
            seed=int(exp.get("seed", 0)),
            out_dir=Path(exp.get("out", "out")),
            trials=int(exp.get("trials", 1)),
            snr_grid=_floats(exp.get("snr_grid", "100")),
            plots=exp.get("plots", "false").strip().lower() in ("1", "true", "yes"),
            workers=int(exp.get("workers", 1)),
            sections=sections,
            source_text=text,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, kind: Optional[str] = None) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text(encoding="utf-8"), kind)
