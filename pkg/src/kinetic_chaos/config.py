"""Plain-text experiment configuration (INI sections of key = value pairs)
and the reproducibility manifest written next to every output set.
"""

from __future__ import annotations

import configparser
import hashlib
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import SimConfig, CutoffParams
from .ensemble import DensitySpec

__all__ = ["ExperimentConfig", "RunManifest", "ConfigError"]


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(tok) for tok in text.replace(",", " ").split()]


@dataclass
class ExperimentConfig:
    """Parsed experiment definition.

    Every (N, epsilon) scan entry satisfies N * epsilon^{d-1} = 1/ell by
    construction (epsilon is always derived from the scaling), and the
    velocity-gap threshold eta(epsilon) = epsilon^kappa is recomputed per
    entry.
    """

    experiment_id: str
    d: int
    ell: float
    N_list: list[int]
    density: DensitySpec
    cutoff_raw: dict
    times: list[float]
    M: int
    seed: int
    out_dir: str
    s_max: int = 2
    raw: configparser.ConfigParser = field(repr=False, default=None)
    source_text: str = field(repr=False, default="")

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        text = path.read_text()
        cp = configparser.ConfigParser()
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        try:
            exp = cp["experiment"]
            d = exp.getint("d", 2)
            if "ell" in exp:
                ell = exp.getfloat("ell")
            elif "ell_inverse" in exp:
                ell = 1.0 / exp.getfloat("ell_inverse")
            else:
                raise ConfigError("experiment section needs ell or ell_inverse")
            N_list = _ints(exp.get("N_list", exp.get("N", "")))
            if not N_list:
                raise ConfigError("experiment section needs N_list")
            times = _floats(exp.get("times", ""))
            M = exp.getint("M", 1000)
            seed = exp.getint("seed", 0)
            out_dir = exp.get("out", "out")
            s_max = exp.getint("s_max", 2)
            exp_id = exp.get("id", path.stem)
            den = cp["density"] if cp.has_section("density") else {}
            density = DensitySpec(
                kind=den.get("kind", "gaussian-product"),
                a=float(den.get("a", 1.0)),
                b=float(den.get("b", 1.0)),
                box=float(den.get("box", 1.0)))
            cut = dict(cp["cutoff"]) if cp.has_section("cutoff") else {}
        except (KeyError, ValueError, ConfigError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls(experiment_id=exp_id, d=d, ell=ell, N_list=N_list,
                   density=density, cutoff_raw=cut, times=times, M=M,
                   seed=seed, out_dir=out_dir, s_max=s_max, raw=cp,
                   source_text=text)

    def sim_config(self, N: int) -> SimConfig:
        return SimConfig(d=self.d, N=N, ell=self.ell)

    def cutoff(self, epsilon: float) -> CutoffParams:
        raw = self.cutoff_raw
        kappa = float(raw.get("kappa", 0.5))
        eta = float(raw["eta"]) if "eta" in raw else epsilon ** kappa
        return CutoffParams(
            eta=eta,
            R=float(raw.get("r", raw.get("R", 4.0))),
            alpha=float(raw.get("alpha", 0.05)),
            y=float(raw.get("y", 0.1)),
            theta=float(raw.get("theta", 0.3)),
            kappa=kappa,
            n=int(raw.get("n", 3)))

    def config_hash(self) -> str:
        return hashlib.sha256(self.source_text.encode()).hexdigest()

    def section(self, name: str) -> dict:
        if self.raw is not None and self.raw.has_section(name):
            return dict(self.raw[name])
        return {}


@dataclass
class RunManifest:
    """Reproducibility record: hash of the config text, package version,
    the master seed, task seeds, wall-clock, event counts, and outputs."""

    config_hash: str
    version: str
    seed: int
    task_seeds: list[int] = field(default_factory=list)
    wallclock: float = 0.0
    events: int = 0
    outputs: list[str] = field(default_factory=list)

    def write(self, path) -> None:
        lines = [
            f"config_hash = {self.config_hash}",
            f"version = {self.version}",
            f"seed = {self.seed}",
            f"task_seeds = {' '.join(str(s) for s in self.task_seeds)}",
            f"wallclock = {self.wallclock!r}",
            f"events = {self.events}",
        ]
        for out in self.outputs:
            lines.append(f"output = {out}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read(cls, path) -> "RunManifest":
        kv: dict[str, list[str]] = {}
        for line in Path(path).read_text().splitlines():
            if "=" not in line:
                continue
            key, _, val = line.partition("=")
            kv.setdefault(key.strip(), []).append(val.strip())
        return cls(
            config_hash=kv.get("config_hash", [""])[0],
            version=kv.get("version", [""])[0],
            seed=int(kv.get("seed", ["0"])[0]),
            task_seeds=[int(t) for t in kv.get("task_seeds", [""])[0].split()],
            wallclock=float(kv.get("wallclock", ["0"])[0]),
            events=int(kv.get("events", ["0"])[0]),
            outputs=kv.get("output", []))
