"""Experiment configuration: TOML in, validated dataclass out.

A configuration file has the sections ``[experiment]``, ``[model]``,
``[lattice]``, ``[cut]``, ``[flow]``, ``[filter]``, ``[output]`` and
``[tolerances]``; see ``configs/tfim_n10.toml`` for a complete example.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .errors import ConfigError, DomainError, StructuralError
from .hamiltonian import DIMENSION_CAP, make_path
from .lattice import Lattice
from .quasiflow import FilterFunction

DEFAULT_TOLERANCES = {
    "unitarity": 1e-8,
    "support": 1e-8,
    "overlap": 1e-9,
    "tail": 1e-10,
    "theorem": 1e-9,
}

MODEL_PARAMS = {
    "tfim": {"lam", "profile"},
    "field_ramp": {"eps"},
    "random": {"eps", "seed"},
}


@dataclass
class ExperimentConfig:
    name: str
    seed: int
    family: str
    model_params: dict
    gap_floor: float
    extents: tuple
    region: tuple
    s_grid: tuple
    R_list: tuple
    steps: int = 200
    gap_scan_points: int = 21
    filter_profile: str = "linear"
    filter_gamma: float = None
    filter_T: float = None
    filter_nodes: int = 400
    output_dir: str = "runs/default"
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))

    # -- construction ------------------------------------------------------

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data):
        known = {"experiment", "model", "lattice", "cut", "flow", "filter", "output", "tolerances"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        exp = dict(data.get("experiment", {}))
        model = dict(data.get("model", {}))
        lat = dict(data.get("lattice", {}))
        cut = dict(data.get("cut", {}))
        flow = dict(data.get("flow", {}))
        filt = dict(data.get("filter", {}))
        out = dict(data.get("output", {}))
        tol = dict(DEFAULT_TOLERANCES)
        for k, v in data.get("tolerances", {}).items():
            if k not in DEFAULT_TOLERANCES:
                raise ConfigError(f"unknown tolerance {k!r}")
            tol[k] = float(v)

        family = model.pop("family", None)
        if family not in MODEL_PARAMS:
            raise ConfigError(f"model.family must be one of {sorted(MODEL_PARAMS)}, got {family!r}")
        if "gap_floor" not in model:
            raise ConfigError("model.gap_floor is required")
        gap_floor = float(model.pop("gap_floor"))
        bad = set(model) - MODEL_PARAMS[family]
        if bad:
            raise ConfigError(f"unknown parameters for {family}: {sorted(bad)}")

        if "extents" not in lat:
            raise ConfigError("lattice.extents is required")
        extents = tuple(int(e) for e in lat["extents"])

        if "region" in cut:
            region = tuple(int(x) for x in cut["region"])
        elif "interval" in cut:
            a, b = (int(x) for x in cut["interval"])
            region = tuple(range(a, b + 1))
        else:
            raise ConfigError("cut needs 'region' (site list) or 'interval' = [start, stop]")

        try:
            cfg = cls(
                name=str(exp.get("name", "experiment")),
                seed=int(exp.get("seed", 0)),
                family=family,
                model_params=model,
                gap_floor=gap_floor,
                extents=extents,
                region=region,
                s_grid=tuple(float(s) for s in flow.get("s_grid", [0.0, 1.0])),
                R_list=tuple(int(R) for R in flow.get("R_list", [1])),
                steps=int(flow.get("steps", 200)),
                gap_scan_points=int(flow.get("gap_scan_points", 21)),
                filter_profile=str(filt.get("profile", "linear")),
                filter_gamma=None if filt.get("gamma") is None else float(filt["gamma"]),
                filter_T=None if filt.get("T") is None else float(filt["T"]),
                filter_nodes=int(filt.get("nodes", 400)),
                output_dir=str(out.get("dir", "runs/default")),
                tolerances=tol,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg

    # -- checks ----------------------------------------------------------------

    def validate(self):
        try:
            lattice = Lattice(self.extents)
        except DomainError as exc:
            raise ConfigError(str(exc)) from None
        n = lattice.n_sites
        if 2**n > DIMENSION_CAP:
            raise ConfigError(f"{n} sites exceed the dense dimension cap {DIMENSION_CAP}")
        if len(set(self.region)) != len(self.region):
            raise ConfigError("cut region has duplicate sites")
        if any(not 0 <= u < n for u in self.region):
            raise ConfigError(f"cut region {self.region} has sites outside the lattice")
        if not self.region or len(self.region) == n:
            raise ConfigError("cut region must be a proper, non-empty subset")
        if not self.s_grid:
            raise ConfigError("s_grid must not be empty")
        if any(not 0.0 <= s <= 1.0 for s in self.s_grid):
            raise ConfigError("s_grid must lie in [0, 1]")
        if list(self.s_grid) != sorted(set(self.s_grid)):
            raise ConfigError("s_grid must be strictly increasing")
        if any(R < 1 for R in self.R_list) or list(self.R_list) != sorted(set(self.R_list)):
            raise ConfigError("R_list must be positive and strictly increasing")
        if self.steps < 1:
            raise ConfigError("flow.steps must be positive")
        for s in self.s_grid:
            k = s * self.steps
            if abs(k - round(k)) > 1e-9:
                raise ConfigError(f"s = {s} is not a multiple of 1/steps = {1 / self.steps:g}")
        if self.gap_floor <= 0:
            raise ConfigError("model.gap_floor must be positive")
        if self.filter_profile not in FilterFunction.PROFILES:
            raise ConfigError(f"unknown filter profile {self.filter_profile!r}")
        if self.gamma <= 0 or self.gamma > self.gap_floor * (1 + 1e-12):
            raise ConfigError("filter.gamma must lie in (0, gap_floor]")
        try:
            self.build_path()
        except (StructuralError, DomainError, TypeError) as exc:
            raise ConfigError(f"cannot build model: {exc}") from None
        return self

    # -- derived objects -----------------------------------------------------

    @property
    def gamma(self):
        return self.gap_floor if self.filter_gamma is None else self.filter_gamma

    def lattice(self):
        return Lattice(self.extents)

    def cut(self):
        lat = self.lattice()
        return lat.cut(lat.region(self.region))

    def build_path(self):
        params = dict(self.model_params)
        if self.family == "random":
            params.setdefault("seed", self.seed)
        return make_path(self.family, self.lattice(), gap_floor=self.gap_floor, **params)

    def filter(self):
        return FilterFunction(self.gamma, self.filter_profile, T=self.filter_T, nodes=self.filter_nodes)

    def rng(self, stream=0):
        return np.random.default_rng([self.seed, stream])

    def to_dict(self):
        d = asdict(self)
        d["extents"] = list(self.extents)
        d["region"] = list(self.region)
        d["s_grid"] = list(self.s_grid)
        d["R_list"] = list(self.R_list)
        return d

    def hash(self):
        """SHA-256 of the canonical JSON form (sorted keys, output location excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"), default=float)
        return hashlib.sha256(blob.encode()).hexdigest()


def load_config(path):
    return ExperimentConfig.from_file(path)
