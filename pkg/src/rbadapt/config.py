"""Experiment configuration: INI-style key/value file with sections.

Grammar (configparser syntax)::

    [model]
    kind = burgers | convdiff | thermal
    n = 500            ; state dimension (burgers/convdiff)
    K = 100            ; time steps
    directory = path   ; thermal matrix files
    T = 100.0          ; thermal time horizon

    [greedy]
    algorithm = standard | adaptive-sampling | adaptive-deim | fully-adaptive
    tol = 1e-5
    max_iterations = 50
    n_add_mode = adaptive | <positive integer>

    [kernel]
    kind = gaussian | tps | mq | imq
    sigma = 1.0        ; initial shape parameter (ignored for tps)
    loocv = true

    [sampling]
    coarse = random:10 | equidistant:5x5 | log_equidistant:4x4x4
    fine = random:300 | ...
    test = random:100 | ...
    seed_coarse = 112
    seed_fine = 114
    seed_test = 200

    [output]
    directory = out
    threads = 1        ; 0 = auto
"""

from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass, field

from . import rbf
from .fom import build_burgers, build_convdiff, load_thermal
from .greedy import GreedyConfig
from .io import generate_parameter_set

ALGORITHMS = ("standard", "adaptive-sampling", "adaptive-deim", "fully-adaptive")


class ConfigError(ValueError):
    pass


@dataclass
class SamplingSpec:
    mode: str  # random | equidistant | log_equidistant
    count: int | None = None
    counts: list | None = None

    @classmethod
    def parse(cls, text):
        text = text.strip()
        if ":" not in text:
            raise ConfigError(f"bad sampling spec {text!r} (want mode:counts)")
        mode, arg = text.split(":", 1)
        mode = mode.strip()
        if mode == "random":
            try:
                return cls(mode, count=int(arg))
            except ValueError:
                raise ConfigError(f"bad random count {arg!r}") from None
        if mode in ("equidistant", "log_equidistant"):
            try:
                return cls(mode, counts=[int(c) for c in arg.split("x")])
            except ValueError:
                raise ConfigError(f"bad grid counts {arg!r}") from None
        raise ConfigError(f"unknown sampling mode {mode!r}")

    def generate(self, domain, seed):
        if self.mode == "random":
            return generate_parameter_set(domain, "random", seed=seed, count=self.count)
        return generate_parameter_set(domain, self.mode, counts=self.counts)


@dataclass
class ExperimentConfig:
    model: str
    n: int
    K: int
    thermal_directory: str | None
    thermal_T: float
    algorithm: str
    tol: float
    max_iterations: int
    n_add_mode: object
    kernel: rbf.KernelKind
    loocv: bool
    coarse: SamplingSpec
    fine: SamplingSpec | None
    test: SamplingSpec
    seed_coarse: int
    seed_fine: int
    seed_test: int
    output_dir: str
    threads: int = 1
    source_path: str | None = field(default=None, compare=False)

    def config_hash(self):
        payload = repr(sorted(self.__dict__.items(), key=lambda kv: kv[0]))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def seeds_meta(self):
        return {
            "seed_coarse": self.seed_coarse,
            "seed_fine": self.seed_fine,
            "seed_test": self.seed_test,
        }

    def build_model(self):
        if self.model == "burgers":
            return build_burgers(self.n, self.K)
        if self.model == "convdiff":
            return build_convdiff(self.n, self.K)
        return load_thermal(self.thermal_directory, K=self.K, T=self.thermal_T)

    def build_sets(self, fom):
        coarse = self.coarse.generate(fom.param_domain, self.seed_coarse)
        fine = (self.fine.generate(fom.param_domain, self.seed_fine)
                if self.fine is not None else [])
        test = self.test.generate(fom.param_domain, self.seed_test)
        return coarse, fine, test

    def greedy_config(self):
        return GreedyConfig(
            tol=self.tol,
            max_iterations=self.max_iterations,
            n_add_mode=self.n_add_mode,
            kernel=self.kernel,
            loocv=self.loocv,
            threads=self.threads,
        )


def load_config(path) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc

    def get(section, key, default=None, required=False):
        if cp.has_option(section, key):
            return cp.get(section, key).strip()
        if required:
            raise ConfigError(f"missing [{section}] {key} in {path}")
        return default

    model = get("model", "kind", required=True)
    if model not in ("burgers", "convdiff", "thermal"):
        raise ConfigError(f"unknown model kind {model!r}")
    thermal_dir = get("model", "directory")
    if model == "thermal":
        if not thermal_dir:
            raise ConfigError("thermal model needs [model] directory")
        if not os.path.isdir(thermal_dir):
            raise ConfigError(f"thermal matrix directory does not exist: {thermal_dir}")

    algorithm = get("greedy", "algorithm", required=True)
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")

    n_add_raw = get("greedy", "n_add_mode", "adaptive")
    if n_add_raw == "adaptive":
        n_add_mode = "adaptive"
    else:
        try:
            n_add_mode = int(n_add_raw)
        except ValueError:
            raise ConfigError(f"bad n_add_mode {n_add_raw!r}") from None
        if n_add_mode < 1:
            raise ConfigError("fixed n_add must be >= 1")

    kern_kind = get("kernel", "kind", "imq")
    sigma_raw = get("kernel", "sigma")
    try:
        sigma = None if (kern_kind == "tps" or sigma_raw is None) else float(sigma_raw)
        kernel = rbf.KernelKind(kern_kind, sigma if sigma is not None else
                                (None if kern_kind == "tps" else 1.0))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    fine_raw = get("sampling", "fine")
    needs_fine = algorithm in ("adaptive-sampling", "fully-adaptive")
    if needs_fine and not fine_raw:
        raise ConfigError(f"algorithm {algorithm} needs [sampling] fine")

    def get_float(section, key, default=None, required=False):
        raw = get(section, key, default=default, required=required)
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"bad numeric value for [{section}] {key}: {raw!r}") from None

    def get_int(section, key, default=None, required=False):
        raw = get(section, key, default=default, required=required)
        try:
            return int(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"bad integer value for [{section}] {key}: {raw!r}") from None

    tol = get_float("greedy", "tol", required=True)
    if tol <= 0:
        raise ConfigError("tol must be positive")

    return ExperimentConfig(
        model=model,
        n=get_int("model", "n", default="500"),
        K=get_int("model", "K", default="100"),
        thermal_directory=thermal_dir,
        thermal_T=get_float("model", "T", default="100.0"),
        algorithm=algorithm,
        tol=tol,
        max_iterations=get_int("greedy", "max_iterations", default="100"),
        n_add_mode=n_add_mode,
        kernel=kernel,
        loocv=get("kernel", "loocv", "true").lower() in ("1", "true", "yes"),
        coarse=SamplingSpec.parse(get("sampling", "coarse", required=True)),
        fine=SamplingSpec.parse(fine_raw) if fine_raw else None,
        test=SamplingSpec.parse(get("sampling", "test", required=True)),
        seed_coarse=get_int("sampling", "seed_coarse", default="112"),
        seed_fine=get_int("sampling", "seed_fine", default="114"),
        seed_test=get_int("sampling", "seed_test", default="200"),
        output_dir=get("output", "directory", "out"),
        threads=get_int("output", "threads", default="1"),
        source_path=str(path),
    )
