"""Problem specification files: INI sections parsed into typed, validated dataclasses.

A spec file looks like::

    [problem]
    kind = poisson
    seed = 0

    [mesh]
    dim = 2
    resolutions = 8, 16, 32
    order = 1

Every key is optional except ``problem.kind``; unknown sections and keys are
rejected.  Overrides use ``section.key=value``.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
import typing

from ..errors import SpecError

PROBLEM_KINDS = ("poisson", "darcy", "burgers_li", "burgers_cole_hopf", "nonlinear_elliptic")
PRIOR_KINDS = ("matern", "product_matern_like", "advection_diffusion")


def _require(cond, msg):
    if not cond:
        raise SpecError(msg)


@dataclass(frozen=True)
class ProblemSection:
    kind: str = ""
    seed: int = 0

    def __post_init__(self):
        _require(self.kind in PROBLEM_KINDS,
                 f"problem.kind must be one of {', '.join(PROBLEM_KINDS)} (got {self.kind!r})")
        _require(self.seed >= 0, "problem.seed must be non-negative")


@dataclass(frozen=True)
class MeshSection:
    dim: int = 2
    resolutions: tuple = (16,)
    order: int = 1
    boundary: str = "embedded"
    inflation_width: float = 0.15
    inflation_growth: float = 2.0

    def __post_init__(self):
        _require(self.dim in (1, 2), "mesh.dim must be 1 or 2")
        _require(len(self.resolutions) >= 1, "mesh.resolutions needs at least one entry")
        _require(all(int(r) >= 1 for r in self.resolutions), "mesh.resolutions must be positive")
        _require(self.order in (1, 2), "mesh.order must be 1 or 2")
        _require(self.boundary in ("embedded", "inflated"), "mesh.boundary must be embedded or inflated")
        _require(self.inflation_width > 0, "mesh.inflation_width must be positive")
        _require(self.inflation_growth >= 1, "mesh.inflation_growth must be at least 1")


@dataclass(frozen=True)
class PriorSection:
    kind: str = "matern"
    alpha: int = 2
    range: float = 0.2
    variance: float = 1.0
    noise_alpha: int = 2
    noise_range: float = 0.1
    initial_alpha: int = 2
    initial_range: float = 0.02
    temporal_range: float = 3.0
    advection: float = 0.0
    diffusion: float = -1.0

    def __post_init__(self):
        _require(self.kind in PRIOR_KINDS, f"prior.kind must be one of {', '.join(PRIOR_KINDS)}")
        for name in ("alpha", "noise_alpha", "initial_alpha"):
            _require(getattr(self, name) >= 1, f"prior.{name} must be a positive integer")
        for name in ("range", "variance", "noise_range", "initial_range", "temporal_range"):
            _require(getattr(self, name) > 0, f"prior.{name} must be positive")


@dataclass(frozen=True)
class ObservationSection:
    scheme: str = "fem"
    collocation_count: int = 100
    placement: str = "halton"
    noise_precision: float = 1e8
    boundary_precision: float = 1e8
    initial_precision: float = 1e8

    def __post_init__(self):
        _require(self.scheme in ("fem", "collocation"), "observations.scheme must be fem or collocation")
        _require(self.collocation_count >= 1, "observations.collocation_count must be positive")
        _require(self.placement in ("halton", "random", "lines"),
                 "observations.placement must be halton, random or lines")
        for name in ("noise_precision", "boundary_precision", "initial_precision"):
            _require(getattr(self, name) > 0, f"observations.{name} must be positive")


@dataclass(frozen=True)
class GaussNewtonSection:
    max_iters: int = 10
    decrement_tol: float = 1e-5
    linear_solver: str = "cholesky"

    def __post_init__(self):
        _require(self.max_iters >= 1, "gauss_newton.max_iters must be at least 1")
        _require(self.decrement_tol > 0, "gauss_newton.decrement_tol must be positive")
        _require(self.linear_solver in ("cholesky", "cg"), "gauss_newton.linear_solver must be cholesky or cg")


@dataclass(frozen=True)
class BurgersSection:
    nu: float = 0.1
    t_final: float = 1.0
    dt: float = 0.02
    scheme: str = "crank_nicolson"
    calibration_elements: int = 25

    def __post_init__(self):
        _require(self.nu > 0, "burgers.nu must be positive")
        _require(self.t_final > 0, "burgers.t_final must be positive")
        _require(0 < self.dt <= self.t_final, "burgers.dt must lie in (0, t_final]")
        _require(self.scheme in ("implicit_euler", "crank_nicolson"),
                 "burgers.scheme must be implicit_euler or crank_nicolson")
        _require(self.calibration_elements >= 2, "burgers.calibration_elements must be at least 2")


@dataclass(frozen=True)
class DarcySection:
    coefficient_file: str = ""
    high: float = 12.0
    low: float = 3.0
    field_range: float = 0.2
    threshold: float = 0.0
    forcing: float = 1.0

    def __post_init__(self):
        _require(self.high > 0 and self.low > 0, "darcy coefficients must be positive")
        _require(self.field_range > 0, "darcy.field_range must be positive")


@dataclass(frozen=True)
class EllipticSection:
    k_max: int = 6
    cubic: str = "lumped"

    def __post_init__(self):
        _require(self.k_max >= 1, "elliptic.k_max must be at least 1")
        _require(self.cubic in ("lumped", "quadrature"), "elliptic.cubic must be lumped or quadrature")


@dataclass(frozen=True)
class VarianceSection:
    method: str = "takahashi"
    samples: int = 0
    rbmc_samples: int = 200

    def __post_init__(self):
        _require(self.method in ("takahashi", "rbmc", "none"), "variance.method must be takahashi, rbmc or none")
        _require(self.samples >= 0, "variance.samples must be non-negative")
        _require(self.rbmc_samples >= 1, "variance.rbmc_samples must be positive")


@dataclass(frozen=True)
class OutputSection:
    directory: str = "results"
    figures: bool = True
    eval_points: int = 101

    def __post_init__(self):
        _require(self.eval_points >= 2, "output.eval_points must be at least 2")


SECTIONS = {
    "problem": ProblemSection,
    "mesh": MeshSection,
    "prior": PriorSection,
    "observations": ObservationSection,
    "gauss_newton": GaussNewtonSection,
    "burgers": BurgersSection,
    "darcy": DarcySection,
    "elliptic": EllipticSection,
    "variance": VarianceSection,
    "output": OutputSection,
}


@dataclass(frozen=True)
class ProblemSpec:
    problem: ProblemSection
    mesh: MeshSection = field(default_factory=MeshSection)
    prior: PriorSection = field(default_factory=PriorSection)
    observations: ObservationSection = field(default_factory=ObservationSection)
    gauss_newton: GaussNewtonSection = field(default_factory=GaussNewtonSection)
    burgers: BurgersSection = field(default_factory=BurgersSection)
    darcy: DarcySection = field(default_factory=DarcySection)
    elliptic: EllipticSection = field(default_factory=EllipticSection)
    variance: VarianceSection = field(default_factory=VarianceSection)
    output: OutputSection = field(default_factory=OutputSection)
    source: str = ""

    @property
    def kind(self):
        return self.problem.kind

    def as_dict(self):
        return {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}

    def replace(self, section, **values):
        """Copy with fields of one section changed (validated again)."""
        sec = dataclasses.replace(getattr(self, section), **values)
        return dataclasses.replace(self, **{section: sec})


def _convert(section, key, raw, typ):
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is tuple:
            return tuple(int(v) for v in raw.replace(",", " ").split())
        return raw
    except ValueError:
        raise SpecError(f"{section}.{key}: cannot read {raw!r} as {typ.__name__}") from None


def _field_types(cls):
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls)}


def _split_override(text):
    if "=" not in text:
        raise SpecError(f"override {text!r} must look like section.key=value")
    path, value = text.split("=", 1)
    if "." not in path:
        raise SpecError(f"override key {path!r} must look like section.key")
    section, key = path.strip().split(".", 1)
    return section, key, value


def parse_spec(text, overrides=(), source=""):
    """Parse spec text; ``overrides`` are ``section.key=value`` strings applied last."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise SpecError(f"malformed spec file: {exc}") from None
    raw = {s: dict(cp.items(s)) for s in cp.sections()}
    for item in overrides:
        section, key, value = _split_override(item)
        raw.setdefault(section, {})[key] = value
    for s in raw:
        if s not in SECTIONS:
            raise SpecError(f"unknown section [{s}]; known sections: {', '.join(SECTIONS)}")
    if "kind" not in raw.get("problem", {}):
        raise SpecError("problem.kind is required")
    # evolution problems need a space-time prior
    default_prior = "advection_diffusion" if raw["problem"]["kind"].strip().startswith("burgers") else "matern"
    raw.setdefault("prior", {}).setdefault("kind", default_prior)
    parts = {}
    for name, cls in SECTIONS.items():
        types = _field_types(cls)
        values = {}
        for key, val in raw.get(name, {}).items():
            if key not in types:
                raise SpecError(f"unknown key {name}.{key}; allowed: {', '.join(types)}")
            values[key] = _convert(name, key, val, types[key])
        parts[name] = cls(**values)
    return ProblemSpec(**parts, source=source)


def load_spec(path, overrides=()):
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise SpecError(f"cannot read spec file {p}: {exc.strerror}") from None
    return parse_spec(text, overrides, source=str(p))


def spec_to_text(spec):
    """Serialize back to the INI format (round-trips through :func:`parse_spec`)."""
    lines = []
    for name, values in spec.as_dict().items():
        lines.append(f"[{name}]")
        for key, val in values.items():
            if isinstance(val, tuple):
                val = ", ".join(str(v) for v in val)
            elif isinstance(val, bool):
                val = "true" if val else "false"
            elif isinstance(val, float):
                val = repr(val)
            lines.append(f"{key} = {val}")
        lines.append("")
    return "\n".join(lines)
