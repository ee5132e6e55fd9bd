"""Run configuration: an INI document with CLI flags layered on top."""

from __future__ import annotations

import configparser
import io
from dataclasses import asdict, dataclass, replace

from .confidence import ConfidenceParams
from .evaluation import DEFAULT_DENSITIES, EvalParams
from .matcher import ExternalMatcherSpec, MatcherConfig
from .sweep import SweepSpec

__all__ = ["RunConfig", "parse_shifts", "shifts_for_n", "SECTIONS"]


def parse_shifts(text: str) -> tuple[int, ...]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty shift list")
    try:
        return tuple(int(p) for p in parts)
    except ValueError as exc:
        raise ValueError(f"shift list must be comma-separated integers, got {text!r}") from exc


def shifts_for_n(n: int) -> tuple[int, ...]:
    """Unit-step sweep with N shifts: [0, 1] for N=2, [-K, K] for N=2K+1.

    Even N > 2 gets one more positive shift than negative ones.
    """
    if n < 2:
        raise ValueError("N must be at least 2")
    return tuple(range(-((n - 1) // 2), n // 2 + 1))


# section -> field names stored there
SECTIONS = {
    "matcher": ("matcher", "external_cmd", "format", "timeout", "d_max", "census_window", "p1", "p2", "paths", "subpixel", "lr_check"),
    "sweep": ("shifts",),
    "confidence": ("sigma",),
    "eval": ("tau", "densities", "pooled_auc", "seed"),
    "io": ("left", "right", "gt", "dataset", "out", "dump_dir", "work_dir"),
    "run": ("parallel",),
}


@dataclass(frozen=True)
class RunConfig:
    matcher: str = "builtin"
    external_cmd: str | None = None
    format: str = "pfm"
    timeout: float = 600.0
    d_max: int = 192
    census_window: tuple[int, int] = (9, 7)
    p1: int = 10
    p2: int = 120
    paths: int = 8
    subpixel: bool = True
    lr_check: bool = True
    shifts: tuple[int, ...] = (-2, -1, 0, 1, 2)
    sigma: float | None = None
    tau: float = 3.0
    densities: tuple[float, ...] = DEFAULT_DENSITIES
    pooled_auc: bool = False
    seed: int = 0
    left: str | None = None
    right: str | None = None
    gt: str | None = None
    dataset: str | None = None
    out: str = "out"
    dump_dir: str | None = None
    work_dir: str | None = None
    parallel: int | None = None

    # -- derived parameter objects -------------------------------------
    def matcher_config(self) -> MatcherConfig:
        return MatcherConfig(
            d_max=self.d_max,
            census_window=self.census_window,
            p1=self.p1,
            p2=self.p2,
            paths=self.paths,
            subpixel=self.subpixel,
            lr_check=self.lr_check,
        )

    def external_spec(self) -> ExternalMatcherSpec:
        if not self.external_cmd:
            raise ValueError("--matcher external requires --external-cmd")
        work = self.work_dir or f"{self.out}/.matcher-work"
        return ExternalMatcherSpec(self.external_cmd, work, self.format, self.timeout)

    def sweep_spec(self) -> SweepSpec:
        return SweepSpec(self.shifts)

    def confidence_params(self) -> ConfidenceParams:
        return ConfidenceParams(self.d_max, self.sigma)

    def eval_params(self) -> EvalParams:
        return EvalParams(self.tau, self.densities)

    @property
    def workers(self) -> int:
        return self.parallel if self.parallel else len(self.shifts)

    def validate(self) -> None:
        """Build every parameter object once so bad values fail early."""
        if self.matcher not in ("builtin", "external"):
            raise ValueError(f"unknown matcher {self.matcher!r}")
        self.matcher_config()
        if self.matcher == "external":
            ExternalMatcherSpec(self.external_cmd or "", ".", self.format, self.timeout)
        self.sweep_spec()
        self.confidence_params()
        self.eval_params()
        if self.parallel is not None and self.parallel < 1:
            raise ValueError("--parallel must be >= 1")

    # -- serialization --------------------------------------------------
    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        values = asdict(self)
        for section, names in SECTIONS.items():
            cp[section] = {}
            for name in names:
                v = values[name]
                if v is None:
                    continue
                cp[section][name] = _format(v)
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str, base: "RunConfig | None" = None) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.read_string(text)
        updates = {}
        for section in cp.sections():
            if section not in SECTIONS:
                raise ValueError(f"unknown config section [{section}]")
            for name, raw in cp[section].items():
                if name not in SECTIONS[section]:
                    raise ValueError(f"unknown key {name!r} in [{section}]")
                updates[name] = _parse(name, raw)
        return replace(base or cls(), **updates)

    def with_overrides(self, **kwargs) -> "RunConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_INT_FIELDS = {"d_max", "p1", "p2", "paths", "seed", "parallel"}
_FLOAT_FIELDS = {"timeout", "sigma", "tau"}
_BOOL_FIELDS = {"subpixel", "lr_check", "pooled_auc"}


def _parse(name: str, raw: str) -> object:
    raw = raw.strip()
    if name in _BOOL_FIELDS:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if name in _INT_FIELDS:
        return int(raw)
    if name in _FLOAT_FIELDS:
        return float(raw)
    if name == "shifts":
        return parse_shifts(raw)
    if name == "census_window":
        w = parse_shifts(raw)
        if len(w) != 2:
            raise ValueError("census_window needs two integers: width,height")
        return w
    if name == "densities":
        return tuple(float(x) for x in raw.split(","))
    return raw
