"""Run configuration: a sectioned ``key = value`` text format with strict
key checking, typed defaults and a resolved-manifest writer."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError
from .geometry import MEASURE_KINDS


def _int(v: str) -> int:
    return int(v)


def _float(v: str) -> float:
    x = float(v)
    if not math.isfinite(x):
        raise ValueError("not finite")
    return x


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true/false")


def _str(v: str) -> str:
    return v.strip()


def _float_or(word: str) -> Callable[[str], Any]:
    def parse(v: str):
        return word if v.strip() == word else _float(v)
    return parse


def _str_list(v: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in v.split(",") if x.strip())


def _float_list(v: str) -> tuple:
    return tuple("off" if x == "off" else _float(x) for x in _str_list(v))


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Any]]] = {
    "domain": {
        "family": (_str, "square"),
        "generation": (_int, 0),
        "side": (_float, 1.0),
        "a": (_float, 0.55),
        "alpha": (_float, 0.8),
        "beta": (_float, 1.2),
        "theta": (_float, math.pi / 4),
        "gamma": (_float, 0.5),
        "L": (_float, 1.0),
        "l": (_float, 1.0),
        "segments": (_int, 16),
    },
    "mesh": {
        "refine": (_int, 3),
        "smooth": (_bool, True),
    },
    "measure": {
        "kind": (_str, "sigma"),
        "total_mass": (_float, 1.0),
        "smooth_scale": (_float, 1.0),
        "fractal_dirichlet": (_bool, False),
    },
    "form": {
        "s": (_float_or("off"), 0.5),
        "eta": (_float, 0.5),
        "lumped": (_bool, False),
    },
    "nonlinearity": {
        "name": (_str, "chaffee_infante"),
        "kappa": (_float, 1.0),
    },
    "time": {
        "scheme": (_str, "imex"),
        "dt": (_float_or("auto"), "auto"),
        "T": (_float, 1.0),
        "snapshot_stride": (_int, 10),
        "init": (_str, "random:1"),
        "newton_tol": (_float, 1e-10),
        "newton_max": (_int, 50),
    },
    "spectrum": {
        "k": (_int, 6),
        "method": (_str, "dense"),
    },
    "equilibria": {
        "seed_scale": (_float, 1.0),
        "tol": (_float, 1e-10),
        "max_iter": (_int, 50),
        "min_distance": (_float, 1e-4),
    },
    "suite": {
        "domains": (_str_list, ("square", "koch", "tree")),
        "measures": (_str_list, ("sigma", "hausdorff-d", "dirichlet")),
        "s_values": (_float_list, (0.25, 0.5, 0.75)),
        "seeds": (_int, 5),
        "steps": (_int, 40),
        "dt": (_float, 0.01),
        "mazya_samples": (_int, 200),
    },
    "output": {
        "dir": (_str, "run"),
        "seed": (_int, 0),
    },
}

FAMILIES = ("square", "koch", "tree", "cusp")
SCHEMES = ("imex", "implicit")


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration; ``values[section][key]``."""

    values: dict

    def __getitem__(self, item: str) -> dict:
        return self.values[item]

    def get(self, section: str, key: str):
        return self.values[section][key]

    def with_value(self, section: str, key: str, value) -> "RunConfig":
        vals = {k: dict(v) for k, v in self.values.items()}
        vals[section][key] = value
        return RunConfig(vals)

    @property
    def output_dir(self) -> Path:
        return Path(self.values["output"]["dir"])


def _fail(field: str, msg: str):
    raise ConfigError(f"{field}: {msg}")


def validate(cfg: RunConfig) -> None:
    d, m, fm, t = cfg["domain"], cfg["measure"], cfg["form"], cfg["time"]
    if d["family"] not in FAMILIES:
        _fail("domain.family", f"unknown family {d['family']!r}; expected one of {', '.join(FAMILIES)}")
    if d["generation"] < 0:
        _fail("domain.generation", "must be >= 0")
    if not 0 <= cfg["mesh"]["refine"] <= 8:
        _fail("mesh.refine", "must be between 0 and 8")
    if m["kind"] not in MEASURE_KINDS:
        _fail("measure.kind", f"unknown kind {m['kind']!r}; expected one of {', '.join(MEASURE_KINDS)}")
    if m["total_mass"] <= 0:
        _fail("measure.total_mass", "must be positive")
    if fm["s"] != "off" and not 0 < fm["s"] < 1:
        _fail("form.s", "must lie in (0, 1) or be 'off'")
    if fm["eta"] <= 0:
        _fail("form.eta", "must be positive")
    if t["scheme"] not in SCHEMES:
        _fail("time.scheme", f"unknown scheme {t['scheme']!r}; expected imex or implicit")
    if t["dt"] != "auto" and t["dt"] <= 0:
        _fail("time.dt", "must be positive or 'auto'")
    if t["T"] <= 0:
        _fail("time.T", "must be positive")
    if t["snapshot_stride"] < 1:
        _fail("time.snapshot_stride", "must be >= 1")
    parse_init(t["init"])
    if cfg["spectrum"]["k"] < 1:
        _fail("spectrum.k", "must be >= 1")
    if cfg["spectrum"]["method"] not in ("dense", "shift-invert"):
        _fail("spectrum.method", "expected dense or shift-invert")
    su = cfg["suite"]
    for dom in su["domains"]:
        if dom not in ("square", "koch", "tree", "triangle"):
            _fail("suite.domains", f"unknown domain {dom!r}")
    for kind in su["measures"]:
        if kind not in MEASURE_KINDS + ("zero",):
            _fail("suite.measures", f"unknown measure {kind!r}")
    for s in su["s_values"]:
        if s != "off" and not 0 < s < 1:
            _fail("suite.s_values", f"s={s} outside (0, 1)")


def parse_init(spec: str) -> tuple[str, Any]:
    """``zero``, ``const:<c>``, ``random:<amp>``, ``eig:<i>`` or ``file:<path>``."""
    name, _, arg = spec.partition(":")
    try:
        if name == "zero" and not arg:
            return "zero", None
        if name == "const":
            return "const", _float(arg)
        if name == "random":
            return "random", _float(arg)
        if name == "eig":
            i = int(arg)
            if i < 1:
                raise ValueError("index starts at 1")
            return "eig", i
        if name == "file" and arg:
            return "file", arg
    except ValueError as exc:
        _fail("time.init", f"bad initializer {spec!r}: {exc}")
    _fail("time.init", f"unknown initializer {spec!r}; expected zero, const:c, random:amp, eig:i or file:path")


def defaults() -> RunConfig:
    return RunConfig({sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()})


def parse_config(text: str, source: str = "<config>", manifest: bool = False) -> RunConfig:
    """Parse and validate; with ``manifest`` the informational ``run``
    section written by :func:`render_config` is ignored."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    vals = defaults().values
    for sec in parser.sections():
        if manifest and sec == "run":
            continue
        if sec not in SCHEMA:
            _fail(sec, f"unknown section; expected one of {', '.join(SCHEMA)}")
        for key, raw in parser.items(sec):
            if key not in SCHEMA[sec]:
                _fail(f"{sec}.{key}", "unknown key")
            conv = SCHEMA[sec][key][0]
            try:
                vals[sec][key] = conv(raw)
            except ValueError as exc:
                _fail(f"{sec}.{key}", f"cannot parse {raw!r}: {exc}")
    cfg = RunConfig(vals)
    validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, tuple):
        return ", ".join(_render(x) for x in v)
    return str(v)


def render_config(cfg: RunConfig, extra: dict | None = None) -> str:
    """Text of every resolved value; re-parses to the same configuration
    (the ``run`` section in ``extra`` is informational)."""
    out = []
    for sec in SCHEMA:
        out.append(f"[{sec}]")
        out += [f"{k} = {_render(cfg.values[sec][k])}" for k in SCHEMA[sec]]
        out.append("")
    for sec, items in (extra or {}).items():
        out.append(f"[{sec}]")
        out += [f"{k} = {_render(v)}" for k, v in items.items()]
        out.append("")
    return "\n".join(out)
