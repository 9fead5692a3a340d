"""Scenario files: a flat key/value format describing a full simulation.

A scenario is grouped into ``[section]`` blocks of ``key = value`` lines::

    [grid]
    nx = 160
    ny = 40
    nz = 1
    dx = 3.125e-9
    dy = 3.125e-9
    dz = 3e-9

    [material]
    ms = 8e5
    aex = 1.3e-11
    alpha = 0.02

    [initial]
    m = [1, 0.25, 0]

    [integrator]
    method = rk4
    dt = 2.5e-13

    [stop]
    max_time = 2e-9

Values are numbers, ``true``/``false``, bracketed 3-vectors ``[a, b, c]``,
bare words (``rk4``, ``fft``), or quoted strings.  Quoted strings hold
expressions in the x/y/z/t language of :mod:`magnex.expr`; all quantities
are SI (m, s, A/m, J/m, ...), with no unit suffixes.

Extra material regions are sections named ``[material.<name>]``; each needs
a ``region`` predicate (nonzero = inside) and overrides any subset of the
base parameters, applied in file order.  ``#`` starts a comment.  Overrides
from the command line (``--set section.key=value``) replace file values.

Everything downstream of the file lives behind :class:`ScenarioConfig`:
``build_material`` / ``build_initial`` / ``build_bias`` / ``build_rhs`` /
``build_simulation`` turn the validated config into solver objects.
"""

from __future__ import annotations

import re
import warnings

import numpy as np

from .grid import GridSpec, MaterialMap, VectorField3, renormalize
from .demag import DemagKernel
from .expr import Expr, ExprError, parse_expr
from .llg import (FAST, SLOW_EXPLICIT, SLOW_IMPLICIT, TERMS, IntegratorSpec,
                  PartitionedRHS, Simulation, SimState, StopCondition)


class ConfigError(ValueError):
    """Malformed or invalid scenario file."""


class ConfigWarning(UserWarning):
    """Legal but suspicious scenario value (likely wrong units)."""


# --- value syntax ---------------------------------------------------------

_SECTION_RE = re.compile(r"^\[([A-Za-z_][A-Za-z0-9_.-]*)\]$")
_KEY_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_.]*)\s*=\s*(.*)$")
_NUM_RE = re.compile(r"^[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?$")
_INT_RE = re.compile(r"^[+-]?\d+$")
_WORD_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_-]*$")


def _strip_comment(line: str) -> str:
    """Drop a trailing ``#`` comment, respecting double quotes."""
    in_str = False
    for i, ch in enumerate(line):
        if ch == '"':
            in_str = not in_str
        elif ch == "#" and not in_str:
            return line[:i]
    return line


def _parse_value(text: str, where: str):
    text = text.strip()
    if not text:
        raise ConfigError(f"{where}: empty value")
    if text.startswith('"'):
        if not (text.endswith('"') and len(text) >= 2):
            raise ConfigError(f"{where}: unterminated string {text!r}")
        return text[1:-1]
    if text.startswith("["):
        if not text.endswith("]"):
            raise ConfigError(f"{where}: unterminated vector {text!r}")
        parts = [p.strip() for p in text[1:-1].split(",")]
        if len(parts) != 3:
            raise ConfigError(f"{where}: vectors have exactly 3 components, got {len(parts)}")
        vals = []
        for p in parts:
            if not _NUM_RE.match(p):
                raise ConfigError(f"{where}: vector component {p!r} is not a number")
            vals.append(float(p))
        return tuple(vals)
    if text == "true":
        return True
    if text == "false":
        return False
    if _INT_RE.match(text):
        return int(text)
    if _NUM_RE.match(text):
        return float(text)
    if _WORD_RE.match(text):
        return text
    raise ConfigError(f"{where}: cannot parse value {text!r}")


def _parse_sections(text: str, source: str) -> dict[str, dict]:
    """Raw pass: file text -> ordered {section: {key: value}}."""
    sections: dict[str, dict] = {}
    current = None
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        m = _SECTION_RE.match(line)
        if m:
            name = m.group(1)
            if name in sections:
                raise ConfigError(f"{source}:{ln}: duplicate section [{name}]")
            sections[name] = {}
            current = name
            continue
        m = _KEY_RE.match(line)
        if not m:
            raise ConfigError(f"{source}:{ln}: expected 'key = value' or '[section]', got {line!r}")
        if current is None:
            raise ConfigError(f"{source}:{ln}: key before any [section] header")
        key, val = m.group(1), m.group(2)
        if key in sections[current]:
            raise ConfigError(f"{source}:{ln}: duplicate key {current}.{key}")
        sections[current][key] = _parse_value(val, f"{source}:{ln}: {current}.{key}")
    return sections


# --- schema ---------------------------------------------------------------

def _as_int(v, where):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where} expects an integer, got {v!r}")
    return v


def _as_float(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where} expects a number, got {v!r}")
    return float(v)


def _as_bool(v, where):
    if not isinstance(v, bool):
        raise ConfigError(f"{where} expects true or false, got {v!r}")
    return v


def _as_vec3(v, where):
    if not isinstance(v, tuple):
        raise ConfigError(f"{where} expects a [x, y, z] vector, got {v!r}")
    return v


def _as_str(v, where):
    if not isinstance(v, str):
        raise ConfigError(f"{where} expects a string, got {v!r}")
    return v


def _as_expr(v, where) -> Expr:
    src = _as_str(v, where)
    try:
        return parse_expr(src)
    except ExprError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_GRID_KEYS = {"nx": _as_int, "ny": _as_int, "nz": _as_int,
              "dx": _as_float, "dy": _as_float, "dz": _as_float,
              "origin": _as_vec3}
_MATERIAL_KEYS = {"ms": _as_float, "aex": _as_float, "alpha": _as_float,
                  "ku": _as_float, "dmi": _as_float, "k_axis": _as_vec3,
                  "region": _as_str}
_PHYSICS_FLAGS = ("exchange", "demag", "anisotropy", "dmi", "bias",
                  "precession", "damping")
_BIAS_KEYS = {"field": _as_vec3, "hx": _as_str, "hy": _as_str, "hz": _as_str}
_INITIAL_KEYS = {"m": _as_vec3, "mx": _as_str, "my": _as_str, "mz": _as_str}
_INTEGRATOR_KEYS = {"method": _as_str, "dt": _as_float, "theta": _as_float,
                    "renorm_each_stage": _as_bool}
_STOP_KEYS = {"max_time": _as_float, "max_steps": _as_int,
              "equilibrium_tol": _as_float}
_OUTPUT_KEYS = {"sample_every": _as_int, "energies": _as_bool,
                "out_dir": _as_str}

REQUIRED_KEYS = (
    "grid.nx", "grid.ny", "grid.nz", "grid.dx", "grid.dy", "grid.dz",
    "material.ms", "material.aex", "material.alpha",
    "initial.m (or initial.mx/my/mz)",
    "integrator.method", "integrator.dt",
    "stop.max_time (or stop.max_steps)",
)

_PARTITION_NAMES = (SLOW_EXPLICIT, FAST, SLOW_IMPLICIT)


def _check_keys(section: str, kv: dict, schema: dict) -> dict:
    out = {}
    for key, val in kv.items():
        if section == "physics":
            if key.startswith("partition."):
                term = key[len("partition."):]
                if term not in TERMS:
                    raise ConfigError(f"physics.{key}: unknown field term {term!r}")
                name = _as_str(val, f"physics.{key}")
                if name not in _PARTITION_NAMES:
                    raise ConfigError(
                        f"physics.{key}: unknown partition {name!r} "
                        f"(one of {', '.join(_PARTITION_NAMES)})")
                out[key] = name
                continue
            if key in _PHYSICS_FLAGS:
                out[key] = _as_bool(val, f"physics.{key}")
                continue
            if key == "demag_backend":
                name = _as_str(val, "physics.demag_backend")
                if name not in ("fft", "nn"):
                    raise ConfigError(f"physics.demag_backend: expected fft or nn, got {name!r}")
                out[key] = name
                continue
            if key == "model":
                out[key] = _as_str(val, "physics.model")
                continue
            raise ConfigError(f"unknown key physics.{key}")
        if key not in schema:
            raise ConfigError(f"unknown key {section}.{key}")
        out[key] = schema[key](val, f"{section}.{key}")
    return out


def _component_exprs(section: str, kv: dict, keys: tuple[str, str, str]) -> tuple:
    """Resolve a 3-vector given either as a constant triple or as exprs."""
    vec_key = "m" if section == "initial" else "field"
    if vec_key in kv:
        for k in keys:
            if k in kv:
                raise ConfigError(f"{section}: give either {vec_key} or {k}, not both")
        return tuple(parse_expr(repr(float(c))) for c in kv[vec_key])
    missing = [k for k in keys if k not in kv]
    if len(missing) == 3:
        return None
    if missing:
        raise ConfigError(f"{section}: missing {', '.join(section + '.' + k for k in missing)}")
    return tuple(_as_expr(kv[k], f"{section}.{k}") for k in keys)


class ScenarioConfig:
    """Validated scenario: typed views over the parsed sections.

    ``sections`` keeps the canonical parsed values; :meth:`dumps` rewrites
    them as scenario text, and two configs compare equal when their
    sections agree (so ``loads(cfg.dumps()) == cfg``).
    """

    def __init__(self, sections: dict[str, dict], source: str = "<config>"):
        self.sections = sections
        missing = []

        grid_kv = _check_keys("grid", sections.get("grid", {}), _GRID_KEYS)
        for k in ("nx", "ny", "nz", "dx", "dy", "dz"):
            if k not in grid_kv:
                missing.append(f"grid.{k}")

        mat_kv = _check_keys("material", sections.get("material", {}), _MATERIAL_KEYS)
        if "region" in mat_kv:
            raise ConfigError("material: the base section covers the whole grid; "
                              "put region predicates in [material.<name>] sections")
        for k in ("ms", "aex", "alpha"):
            if k not in mat_kv:
                missing.append(f"material.{k}")

        extra = []
        for name, kv in sections.items():
            if not name.startswith("material."):
                continue
            sub = _check_keys(name, kv, _MATERIAL_KEYS)
            if "region" not in sub:
                raise ConfigError(f"{name}: region predicate is required")
            pred = _as_expr(sub.pop("region"), f"{name}.region")
            if not sub:
                raise ConfigError(f"{name}: region without material overrides")
            extra.append((name, pred, sub))

        known = {"grid", "material", "physics", "bias", "initial",
                 "integrator", "stop", "output"}
        for name in sections:
            if name not in known and not name.startswith("material."):
                raise ConfigError(f"unknown section [{name}]")

        phys_kv = _check_keys("physics", sections.get("physics", {}), {})
        bias_kv = _check_keys("bias", sections.get("bias", {}), _BIAS_KEYS)
        init_kv = _check_keys("initial", sections.get("initial", {}), _INITIAL_KEYS)
        integ_kv = _check_keys("integrator", sections.get("integrator", {}), _INTEGRATOR_KEYS)
        stop_kv = _check_keys("stop", sections.get("stop", {}), _STOP_KEYS)
        out_kv = _check_keys("output", sections.get("output", {}), _OUTPUT_KEYS)

        initial = _component_exprs("initial", init_kv, ("mx", "my", "mz"))
        if initial is None:
            missing.append("initial.m (or initial.mx/my/mz)")
        bias = _component_exprs("bias", bias_kv, ("hx", "hy", "hz"))

        for k in ("method", "dt"):
            if k not in integ_kv:
                missing.append(f"integrator.{k}")
        if "max_time" not in stop_kv and "max_steps" not in stop_kv:
            missing.append("stop.max_time (or stop.max_steps)")

        if missing:
            raise ConfigError(
                f"{source}: missing required keys: {', '.join(missing)}; "
                f"a scenario needs at least {', '.join(REQUIRED_KEYS)}")

        try:
            self.grid = GridSpec(grid_kv["nx"], grid_kv["ny"], grid_kv["nz"],
                                 grid_kv["dx"], grid_kv["dy"], grid_kv["dz"],
                                 origin=grid_kv.get("origin", (0.0, 0.0, 0.0)))
        except ValueError as exc:
            raise ConfigError(f"[grid]: {exc}") from exc
        self.base_material = mat_kv
        self.extra_materials = extra
        self.bias_exprs = bias
        self.initial_exprs = initial

        self.physics = {flag: phys_kv.get(flag, default) for flag, default in
                        (("exchange", True), ("demag", True),
                         ("anisotropy", False), ("dmi", False),
                         ("bias", bias is not None),
                         ("precession", True), ("damping", True))}
        self.physics["demag_backend"] = phys_kv.get("demag_backend", "fft")
        self.physics["model"] = phys_kv.get("model")
        self.partition = {k[len("partition."):]: v for k, v in phys_kv.items()
                          if k.startswith("partition.")}
        if self.physics["bias"] and bias is None:
            raise ConfigError("physics.bias = true but no [bias] section")

        try:
            self.integrator = IntegratorSpec(
                method=integ_kv["method"], dt=integ_kv["dt"],
                theta=integ_kv.get("theta", 0.1),
                renorm_each_stage=integ_kv.get("renorm_each_stage", True))
        except ValueError as exc:
            raise ConfigError(f"[integrator]: {exc}") from exc
        try:
            self.stop = StopCondition(max_time=stop_kv.get("max_time"),
                                      max_steps=stop_kv.get("max_steps"),
                                      equilibrium_tol=stop_kv.get("equilibrium_tol"))
        except ValueError as exc:
            raise ConfigError(f"[stop]: {exc}") from exc
        self.output = {"sample_every": out_kv.get("sample_every", 1),
                       "energies": out_kv.get("energies", True),
                       "out_dir": out_kv.get("out_dir", ".")}

        if self.integrator.dt > 1.0:
            warnings.warn(f"integrator.dt = {self.integrator.dt} s is larger than "
                          "one second; time steps are in seconds", ConfigWarning)
        if self.stop.max_time is not None and self.stop.max_time > 1.0:
            warnings.warn(f"stop.max_time = {self.stop.max_time} s is larger than "
                          "one second; times are in seconds", ConfigWarning)
        if max(self.grid.dx, self.grid.dy, self.grid.dz) > 1e-3:
            warnings.warn("grid cells are larger than a millimeter; "
                          "cell sizes are in meters", ConfigWarning)

    def __eq__(self, other):
        return isinstance(other, ScenarioConfig) and self.sections == other.sections

    def __repr__(self):
        g = self.grid
        return (f"ScenarioConfig({g.nx}x{g.ny}x{g.nz}, "
                f"method={self.integrator.method!r})")

    # --- serialization ----------------------------------------------------

    def dumps(self) -> str:
        lines = []
        for name, kv in self.sections.items():
            lines.append(f"[{name}]")
            for k, v in kv.items():
                lines.append(f"{k} = {_fmt_value(v)}")
            lines.append("")
        return "\n".join(lines)

    # --- builders ---------------------------------------------------------

    def build_material(self) -> MaterialMap:
        """Evaluate region predicates and assemble the per-cell material."""
        shape = self.grid.shape
        X, Y, Z = self.grid.cell_centers()
        base = self.base_material
        per = {"Ms": np.full(shape, base["ms"]),
               "A": np.full(shape, base.get("aex", 0.0)),
               "alpha": np.full(shape, base.get("alpha", 0.0)),
               "Ku": np.full(shape, base.get("ku", 0.0)),
               "D": np.full(shape, base.get("dmi", 0.0))}
        ek = np.zeros((3,) + shape)
        for c, v in enumerate(base.get("k_axis", (0.0, 0.0, 1.0))):
            ek[c] = v
        names = {"ms": "Ms", "aex": "A", "alpha": "alpha", "ku": "Ku", "dmi": "D"}
        for name, pred, params in self.extra_materials:
            inside = pred.eval_grid(X, Y, Z, 0.0) != 0.0
            if not inside.any():
                warnings.warn(f"{name}: region matches no cells", ConfigWarning)
            for key, val in params.items():
                if key == "k_axis":
                    for c in range(3):
                        ek[c][inside] = val[c]
                else:
                    per[names[key]][inside] = val
        return MaterialMap(self.grid, per["Ms"], A=per["A"], Ku=per["Ku"],
                           eK=ek, D=per["D"], alpha=per["alpha"])

    def build_initial(self, mat: MaterialMap) -> VectorField3:
        """Evaluate the seed magnetization and renormalize it to |M| = Ms."""
        X, Y, Z = self.grid.cell_centers()
        data = np.empty((3,) + self.grid.shape)
        for c, (e, key) in enumerate(zip(self.initial_exprs, ("mx", "my", "mz"))):
            data[c] = e.eval_grid(X, Y, Z, 0.0)
            bad = mat.mask & ~np.isfinite(data[c])
            if bad.any():
                raise ConfigError(f"initial.{key} = '{e}' is not finite on "
                                  f"{int(bad.sum())} magnetic cells")
        m = VectorField3(self.grid, data)
        renormalize(m, mat)
        return m

    def build_bias(self):
        """Bias field in the cheapest form its expressions allow.

        Returns None when disabled; a constant (3,) vector; a callable
        ``t -> (3,)`` when only time-dependent; else ``t -> (3, nz, ny, nx)``.
        """
        if not self.physics["bias"]:
            return None
        exprs = self.bias_exprs
        used = frozenset().union(*(e.variables() for e in exprs))
        if not used:
            return np.array([e() for e in exprs])
        if used <= {"t"}:
            return lambda t: np.array([e(t=t) for e in exprs])
        X, Y, Z = self.grid.cell_centers()
        shape = self.grid.shape

        def spatial(t):
            out = np.empty((3,) + shape)
            for c, e in enumerate(exprs):
                out[c] = e.eval_grid(X, Y, Z, t)
            return out

        return spatial

    def build_demag(self, mat: MaterialMap | None = None, workers: int = 1):
        """The configured demag backend (FFT kernel or loaded surrogate)."""
        if not self.physics["demag"]:
            return None
        if self.physics["demag_backend"] == "fft":
            return DemagKernel.build(self.grid, workers=workers)
        if self.physics["model"] is None:
            raise ConfigError("physics.demag_backend = nn needs physics.model "
                              "(path to a weight file)")
        from .fno import FnoDemag
        return FnoDemag.load(self.physics["model"],
                             mat if mat is not None else self.build_material())

    def build_rhs(self, mat: MaterialMap | None = None, *,
                  demag=None, workers: int = 1) -> PartitionedRHS:
        if mat is None:
            mat = self.build_material()
        if demag is None:
            demag = self.build_demag(mat, workers=workers)
        return PartitionedRHS(
            mat,
            exchange=self.physics["exchange"],
            anisotropy=self.physics["anisotropy"],
            dmi=self.physics["dmi"],
            demag=demag,
            bias=self.build_bias(),
            partition=self.partition or None,
            precession=self.physics["precession"],
            damping=self.physics["damping"])

    def build_simulation(self, *, workers: int = 1, sample_callback=None,
                         demag=None) -> Simulation:
        mat = self.build_material()
        rhs = self.build_rhs(mat, demag=demag, workers=workers)
        state = SimState(m=self.build_initial(mat))
        return Simulation(state, rhs, self.integrator,
                          sample_every=self.output["sample_every"],
                          sample_callback=sample_callback,
                          energy_in_samples=self.output["energies"])


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return "[" + ", ".join(repr(float(c)) for c in v) + "]"
    if isinstance(v, str):
        return f'"{v}"'
    return repr(v)


def _apply_overrides(sections: dict[str, dict], overrides) -> None:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected section.key=value")
        path, _, text = item.partition("=")
        path = path.strip()
        head, _, rest = path.partition(".")
        if not rest:
            raise ConfigError(f"--set {item!r}: expected section.key=value")
        # material sub-sections put a dot in the section name itself
        sub, _, subkey = rest.partition(".")
        if head == "material" and subkey and f"material.{sub}" in sections:
            section, key = f"material.{sub}", subkey
        else:
            section, key = head, rest
        try:
            value = _parse_value(text, f"--set {path}")
        except ConfigError:
            value = text.strip()  # literal string (expression source, path)
        sections.setdefault(section, {})[key] = value


def loads(text: str, overrides=None, source: str = "<config>") -> ScenarioConfig:
    sections = _parse_sections(text, source)
    if overrides:
        _apply_overrides(sections, overrides)
    return ScenarioConfig(sections, source=source)


def load_config(path, overrides=None) -> ScenarioConfig:
    """Parse and validate a scenario file; ``overrides`` are --set items."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return loads(text, overrides=overrides, source=str(path))
