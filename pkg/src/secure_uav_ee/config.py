"""Flat ``key = value`` scenario files.

One assignment per line; ``#`` starts a comment.  Keys are case-insensitive
field names of :class:`~secure_uav_ee.model.Scenario`, its ``flight`` block
and its ``iter`` block.  Logarithmic inputs carry a unit suffix and are
converted once, here:

* ``<name>_db``  -> linear ratio (``gamma_th_db``, ``beta0_db``)
* ``<name>_dbm`` -> watts, or W/Hz for the noise density (``n0_dbm``,
  ``p_peak_dbm``, ``p_max_dbm``, ``p_c_dbm``)

Coordinates are written ``x, y``; the user list separates points with ``;``.
Omitted keys keep the defaults of ``Scenario``.

Example::

    # larger uncertainty disc, weak transmitter
    q_e = 400
    p_peak = 0.01
    gamma_th_db = -40
    user_positions = 700, 900; 900, 900; 900, 700
"""

from __future__ import annotations

import dataclasses
import math
from pathlib import Path

from .model import FlightParams, IterParams, Scenario, db_to_linear, dbm_to_watts


class ConfigError(ValueError):
    pass


_SCEN = {f.name.lower(): f.name for f in dataclasses.fields(Scenario) if f.name not in ("flight", "iter")}
_FLIGHT = {f.name.lower(): f.name for f in dataclasses.fields(FlightParams)}
_ITER = {f.name.lower(): f.name for f in dataclasses.fields(IterParams)}
_INT_KEYS = {"K", "N_F", "N", "G_max_algo1", "J_max_algo2", "J_inner_max_algo2", "L_max_algo3", "g_inner_max"}
_POINT_KEYS = {"eaves_estimate", "t0", "tF"}
_DB_KEYS = {"gamma_th", "beta0"}
_DBM_KEYS = {"n0", "p_peak", "p_max", "p_c"}
#: Extra keys accepted but not part of the scenario.
RUN_KEYS = {"seed"}


def _point(text: str, where: str):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"{where}: expected 'x, y', got {text!r}")
    return tuple(_number(p, where) for p in parts)


def _number(text: str, where: str) -> float:
    low = text.strip().lower()
    if low in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{where}: not a number: {text!r}") from None


def parse_config(text: str, source: str = "<config>"):
    """Parse config text into ``(Scenario, extras)`` without validating the scenario."""
    scen, flight, iters, extras = {}, {}, {}, {}
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key_l = key.lower()
        if not value:
            raise ConfigError(f"{where}: empty value for {key!r}")
        base, unit = key_l, None
        for suffix in ("_dbm", "_db"):
            if key_l.endswith(suffix):
                base, unit = key_l[: -len(suffix)], suffix[1:]
                break
        if unit == "db" and base not in _DB_KEYS or unit == "dbm" and base not in _DBM_KEYS:
            raise ConfigError(f"{where}: {key!r} does not accept a {unit} value")
        if base in seen:
            raise ConfigError(f"{where}: {key!r} already set on line {seen[base]}")
        seen[base] = lineno
        where = f"{where} ({key})"
        if base in RUN_KEYS:
            extras[base] = int(_number(value, where))
        elif base in _SCEN:
            name = _SCEN[base]
            if name == "user_positions":
                scen[name] = tuple(_point(p, where) for p in value.split(";") if p.strip())
            elif name in _POINT_KEYS:
                scen[name] = _point(value, where)
            else:
                x = _number(value, where)
                if unit == "db":
                    x = db_to_linear(x)
                elif unit == "dbm":
                    x = dbm_to_watts(x)
                scen[name] = _as_int(x, where) if name in _INT_KEYS else x
        elif base in _FLIGHT:
            flight[_FLIGHT[base]] = _number(value, where)
        elif base in _ITER:
            name = _ITER[base]
            x = _number(value, where)
            iters[name] = _as_int(x, where) if name in _INT_KEYS else x
        else:
            raise ConfigError(f"{where}: unknown key")
    if "user_positions" in scen and "K" not in scen:
        scen["K"] = len(scen["user_positions"])
    sc = Scenario(**scen, flight=FlightParams(**flight), iter=IterParams(**iters))
    return sc, extras


def _as_int(x: float, where: str) -> int:
    if not float(x).is_integer():
        raise ConfigError(f"{where}: expected an integer, got {x}")
    return int(x)


def load_config(path) -> Scenario:
    """Read and validate a scenario file; raises :class:`ConfigError` on any problem."""
    return load_config_with_extras(path)[0]


def load_config_with_extras(path):
    from .model import validate_scenario

    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    sc, extras = parse_config(text, str(path))
    diag = validate_scenario(sc)
    if diag.violations:
        raise ConfigError(f"{path}: invalid scenario: " + "; ".join(diag.violations))
    return sc, extras


def scenario_to_dict(sc: Scenario) -> dict:
    """SI echo of a scenario (JSON-friendly; infinities become strings)."""
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return "inf" if v > 0 else "-inf"
        if isinstance(v, tuple):
            return [clean(x) for x in v]
        return v

    out = {f.name: clean(getattr(sc, f.name)) for f in dataclasses.fields(sc) if f.name not in ("flight", "iter")}
    out["flight"] = dataclasses.asdict(sc.flight)
    out["iter"] = dataclasses.asdict(sc.iter)
    return out


def scenario_from_dict(d: dict) -> Scenario:
    def num(v):
        return float(v) if isinstance(v, str) else v

    kw = {k: v for k, v in d.items() if k not in ("flight", "iter")}
    for k in ("Gamma_th", "Q_E", "R_min"):
        if k in kw:
            kw[k] = num(kw[k])
    kw["user_positions"] = tuple(tuple(p) for p in kw["user_positions"])
    return Scenario(**kw, flight=FlightParams(**d["flight"]), iter=IterParams(**d["iter"]))
