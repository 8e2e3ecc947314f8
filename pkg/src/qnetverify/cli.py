"""Command-line runner: ``qnet-verify <experiment> [--config PATH] [--seed N] [--out PATH] [--trace]``.

Also ``qnet-verify run --config PATH``, ``qnet-verify validate --config PATH``
and ``qnet-verify presets``.  Exit codes: 0 ok, 1 runtime failure, 2 config error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import subprocess
import sys
import time
from dataclasses import dataclass
from importlib import metadata, resources
from pathlib import Path

from . import experiments as ex
from .noise import NoiseBudget

EXPERIMENTS = tuple(ex.RECIPES)
FORMATS = ("csv", "json")
COMMON_KEYS = {"experiment", "seed", "format", "out"}


@dataclass(frozen=True)
class Diagnostic:
    path: str
    message: str
    line: int | None = None

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line else ""
        return f"{where}{self.path}: {self.message}"


class ConfigError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("; ".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


# ---- field checks; each returns an error message or None ----

def _int(lo: int = 1, hi: int | None = None):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, int):
            return "expected an integer"
        if v < lo or (hi is not None and v > hi):
            return f"{v} outside [{lo}, {hi if hi is not None else 'inf'}]"
        return None
    return check


def _real(lo: float = -math.inf, hi: float = math.inf, open_lo: bool = False):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return "expected a number"
        if v < lo or v > hi or (open_lo and v == lo):
            return f"{v} outside {'(' if open_lo else '['}{lo}, {hi}]"
        return None
    return check


def _choice(options):
    def check(v):
        return None if v in options else f"{v!r} not one of {list(options)}"
    return check


def _list_of(inner, allow_scalar: bool = False):
    def check(v):
        if allow_scalar and not isinstance(v, list):
            return inner(v)
        if not isinstance(v, list) or not v:
            return "expected a non-empty list"
        for x in v:
            msg = inner(x)
            if msg:
                return msg
        return None
    return check


def _bool(v):
    return None if isinstance(v, bool) else "expected true or false"


def _grid(v):
    if isinstance(v, dict):
        missing = {"start", "stop", "num"} - set(v)
        if missing:
            return f"grid object missing {sorted(missing)}"
        return _int(1)(v["num"]) or _real()(v["start"]) or _real()(v["stop"])
    return _list_of(_real())(v)


def _noise(v):
    if v is None:
        return None
    if not isinstance(v, dict):
        return "expected an object of noise parameters"
    try:
        NoiseBudget.from_dict(v)
    except (TypeError, ValueError) as e:
        return str(e)
    return None


def _gates(v):
    if not isinstance(v, list):
        return "expected a list of gates"
    for g in v:
        if not isinstance(g, dict) or "name" not in g or "qubits" not in g:
            return "each gate needs 'name' and 'qubits'"
        try:
            ex.gate_from_dict(g)
        except (TypeError, ValueError, KeyError) as e:
            return f"bad gate {g}: {e}"
    return None


def _prep(v):
    if isinstance(v, str):
        return _choice(ex.NAMED_PREPS)(v)
    if isinstance(v, dict):
        if v.get("random") is True:
            return None
        return _gates(v.get("gates"))
    return _gates(v)


def _unitary(v):
    if not isinstance(v, dict):
        return "expected an object"
    if v.get("rotated"):
        return None
    if _int(1, 12)(v.get("n")):
        return "'n' must be an integer in [1, 12]"
    if "random" in v:
        return _choice(("brickwork", "clifford"))(v["random"])
    return _gates(v.get("gates"))


def _plan(v):
    if not isinstance(v, dict):
        return "expected an object"
    unknown = set(v) - {"m_b", "m_s", "L", "K", "exhaustive"}
    if unknown:
        return f"unknown plan keys {sorted(unknown)}"
    try:
        ex.plan_from(v)
    except (TypeError, ValueError) as e:
        return str(e)
    return None


def _budget(v):
    return _noise(v) if isinstance(v, dict) else "expected an object of noise parameters"


def _pair(v):
    if not isinstance(v, list) or len(v) != 2:
        return "expected [optimistic, pessimistic]"
    return _real(0, 1, open_lo=True)(v[0]) or _real(0, 1, open_lo=True)(v[1])


def _mc(v):
    if not isinstance(v, dict):
        return "expected an object"
    for k, chk in (("shots", _int(1)), ("n_max", _int(1, 12))):
        if k in v and chk(v[k]):
            return f"{k}: {chk(v[k])}"
    if "decay" in v and v["decay"] not in ("idle", "transit"):
        return "decay must be 'idle' or 'transit'"
    return None


def _coverage(v):
    if not isinstance(v, dict):
        return "expected an object"
    if "experiments" in v and _int(10)(v["experiments"]):
        return "experiments: " + _int(10)(v["experiments"])
    if "m" in v:
        return _list_of(_int(1))(v["m"])
    return None


STATE_FIELDS = {
    "scheme": _choice(ex.SCHEMES), "n": _list_of(_int(1, 12), allow_scalar=True), "shots": _int(1),
    "prep_a": _prep, "prep_b": _prep, "noise": _noise, "return_qubits": _bool,
    "visibility": _real(0, 1), "alpha": _real(0, 1, open_lo=True),
}
SCHEMA = {
    "state-compare": STATE_FIELDS,
    "fig5": {"scheme": _choice(ex.SCHEMES), "shots": _int(1), "theta_grid": _grid, "phi_grid": _grid,
             "noise": _noise},
    "comp-compare": {"method": _choice(ex.COMP_METHODS), "u_l": _unitary, "u_r": _unitary,
                     "test": _choice(("swap", "bell")), "shots": _int(1), "plan": _plan, "noise": _noise,
                     "repetitions": _int(1)},
    "fig2d": {"methods": _list_of(_choice(("m1", "m2-design", "m2-fsq", "m3"))), "phi_grid": _grid,
              "shots": _int(24)},
    "fig3": {"n": _int(1, 10), "repetitions": _int(1), "m_b": _list_of(_int(1)), "m_s": _int(1),
             "trials": _int(2), "strategies": _list_of(_choice(ex.FIG3_STRATEGIES)),
             "bootstrap_resamples": _int(100), "max_angle": _real(0, math.pi)},
    "model-sweep": {"n_range": _list_of(_int(1)), "budget_lo": _budget, "budget_hi": _budget,
                    "f_gate_s2": _pair, "monte_carlo": _mc},
    "stats": {"p_succ": _real(0, 1), "alphas": _list_of(_real(0, 1, open_lo=True)),
              "m_grid": _list_of(_int(1)), "eps_target": _real(0, 1), "coverage": _coverage},
    "hom": {"shapes": _list_of(_choice(("gaussian", "lorentzian", "sech", "timebin"))),
            "width": _real(0, math.inf, open_lo=True), "deltas": _grid,
            "method": _choice(("auto", "quad", "closed")), "report": _bool},
}
SCHEMA["fig4c"] = SCHEMA["model-sweep"]
SCHEMA["fig7"] = SCHEMA["stats"]
SCHEMA["fig6-supp"] = SCHEMA["hom"]
REQUIRED = {"comp-compare": ("u_l", "u_r")}


def _line_of(text: str | None, key: str) -> int | None:
    if not text:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def needs_seed(cfg: dict) -> bool:
    exp = cfg.get("experiment")
    return (exp in ex.SAMPLED or (exp in ("model-sweep", "fig4c") and bool(cfg.get("monte_carlo")))
            or (exp in ("stats", "fig7") and bool(cfg.get("coverage"))))


def validate(config: dict, text: str | None = None) -> list[Diagnostic]:
    """Diagnostics for ``config``; empty iff :func:`run` would start."""
    if not isinstance(config, dict):
        return [Diagnostic("$", "config must be a JSON object", 1 if text else None)]
    out = []
    exp = config.get("experiment")
    if exp not in ex.RECIPES:
        return [Diagnostic("experiment", f"unknown experiment {exp!r}; expected one of {list(EXPERIMENTS)}",
                           _line_of(text, "experiment"))]
    if "format" in config and config["format"] not in FORMATS:
        out.append(Diagnostic("format", f"{config['format']!r} not one of {list(FORMATS)}",
                              _line_of(text, "format")))
    if "out" in config and not isinstance(config["out"], str):
        out.append(Diagnostic("out", "expected a path string", _line_of(text, "out")))
    seed = config.get("seed")
    if seed is None:
        if needs_seed(config):
            out.append(Diagnostic("seed", f"a seed is required for the sampled experiment {exp!r}"))
    elif isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        out.append(Diagnostic("seed", "expected a non-negative integer", _line_of(text, "seed")))
    fields = SCHEMA[exp]
    for key in REQUIRED.get(exp, ()):
        if key not in config:
            out.append(Diagnostic(key, "required field is missing"))
    for key, value in config.items():
        if key in COMMON_KEYS:
            continue
        if key not in fields:
            out.append(Diagnostic(key, f"unknown field for {exp!r}", _line_of(text, key)))
            continue
        msg = fields[key](value)
        if msg:
            out.append(Diagnostic(key, msg, _line_of(text, key)))
    if exp == "state-compare" and not out:
        scheme = config.get("scheme", "S1")
        if "return_qubits" in config and scheme != "S1":
            out.append(Diagnostic("return_qubits", "only applies to scheme S1", _line_of(text, "return_qubits")))
        if "visibility" in config and scheme != "S4":
            out.append(Diagnostic("visibility", "only applies to scheme S4", _line_of(text, "visibility")))
    if exp in ("model-sweep", "fig4c") and not out:
        try:
            ex.sweep_spec(config)
        except ValueError as e:
            out.append(Diagnostic("budget_lo", str(e), _line_of(text, "budget_lo")))
    return out


# ---- presets and loading ----

def preset_names() -> list[str]:
    root = resources.files("qnetverify") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    path = resources.files("qnetverify") / "presets" / f"{name}.json"
    return json.loads(path.read_text())


def load_config(path: str) -> tuple[dict, str]:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError([Diagnostic("$", f"cannot read {path}: {e}")]) from e
    try:
        return json.loads(text), text
    except json.JSONDecodeError as e:
        raise ConfigError([Diagnostic("$", f"invalid JSON: {e.msg}", e.lineno)]) from e


def resolve(experiment: str | None, config_path: str | None, seed: int | None, out: str | None,
            preset: str | None = None) -> tuple[dict, str | None]:
    """Merge preset defaults, the config file and command-line overrides."""
    cfg, text = {}, None
    if config_path:
        cfg, text = load_config(config_path)
        if not isinstance(cfg, dict):
            raise ConfigError([Diagnostic("$", "config must be a JSON object", 1)])
    if preset is not None:
        if preset not in preset_names():
            raise ConfigError([Diagnostic("--preset", f"unknown preset {preset!r}; see 'qnet-verify presets'")])
        cfg = {**load_preset(preset), **cfg}
    if experiment is not None:
        if experiment not in ex.RECIPES:
            raise ConfigError([Diagnostic("experiment", f"unknown experiment {experiment!r}")])
        if cfg.get("experiment", experiment) != experiment:
            raise ConfigError([Diagnostic("experiment", f"config is for {cfg['experiment']!r}, not {experiment!r}",
                                          _line_of(text, "experiment"))])
        base = load_preset(experiment) if experiment in preset_names() else {}
        cfg = {**base, **cfg, "experiment": experiment}
    if seed is not None:
        cfg["seed"] = seed
    if out is not None:
        cfg["out"] = out
    return cfg, text


# ---- output ----

def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def table_csv(table: ex.Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def table_json(table: ex.Table) -> str:
    return json.dumps(table.records(), indent=1) + "\n"


def version_string() -> str:
    try:
        v = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        v = "0+unknown"
    try:
        desc = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True, text=True,
                              cwd=Path(__file__).parent, timeout=5)
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{v}+g{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return v


def _sibling(out: Path, suffix: str) -> Path:
    return out.with_name(out.name + suffix)


def run(config: dict, text: str | None = None, trace: bool = False) -> list[Path]:
    """Validate, execute and write outputs; returns the written paths.

    Raises :class:`ConfigError` before doing any work if the config is invalid.
    """
    diags = validate(config, text)
    if diags:
        raise ConfigError(diags)
    exp = config["experiment"]
    fmt = config.get("format", "csv")
    out = Path(config.get("out") or f"{exp}.{fmt}")
    params = {k: v for k, v in config.items() if k not in COMMON_KEYS}
    seed = config.get("seed", 0)
    t0 = time.perf_counter()
    table = ex.RECIPES[exp]({"experiment": exp, **params}, seed, trace)
    wall = time.perf_counter() - t0

    render = table_csv if fmt == "csv" else table_json
    out.parent.mkdir(parents=True, exist_ok=True)
    written = [out]
    out.write_text(render(table))
    for name, extra in table.extra.items():
        p = out.with_name(f"{out.stem}.{name}{out.suffix or '.' + fmt}")
        p.write_text(render(extra))
        written.append(p)
    if trace and table.trace is not None:
        p = _sibling(out, ".trace.jsonl")
        p.write_text(table.trace)
        written.append(p)
    manifest = {
        "experiment": exp,
        "seed": config.get("seed"),
        "config": config,
        "version": version_string(),
        "threads": ex.thread_count(),
        "wall_time_s": round(wall, 3),
        "outputs": [str(p) for p in written],
    }
    mpath = _sibling(out, ".manifest.json")
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return written + [mpath]


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qnet-verify", description="Run overlap-estimation experiments.")
    p.add_argument("command", help=f"one of {', '.join(EXPERIMENTS)}, or run / validate / presets")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--preset", help="named preset used as the base config for run / validate")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", help="output data file (default <experiment>.<format>)")
    p.add_argument("--trace", action="store_true", help="also write per-shot records as JSON lines")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    cmd = args.command
    if cmd == "presets":
        for name in preset_names():
            print(name)
        return 0
    try:
        if cmd in ("run", "validate"):
            if not args.config and not args.preset:
                raise ConfigError([Diagnostic("--config", f"'{cmd}' needs a config file or a preset")])
            cfg, text = resolve(None, args.config, args.seed, args.out, args.preset)
        elif cmd in ex.RECIPES:
            cfg, text = resolve(cmd, args.config, args.seed, args.out)
        else:
            raise ConfigError([Diagnostic("command", f"unknown experiment {cmd!r}; expected one of "
                                                     f"{list(EXPERIMENTS)} or run/validate/presets")])
        if cmd == "validate":
            diags = validate(cfg, text)
            for d in diags:
                print(d)
            if not diags:
                print("ok")
            return 2 if diags else 0
        paths = run(cfg, text, args.trace)
    except ConfigError as e:
        for d in e.diagnostics:
            print(f"config error: {d}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - any failure inside a recipe is a runtime error
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
