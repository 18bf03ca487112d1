"""
Batch experiment runner.

    stokes-precond condnum --element mini --eps 1,0.1 --levels 2..4
    stokes-precond infsup --format csv --out alpha.csv
    stokes-precond fortin-verify --domain square --levels 1..3
    stokes-precond lemma-check --levels 1..3
    stokes-precond mesh-export --domain slit --levels 2

Settings may also come from ``--config FILE`` (``key = value`` lines or a
JSON object); command-line flags override file values.
"""
import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .assembly import ELEMENTS, build_saddle
from .mesh import DOMAINS, build_mesh, export_mesh

log = logging.getLogger(__name__)

COMMANDS = ("condnum", "infsup", "fortin-verify", "lemma-check", "mesh-export")
TASK_OF = {"condnum": "condnum", "infsup": "infsup", "fortin-verify": "fortin",
           "lemma-check": "lemmas", "mesh-export": "mesh"}
FORMATS = ("markdown", "csv")
ELEMENT_NAMES = {"taylor_hood": "Taylor-Hood", "mini": "Mini"}
DEFAULT_EPS = (1.0, 0.1, 0.01)
DEFAULT_LEVELS = (2, 3, 4, 5)
COMMUTE_TOL = 1e-10


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    domains: tuple = DOMAINS
    element: str = "taylor_hood"
    eps_list: tuple = DEFAULT_EPS
    levels: tuple = DEFAULT_LEVELS
    tasks: tuple = ("condnum",)
    output: str = None
    format: str = "markdown"
    slit_pressure: str = "continuous"
    samples: int = 20
    seed: int = 0

    def __post_init__(self):
        if not self.domains:
            raise ConfigError("no domain selected")
        for d in self.domains:
            if d not in DOMAINS:
                raise ConfigError(f"unknown domain {d!r}; expected one of {', '.join(DOMAINS)}")
        if self.element not in ELEMENTS:
            raise ConfigError(f"unknown element {self.element!r}; "
                              f"expected one of {', '.join(ELEMENTS)}")
        if not self.eps_list or any(not 0 < e <= 1 for e in self.eps_list):
            raise ConfigError("eps values must lie in (0, 1]")
        if not self.levels or min(self.levels) < 1:
            raise ConfigError("levels must be positive")
        if not self.tasks:
            raise ConfigError("at least one task is required")
        if self.format not in FORMATS:
            raise ConfigError(f"unknown format {self.format!r}; expected csv or markdown")
        if self.slit_pressure not in ("continuous", "cut"):
            raise ConfigError("slit_pressure must be 'continuous' or 'cut'")


# ---------------------------------------------------------------------------
# parsing

def _parse_eps(text, where):
    vals = []
    for tok in str(text).split(","):
        tok = tok.strip()
        try:
            vals.append(float(tok))
        except ValueError:
            raise ConfigError(f"{where}: malformed eps value {tok!r}") from None
    return tuple(sorted(set(vals), reverse=True))


def _parse_levels(text, where):
    text = str(text).strip()
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            a, b = int(a), int(b)
            if b < a:
                raise ValueError
            return tuple(range(a, b + 1))
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise ConfigError(f"{where}: malformed levels {text!r}; expected a..b") from None


def _parse_domains(text, where):
    doms = tuple(t.strip() for t in str(text).split(",") if t.strip())
    for d in doms:
        if d not in DOMAINS:
            raise ConfigError(f"{where}: unknown domain {d!r}; expected one of {', '.join(DOMAINS)}")
    return doms


_KEYS = {
    "domain": ("domains", _parse_domains), "domains": ("domains", _parse_domains),
    "element": ("element", lambda v, w: str(v).strip()),
    "eps": ("eps_list", _parse_eps),
    "levels": ("levels", _parse_levels),
    "out": ("output", lambda v, w: str(v).strip()),
    "output": ("output", lambda v, w: str(v).strip()),
    "format": ("format", lambda v, w: str(v).strip()),
    "slit_pressure": ("slit_pressure", lambda v, w: str(v).strip()),
    "samples": ("samples", lambda v, w: _parse_int(v, w)),
    "seed": ("seed", lambda v, w: _parse_int(v, w)),
}


def _parse_int(v, where):
    try:
        return int(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected an integer, got {v!r}") from None


def _join(v):
    return ",".join(str(x) for x in v) if isinstance(v, (list, tuple)) else v


def read_config_file(path):
    """Settings from a ``key = value`` file or a JSON object."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    out, origin = {}, {}
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
        items = [(k, _join(v), f"{path}: key {k!r}") for k, v in data.items()]
    else:
        items = []
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            items.append((k, v, f"{path}:{n}"))
    for k, v, where in items:
        if k not in _KEYS:
            raise ConfigError(f"{where}: unknown key {k!r}")
        name, conv = _KEYS[k]
        val = conv(v, where)
        if name in out and out[name] != val:
            raise ConfigError(f"conflicting values for {k!r}: {origin[name]} and {where}")
        out[name], origin[name] = val, where
    return out


_FLAGS = ("--domain", "--element", "--eps", "--levels", "--out", "--format",
          "--config", "--slit-pressure", "--samples", "--seed")


def _check_repeated(argv):
    seen = {}
    i = 0
    while i < len(argv):
        tok = argv[i]
        pos = i + 1
        name, val = tok, None
        if tok.startswith("--") and "=" in tok:
            name, val = tok.split("=", 1)
        elif tok in _FLAGS and i + 1 < len(argv):
            val = argv[i + 1]
            i += 1
        if name in _FLAGS and val is not None:
            if name in seen and seen[name][0] != val:
                raise ConfigError(f"conflicting values for {name}: {seen[name][0]!r} "
                                  f"(argument {seen[name][1]}) and {val!r} (argument {pos})")
            seen[name] = (val, pos)
        i += 1


def build_parser():
    p = argparse.ArgumentParser(prog="stokes-precond",
                                description="Condition numbers, inf-sup constants and "
                                            "Fortin-operator checks for the perturbed "
                                            "Stokes problem.")
    p.add_argument("command", nargs="?", default="condnum", choices=COMMANDS,
                   help="task to run (default condnum)")
    p.add_argument("--domain", help="comma list of square, lshape, slit (default: all)")
    p.add_argument("--element", help="taylor_hood or mini (default taylor_hood)")
    p.add_argument("--eps", help="comma list of eps values in (0, 1] (default 1,0.1,0.01)")
    p.add_argument("--levels", help="level range a..b; mesh size 2^-level (default 2..5)")
    p.add_argument("--out", help="output file (default: standard output)")
    p.add_argument("--format", help="markdown or csv (default markdown)")
    p.add_argument("--config", help="key = value or JSON settings file")
    p.add_argument("--slit-pressure", dest="slit_pressure",
                   help="continuous (default) or cut pressure across the slit")
    p.add_argument("--samples", help="random sample fields for fortin-verify (default 20)")
    p.add_argument("--seed", help="seed for the random sample fields (default 0)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def parse_config(argv, config_file=None):
    """Turn command-line arguments (and an optional settings file) into a
    ``(command, ExperimentConfig)`` pair."""
    argv = list(argv)
    _check_repeated(argv)
    args = build_parser().parse_args(argv)
    values = {}
    path = args.config or config_file
    if path:
        values.update(read_config_file(path))
    flags = {"domain": args.domain, "element": args.element, "eps": args.eps,
             "levels": args.levels, "out": args.out, "format": args.format,
             "slit_pressure": args.slit_pressure, "samples": args.samples, "seed": args.seed}
    for k, v in flags.items():
        if v is not None:
            name, conv = _KEYS[k]
            values[name] = conv(v, f"--{k.replace('_', '-')}")
    values["tasks"] = (TASK_OF[args.command],)
    return args.command, ExperimentConfig(**values)


# ---------------------------------------------------------------------------
# cell computations (top level so worker processes can import them)

def _cell_condnum(domain, element, eps, level, slit_pressure):
    from .linalg import condition_number
    return condition_number(build_saddle(eps, build_mesh(domain, level), element, slit_pressure))


def _cell_infsup(domain, element, eps, level, slit_pressure):
    from .infsup import discrete_infsup
    return discrete_infsup(eps, build_mesh(domain, level), element, slit_pressure)


def _cell_fortin(domain, element, level, slit_pressure, samples, seed):
    from .fortin import (bubble_infsup, commuting_residual, fortin_operator,
                         operator_norms, random_samples)
    mesh = build_mesh(domain, level)
    F = fortin_operator(mesh, element)
    res = float(np.max(commuting_residual(F, random_samples(F, samples, seed), slit_pressure)))
    norms = operator_norms(F)
    out = {"commuting_residual": res, "norm_L2": norms["L2"], "norm_H1": norms["H1"]}
    if element == "taylor_hood":
        b = bubble_infsup(mesh)
        out.update(c0=b["c0"], c_phi=b["c_phi"], C=max(b["C"], default=1.0))
    out["ok"] = res < COMMUTE_TOL
    return out


def _cell_lemmas(domain, level):
    from .fortin import lemma_suite
    checks = lemma_suite(build_mesh(domain, level))
    out = {}
    for c in checks:
        e = out.setdefault(c.lemma, {"count": 0, "worst": 0.0, "margin": np.inf, "ok": True})
        e["count"] += 1
        e["ok"] &= c.ok
        if c.lemma.endswith("lmin"):
            e["margin"] = min(e["margin"], c.measured / c.expected)
        else:
            e["worst"] = max(e["worst"], c.measured)
    return out


def _safe(fn, *args):
    try:
        return fn(*args)
    except Exception as exc:  # reported as an ERR cell
        return _Failure(f"{type(exc).__name__}: {exc}")


@dataclass(frozen=True)
class _Failure:
    message: str


def worker_count(ncells):
    env = os.environ.get("STOKES_PRECOND_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise ConfigError(f"STOKES_PRECOND_THREADS must be an integer, got {env!r}") from None
    return max(1, min(cap, ncells))


def _map(fn, jobs):
    """Evaluate ``fn(*job)`` for each job; results keep the job order."""
    n = worker_count(len(jobs))
    if n == 1:
        return [_safe(fn, *j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        futs = [pool.submit(_safe, fn, *j) for j in jobs]
        return [f.result() for f in futs]


# ---------------------------------------------------------------------------
# report writers

def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _eps_label(e):
    return format(e, "g")


def _markdown_table(header, rows):
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return "\n".join(lines)


def _grid_report(cfg, title, results, fmt_value, csv_name):
    """Tables with eps rows and mesh-size columns, one per domain."""
    failed = False
    if cfg.format == "csv":
        rows = []
        for (d, e, l), v in results.items():
            failed |= isinstance(v, _Failure)
            val = "ERR" if isinstance(v, _Failure) else repr(float(v))
            rows.append([d, cfg.element, _eps_label(e), l, val])
        return _csv(["domain", "element", "eps", "level", csv_name], rows), failed
    blocks = []
    for d in cfg.domains:
        header = ["eps \\ h"] + [f"2^-{l}" for l in cfg.levels]
        rows = []
        for e in cfg.eps_list:
            row = [_eps_label(e)]
            for l in cfg.levels:
                v = results[(d, e, l)]
                failed |= isinstance(v, _Failure)
                row.append("ERR" if isinstance(v, _Failure) else fmt_value(v))
            rows.append(row)
        blocks.append(f"### {title}, {ELEMENT_NAMES[cfg.element]}, {d}\n\n"
                      + _markdown_table(header, rows))
    errors = [f"- {d}, eps={_eps_label(e)}, level {l}: {v.message}"
              for (d, e, l), v in results.items() if isinstance(v, _Failure)]
    if errors:
        blocks.append("Errors:\n\n" + "\n".join(errors))
    return "\n\n".join(blocks) + "\n", failed


def run_condnum(cfg):
    keys = [(d, e, l) for d in cfg.domains for e in cfg.eps_list for l in cfg.levels]
    vals = _map(_cell_condnum, [(d, cfg.element, e, l, cfg.slit_pressure) for d, e, l in keys])
    return _grid_report(cfg, "Condition numbers", dict(zip(keys, vals)),
                        lambda v: f"{v:.2f}", "kappa")


def run_infsup(cfg):
    keys = [(d, e, l) for d in cfg.domains for e in cfg.eps_list for l in cfg.levels]
    vals = _map(_cell_infsup, [(d, cfg.element, e, l, cfg.slit_pressure) for d, e, l in keys])
    return _grid_report(cfg, "Discrete inf-sup constants", dict(zip(keys, vals)),
                        lambda v: f"{v:.4f}", "alpha")


_FORTIN_COLS = ("commuting_residual", "norm_L2", "norm_H1", "c0", "c_phi", "C")


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.3e}" if abs(v) < 1e-3 and v != 0 else f"{v:.4f}"
    return str(v)


def run_fortin(cfg):
    keys = [(d, l) for d in cfg.domains for l in cfg.levels]
    vals = _map(_cell_fortin, [(d, cfg.element, l, cfg.slit_pressure, cfg.samples, cfg.seed)
                               for d, l in keys])
    cols = [c for c in _FORTIN_COLS if cfg.element == "taylor_hood" or c not in ("c0", "c_phi", "C")]
    failed = False
    rows = []
    for (d, l), v in zip(keys, vals):
        if isinstance(v, _Failure):
            failed = True
            rows.append((d, l, ["ERR"] * len(cols), "ERR", v.message))
        else:
            failed |= not v["ok"]
            rows.append((d, l, [_fmt(v[c]) if cfg.format == "markdown" else repr(v[c])
                                for c in cols], "PASS" if v["ok"] else "FAIL", ""))
    if cfg.format == "csv":
        return _csv(["domain", "element", "level", *cols, "status"],
                    [[d, cfg.element, l, *c, s] for d, l, c, s, _ in rows]), failed
    blocks = []
    for dom in cfg.domains:
        body = [[str(l)] + c + [s] for d, l, c, s, _ in rows if d == dom]
        blocks.append(f"### Fortin operator, {ELEMENT_NAMES[cfg.element]}, {dom}\n\n"
                      + _markdown_table(["level"] + list(cols) + ["status"], body))
    errors = [f"- {d}, level {l}: {m}" for d, l, _, s, m in rows if s == "ERR"]
    if errors:
        blocks.append("Errors:\n\n" + "\n".join(errors))
    return "\n\n".join(blocks) + "\n", failed


def run_lemmas(cfg):
    keys = [(d, l) for d in cfg.domains for l in cfg.levels]
    vals = _map(_cell_lemmas, keys)
    failed = False
    rows = []
    for (d, l), v in zip(keys, vals):
        if isinstance(v, _Failure):
            failed = True
            rows.append([d, str(l), "ERR", "", "", "", "ERR " + v.message])
            continue
        for lemma, e in v.items():
            failed |= not e["ok"]
            margin = "" if not np.isfinite(e["margin"]) else f"{e['margin']:.6g}"
            rows.append([d, str(l), lemma, str(e["count"]), f"{e['worst']:.3g}", margin,
                         "PASS" if e["ok"] else "FAIL"])
    header = ["domain", "level", "check", "count", "max_rel_error", "min_lmin_over_bound", "status"]
    if cfg.format == "csv":
        return _csv(header, rows), failed
    return "### Local lemma checks\n\n" + _markdown_table(header, rows) + "\n", failed


def run_mesh_export(cfg, fh):
    if len(cfg.domains) != 1 or len(cfg.levels) != 1:
        raise ConfigError("mesh-export needs a single --domain and a single level")
    export_mesh(build_mesh(cfg.domains[0], cfg.levels[0]), fh)


RUNNERS = {"condnum": run_condnum, "infsup": run_infsup, "fortin": run_fortin,
           "lemmas": run_lemmas}


def run(command, cfg, stdout=None):
    """Execute one command; returns the process exit code."""
    stdout = sys.stdout if stdout is None else stdout
    out = open(cfg.output, "w", encoding="utf-8", newline="\n") if cfg.output else stdout
    try:
        if command == "mesh-export":
            run_mesh_export(cfg, out)
            return 0
        text, failed = RUNNERS[TASK_OF[command]](cfg)
        out.write(text)
        return 1 if failed else 0
    finally:
        if out is not stdout:
            out.close()


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    logging.basicConfig(level=logging.INFO if "-v" in argv or "--verbose" in argv
                        else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        command, cfg = parse_config(argv)
        return run(command, cfg)
    except ConfigError as exc:
        print(f"stokes-precond: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"stokes-precond: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
