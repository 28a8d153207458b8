"""Command-line experiment harness.

Every run resolves an :class:`ExperimentConfig` (INI or JSON file, then
command-line overrides, then ``PERCOLAB_SEED``), writes it as
``config.json`` next to its outputs, and stamps every output with the
config hash.  Exit codes: 0 success, 1 a check failed, 2 usage or config
error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
import warnings
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .environments import (
    EnvironmentSpec, closed_ball_pair, estimate_decoupling_defect, sample,
)
from .errors import ConfigError, PercolabError, PreconditionError
from .graph import (
    Graph, from_edge_list, grid_box, grid_zd, joined_grids, regular_tree, serialize,
)
from .isoperimetry import (
    build_covering_set, check_covering, estimate_iso_profile_sampled, verify_local_iso_exhaustive,
)
from .percolation import ball_window, box_window, pc_sweep, tail_estimate
from .renormalization import (
    build_ladder, check_recursion, estimate_pk, select_parameters,
)
from .rng import derive_seed
from .separation import SeparationThresholds, cascade_check, detect_separation

log = logging.getLogger("percolab")

SECTIONS = ("graph", "environment", "thresholds", "ladder", "params", "run", "task")
SUBCOMMANDS = ("gen-graph", "iso", "cover", "sample", "pc-sweep", "tail", "separation", "pk",
               "cascade", "decouple", "report")


@dataclass
class ExperimentConfig:
    graph: dict = field(default_factory=lambda: {"family": "grid", "dim": 2, "radius": 8})
    environment: dict = field(default_factory=lambda: {"kind": "bernoulli", "p": 0.5})
    thresholds: dict = field(default_factory=dict)
    ladder: dict = field(default_factory=lambda: {"L0": 4, "gamma": 1.5, "kmax": 2})
    params: dict = field(default_factory=lambda: {"d_i": 2.0, "chi": 0.5})
    run: dict = field(default_factory=lambda: {"seed": 0, "trials": 100, "out": "out",
                                                "invocation": 0})
    task: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
        cfg = cls()
        for name, values in data.items():
            if not isinstance(values, dict):
                raise ConfigError(f"section [{name}] must be a mapping")
            getattr(cfg, name).update(values)
        return cfg

    def to_ini(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for name in SECTIONS:
            parser[name] = {k: json.dumps(v) for k, v in sorted(getattr(self, name).items())}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def hash(self) -> str:
        # where outputs land is not part of the experiment
        data = asdict(self)
        data["run"] = {k: v for k, v in data["run"].items() if k != "out"}
        canon = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _ini_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_config(text: str, fmt: str | None = None) -> ExperimentConfig:
    """Parse INI (default) or JSON text; errors carry the offending line."""
    if fmt == "json" or (fmt is None and text.lstrip().startswith("{")):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}: {exc.msg}") from exc
        return ExperimentConfig.from_dict(data)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"line {exc.lineno}: expected a [section] header") from exc
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"line {lineno}: cannot parse {line.strip()!r}") from exc
    except configparser.Error as exc:
        raise ConfigError(str(exc).replace("\n", " ")) from exc
    data = {s: {k: _ini_value(v) for k, v in parser[s].items()} for s in parser.sections()}
    return ExperimentConfig.from_dict(data)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_config(text, "json" if path.suffix == ".json" else None)


# --------------------------------------------------------------------------
# builders

def build_graph(spec: dict) -> Graph:
    family = spec.get("family", "grid")
    try:
        if family == "grid":
            return grid_zd(int(spec.get("dim", 2)), int(spec["radius"]))
        if family == "box":
            return grid_box(*[int(s) for s in _as_list(spec["shape"])])
        if family == "tree":
            return regular_tree(int(spec.get("branch", 3)), int(spec["depth"]))
        if family == "joined":
            return joined_grids(int(spec.get("dim", 2)), int(spec["radius"]))
        if family == "file":
            return from_edge_list(Path(spec["path"]))
    except KeyError as exc:
        raise ConfigError(f"graph family {family!r} needs {exc.args[0]!r}") from exc
    raise ConfigError(f"unknown graph family {family!r}")


def build_environment(spec: dict) -> EnvironmentSpec:
    known = {"kind", "p", "radius", "tail_exponent", "alpha", "c_alpha", "max_radius",
             "growth_exponent", "intensity"}
    extra = set(spec) - known
    if extra:
        raise ConfigError(f"unknown environment key(s): {', '.join(sorted(extra))}")
    return EnvironmentSpec(**spec)


def build_thresholds(spec: dict) -> SeparationThresholds:
    try:
        return SeparationThresholds(**spec)
    except TypeError as exc:
        raise ConfigError(f"[thresholds]: {exc}") from exc


def _as_list(value) -> list:
    if isinstance(value, (list, tuple)):
        return list(value)
    return [_ini_value(v.strip()) for v in str(value).split(",") if v.strip()]


def resolve_vertex(g: Graph, value) -> int:
    """Vertex id from an integer, a coordinate list/tuple or ``"a,b"`` text; default: centre."""
    if value is None or value == "center":
        if g.labels is not None and isinstance(g.labels[0], tuple):
            coords = np.asarray([lab for lab in g.labels if len(lab) == len(g.labels[0])])
            centre = tuple(int(c) for c in np.round(coords.mean(axis=0)))
            try:
                return g.index_of(centre)
            except (KeyError, PercolabError):
                pass
        return 0
    if isinstance(value, int):
        return g.check_vertex(value)
    parts = _as_list(value)
    if len(parts) == 1:
        return g.check_vertex(int(parts[0]))
    return g.index_of(tuple(int(p) for p in parts))


def _grid(value) -> list[float]:
    """``"a:b:n"`` (inclusive linspace) or a comma list."""
    if isinstance(value, str) and ":" in value:
        a, b, n = value.split(":")
        return np.linspace(float(a), float(b), int(n)).tolist()
    return [float(v) for v in _as_list(value)]


# --------------------------------------------------------------------------
# output

def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _clean(value):
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else str(v)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


class Outputs:
    def __init__(self, cfg: ExperimentConfig, subcommand: str):
        self.dir = Path(cfg.run.get("out", "out"))
        self.hash = cfg.hash()
        self.subcommand = subcommand
        self.cfg = cfg

    def write_config(self) -> None:
        _atomic_write(self.dir / "config.json", self.cfg.to_json())

    def csv(self, name: str, header: list[str], rows, meta: dict | None = None) -> Path:
        buf = io.StringIO()
        buf.write(f"# created: {datetime.now(timezone.utc).isoformat(timespec='seconds')}\n")
        buf.write(f"# config_hash: {self.hash}\n")
        buf.write(f"# subcommand: {self.subcommand}\n")
        buf.write(f"# percolab: {__version__}\n")
        for key, val in (meta or {}).items():
            buf.write(f"# {key}: {val}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
        path = self.dir / name
        _atomic_write(path, buf.getvalue())
        return path

    def json(self, name: str, payload: dict) -> Path:
        record = {"config_hash": self.hash, "subcommand": self.subcommand, **_clean(payload)}
        path = self.dir / name
        _atomic_write(path, json.dumps(record, sort_keys=True, indent=2) + "\n")
        return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(path: Path) -> tuple[dict, list[dict]]:
    meta, lines = {}, []
    for line in path.read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            meta[key.strip()] = val.strip()
        else:
            lines.append(line)
    return meta, list(csv.DictReader(lines))


# --------------------------------------------------------------------------
# subcommands; each returns an exit code

def _seed(cfg: ExperimentConfig, sub: str) -> int:
    return derive_seed(int(cfg.run.get("seed", 0)), sub, int(cfg.run.get("invocation", 0)))


def cmd_gen_graph(cfg, out):
    g = build_graph(cfg.graph)
    _atomic_write(out.dir / "graph.plg", serialize(g))
    print(f"{g.name}: {g.n} vertices, {g.num_edges} edges -> {out.dir / 'graph.plg'}")
    return 0


def cmd_iso(cfg, out):
    g = build_graph(cfg.graph)
    t = cfg.task
    x = resolve_vertex(g, t.get("x"))
    r, d_i = int(t.get("r", 2)), float(t.get("d_i", 2.0))
    if t.get("exhaustive", False):
        prof = verify_local_iso_exhaustive(g, x, r, d_i)
    else:
        prof = estimate_iso_profile_sampled(g, x, r, d_i, int(cfg.run.get("trials", 100)),
                                            _seed(cfg, "iso"))
    out.json("iso.json", {"x": x, "r": r, **prof.as_record()})
    print(f"c_i = {prof.c_i:.6g} ({prof.mode}, {prof.examined} sets)")
    return 0


def cmd_cover(cfg, out):
    g = build_graph(cfg.graph)
    t = cfg.task
    x = resolve_vertex(g, t.get("x"))
    r, s, d = int(t.get("r", 60)), int(t.get("s", 12)), float(t.get("d", 1.0))
    cov = build_covering_set(g, x, r, s, d, _seed(cfg, "cover"))
    ok = check_covering(g, x, r, s, cov.K) and cov.K.size <= cov.size_bound
    out.json("cover.json", {"x": x, "r": r, "s": s, "d": d, "K": cov.K, "size": int(cov.K.size),
                            "size_bound": cov.size_bound, "method": cov.method,
                            "attempts": cov.attempts, "recheck": ok})
    print(f"|K| = {cov.K.size} (bound {cov.size_bound:.1f}, {cov.method}); recheck "
          f"{'passed' if ok else 'FAILED'}")
    return 0 if ok else 1


def cmd_sample(cfg, out):
    g = build_graph(cfg.graph)
    spec = build_environment(cfg.environment)
    t = cfg.task
    x = resolve_vertex(g, t.get("x"))
    region = np.flatnonzero(np.ones(g.n, bool)) if t.get("r") is None else None
    if region is None:
        from .graph import ball
        region = ball(g, x, int(t["r"]))
    conf = sample(spec, g, region, _seed(cfg, "sample"), int(t.get("trial", 0)))
    out.csv("sample.csv", ["vertex", "open"], zip(conf.region.tolist(),
                                                  conf.bits.astype(int).tolist()))
    print(f"{int(conf.bits.sum())}/{conf.bits.size} open")
    return 0


def cmd_pc_sweep(cfg, out):
    g = build_graph(cfg.graph)
    t = cfg.task
    if cfg.graph.get("family") == "box":
        window = box_window(g)
    else:
        x = resolve_vertex(g, t.get("x"))
        window = ball_window(g, x, int(t.get("window", cfg.graph.get("radius", 8))))
    p_grid = _grid(t.get("p_grid", "0:1:21"))
    curve = pc_sweep(g, window, int(cfg.run.get("trials", 100)), p_grid, _seed(cfg, "pc-sweep"))
    rows = [(p, q, lo, hi) for p, q, (lo, hi) in zip(curve["p"], curve["spanning_prob"],
                                                     curve["ci"])]
    out.csv("pc_sweep.csv", ["p", "spanning_prob", "ci_low", "ci_high"], rows)
    print("\n".join(f"p={p:.3f}  span={q:.3f}" for p, q, _, _ in rows))
    return 0


def cmd_tail(cfg, out):
    g = build_graph(cfg.graph)
    spec = build_environment(cfg.environment)
    t = cfg.task
    x = resolve_vertex(g, t.get("x"))
    V = [int(v) for v in _as_list(t.get("V", "4,8,16,32"))]
    window = int(t.get("window", cfg.graph.get("radius", 16)))
    curve = tail_estimate(g, spec, x, V, float(t.get("chi", 1.0)), int(cfg.run.get("trials", 100)),
                          _seed(cfg, "tail"), window)
    rows = [(v, p, w, lo, hi) for v, p, w, (lo, hi) in zip(curve.V_values, curve.probs,
                                                           curve.weighted, curve.ci)]
    out.csv("tail.csv", ["V", "prob", "weighted", "ci_low", "ci_high"], rows,
            {"chi": curve.chi, "trials": curve.trials, "window_radius": window,
             "note": curve.note})
    if curve.flagged:
        log.warning(curve.note)
    print("\n".join(f"V={v}  P={p:.3g}  V^chi P={w:.3g}" for v, p, w, _, _ in rows))
    return 0


def cmd_separation(cfg, out):
    g = build_graph(cfg.graph)
    spec = build_environment(cfg.environment)
    t = cfg.task
    x = resolve_vertex(g, t.get("x"))
    L = int(t.get("L", 8))
    th = build_thresholds(cfg.thresholds)
    from .graph import ball
    conf = sample(spec, g, ball(g, x, th.outer(L)), _seed(cfg, "separation"),
                  int(t.get("trial", 0)))
    res = detect_separation(g, conf, x, L, th, "exact" if t.get("exact") else "heuristic")
    payload = {"x": x, "L": L, "verdict": res.verdict, "method": res.method,
               "thresholds": th.as_record(),
               "witness": json.loads(res.witness.to_json()) if res.witness else None}
    out.json("separation.json", payload)
    print(f"{res.verdict} ({res.method})")
    return 0


def cmd_pk(cfg, out):
    g = build_graph(cfg.graph)
    spec = build_environment(cfg.environment)
    lad = cfg.ladder
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ladder = build_ladder(int(lad.get("L0", 4)), float(lad.get("gamma", 1.5)),
                              int(lad.get("kmax", 2)))
    anchors = cfg.task.get("anchors", "auto")
    if anchors != "auto":
        anchors = [resolve_vertex(g, a) for a in _as_list(anchors)]
    th = build_thresholds(cfg.thresholds)
    series = estimate_pk(g, spec, ladder, anchors, int(cfg.run.get("trials", 100)), th,
                         _seed(cfg, "pk"), cfg.task.get("method", "heuristic"))
    mode = "bernoulli" if spec.kind == "bernoulli" else "dependent"
    pin = dict(cfg.params)
    if mode == "dependent":
        pin.setdefault("alpha", spec.alpha)
        pin.setdefault("c_alpha", spec.c_alpha)
    params = select_parameters(pin, mode)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rec = check_recursion(series, params, mode)
    out.csv("pk.csv", ["k", "L_k", "p_hat", "ci_low", "ci_high"],
            [(k, L, p, lo, hi) for k, (L, p, (lo, hi)) in
             enumerate(zip(series.scales, series.p_hat, series.ci))])
    out.json("recursion.json", {**rec, "params": params.as_record(), "anchors": series.anchors,
                                "trials": series.trials, "method": series.method,
                                "notes": series.notes})
    for s in rec["steps"]:
        print(f"step {s['k']}: L={s['L_k']} -> {s['L_next']}  {s['verdict']}")
    return 0 if rec["passed"] else 1


def cmd_cascade(cfg, out):
    g = build_graph(cfg.graph)
    spec = build_environment(cfg.environment)
    t = cfg.task
    x = resolve_vertex(g, t.get("x"))
    L_big, L_small = int(t.get("L_big", 48)), int(t.get("L_small", 8))
    th = build_thresholds(cfg.thresholds)
    seed = _seed(cfg, "cascade")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cov = build_covering_set(g, x, L_big, L_small, float(t.get("d", 1.0)), seed)
    from .graph import ball
    conf = sample(spec, g, ball(g, x, L_big + L_small), seed, int(t.get("trial", 0)))
    try:
        rep = cascade_check(g, conf, x, L_big, L_small, cov, th)
    except PreconditionError as exc:
        out.json("cascade.json", {"x": x, "L_big": L_big, "L_small": L_small,
                                  "status": "no big-scale witness", "detail": str(exc)})
        print(f"check failed: {exc}")
        return 1
    payload = {"x": x, "L_big": L_big, "L_small": L_small, "paths": len(rep.paths),
               "path_hits": rep.path_hits, "found": [y for y, _ in rep.found],
               "spaced": rep.spaced, "N_target": rep.N_target,
               "pairwise_min_distance": rep.pairwise_min_distance,
               "all_paths_hit": rep.all_paths_hit, "degenerate": rep.degenerate,
               "notes": rep.notes, "status": "ok" if rep.all_paths_hit else "missed paths"}
    out.json("cascade.json", payload)
    print(f"{len(rep.paths)} paths, {sum(y is not None for y in rep.path_hits)} hit; "
          f"{len(rep.spaced)} spaced points")
    return 0 if rep.all_paths_hit or rep.degenerate else 1


def cmd_decouple(cfg, out):
    g = build_graph(cfg.graph)
    spec = build_environment(cfg.environment)
    t = cfg.task
    x = resolve_vertex(g, t.get("x"))
    r_values = [int(r) for r in _as_list(t.get("r", "1,2,4"))]
    rep = estimate_decoupling_defect(spec, g, x, r_values,
                                     closed_ball_pair(int(t.get("event_radius", 0))),
                                     int(cfg.run.get("trials", 1000)), _seed(cfg, "decouple"))
    within = rep.within_certificate()
    out.csv("decouple.csv", ["r", "defect", "sigma", "bound", "within"],
            [(r, d, s, b, int(w)) for r, d, s, b, w in zip(rep.r_values, rep.defects,
                                                           rep.sigmas, rep.bounds, within)])
    out.json("decouple.json", {"fitted_alpha": rep.fitted_alpha, "within": within,
                               "probabilities": rep.probabilities})
    print(f"fitted alpha {rep.fitted_alpha:.3g}; within certificate: {all(within)}")
    return 0 if all(within) else 1


def cmd_report(cfg, out):
    """Aggregate earlier outputs in the output directory into ``summary.csv``."""
    d = out.dir
    hashes, rows = {}, []
    for path in sorted(d.glob("*.csv")) + sorted(d.glob("*.json")):
        if path.name in ("summary.csv", "config.json"):
            continue
        if path.suffix == ".csv":
            meta, records = read_csv(path)
            hashes[path.name] = meta.get("config_hash")
        else:
            records = json.loads(path.read_text())
            hashes[path.name] = records.get("config_hash")
        rows.extend(_checks_for(path.name, records))
    distinct = set(hashes.values())
    if len(distinct) > 1:
        detail = ", ".join(f"{k}={v}" for k, v in sorted(hashes.items()))
        raise ConfigError(f"outputs come from different configs: {detail}")
    if not rows:
        raise ConfigError(f"no outputs to aggregate in {d}")
    out.hash = distinct.pop() if distinct else out.hash
    out.csv("summary.csv", ["artifact", "check", "status", "detail"], rows)
    width = max(len(r[0]) + len(r[1]) for r in rows) + 3
    for artifact, check, status, detail in rows:
        print(f"{artifact + ': ' + check:<{width}} {status:<13} {detail}")
    failing = [f"{a}:{c}" for a, c, s, _ in rows if s == "fail"]
    if failing:
        print("failing checks: " + ", ".join(failing))
        return 1
    return 0


def _checks_for(name: str, rec):
    if name == "recursion.json":
        for s in rec["steps"]:
            yield name, f"recursion step {s['k']}", s["verdict"], f"p_next={s['p_next']:.4g}"
        if rec["decay_k"] is None:
            yield name, "decay_target", "fail", f"p_hat <= L_k^-beta unmet at all scales (beta={rec['beta']:.4g})"
        else:
            yield (name, "decay_target", "pass" if rec["decay_persists"] else "inconclusive",
                   f"first k = {rec['decay_k']}")
    elif name == "pk.csv":
        yield name, "p_hat", "info", " ".join(f"{r['p_hat']}" for r in rec)
    elif name == "cover.json":
        yield name, "coverage recheck", "pass" if rec["recheck"] else "fail", f"|K|={rec['size']}"
    elif name == "decouple.json":
        ok = all(rec["within"])
        yield name, "decoupling certificate", "pass" if ok else "fail", \
            f"fitted alpha {rec['fitted_alpha']}"
    elif name == "cascade.json":
        ok = rec.get("status") == "ok" or rec.get("degenerate")
        yield name, "cascade", "pass" if ok else "fail", rec.get("status", "")
    elif name == "separation.json":
        yield name, "separation", "info", rec["verdict"]
    elif name == "iso.json":
        yield name, "isoperimetry", "info", f"c_i={rec['c_i']}"
    else:
        yield name, "present", "info", ""


COMMANDS = {
    "gen-graph": cmd_gen_graph, "iso": cmd_iso, "cover": cmd_cover, "sample": cmd_sample,
    "pc-sweep": cmd_pc_sweep, "tail": cmd_tail, "separation": cmd_separation, "pk": cmd_pk,
    "cascade": cmd_cascade, "decouple": cmd_decouple, "report": cmd_report,
}


# --------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI or JSON experiment config")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--trials", type=int)
    g = common.add_argument_group("graph")
    g.add_argument("--family", choices=["grid", "box", "tree", "joined", "file"])
    g.add_argument("--dim", type=int)
    g.add_argument("--radius", type=int)
    g.add_argument("--shape", help="box side lengths, e.g. 64,64")
    g.add_argument("--branch", type=int)
    g.add_argument("--depth", type=int)
    g.add_argument("--graph-file", dest="path")
    e = common.add_argument_group("environment")
    e.add_argument("--env", dest="kind",
                   choices=["bernoulli", "finitely_dependent", "long_range"])
    e.add_argument("--p", type=float)
    e.add_argument("--env-radius", type=int, dest="env_radius")
    e.add_argument("--tau", type=float, dest="tail_exponent")
    t = common.add_argument_group("task")
    t.add_argument("--x", help="vertex id or comma-separated coordinates")
    t.add_argument("--L", type=int)
    t.add_argument("--r", help="radius (or comma list for decouple)")
    t.add_argument("--s", type=int)
    t.add_argument("--d", type=float)
    t.add_argument("--exact", action="store_true", default=None)
    t.add_argument("--exhaustive", action="store_true", default=None)
    t.add_argument("--V", help="comma list of volumes")
    t.add_argument("--chi", type=float)
    t.add_argument("--window", type=int)
    t.add_argument("--p-grid", dest="p_grid", help="a:b:n or comma list")
    t.add_argument("--ladder", help="L0,gamma,kmax")
    t.add_argument("--anchors", help="'auto' or ';'-separated vertices")
    t.add_argument("--L-big", type=int, dest="L_big")
    t.add_argument("--L-small", type=int, dest="L_small")

    parser = argparse.ArgumentParser(prog="percolab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"percolab {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=COMMANDS[name].__doc__ or name)
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    for key in ("family", "dim", "radius", "branch", "depth", "path"):
        if getattr(args, key) is not None:
            cfg.graph[key] = getattr(args, key)
    if args.shape is not None:
        cfg.graph["shape"] = [int(s) for s in args.shape.split(",")]
    for key in ("kind", "p", "tail_exponent"):
        if getattr(args, key) is not None:
            cfg.environment[key] = getattr(args, key)
    if args.env_radius is not None:
        cfg.environment["radius"] = args.env_radius
    if args.kind is not None and args.kind != "long_range":
        cfg.environment.pop("tail_exponent", None)
    for key in ("x", "L", "s", "d", "exact", "exhaustive", "V", "chi", "window", "p_grid",
                "L_big", "L_small"):
        if getattr(args, key) is not None:
            cfg.task[key] = getattr(args, key)
    if args.r is not None:
        cfg.task["r"] = _ini_value(args.r) if "," not in args.r else args.r
    if args.anchors is not None:
        cfg.task["anchors"] = "auto" if args.anchors == "auto" else args.anchors.split(";")
    if args.ladder is not None:
        try:
            L0, gamma, kmax = args.ladder.split(",")
            cfg.ladder.update(L0=int(L0), gamma=float(gamma), kmax=int(kmax))
        except ValueError as exc:
            raise ConfigError(f"--ladder expects L0,gamma,kmax, got {args.ladder!r}") from exc
    if args.out is not None:
        cfg.run["out"] = args.out
    if args.trials is not None:
        cfg.run["trials"] = args.trials
    if args.seed is not None:
        cfg.run["seed"] = args.seed
    env_seed = os.environ.get("PERCOLAB_SEED")
    if env_seed is not None:
        try:
            cfg.run["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"PERCOLAB_SEED must be an integer, got {env_seed!r}") from exc
        log.warning("seed overridden by PERCOLAB_SEED=%s", env_seed)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out = Outputs(cfg, args.subcommand)
        if args.subcommand != "report":
            out.write_config()
        return COMMANDS[args.subcommand](cfg, out)
    except (ConfigError, TypeError) as exc:
        print(f"percolab: config error: {exc}", file=sys.stderr)
        return 2
    except PercolabError as exc:
        print(f"percolab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
