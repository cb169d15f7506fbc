"""
Scenario config files and seeded SNR sweeps.

A config is a sectioned ``key = value`` file::

    [scenario]
    G = 3
    K = 2
    Nt = 5              ; one value, or one per BS separated by commas
    Nr = 2              ; one value, or per-BS groups "2,2; 2,2; 2,2"
    d_max = 1           ; same shapes as Nr
    topology = full     ; full | symmetric | geometric

    [symmetric]
    J = 1
    R1 = 2
    R2 = 1

    [geometric]
    L = 15 km
    S = 3 km
    area = 30 km
    drop = per-seed     ; per-seed, or a fixed integer drop seed

    [sweep]
    schemes = proposed, bl1, bl2, bl4, bl5
    snr = 40 dB, 60 dB
    seeds = 0-49
    output = results.csv
    max_iters = 2000

Errors name the file line they come from.
"""

import configparser
import csv
import io
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .evaluation import SCHEMES, design_scheme, dof_slope, evaluate_design, stage_one
from .network import (
    FullyConnected,
    Geometric,
    NetworkConfig,
    Symmetric,
    build_connectivity,
    sample_channels,
)
from .transceiver import TransceiverOptions

__all__ = [
    "ConfigError",
    "ExperimentSpec",
    "SweepRow",
    "CSV_FIELDS",
    "parse_config",
    "load_config",
    "parse_seeds",
    "run_sweep",
    "write_rows",
    "rows_to_text",
]

CSV_FIELDS = (
    "scenario_id",
    "scheme",
    "seed",
    "snr_db",
    "sum_rate",
    "slope",
    "streams",
    "residual_leakage",
    "status",
)


class ConfigError(ValueError):
    """Config problem, with the offending line when it is known."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass
class ExperimentSpec:
    """A scenario plus the schemes, SNR points and seeds to sweep.

    With ``redraw_geometry`` a geometric topology gets a fresh drop for
    every seed, using the seed itself as the drop seed.
    """

    scenario: NetworkConfig
    schemes: list
    snr_grid_db: list
    seeds: list
    output_path: str | None = None
    scenario_id: str = "scenario"
    max_iters: int = 2000
    redraw_geometry: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.schemes:
            raise ConfigError("scheme list is empty")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            raise ConfigError(f"unknown schemes {bad}; choose from {list(SCHEMES)}")
        if not self.snr_grid_db:
            raise ConfigError("SNR grid is empty")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seed list has duplicates")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be positive")

    def config_for(self, seed):
        """Scenario of one run; only a redrawn geometry depends on `seed`."""
        topo = self.scenario.topology
        if self.redraw_geometry and isinstance(topo, Geometric):
            return replace(self.scenario, topology=replace(topo, seed=seed))
        return self.scenario


@dataclass
class SweepRow:
    scenario_id: str
    scheme: str
    seed: object
    snr_db: float
    sum_rate: float
    slope: float | None = None
    streams: float = 0
    residual_leakage: float = 0.0
    status: str = "ok"
    extra: dict = field(default_factory=dict)

    def as_list(self):
        return [
            self.scenario_id,
            self.scheme,
            self.seed,
            _fmt(self.snr_db),
            _fmt(self.sum_rate),
            "" if self.slope is None else _fmt(self.slope),
            _fmt(self.streams),
            _fmt(self.residual_leakage),
            self.status,
        ]


def _fmt(x):
    return format(float(x), ".10g")


def parse_seeds(text):
    """Seeds from ``"0-4, 7, 9"`` style text."""
    seeds = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        m = re.fullmatch(r"(-?\d+)\s*-\s*(-?\d+)", part)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo:
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        else:
            seeds.append(int(part))
    return seeds


def _strip_unit(text, unit):
    text = text.strip()
    if unit and text.lower().endswith(unit):
        text = text[: -len(unit)].strip()
    return float(text)


def _key_lines(text):
    """Map ``(section, key)`` to its 1-based line number in `text`."""
    lines, section = {}, None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = re.split(r"\s[;#]", raw, maxsplit=1)[0].strip()
        m = re.fullmatch(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip().lower()
            lines.setdefault((section, None), i)
            continue
        m = re.match(r"([^=:;#\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            lines[section, m.group(1).strip().lower()] = i
    return lines


class _Reader:
    def __init__(self, parser, lines):
        self.parser = parser
        self.lines = lines

    def fail(self, section, key, message):
        line = self.lines.get((section, key)) or self.lines.get((section, None))
        raise ConfigError(f"[{section}] {key}: {message}" if key else message, line)

    def get(self, section, key, conv, default=None, required=False):
        if not self.parser.has_option(section, key):
            if required:
                self.fail(section, None, f"missing key {key!r} in [{section}]")
            return default
        raw = self.parser.get(section, key)
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            self.fail(section, key, f"bad value {raw!r} ({exc})")


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _grid(text):
    """``"2"`` or ``"2,2; 2,2"`` into a list of per-BS lists."""
    return [_int_list(group) for group in text.split(";")]


def _expand(grid, G, K, name):
    if len(grid) == 1 and len(grid[0]) == 1:
        return [[grid[0][0]] * K for _ in range(G)]
    if len(grid) != G or any(len(row) != K for row in grid):
        raise ValueError(f"{name} needs 1 value or {G} groups of {K}")
    return grid


def parse_config(text, source="<config>"):
    """Build an `ExperimentSpec` from config text.

    Raises
    ------
    ConfigError
        With the line number of the offending key or section.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str.lower
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc).replace("\n", " "), getattr(exc, "lineno", None)) from None
    rd = _Reader(parser, _key_lines(text))
    if not parser.has_section("scenario"):
        raise ConfigError("missing [scenario] section")
    G = rd.get("scenario", "g", int, required=True)
    K = rd.get("scenario", "k", int, required=True)
    nt = rd.get("scenario", "nt", _int_list, required=True)
    if len(nt) == 1 and G:
        nt = nt * G
    nr = rd.get("scenario", "nr", _grid, required=True)
    dm = rd.get("scenario", "d_max", _grid, required=True)
    power = rd.get("scenario", "power", lambda s: 10 ** (_strip_unit(s, "db") / 10), 1.0)
    kind = rd.get("scenario", "topology", lambda s: s.strip().lower(), "full")
    redraw = False
    if kind == "full":
        topo = FullyConnected()
    elif kind == "symmetric":
        if not parser.has_section("symmetric"):
            rd.fail("scenario", "topology", "symmetric topology needs a [symmetric] section")
        topo = Symmetric(
            rd.get("symmetric", "j", int, required=True),
            rd.get("symmetric", "r1", int, required=True),
            rd.get("symmetric", "r2", int, required=True),
            rd.get("symmetric", "basis_seed", int),
        )
    elif kind == "geometric":
        if not parser.has_section("geometric"):
            rd.fail("scenario", "topology", "geometric topology needs a [geometric] section")
        km = lambda s: _strip_unit(s, "km")  # noqa: E731
        drop = rd.get("geometric", "drop", str, "0").strip().lower()
        redraw = drop == "per-seed"
        topo = Geometric(
            rd.get("geometric", "l", km, required=True),
            rd.get("geometric", "s", km, required=True),
            rd.get("geometric", "area", km, 30.0),
            0 if redraw else rd.get("geometric", "drop", int, 0),
            rd.get("geometric", "path_loss_exponent", float),
        )
    else:
        rd.fail("scenario", "topology", f"unknown topology {kind!r}")
    try:
        nr = _expand(nr, G, K, "Nr")
    except ValueError as exc:
        rd.fail("scenario", "nr", str(exc))
    try:
        dm = _expand(dm, G, K, "d_max")
    except ValueError as exc:
        rd.fail("scenario", "d_max", str(exc))
    try:
        cfg = NetworkConfig(G, K, nt, nr, dm, topo, power)
    except ValueError as exc:
        rd.fail("scenario", None, f"[scenario] invalid: {exc}")

    def snr_list(s):
        out = [_strip_unit(x, "db") for x in s.split(",") if x.strip()]
        if not out:
            raise ValueError("SNR grid is empty")
        return out

    def scheme_list(s):
        out = [x.strip().lower() for x in s.split(",") if x.strip()]
        bad = [x for x in out if x not in SCHEMES]
        if bad or not out:
            raise ValueError(f"unknown or missing schemes {bad}; choose from {list(SCHEMES)}")
        return out

    def seed_list(s):
        out = parse_seeds(s)
        if not out:
            raise ValueError("seed list is empty")
        return out

    sweep = "sweep"
    schemes = rd.get(sweep, "schemes", scheme_list, list(SCHEMES))
    snr = rd.get(sweep, "snr", snr_list, [40.0, 60.0])
    seeds = rd.get(sweep, "seeds", seed_list, list(range(50)))
    try:
        return ExperimentSpec(
            scenario=cfg,
            schemes=schemes,
            snr_grid_db=snr,
            seeds=seeds,
            output_path=rd.get(sweep, "output", str),
            scenario_id=rd.get(sweep, "scenario_id", str, "scenario"),
            max_iters=rd.get(sweep, "max_iters", int, 2000),
            redraw_geometry=redraw,
        )
    except ConfigError as exc:
        rd.fail(sweep, None, f"[sweep] {exc}")


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read(), source=str(path))


def _high_slope(samples):
    """Slope between the two highest SNR points when both are >= 30 dB."""
    pts = sorted(samples, key=lambda s: s.snr_db)
    if len(pts) < 2 or pts[-2].snr_db < 30:
        return None
    return dof_slope(pts[-2], pts[-1])


def _run_task(task):
    """All schemes and SNR points of one seed."""
    spec, seed = task
    cfg = spec.config_for(seed)
    conn = build_connectivity(cfg)
    stage = stage_one(cfg, conn) if {"proposed", "bl1"} & set(spec.schemes) else None
    channels = sample_channels(conn, seed)
    options = TransceiverOptions(seed=seed, max_iters=spec.max_iters)
    rows = []
    for scheme in spec.schemes:
        try:
            design = design_scheme(scheme, channels, stage, seed, options)
        except (np.linalg.LinAlgError, RuntimeError) as exc:
            rows += [
                SweepRow(spec.scenario_id, scheme, seed, snr, float("nan"), status="error",
                         extra={"error": str(exc)})
                for snr in spec.snr_grid_db
            ]
            continue
        status = "ok"
        if design.zf_report is not None and not design.zf_report.ok:
            status = "zf_deficient"
        samples = [evaluate_design(design, channels, 10 ** (snr / 10)) for snr in spec.snr_grid_db]
        slope = _high_slope(samples)
        for s in samples:
            rows.append(
                SweepRow(spec.scenario_id, scheme, seed, s.snr_db, s.sum_rate_bits, slope,
                         design.total_streams, s.residual_leakage, status)
            )
    return seed, rows


def run_sweep(spec, workers=1):
    """Run every (scheme, seed) of `spec` and append per-SNR means.

    Per-seed rows come first in (seed, scheme, SNR) order, then one row per
    (scheme, SNR) with ``seed = "mean"``. The mean row's slope is taken
    from the mean rates and its status counts failed seeds as
    ``"infeasible=<n>"``. The result does not depend on `workers`.

    Returns
    -------
    list of SweepRow
    """
    spec.validate()
    tasks = [(spec, seed) for seed in spec.seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = dict(pool.map(_run_task, tasks))
    else:
        done = dict(map(_run_task, tasks))
    rows = [row for seed in spec.seeds for row in done[seed]]
    for scheme in spec.schemes:
        mine = [r for r in rows if r.scheme == scheme]
        bad = len({r.seed for r in mine if r.status != "ok"})
        means = []
        for snr in spec.snr_grid_db:
            at = [r for r in mine if r.snr_db == snr and r.status != "error"]
            rate = float(np.mean([r.sum_rate for r in at])) if at else float("nan")
            streams = float(np.mean([r.streams for r in at])) if at else 0.0
            leak = float(np.mean([r.residual_leakage for r in at])) if at else float("nan")
            means.append(SweepRow(spec.scenario_id, scheme, "mean", snr, rate, None, streams, leak,
                                  f"infeasible={bad}"))
        slope = None
        if len(means) >= 2 and sorted(spec.snr_grid_db)[-2] >= 30:
            hi = sorted(means, key=lambda r: r.snr_db)[-2:]
            slope = (hi[1].sum_rate - hi[0].sum_rate) / ((hi[1].snr_db - hi[0].snr_db) / 10 * np.log2(10))
        for r in means:
            r.slope = slope
        rows += means
    return rows


def write_rows(rows, fh):
    """Write sweep rows as CSV with the `CSV_FIELDS` header."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in rows:
        writer.writerow(r.as_list())


def rows_to_text(rows):
    buf = io.StringIO()
    write_rows(rows, buf)
    return buf.getvalue()
