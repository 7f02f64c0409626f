"""Scenario definitions, deterministic batch execution, and exports.

A scenario pins everything a run needs: space, map, center generator,
radius schedules, regime, scale count, horizon, sample plan, win threshold,
and seed.  One flat key=value config file (INI sections) fully determines a
run; the scenario hash is a SHA-256 over the canonical field listing, so
any change to any field changes the hash.

Runs are deterministic for a fixed seed regardless of worker count: samples
are computed independently and merged by index.  CSV exports use comma
separators, dot decimals, 17-significant-digit floats, LF line endings, and
a header row.  Sampling is uniform (grid or seeded); outputs label the
fractions as empirical statistics under that sampling, nothing stronger.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
import time
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import space, visits
from .anchors import AnchorSource
from .derived import StratifiedCenters, centers_from_table, centers_to_table, flat_centers
from .derived import construct_rank_sequence
from .errors import ConfigurationError
from .targets import (
    COUNTABLE,
    NOWHERE_DENSE,
    SOMEWHERE_DENSE,
    RadiusSchedule,
    TargetFamily,
    build_family_somewhere_dense,
    certificate_to_csv,
    parse_schedule,
    select_tails_countable,
    select_tails_nowhere_dense,
)

SAMPLER_GRID = "uniform_grid"
SAMPLER_SEEDED = "seeded_uniform"

# Sample points this close to a center start inside every ball, which makes
# hit times identically zero and swamps the statistics.
_CENTER_EXCLUSION = 1e-12

_SAMPLING_NOTE = (
    "sampling: uniform over the space (pragmatic choice); fractions are "
    "empirical under this sampling and claim neither Baire-category nor "
    "measure-theoretic typicality"
)


@dataclass(frozen=True)
class IsolatedFinite:
    points: tuple[space.SpacePoint, ...]

    def describe(self) -> list[str]:
        coords = [
            ",".join(format(c, ".17g") for c in p.coords) for p in self.points
        ]
        return ["generator=isolated_finite", "points=" + ";".join(coords)]


@dataclass(frozen=True)
class RankCluster:
    x: space.SpacePoint
    delta: float
    rank: int
    branching: int

    def describe(self) -> list[str]:
        at = ",".join(format(c, ".17g") for c in self.x.coords)
        return [
            "generator=rank_cluster",
            f"x={at}",
            f"delta={format(self.delta, '.17g')}",
            f"rank={self.rank}",
            f"branching={self.branching}",
        ]


@dataclass(frozen=True)
class CantorEmbedding:
    lo: float
    hi: float
    depth: int

    def describe(self) -> list[str]:
        return [
            "generator=cantor_embedding",
            f"interval={format(self.lo, '.17g')},{format(self.hi, '.17g')}",
            f"depth={self.depth}",
        ]


@dataclass(frozen=True)
class DenseInterval:
    lo: float
    hi: float
    count: int

    def describe(self) -> list[str]:
        return [
            "generator=dense_interval",
            f"interval={format(self.lo, '.17g')},{format(self.hi, '.17g')}",
            f"count={self.count}",
        ]


@dataclass(frozen=True)
class ExplicitFile:
    path: str

    def describe(self) -> list[str]:
        return ["generator=explicit_file", f"path={self.path}"]


CenterSpec = Union[IsolatedFinite, RankCluster, CantorEmbedding, DenseInterval, ExplicitFile]

_REGIME_FOR_GENERATOR = {
    IsolatedFinite: (COUNTABLE, NOWHERE_DENSE),
    RankCluster: (COUNTABLE,),
    CantorEmbedding: (NOWHERE_DENSE,),
    DenseInterval: (SOMEWHERE_DENSE,),
    ExplicitFile: (COUNTABLE, NOWHERE_DENSE, SOMEWHERE_DENSE),
}


@dataclass(frozen=True)
class ScenarioSpec:
    space_kind: str
    map_: space.DynamicalMap
    centers: CenterSpec
    schedule: RadiusSchedule | tuple[RadiusSchedule, ...]
    regime: str
    scales: int
    horizon: int
    samples: int
    sampler: str
    threshold: int
    seed: int

    def __post_init__(self):
        if self.space_kind not in (space.CIRCLE, space.TORUS):
            raise ConfigurationError(f"unknown space kind {self.space_kind!r}")
        if self.map_.space_kind != self.space_kind:
            raise ConfigurationError("map and space kinds disagree")
        if self.scales < 1:
            raise ConfigurationError(f"scales must be >= 1, got {self.scales}")
        if self.horizon < 1:
            raise ConfigurationError(f"horizon must be >= 1, got {self.horizon}")
        if self.samples < 0:
            raise ConfigurationError(f"samples must be >= 0, got {self.samples}")
        if self.threshold < 2:
            raise ConfigurationError(f"threshold must be >= 2, got {self.threshold}")
        if self.sampler not in (SAMPLER_GRID, SAMPLER_SEEDED):
            raise ConfigurationError(f"unknown sampler {self.sampler!r}")
        allowed = _REGIME_FOR_GENERATOR[type(self.centers)]
        if self.regime not in allowed:
            raise ConfigurationError(
                f"{type(self.centers).__name__} centers require regime in "
                f"{allowed}, got {self.regime!r}"
            )

    def canonical_lines(self) -> list[str]:
        lines = [f"space={self.space_kind}"]
        if isinstance(self.map_, space.RotationMap):
            lines.append(f"map=rotation alpha={format(self.map_.alpha, '.17g')}")
        else:
            (a, b), (c, d) = self.map_.matrix
            lines.append(f"map=toral matrix={a},{b},{c},{d}")
        lines.extend(self.centers.describe())
        if isinstance(self.schedule, tuple):
            for idx, s in enumerate(self.schedule, start=1):
                lines.append(f"schedule[{idx}]={s.describe()}")
        else:
            lines.append(f"schedule={self.schedule.describe()}")
        lines.extend([
            f"regime={self.regime}",
            f"scales={self.scales}",
            f"horizon={self.horizon}",
            f"samples={self.samples}",
            f"sampler={self.sampler}",
            f"threshold={self.threshold}",
            f"seed={self.seed}",
        ])
        return lines


def scenario_hash(spec: ScenarioSpec) -> str:
    payload = "\n".join(spec.canonical_lines()).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


# ---------------------------------------------------------------------------
# config files


def parse_config_text(text: str) -> ScenarioSpec:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"bad config file: {exc}") from exc
    try:
        return _spec_from_parser(cp)
    except (KeyError, ValueError, configparser.Error) as exc:
        raise ConfigurationError(f"bad config file: {exc}") from exc


def parse_config(path: str) -> ScenarioSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def _spec_from_parser(cp: configparser.ConfigParser) -> ScenarioSpec:
    kind = cp.get("space", "kind")
    map_kind = cp.get("map", "kind")
    if map_kind == "rotation":
        map_ = space.RotationMap(cp.getfloat("map", "alpha", fallback=space.DEFAULT_ROTATION_ANGLE))
    elif map_kind == "toral_automorphism":
        vals = [int(v) for v in cp.get("map", "matrix").split()]
        if len(vals) != 4:
            raise ConfigurationError("toral matrix needs 4 integers: a b c d")
        map_ = space.ToralAutomorphismMap(((vals[0], vals[1]), (vals[2], vals[3])))
    else:
        raise ConfigurationError(f"unknown map kind {map_kind!r}")

    gen = cp.get("centers", "generator")
    if gen == "isolated_finite":
        pts = []
        for tok in cp.get("centers", "points").split(";"):
            coords = tuple(float(v) for v in tok.split(","))
            pts.append(space.make_point(kind, coords))
        centers: CenterSpec = IsolatedFinite(tuple(pts))
    elif gen == "rank_cluster":
        coords = tuple(float(v) for v in cp.get("centers", "x").split(","))
        centers = RankCluster(
            x=space.make_point(kind, coords),
            delta=cp.getfloat("centers", "delta"),
            rank=cp.getint("centers", "rank"),
            branching=cp.getint("centers", "branching"),
        )
    elif gen == "cantor_embedding":
        lo, hi = (float(v) for v in cp.get("centers", "interval").split(","))
        centers = CantorEmbedding(lo, hi, cp.getint("centers", "depth"))
    elif gen == "dense_interval":
        lo, hi = (float(v) for v in cp.get("centers", "interval").split(","))
        centers = DenseInterval(lo, hi, cp.getint("centers", "count"))
    elif gen == "explicit_file":
        centers = ExplicitFile(cp.get("centers", "path"))
    else:
        raise ConfigurationError(f"unknown center generator {gen!r}")

    schedule = parse_schedule(
        cp.get("schedule", "family")
        + " "
        + " ".join(
            f"{k}={v}" for k, v in cp.items("schedule") if k != "family"
        )
    )
    horizon = cp.getint("run", "horizon", fallback=None)
    if horizon is None:
        horizon = visits.default_horizon(map_)
    return ScenarioSpec(
        space_kind=kind,
        map_=map_,
        centers=centers,
        schedule=schedule,
        regime=cp.get("targets", "regime"),
        scales=cp.getint("run", "scales"),
        horizon=horizon,
        samples=cp.getint("run", "samples"),
        sampler=cp.get("run", "sampler", fallback=SAMPLER_SEEDED),
        threshold=cp.getint("run", "threshold"),
        seed=cp.getint("run", "seed"),
    )


# ---------------------------------------------------------------------------
# center generation


def cantor_gap_midpoints(lo: float, hi: float, depth: int) -> list[float]:
    """Midpoints of the middle-thirds gaps removed up to `depth`, step-major,
    left to right within each step."""
    if depth < 1:
        raise ConfigurationError(f"cantor depth must be >= 1, got {depth}")
    segments = [(lo, hi)]
    out = []
    for _ in range(depth):
        next_segments = []
        for a, b in segments:
            third = (b - a) / 3.0
            out.append((a + b) / 2.0)
            next_segments.append((a, a + third))
            next_segments.append((b - third, b))
        segments = next_segments
    return out


def generate_centers(spec: ScenarioSpec) -> StratifiedCenters:
    cs = spec.centers
    if isinstance(cs, IsolatedFinite):
        return flat_centers(cs.points)
    if isinstance(cs, RankCluster):
        anchor = AnchorSource(spec.map_, spec.seed)
        return construct_rank_sequence(
            cs.x, cs.delta, cs.rank, cs.branching, anchor
        )
    if isinstance(cs, CantorEmbedding):
        mids = cantor_gap_midpoints(cs.lo, cs.hi, cs.depth)
        return flat_centers([space.CirclePoint(v) for v in mids])
    if isinstance(cs, DenseInterval):
        rng = np.random.Generator(np.random.PCG64(spec.seed))
        # one sequential stream: the first k draws are the same for any count
        vals = rng.uniform(cs.lo, cs.hi, cs.count)
        return flat_centers([space.CirclePoint(v) for v in vals])
    if isinstance(cs, ExplicitFile):
        with open(cs.path, "r", encoding="utf-8") as fh:
            return centers_from_table(fh.read())
    raise ConfigurationError(f"unhandled center spec {cs!r}")


def build_family(spec: ScenarioSpec, centers: StratifiedCenters | None = None) -> TargetFamily:
    if centers is None:
        centers = generate_centers(spec)
    if spec.regime == COUNTABLE:
        return select_tails_countable(centers, spec.schedule)
    if spec.regime == NOWHERE_DENSE:
        return select_tails_nowhere_dense(centers, spec.schedule)
    return build_family_somewhere_dense(centers, spec.schedule)


# ---------------------------------------------------------------------------
# sampling


def sample_points(spec: ScenarioSpec, centers: StratifiedCenters) -> list[space.SpacePoint]:
    pts = centers.space_points()

    def clear_of_centers(q: space.SpacePoint) -> bool:
        return all(space.distance(q, p) > _CENTER_EXCLUSION for p in pts)

    if spec.samples == 0:
        return []
    if spec.sampler == SAMPLER_GRID:
        if spec.space_kind == space.CIRCLE:
            grid = [space.CirclePoint(j / spec.samples) for j in range(spec.samples)]
        else:
            side = int(math.ceil(math.sqrt(spec.samples)))
            grid = [
                space.TorusPoint(a / side, b / side)
                for a in range(side)
                for b in range(side)
            ][: spec.samples]
        return [q for q in grid if clear_of_centers(q)]
    rng = np.random.Generator(np.random.PCG64(spec.seed ^ 0xA5A5A5A5))
    out = []
    for _ in range(spec.samples):
        for _ in range(1000):
            if spec.space_kind == space.CIRCLE:
                q: space.SpacePoint = space.CirclePoint(rng.random())
            else:
                q = space.TorusPoint(rng.random(), rng.random())
            if clear_of_centers(q):
                out.append(q)
                break
        else:
            raise ConfigurationError(
                "could not draw a sample point clear of all centers"
            )
    return out


# ---------------------------------------------------------------------------
# runs


@dataclass(frozen=True)
class RunResult:
    spec: ScenarioSpec
    scenario_hash: str
    family: TargetFamily
    samples: tuple[space.SpacePoint, ...]
    traces: tuple[visits.WinnerTrace, ...]
    reports: tuple[visits.ClassificationReport, ...]
    histogram: np.ndarray          # (scales, tracked + 2): wins, ties, no-hits
    fraction_indecisive: float
    fraction_completely: float
    wall_clock: float
    anomalies: tuple[str, ...] = ()  # per-row oddities, recorded not raised

    @property
    def tracked(self) -> tuple[int, ...]:
        return tuple(range(1, self.family.size + 1))


def _scan_for_anomalies(traces, horizon: int) -> tuple[str, ...]:
    notes = []
    for s, tr in enumerate(traces):
        steps = tr.hit_steps
        if steps.min(initial=0) < -1 or steps.max(initial=0) > horizon:
            notes.append(f"sample {s}: hit step outside -1..{horizon}")
        finite = steps.astype(float)
        finite[finite < 0] = np.inf
        with np.errstate(invalid="ignore"):  # inf - inf rows are fine
            decreasing = np.any(np.diff(finite, axis=1) < 0)
        if decreasing:
            notes.append(f"sample {s}: hit steps decrease across scales")
    return tuple(notes)


def set_worker_threads(threads: int | None) -> int:
    """Clamp and apply the compiled-kernel worker count; returns the value used."""
    import numba

    available = numba.config.NUMBA_NUM_THREADS
    if threads is None:
        threads = available
    used = max(1, min(int(threads), available))
    numba.set_num_threads(used)
    return used


def run_scenario(spec: ScenarioSpec, threads: int | None = None) -> RunResult:
    """Deterministic batch run: same spec and seed give identical results
    for any worker count."""
    t0 = time.perf_counter()
    set_worker_threads(threads)
    centers = generate_centers(spec)
    family = build_family(spec, centers)
    if spec.regime != SOMEWHERE_DENSE and not family.certificate.passed:
        raise ConfigurationError(
            "separation certificate failed: "
            f"{family.certificate.first_violation}"
        )
    samples = sample_points(spec, centers)
    tracked = tuple(range(1, family.size + 1))
    traces = visits.winner_trace_batch(
        spec.map_, samples, family, tracked, spec.scales, spec.horizon
    )
    reports = tuple(
        visits.classify_trace(tr, spec.threshold) for tr in traces
    )
    histogram = _winner_histogram(traces, len(tracked), spec.scales)
    n = len(reports)
    frac_ind = sum(r.indecisive for r in reports) / n if n else 0.0
    frac_com = sum(r.completely_indecisive for r in reports) / n if n else 0.0
    return RunResult(
        spec=spec,
        scenario_hash=scenario_hash(spec),
        family=family,
        samples=tuple(samples),
        traces=tuple(traces),
        reports=tuple(reports),
        histogram=histogram,
        fraction_indecisive=frac_ind,
        fraction_completely=frac_com,
        wall_clock=time.perf_counter() - t0,
        anomalies=_scan_for_anomalies(traces, spec.horizon),
    )


def _winner_histogram(traces, n_tracked: int, scales: int) -> np.ndarray:
    hist = np.zeros((scales, n_tracked + 2), dtype=np.int64)
    for tr in traces:
        for n in range(1, scales + 1):
            row = tr.row(n)
            if row.winner is not None:
                hist[n - 1, row.tracked.index(row.winner)] += 1
            elif row.reason == visits.WINNER_TIE:
                hist[n - 1, n_tracked] += 1
            else:
                hist[n - 1, n_tracked + 1] += 1
    return hist


# ---------------------------------------------------------------------------
# exports


def _f(v: float) -> str:
    return format(v, ".17g")


def trace_csv(result: RunResult) -> str:
    out = io.StringIO()
    out.write("sample_id,scale,center,hit_step,winner\n")
    for s, tr in enumerate(result.traces):
        for n in range(1, tr.scales + 1):
            row = tr.row(n)
            w = row.winner if row.winner is not None else 0
            for idx, step in zip(row.tracked, row.steps):
                hs = step if step is not None else -1
                out.write(f"{s},{n},{idx},{hs},{w}\n")
    return out.getvalue()


def classification_csv(result: RunResult) -> str:
    tracked = result.tracked
    out = io.StringIO()
    cols = ",".join(f"wins_{i}" for i in tracked)
    out.write(
        "sample_id,misses_everything,eventual_winner,"
        + cols
        + ",indecisive,completely_indecisive\n"
    )
    for s, rep in enumerate(result.reports):
        ev = rep.eventual_winner if rep.eventual_winner is not None else 0
        wins = ",".join(str(c) for c in rep.win_counts)
        out.write(
            f"{s},{int(rep.misses_everything)},{ev},{wins},"
            f"{int(rep.indecisive)},{int(rep.completely_indecisive)}\n"
        )
    return out.getvalue()


def histogram_csv(result: RunResult) -> str:
    out = io.StringIO()
    cols = ",".join(f"wins_{i}" for i in result.tracked)
    out.write(f"scale,{cols},ties,no_hits\n")
    for n in range(result.spec.scales):
        row = ",".join(str(int(v)) for v in result.histogram[n])
        out.write(f"{n + 1},{row}\n")
    return out.getvalue()


@dataclass(frozen=True)
class SummaryView:
    """Exactly the data a text summary renders; reconstructible from files."""

    scenario_hash: str
    regime: str
    size: int
    scales: int
    horizon: int
    threshold: int
    seed: int
    n_samples: int
    fraction_indecisive: float
    fraction_completely: float
    histogram: np.ndarray
    cert_regime: str
    cert_passed: bool
    cert_constraints: int
    cert_violations: int
    cert_min_margin: float


def _summary_view(result) -> SummaryView:
    if isinstance(result, SummaryView):
        return result
    cert = result.family.certificate
    return SummaryView(
        scenario_hash=result.scenario_hash,
        regime=result.spec.regime,
        size=result.family.size,
        scales=result.spec.scales,
        horizon=result.spec.horizon,
        threshold=result.spec.threshold,
        seed=result.spec.seed,
        n_samples=len(result.reports),
        fraction_indecisive=result.fraction_indecisive,
        fraction_completely=result.fraction_completely,
        histogram=result.histogram,
        cert_regime=cert.regime,
        cert_passed=cert.passed,
        cert_constraints=len(cert.constraints),
        cert_violations=len(cert.violations()),
        cert_min_margin=cert.min_margin,
    )


def summarize(result) -> str:
    """Deterministic text summary (wall-clock intentionally excluded).

    Accepts a RunResult or a SummaryView loaded back from exported files;
    both render identically.
    """
    v = _summary_view(result)
    lines = [
        f"scenario {v.scenario_hash}",
        f"regime {v.regime}; centers {v.size}; scales {v.scales}; "
        f"horizon {v.horizon}; threshold {v.threshold}; seed {v.seed}",
        f"samples classified: {v.n_samples}",
        f"fraction indecisive (>=2 centers with >= {v.threshold} wins): "
        f"{_f(v.fraction_indecisive)}",
        f"fraction completely indecisive (all centers): "
        f"{_f(v.fraction_completely)}",
        f"certificate: regime {v.cert_regime}, passed {v.cert_passed}, "
        f"constraints {v.cert_constraints}, violations {v.cert_violations}, "
        f"min margin {_f(v.cert_min_margin)}",
        "winner histogram (scale: wins per center | ties | no-hits):",
    ]
    for n in range(v.scales):
        row = v.histogram[n]
        wins = " ".join(str(int(c)) for c in row[:-2])
        lines.append(f"  {n + 1}: {wins} | {int(row[-2])} | {int(row[-1])}")
    lines.append(_SAMPLING_NOTE)
    return "\n".join(lines) + "\n"


OUTPUT_FILES = (
    "centers.txt",
    "certificate.csv",
    "trace.csv",
    "classification.csv",
    "histogram.csv",
    "summary.txt",
)


def write_outputs(result: RunResult, outdir) -> dict[str, str]:
    """Write the standard output files; returns name -> path."""
    import os

    os.makedirs(outdir, exist_ok=True)
    files = {
        "centers.txt": centers_to_table(result.family.centers),
        "certificate.csv": certificate_to_csv(result.family.certificate),
        "trace.csv": trace_csv(result),
        "classification.csv": classification_csv(result),
        "histogram.csv": histogram_csv(result),
        "summary.txt": summarize(result),
    }
    paths = {}
    for name, content in files.items():
        path = os.path.join(outdir, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(content)
        paths[name] = path
    return paths


def load_outputs(outdir) -> SummaryView:
    """Reconstruct the summary-visible data from exported files."""
    import os
    import re

    with open(os.path.join(outdir, "summary.txt"), "r", encoding="utf-8") as fh:
        summary = fh.read().splitlines()
    with open(os.path.join(outdir, "histogram.csv"), "r", encoding="utf-8") as fh:
        hist_lines = [ln for ln in fh.read().splitlines() if ln]
    with open(os.path.join(outdir, "certificate.csv"), "r", encoding="utf-8") as fh:
        cert_text = fh.read()

    head = re.match(
        r"regime (\S+); centers (\d+); scales (\d+); horizon (\d+); "
        r"threshold (\d+); seed (-?\d+)",
        summary[1],
    )
    if head is None:
        raise ConfigurationError("unrecognized summary header")
    regime, size, scales, horizon, threshold, seed = head.groups()
    n_samples = int(summary[2].split(":")[1])
    frac_ind = float(summary[3].rsplit(":", 1)[1])
    frac_com = float(summary[4].rsplit(":", 1)[1])
    cert_line = re.match(
        r"certificate: regime (\S+), passed (\S+), constraints (\d+), "
        r"violations (\d+), min margin (\S+)",
        summary[5],
    )
    if cert_line is None:
        raise ConfigurationError("unrecognized certificate summary line")
    cert_regime, passed_s, n_constraints, n_violations, min_margin = cert_line.groups()

    n_tracked = len(hist_lines[0].split(",")) - 3  # scale, ..., ties, no_hits
    hist = np.zeros((int(scales), n_tracked + 2), dtype=np.int64)
    for ln in hist_lines[1:]:
        vals = [int(v) for v in ln.split(",")]
        hist[vals[0] - 1] = vals[1:]

    from .targets import certificate_from_csv

    cert = certificate_from_csv(cert_text, cert_regime)
    return SummaryView(
        scenario_hash=summary[0].split()[1],
        regime=regime,
        size=int(size),
        scales=int(scales),
        horizon=int(horizon),
        threshold=int(threshold),
        seed=int(seed),
        n_samples=n_samples,
        fraction_indecisive=frac_ind,
        fraction_completely=frac_com,
        histogram=hist,
        cert_regime=cert_regime,
        cert_passed=passed_s == "True",
        cert_constraints=int(n_constraints),
        cert_violations=int(n_violations),
        cert_min_margin=cert.min_margin,
    )
