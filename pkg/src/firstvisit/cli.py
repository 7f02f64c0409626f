"""Command-line surface.

Subcommands: run (full batch + exports), verify (certificate only),
witness (constructive witness search for one center), collapse (sibling
coverage diagnostic), construct (emit the centers table), selftest
(built-in invariant battery).

Exit codes: 0 success, 1 configuration error, 2 selftest/acceptance
failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import tempfile

from . import harness, space, visits
from .errors import FirstVisitError


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="firstvisit",
        description="first visits to shrinking targets under circle/torus dynamics",
    )
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and export CSVs")
    run.add_argument("config")
    run.add_argument("--out", default="firstvisit-out")
    run.add_argument("--threads", type=int, default=None)
    run.add_argument("--seed", type=int, default=None)

    ver = sub.add_parser("verify", help="build the family and report its certificate")
    ver.add_argument("config")
    ver.add_argument("--out", default=None)

    wit = sub.add_parser("witness", help="constructive witness search for one center")
    wit.add_argument("config")
    wit.add_argument("--center", type=int, required=True)
    wit.add_argument("--m", type=int, required=True)
    wit.add_argument("--n-max", type=int, default=200)
    wit.add_argument("--samples", type=int, default=1000)
    wit.add_argument("--witnesses", type=int, default=6,
                     help="approach witnesses requested for accumulation centers")
    wit.add_argument("--seed", type=int, default=None)

    col = sub.add_parser("collapse", help="sibling coverage of one ball")
    col.add_argument("config")
    col.add_argument("--center", type=int, required=True)
    col.add_argument("--n", type=int, required=True)
    col.add_argument("--grid-eps", type=float, default=1e-5)

    con = sub.add_parser("construct", help="emit the centers table")
    con.add_argument("config")
    con.add_argument("--out", default=None)

    sub.add_parser("selftest", help="run the built-in invariant battery")
    return p


def _cmd_run(args) -> int:
    spec = harness.parse_config(args.config)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    result = harness.run_scenario(spec, threads=args.threads)
    paths = harness.write_outputs(result, args.out)
    sys.stdout.write(harness.summarize(result))
    sys.stdout.write(f"wall clock: {result.wall_clock:.3f} s\n")
    sys.stdout.write("outputs:\n")
    for name in harness.OUTPUT_FILES:
        sys.stdout.write(f"  {paths[name]}\n")
    return 0


def _cmd_verify(args) -> int:
    spec = harness.parse_config(args.config)
    family = harness.build_family(spec)
    cert = family.certificate
    sys.stdout.write(
        f"certificate: regime {cert.regime}, passed {cert.passed}, "
        f"constraints {len(cert.constraints)}, "
        f"violations {len(cert.violations())}, "
        f"min margin {format(cert.min_margin, '.17g')}\n"
    )
    if cert.first_violation is not None:
        v = cert.first_violation
        sys.stdout.write(
            f"first violation: {v.kind} i={v.i} j={v.j} "
            f"margin={format(v.margin, '.17g')}\n"
        )
    if args.out is not None:
        from .targets import certificate_to_csv

        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(certificate_to_csv(cert))
        sys.stdout.write(f"certificate CSV: {args.out}\n")
    return 0 if (cert.passed or spec.regime == harness.SOMEWHERE_DENSE) else 2


def _cmd_witness(args) -> int:
    spec = harness.parse_config(args.config)
    family = harness.build_family(spec)
    params = visits.WitnessParams(
        n_max=args.n_max,
        samples=args.samples,
        horizon=spec.horizon,
        seed=args.seed if args.seed is not None else spec.seed,
    )
    level = family.centers.level_of(args.center)
    if level == 0:
        res = visits.open_witness_search(spec.map_, family, args.center, args.m, params)
        if res.success:
            c = res.witness_center
            at = ",".join(format(v, ".17g") for v in c.coords)
            sys.stdout.write(
                f"open witness: center {args.center} m {args.m} scale {res.scale} "
                f"ball around ({at}) radius {format(res.witness_radius, '.17g')} "
                f"samples {res.samples} fraction 1\n"
            )
            return 0
        sys.stdout.write(
            f"open witness search exhausted: best scale {res.best_scale} "
            f"radius {res.best_radius} fraction {format(res.fraction, '.17g')}\n"
        )
        return 2
    res = visits.boundary_witness_search(
        spec.map_, family, args.center, args.m, args.witnesses, params
    )
    if res.success:
        sys.stdout.write(
            f"boundary witnesses: center {args.center} (level {level}) m {args.m} "
            f"scale {res.scale}; {res.found} approach witnesses\n"
        )
        for t, w in enumerate(res.witnesses, start=1):
            d = space.distance(w, res.target)
            sys.stdout.write(f"  t={t} distance {format(d, '.17g')} < 2^-{t}\n")
        return 0
    sys.stdout.write(
        f"boundary witness search exhausted: found {res.found} of {res.requested}\n"
    )
    return 2


def _cmd_collapse(args) -> int:
    spec = harness.parse_config(args.config)
    family = harness.build_family(spec)
    frac = visits.collapse_diagnostic(family, args.center, args.n, args.grid_eps)
    sys.stdout.write(
        f"sibling coverage of ball {args.center} at scale {args.n}: "
        f"{format(frac, '.17g')}\n"
    )
    return 0


def _cmd_construct(args) -> int:
    spec = harness.parse_config(args.config)
    centers = harness.generate_centers(spec)
    from .derived import centers_to_table

    table = centers_to_table(centers)
    if args.out is None:
        sys.stdout.write(table)
    else:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(table)
        sys.stdout.write(f"centers table: {args.out}\n")
    return 0


def _selftest_checks():
    import numpy as np

    from . import derived, targets

    yield "wrap range", all(
        0.0 <= space.wrap(v) < 1.0 for v in np.linspace(-3, 3, 1001)
    )

    rot = space.RotationMap()
    rng = np.random.Generator(np.random.PCG64(7))
    ok = True
    for _ in range(2000):
        p = space.CirclePoint(rng.random())
        q = space.apply_map(rot, space.apply_map(rot, p, "forward"), "inverse")
        ok = ok and space.distance(p, q) <= 1e-12
    yield "rotation round trip", ok

    cat = space.ToralAutomorphismMap()
    ok = True
    for _ in range(2000):
        p = space.TorusPoint(rng.random(), rng.random())
        q = space.apply_map(cat, space.apply_map(cat, p, "forward"), "inverse")
        ok = ok and space.distance(p, q) <= 1e-12
    yield "toral round trip", ok

    pts = [space.CirclePoint(v) for v in rng.random(60)]
    delta = 0.01 + 0.05 * rng.random()
    fast = derived.derived_set_approx(pts, delta)
    slow = [
        q
        for a, q in enumerate(pts)
        if any(b != a and space.distance(pts[b], q) <= delta for b in range(len(pts)))
    ]
    yield "derived set matches definition", fast == slow

    worked = targets.select_tails_nowhere_dense(
        [space.CirclePoint(0.0), space.CirclePoint(0.5), space.CirclePoint(0.25)],
        targets.HarmonicSchedule(1.0),
    )
    yield "worked nowhere-dense tails", worked.tails == (1, 2, 4)

    spec = harness.ScenarioSpec(
        space_kind=space.CIRCLE,
        map_=space.RotationMap(),
        centers=harness.CantorEmbedding(0.0, 1.0, 2),
        schedule=targets.HarmonicSchedule(0.1),
        regime=targets.NOWHERE_DENSE,
        scales=5,
        horizon=20_000,
        samples=16,
        sampler=harness.SAMPLER_SEEDED,
        threshold=2,
        seed=11,
    )
    with tempfile.TemporaryDirectory() as d1, tempfile.TemporaryDirectory() as d2:
        p1 = harness.write_outputs(harness.run_scenario(spec, threads=1), d1)
        p2 = harness.write_outputs(harness.run_scenario(spec, threads=8), d2)
        same = True
        for name in harness.OUTPUT_FILES:
            with open(p1[name], "rb") as fh1, open(p2[name], "rb") as fh2:
                same = same and fh1.read() == fh2.read()
    yield "worker-count determinism", same


def _cmd_selftest(_args) -> int:
    failures = 0
    for name, ok in _selftest_checks():
        sys.stdout.write(f"{'PASS' if ok else 'FAIL'} {name}\n")
        failures += 0 if ok else 1
    return 0 if failures == 0 else 2


_COMMANDS = {
    "run": _cmd_run,
    "verify": _cmd_verify,
    "witness": _cmd_witness,
    "collapse": _cmd_collapse,
    "construct": _cmd_construct,
    "selftest": _cmd_selftest,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except FirstVisitError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"i/o error: {exc}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
