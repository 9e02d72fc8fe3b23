"""Command line front end.

Exit codes: 0 every check passed, 1 a tolerance check failed, 2 bad input or
an evaluation error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import expr as ex
from .curvature import ricci
from .geodesic import (
    GeodesicError,
    GeodesicProblem,
    collinearity_defect,
    common_prefix,
    integrate,
    unparametrized_distance,
)
from .geometry import ChartError, SingularMetricError, oneform_jets, sample_points
from .manifest import Manifest, ManifestError, load_manifest, manifest_dict, write_manifest
from .projective import (
    EquiaffinizeResult,
    equiaffinize,
    idempotence_residual,
    trace_normalization_residual,
    verify_curvature_relation,
    verify_ricci_relation,
)

TOL_IDENTITY = 1e-9
TOL_TRACE = 1e-10
TOL_IDEMPOTENCE = 1e-12


class Report:
    def __init__(self, command: str, manifest: Manifest, samples: int, seed: int):
        self.data = {
            "command": command,
            "manifest_digest": manifest.digest,
            "samples": samples,
            "seed": seed,
            "checks": {},
            "info": {},
        }

    def check(self, name, values, tol, points):
        values = np.atleast_1d(values)
        worst = int(np.argmax(values))
        residual = float(values[worst])
        self.data["checks"][name] = {
            "residual": residual,
            "tolerance": tol,
            "pass": residual <= tol,
            "worst_point": np.atleast_2d(points)[worst].tolist(),
        }

    def info(self, name, value):
        self.data["info"][name] = value

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.data["checks"].values())

    def dumps(self) -> str:
        self.data["pass"] = self.passed
        return json.dumps(self.data, indent=2) + "\n"


def _points(manifest: Manifest, args) -> tuple[np.ndarray, int]:
    seed = manifest.seed if args.seed is None else args.seed
    return sample_points(manifest.chart, args.samples, seed), seed


def _result_from(manifest: Manifest, points) -> tuple:
    """``(source connection, result)``; reuses psi/source sections when present."""
    if manifest.psi is not None and manifest.source is not None:
        return manifest.source, EquiaffinizeResult(
            manifest.psi, manifest.connection, manifest.metric, manifest.digest)
    r = equiaffinize(manifest.connection, manifest.metric, points=points,
                     provenance=manifest.digest)
    return manifest.connection, r


def cmd_check(args, out) -> int:
    manifest = load_manifest(args.manifest)
    points, seed = _points(manifest, args)
    report = Report("check", manifest, len(points), seed)
    report.check("ricci_asymmetry", ricci(manifest.connection, points).asym, args.tol, points)
    out.write(report.dumps())
    return 0 if report.passed else 1


def cmd_equiaffinize(args, out) -> int:
    manifest = load_manifest(args.manifest)
    points, seed = _points(manifest, args)
    r = equiaffinize(manifest.connection, manifest.metric, points=points,
                     provenance=manifest.digest)
    write_manifest(args.out, manifest_dict(
        manifest.chart, r.connection, manifest.metric if manifest.metric_given else None,
        manifest.seed, psi=r.psi, source=manifest.connection))
    report = Report("equiaffinize", manifest, len(points), seed)
    before = ricci(manifest.connection, points).asym
    report.info("ricci_asymmetry_before", float(before.max()))
    psi_val, _ = oneform_jets(r.psi, points)
    report.info("psi_max_abs", float(np.abs(psi_val).max()))
    report.check("ricci_asymmetry_after", ricci(r.connection, points).asym, args.tol, points)
    out.write(report.dumps())
    return 0 if report.passed else 1


def cmd_verify(args, out) -> int:
    manifest = load_manifest(args.manifest)
    points, seed = _points(manifest, args)
    source, r = _result_from(manifest, points)
    report = Report("verify", manifest, len(points), seed)
    report.info("ricci_asymmetry_before", float(ricci(source, points).asym.max()))
    report.check("ricci_asymmetry_after", ricci(r.connection, points).asym, args.tol, points)
    report.check("eq_f2_residual", verify_curvature_relation(source, r, points),
                 TOL_IDENTITY, points)
    report.check("eq_f4_residual", verify_ricci_relation(source, r, points),
                 TOL_IDENTITY, points)
    report.check("trace_normalization_residual", trace_normalization_residual(r, points),
                 TOL_TRACE, points)
    report.check("psi_idempotence_residual", idempotence_residual(r, points),
                 TOL_IDEMPOTENCE, points)
    out.write(report.dumps())
    return 0 if report.passed else 1


def _vector(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _companion(path: Path) -> Path:
    return path.with_name(f"{path.stem}-equiaffine{path.suffix or '.csv'}")


def cmd_geodesic(args, out) -> int:
    manifest = load_manifest(args.manifest)
    if len(args.start) != manifest.chart.n or len(args.velocity) != manifest.chart.n:
        raise GeodesicError(f"--start and --velocity need {manifest.chart.n} components")
    prob = GeodesicProblem(args.start, args.velocity, args.tmax, args.step)
    curve = integrate(manifest.connection, prob)
    curve.write_csv(args.out)
    fields = [f"samples={len(curve)}", f"truncated={str(curve.truncated).lower()}",
              f"t_final={curve.t[-1]:.17g}"]
    code = 0
    if args.compare_equiaffinized:
        r = equiaffinize(manifest.connection, manifest.metric,
                         points=sample_points(manifest.chart, 100, manifest.seed))
        bar = integrate(r.connection, prob)
        bar_path = _companion(Path(args.out))
        bar.write_csv(bar_path)
        distance = unparametrized_distance(*common_prefix(curve, bar))
        defect = collinearity_defect(bar, manifest.connection)
        ok = distance <= args.tol_distance and defect <= args.tol_defect
        fields += [f"equiaffine_samples={len(bar)}",
                   f"equiaffine_truncated={str(bar.truncated).lower()}",
                   f"distance={distance:.17g}", f"collinearity_defect={defect:.17g}",
                   f"pass={str(ok).lower()}"]
        code = 0 if ok else 1
    out.write(" ".join(fields) + "\n")
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="equiaffine",
        description="Construct and verify projectively equivalent equiaffine connections.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, tol=True):
        p.add_argument("manifest", help="input manifest (JSON)")
        p.add_argument("--samples", type=int, default=100, help="number of sample points")
        p.add_argument("--seed", type=int, default=None,
                       help="override the manifest's sampling seed")
        if tol:
            p.add_argument("--tol", type=float, default=1e-8,
                           help="tolerance on the Ricci asymmetry")

    p = sub.add_parser("check", help="test whether the Ricci tensor is symmetric")
    common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("equiaffinize", help="write the equiaffine representative")
    common(p)
    p.add_argument("--out", required=True, help="output manifest path")
    p.set_defaults(func=cmd_equiaffinize)

    p = sub.add_parser("verify", help="run the full identity suite")
    common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("geodesic", help="integrate a geodesic and export CSV")
    p.add_argument("manifest")
    p.add_argument("--start", type=_vector, required=True)
    p.add_argument("--velocity", type=_vector, required=True)
    p.add_argument("--tmax", type=float, default=1.0)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--compare-equiaffinized", action="store_true")
    p.add_argument("--tol-distance", type=float, default=1e-4)
    p.add_argument("--tol-defect", type=float, default=1e-6)
    p.add_argument("--out", required=True, help="CSV output path")
    p.set_defaults(func=cmd_geodesic)
    return parser


def main(argv=None, out=None, err=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        return args.func(args, out)
    except (ManifestError, ChartError, SingularMetricError, ex.DomainError,
            ex.ParseError, GeodesicError, OSError) as exc:
        err.write(f"equiaffine {args.command}: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
