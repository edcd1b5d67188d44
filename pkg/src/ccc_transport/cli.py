"""Command-line entry point.

    ccc-transport factorize --fn exp_sqrt
    ccc-transport orlicz --fn power:0.5 --f f.json --g g.json --space w.json
    ccc-transport wasserstein --fn power:2 --mu a.json --nu b.json --metric d.csv
    ccc-transport verify --fn exp_sqrt --phi exp_minus_one --psi power:0.5

Exit codes: 0 success, 2 invalid input, 3 numerical failure. Errors are
written to stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import gauge, scale, transport
from .errors import NumericalError, ValidationError
from .spaces import load_space

COMMANDS = ("factorize", "orlicz", "wasserstein", "verify")
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3
VERIFY_FLOOR = 0.05


@dataclass
class RunConfig:
    command: str
    fn: str
    tol: float | None = None
    grid_points: int = scale.DEFAULT_GRID_POINTS
    r_max: float = scale.DEFAULT_R_MAX
    output_format: str = "json"
    mu: str | None = None
    nu: str | None = None
    metric: str | None = None
    f: str | None = None
    g: str | None = None
    space: str | None = None
    pairs: str | None = None
    phi: str | None = None
    psi: str | None = None
    skip_metric_check: bool = False
    out: str | None = None
    inputs: dict = field(default_factory=dict, repr=False)

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ValidationError(f"unknown command {self.command!r}")
        if self.tol is not None and not self.tol > 0:
            raise ValidationError("--tol must be positive")
        if self.grid_points < 64:
            raise ValidationError("--grid-points must be >= 64")
        if not self.r_max > 0:
            raise ValidationError("--r-max must be positive")
        if self.output_format not in ("json", "csv"):
            raise ValidationError("--format must be json or csv")

    def resolved(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("inputs", "out") and v is not None}
        if self.tol is None:
            d["tol"] = gauge.DEFAULT_TOL if self.command == "orlicz" else transport.DEFAULT_TOL
        return d


def _need(config: RunConfig, *names: str) -> None:
    missing = [n for n in names if getattr(config, n) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise ValidationError(f"{config.command} requires {flags}")


def _floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _factorize(config: RunConfig, spec, fact) -> dict:
    x = fact.psi_hat.grid
    theta = np.asarray(spec(x))
    comp = np.asarray(fact.phi_check(fact.psi_hat(x)))
    rel = np.abs(comp - theta) / np.maximum(theta, 1e-12)
    return {
        "grid": _floats(x),
        "psi_hat": _floats(fact.psi_hat.values),
        "phi_check": {"grid": _floats(fact.phi_check.grid), "values": _floats(fact.phi_check.values)},
        "checks": {
            "max_relative_error": float(np.max(rel)),
            "phi_check_inv_at_1": fact.phi_check_inv_at_1,
            "psi_hat_concave": True,
            "phi_check_convex": True,
            "concave_source": fact.is_concave,
        },
    }


def _verify(config: RunConfig, spec, fact) -> dict:
    grid = fact.psi_hat.grid
    grid = grid[grid >= min(VERIFY_FLOOR, config.r_max)]
    report = {
        "minimal_residual": scale.verify_factorization(spec, fact.phi_spec(), fact.psi_spec(), grid),
    }
    if config.phi is not None or config.psi is not None:
        _need(config, "phi", "psi")
        phi, psi = scale.parse_scale(config.phi), scale.parse_scale(config.psi)
        report["candidate_residual"] = scale.verify_factorization(spec, phi, psi, grid)
        gap = scale.minimality_gap(psi, fact, grid)
        report["minimality_gap_max"] = float(np.max(gap))
        report["minimality_gap_min"] = float(np.min(gap))
    return report


def _orlicz(config: RunConfig, spec, fact) -> dict:
    _need(config, "f", "g", "space")
    f = load_space(config.f, kind="function")
    g = load_space(config.g, kind="function")
    space = load_space(config.space, kind="space")
    res = gauge.orlicz_distance(f, g, fact, space, tol=config.resolved()["tol"])
    return {
        "distance": res.distance,
        "modular_at_t": res.modular_at_t,
        "bisection_iterations": res.bisection_iterations,
        "bracket": list(res.bracket),
    }


def _wasserstein_one(mu_path, nu_path, metric, fact, tol) -> dict:
    mu = load_space(mu_path, kind="measure")
    nu = load_space(nu_path, kind="measure")
    res = transport.wasserstein_distance(mu, nu, metric, fact, tol=tol)
    return {
        "distance": res.distance,
        "transport_modular_at_w": res.transport_modular_at_w,
        "lp_solves": res.lp_solves,
        "bracket": list(res.bracket),
        "below_resolution": res.below_resolution,
        "plan": _floats(res.optimal_plan.q),
    }


def _wasserstein(config: RunConfig, spec, fact) -> dict:
    _need(config, "metric")
    metric = load_space(config.metric, kind="metric", check_triangle=not config.skip_metric_check)
    tol = config.resolved()["tol"]
    if config.pairs is not None:
        base = Path(config.pairs).parent
        try:
            manifest = json.loads(Path(config.pairs).read_text())
            pairs = manifest["pairs"]
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ValidationError(f"bad pairs manifest {config.pairs}: {exc}") from None
        results = []
        for entry in pairs:
            mu_path, nu_path = (str(base / entry[k]) for k in ("mu", "nu"))
            results.append({"mu": entry["mu"], "nu": entry["nu"], **_wasserstein_one(mu_path, nu_path, metric, fact, tol)})
        return {"results": results}
    _need(config, "mu", "nu")
    return _wasserstein_one(config.mu, config.nu, metric, fact, tol)


_HANDLERS = {"factorize": _factorize, "verify": _verify, "orlicz": _orlicz, "wasserstein": _wasserstein}


def run(config: RunConfig) -> tuple[int, dict]:
    """Execute one command. Returns ``(exit_code, document)``; on failure the
    document describes the error."""
    try:
        config.validate()
        spec = scale.parse_scale(config.fn)
        fact = scale.minimal_factorization(spec, config.grid_points, config.r_max)
        body = _HANDLERS[config.command](config, spec, fact)
    except ValidationError as exc:
        return EXIT_VALIDATION, _error_doc(exc, EXIT_VALIDATION, config)
    except NumericalError as exc:
        return EXIT_NUMERICAL, _error_doc(exc, EXIT_NUMERICAL, config)
    return EXIT_OK, {"config": config.resolved(), **body}


def _error_doc(exc: Exception, code: int, config: RunConfig) -> dict:
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    required = getattr(exc, "required", None)
    if required is not None:
        doc["required"] = required
    try:
        doc["config"] = config.resolved()
    except Exception:
        pass
    return doc


def render(doc: dict, config: RunConfig) -> str:
    if config.output_format == "json":
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if config.command == "factorize":
        writer.writerow(["r", "psi_hat", "theta"])
        for row in zip(doc["grid"], doc["psi_hat"], doc["phi_check"]["values"]):
            writer.writerow([repr(v) for v in row])
    elif config.command == "wasserstein" and "plan" in doc:
        for row in doc["plan"]:
            writer.writerow([repr(v) for v in row])
    else:
        raise ValidationError("CSV output is available for factorize and wasserstein only")
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ccc-transport", description=__doc__.split("\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--fn", required=True, help="scale function, e.g. power:2, exp_sqrt, compose:power:2,log1p")
    parser.add_argument("--mu")
    parser.add_argument("--nu")
    parser.add_argument("--metric")
    parser.add_argument("--pairs", help="JSON manifest {\"pairs\": [{\"mu\": ..., \"nu\": ...}]}")
    parser.add_argument("--f")
    parser.add_argument("--g")
    parser.add_argument("--space")
    parser.add_argument("--phi", help="convex factor to verify (verify command)")
    parser.add_argument("--psi", help="concave factor to verify (verify command)")
    parser.add_argument("--tol", type=float)
    parser.add_argument("--grid-points", type=int, default=scale.DEFAULT_GRID_POINTS)
    parser.add_argument("--r-max", type=float, default=scale.DEFAULT_R_MAX)
    parser.add_argument("--out")
    parser.add_argument("--format", dest="output_format", choices=("json", "csv"), default="json")
    parser.add_argument("--skip-metric-check", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = RunConfig(**vars(args))
    code, doc = run(config)
    if code != EXIT_OK:
        sys.stderr.write(json.dumps(doc, sort_keys=True) + "\n")
        return code
    try:
        text = render(doc, config)
    except ValidationError as exc:
        sys.stderr.write(json.dumps(_error_doc(exc, EXIT_VALIDATION, config), sort_keys=True) + "\n")
        return EXIT_VALIDATION
    if config.out:
        Path(config.out).write_text(text)
    else:
        try:
            sys.stdout.write(text)
            sys.stdout.flush()
        except BrokenPipeError:
            # reader went away (e.g. piped into head); not an error
            sys.stdout = open(os.devnull, "w")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
