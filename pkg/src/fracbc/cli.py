"""Command-line front end.

Every subcommand writes its data files (CSV or JSON) plus a
``manifest.json`` echoing the configuration into the output directory.
A manifest can be fed back with ``--config`` to reproduce a run.

Exit codes: 0 success, 1 a check failed, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

COMMANDS = ("build-matrix", "solve", "simulate", "converge", "verify", "compare")
OUTPUT_ENV = "FRACBC_OUTPUT_DIR"
EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    """Raised with every problem found in a configuration at once."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class RunConfig:
    command: str
    alpha: float = 1.5
    bc: str = "DD"
    n: int = 64
    t_final: float = 0.5
    output_times: list = field(default_factory=list)
    initial: str = "delta@0"
    direction: str = "forward"
    n_paths: int = 10_000
    seed: int = 0
    x0: float = 0.0
    samples: int = 16
    record: int = 0
    suite: str = "all"
    n_sequence: list = field(default_factory=lambda: [32, 64, 128, 256])
    min_order: float = 0.3
    plot: bool = False
    output_dir: str = ""

    def validate(self) -> "RunConfig":
        from .generators import BoundaryPair

        problems = []
        if self.command not in COMMANDS:
            problems.append(f"command must be one of {', '.join(COMMANDS)}")
        if not 1.0 < self.alpha <= 2.0:
            problems.append(f"alpha must lie in (1, 2], got {self.alpha}")
        if self.bc.lower() != "all":
            try:
                self.bc = BoundaryPair.parse(self.bc).name
            except ValueError as exc:
                problems.append(str(exc))
        elif self.command not in ("converge", "compare", "build-matrix"):
            problems.append("bc 'all' is only accepted by build-matrix, converge and compare")
        if self.n < 3:
            problems.append(f"n must be at least 3, got {self.n}")
        if self.t_final < 0:
            problems.append("t must be non-negative")
        times = sorted(set(float(t) for t in self.output_times) | {float(self.t_final)})
        if any(t < 0 for t in times):
            problems.append("output times must be non-negative")
        self.output_times = times
        if self.direction not in ("forward", "backward"):
            problems.append("direction must be forward or backward")
        if self.n_paths < 1:
            problems.append("paths must be positive")
        if self.seed < 0:
            problems.append("seed must be non-negative")
        if not -1.0 <= self.x0 <= 1.0:
            problems.append("x0 must lie in [-1, 1]")
        if self.samples < 2:
            problems.append("samples must be at least 2")
        seq = [int(v) for v in self.n_sequence]
        if len(seq) < 3 or any(b <= a for a, b in zip(seq, seq[1:])):
            problems.append("n-sequence needs at least three strictly increasing levels")
        self.n_sequence = seq
        if not self.initial or not any(self.initial.startswith(p) for p in
                                       ("delta@", "uniform", "poly:", "file:", "bump")):
            problems.append(f"unknown initial condition {self.initial!r}")
        out = Path(self.output_dir or os.environ.get(OUTPUT_ENV, "fracbc_output"))
        try:
            out.mkdir(parents=True, exist_ok=True)
            if not os.access(out, os.W_OK):
                problems.append(f"output directory {out} is not writable")
        except OSError as exc:
            problems.append(f"cannot create output directory {out}: {exc}")
        self.output_dir = str(out)
        if problems:
            raise ConfigError(problems)
        return self

    @property
    def pairs(self) -> list:
        from .generators import SUPPORTED_PAIRS

        return list(SUPPORTED_PAIRS) if self.bc.lower() == "all" else [self.bc]

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError([f"unknown config keys: {', '.join(unknown)}"])
        return cls(**data)


def _versions() -> dict:
    import scipy

    from . import __version__

    return {"fracbc": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


class Outputs:
    """Collects written files for the manifest."""

    def __init__(self, root: str):
        self.root = Path(root)
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.root / name

    def write_json(self, name: str, obj) -> None:
        with open(self.path(name), "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def manifest(self, config: RunConfig) -> None:
        from . import __version__

        doc = {"config": asdict(config), "seed": config.seed, "artifact_version": __version__,
               "versions": _versions(), "files": sorted(self.files)}
        with open(self.root / "manifest.json", "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _initial(config: RunConfig, n: int, direction: str):
    from .grid import C0, L1, Grid, sample
    from .semigroup import make_initial
    from .verify import smooth_initial

    if config.initial == "bump":
        space = L1 if direction == "forward" else C0
        return sample(Grid(n), smooth_initial, config.samples, space=space, check=False)
    return make_initial(config.initial, n, direction, config.samples)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_build_matrix(config: RunConfig, out: Outputs) -> int:
    from .generators import InvariantError, rate_matrix

    status = EXIT_OK
    for pair in config.pairs:
        rm = rate_matrix(config.alpha, pair, config.n)
        tag = pair.replace("*", "s")
        rm.write_json(out.path(f"matrix_{tag}.json"))
        rm.to_csv(out.path(f"matrix_{tag}.csv"))
        try:
            rm.check()
            print(f"{pair}: ok (max row sum {rm.row_sums().max():.3e})")
        except InvariantError as exc:
            print(f"{pair}: {exc}", file=sys.stderr)
            status = EXIT_FAIL
    return status


def cmd_solve(config: RunConfig, out: Outputs) -> int:
    from .semigroup import EvolutionProblem, evolve

    f = _initial(config, config.n, config.direction)
    sol = evolve(EvolutionProblem(config.direction, config.alpha, config.bc, config.n, f,
                                  tuple(config.output_times)))
    sol.to_csv(out.path("solution.csv"))
    with open(out.path("mass.csv"), "w") as fh:
        fh.write("t,mass,norm\n")
        for t, m, nm in zip(sol.times, sol.mass, sol.norms):
            fh.write(f"{t!r},{m!r},{nm!r}\n")
    out.write_json("summary.json", sol.summary())
    if config.plot:
        from .plotting import plot_solution

        plot_solution(sol, out.path("solution.png"), title=f"{config.bc}, alpha={config.alpha}")
    print(f"solved to t={sol.times[-1]:g}; mass {sol.mass[-1]:.6f}")
    return EXIT_OK


def cmd_simulate(config: RunConfig, out: Outputs) -> int:
    from .stochastic import empirical_density, simulate_feller

    ens = simulate_feller((config.alpha, config.bc, config.n), config.x0, config.output_times,
                          config.n_paths, config.seed, samples=config.samples,
                          record=config.record)
    with open(out.path("histogram.csv"), "w") as fh:
        fh.write("t,x,density,stderr\n")
        for t in config.output_times:
            hist = empirical_density(ens, t)
            for x, d, e in zip(hist.centers, hist.density, hist.stderr):
                fh.write(f"{t!r},{float(x)!r},{float(d)!r},{float(e)!r}\n")
    with open(out.path("survival.csv"), "w") as fh:
        fh.write("t,survival\n")
        for t in config.output_times:
            fh.write(f"{t!r},{ens.survival(t)!r}\n")
    if config.record:
        ens.write_paths(out.path("paths.csv"))
    print(f"simulated {config.n_paths} paths; survival at t={config.t_final:g}: "
          f"{ens.survival(config.t_final):.4f}")
    return EXIT_OK


def cmd_converge(config: RunConfig, out: Outputs) -> int:
    from .verify import CheckResult, ConvergenceStudy, self_convergence

    status = EXIT_OK
    rows, results, studies = [], [], []
    for pair in config.pairs:
        study = ConvergenceStudy(pair, config.alpha, config.direction,
                                 tuple(config.n_sequence), config.t_final)
        order = self_convergence(study)
        studies.append(study)
        for n, err in zip(study.n_sequence, study.errors):
            rows.append((pair, n, 2.0 / (n + 1), err))
        ok = order > config.min_order
        results.append(CheckResult("self_convergence",
                                   {"bc": pair, "alpha": config.alpha,
                                    "direction": config.direction, "n": config.n_sequence,
                                    "t": config.t_final},
                                   order, config.min_order, ok,
                                   {"errors": study.errors, "orders": study.orders,
                                    "monotone": study.monotone}).to_dict())
        flag = "" if study.monotone else " (non-monotone errors)"
        print(f"{pair}: order {order:.3f}{flag}")
        if not ok:
            status = EXIT_FAIL
    with open(out.path("convergence.csv"), "w") as fh:
        fh.write("bc,n,h,error\n")
        for pair, n, h, err in rows:
            fh.write(f"{pair},{n},{h!r},{err!r}\n")
    out.write_json("convergence.json", results)
    if config.plot:
        from .plotting import plot_convergence

        plot_convergence(studies, out.path("convergence.png"))
    return status


def cmd_verify(config: RunConfig, out: Outputs) -> int:
    from .verify import run_suite

    try:
        results = run_suite(config.suite, config.alpha)
    except KeyError as exc:
        raise ConfigError([str(exc.args[0])]) from None
    report = [r.to_dict() for r in results]
    out.write_json("verify.json", report)
    failed = [r for r in report if not r["pass"]]
    for r in failed:
        print(f"FAIL {r['check']} {r['params']}: {r['measured']} vs {r['threshold']}",
              file=sys.stderr)
    print(f"{len(report) - len(failed)}/{len(report)} checks passed")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_compare(config: RunConfig, out: Outputs) -> int:
    from .verify import compare_mc_pde

    status = EXIT_OK
    summary = []
    for pair in config.pairs:
        rep = compare_mc_pde(config.alpha, pair, config.n, config.t_final, config.n_paths,
                             config.seed, config.x0, config.samples)
        tag = pair.replace("*", "s")
        rep.to_csv(out.path(f"compare_{tag}.csv"))
        ok = rep.passed()
        summary.append({"check": "mc_pde", "params": {"bc": pair, "alpha": config.alpha,
                                                      "n": config.n, "t": config.t_final,
                                                      "paths": config.n_paths,
                                                      "seed": config.seed},
                        "measured": rep.max_abs_z, "threshold": 4.0, "pass": ok,
                        "details": {"killed_pde": rep.pde_killed, "killed_mc": rep.mc_killed,
                                    "killed_z": rep.killed_z}})
        print(f"{pair}: max |z| {rep.max_abs_z:.2f}, killed z {rep.killed_z:.2f}")
        if config.plot:
            from .plotting import plot_compare

            plot_compare(rep, out.path(f"compare_{tag}.png"))
        if not ok:
            status = EXIT_FAIL
    out.write_json("compare.json", summary)
    return status


HANDLERS = {
    "build-matrix": cmd_build_matrix,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "converge": cmd_converge,
    "verify": cmd_verify,
    "compare": cmd_compare,
}


def run(config: RunConfig) -> int:
    """Validate, dispatch and write the manifest; returns the exit code."""
    config.validate()
    out = Outputs(config.output_dir)
    status = HANDLERS[config.command](config, out)
    out.manifest(config)
    return status


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _floats(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list:
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracbc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="re-run the configuration stored in a manifest")
    common.add_argument("--alpha", type=float)
    common.add_argument("--bc", help="boundary pair: DD, DN, ND, NN, N*D, N*N (or 'all')")
    common.add_argument("--n", type=int, help="number of interior grid points")
    common.add_argument("--out", dest="output_dir", help=f"output directory (env {OUTPUT_ENV})")
    common.add_argument("--samples", type=int, help="lambda samples per grid")
    common.add_argument("--plot", action="store_true", default=None, help="also render PNG figures")

    timed = argparse.ArgumentParser(add_help=False)
    timed.add_argument("--t", dest="t_final", type=float)
    timed.add_argument("--times", dest="output_times", type=_floats,
                       help="comma-separated extra output times")

    random = argparse.ArgumentParser(add_help=False)
    random.add_argument("--paths", dest="n_paths", type=int)
    random.add_argument("--seed", type=int)
    random.add_argument("--x0", type=float, help="starting point of the paths")

    sub.add_parser("build-matrix", parents=[common], help="assemble and check a rate matrix")
    p = sub.add_parser("solve", parents=[common, timed], help="forward or backward evolution")
    p.add_argument("--initial", help="delta@x, uniform, poly:c0,c1,..., file:path or bump")
    p.add_argument("--direction", choices=["forward", "backward"])
    p = sub.add_parser("simulate", parents=[common, timed, random], help="simulate paths")
    p.add_argument("--record", type=int, help="number of paths whose events are written")
    p = sub.add_parser("converge", parents=[common, timed], help="mesh refinement study")
    p.add_argument("--direction", choices=["forward", "backward"])
    p.add_argument("--n-sequence", dest="n_sequence", type=_ints)
    p.add_argument("--min-order", dest="min_order", type=float)
    p = sub.add_parser("verify", parents=[common], help="run a named group of checks")
    p.add_argument("--suite", help="grunwald, matrix, resolvent, semigroup, adjoint, theta, "
                                   "range or all")
    sub.add_parser("compare", parents=[common, timed, random],
                   help="Monte Carlo against the forward equation")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    given = {k: v for k, v in vars(args).items() if v is not None and k != "config"}
    base = {}
    if args.config:
        try:
            with open(args.config) as fh:
                base = json.load(fh).get("config", {})
        except (OSError, ValueError) as exc:
            raise ConfigError([f"cannot read config {args.config}: {exc}"]) from None
        if base.get("command", given["command"]) != given["command"]:
            raise ConfigError([f"config is for command {base['command']!r}"])
    base.update(given)
    if "output_times" in given and "t_final" not in given and given["output_times"]:
        base["t_final"] = max(given["output_times"])
    return RunConfig.from_dict(base)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(config_from_args(args))
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except (TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
