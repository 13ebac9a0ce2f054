"""Experiment runner and report emitter.

Scenarios are batch experiments over the library's operations; each run
writes one self-describing JSON report (plus a CSV for fit tables) with a
deterministic payload: identical config and seed give byte-identical
payloads, with wall-clock time stored outside the payload.

Subcommands: run / regress / freeze / list-scenarios.  Golden constants live
in the package's goldens/ directory unless TUBELAB_GOLDEN_DIR points
elsewhere; `regress` compares recorded constants against them within a
factor of 2, and `freeze` writes them from a set of reports.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .concentration import (
    BallNet,
    ThinningError,
    random_thin,
    worst_ratio_of_lines,
)
from .dichotomy import (
    DirectionMultiset,
    control_card_ratio,
    decide_dichotomy,
    verify_option_a,
    verify_option_b,
)
from .dimension import (
    Region,
    box_counting_dim,
    exponent_fit_norms,
    holder_comparison,
)
from .functionals import Grid
from .generators import GeneratorSpec, cantor_offsets, gen_lines_in_planes
from .linegeom import Direction, Line
from .suites import (
    DECOMPOSE_DELTAS,
    DECOMPOSE_RHO,
    MK_DELTAS,
    decompose_constant,
    induction_constant,
    mk_ratio,
    standard_suite,
)

CONFIG_SCHEMA = "tubelab-config-1"
REPORT_SCHEMA = "tubelab-report-1"


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# ---------------------------------------------------------------------------
# config and report records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    scenario: str
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(
                f"unknown scenario {self.scenario!r}; choose from {sorted(SCENARIOS)}"
            )
        allowed = set(SCENARIOS[self.scenario].defaults)
        unknown = set(self.params) - allowed
        if unknown:
            raise ConfigError(
                f"unknown keys {sorted(unknown)} for scenario {self.scenario!r}; "
                f"allowed: {sorted(allowed)}"
            )

    def resolved_params(self) -> dict:
        out = dict(SCENARIOS[self.scenario].defaults)
        out.update(self.params)
        return out

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "scenario": self.scenario,
            "seed": self.seed,
            "params": self.params,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        extra = set(data) - {"name", "scenario", "seed", "params"}
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        missing = {"name", "scenario"} - set(data)
        if missing:
            raise ConfigError(f"config missing keys {sorted(missing)}")
        return cls(
            name=str(data["name"]),
            scenario=str(data["scenario"]),
            seed=int(data.get("seed", 0)),
            params=dict(data.get("params", {})),
        )


@dataclass(frozen=True)
class ExperimentReport:
    payload: dict
    wall_clock_s: float

    @property
    def passed(self) -> bool:
        return bool(self.payload["passed"])

    @property
    def name(self) -> str:
        return self.payload["name"]

    def payload_json(self) -> str:
        return json.dumps(self.payload, sort_keys=True, indent=1)

    def to_json(self) -> str:
        return json.dumps(
            {"payload": self.payload, "wall_clock_s": self.wall_clock_s},
            sort_keys=True,
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        data = json.loads(text)
        return cls(payload=data["payload"], wall_clock_s=float(data["wall_clock_s"]))


def _check(name: str, passed: bool, value, bound) -> dict:
    return {"name": name, "passed": bool(passed), "value": value, "bound": bound}


# ---------------------------------------------------------------------------
# scenario runners
# ---------------------------------------------------------------------------


def _run_dichotomy(params: dict, seed: int):
    trials = int(params["trials"])
    rhos = [float(r) for r in params["rhos"]]
    max_n = int(params["max_directions"])
    verified = 0
    ratio_max = 0.0
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        n = int(rng.integers(2, 4))
        N = int(rng.integers(1, max_n + 1))
        k = int(rng.integers(2, n + 1))
        rho = rhos[int(rng.integers(len(rhos)))]
        if rng.random() < 0.5:
            vecs = rng.normal(size=(N, n))
        else:
            base = rng.normal(size=n)
            vecs = base + 0.01 * rng.normal(size=(N, n))
        vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
        U = DirectionMultiset(vecs)
        res = decide_dichotomy(U, k, rho)
        ok = (
            verify_option_a(U, k, rho, res.good_tuple_count)
            if res.variant == "A"
            else verify_option_b(U, k, rho, res.witness)
        )
        if ok:
            verified += 1
        if trial % 16 == 0:
            ratio_max = max(ratio_max, control_card_ratio(U, k, rho, seed=trial))
    values = {"trials": trials, "verified": verified}
    constants = {"max_control_ratio": ratio_max}
    checks = [
        _check("all_certificates_verified", verified == trials, verified, trials),
        _check("control_ratio_bounded", ratio_max <= 8.0, ratio_max, 8.0),
    ]
    return values, constants, checks


def _run_kakeya(params: dict, seed: int):
    deltas = [float(d) for d in params["deltas"]]
    factor = int(params["grid_factor"])
    names = params["members"]
    members = standard_suite() if names == "all" else [
        m for m in standard_suite() if m.name in names
    ]
    values = {}
    constants = {}
    checks = []
    for m in members:
        for dl in deltas:
            r = mk_ratio(m, dl, grid_factor=factor)
            key = f"mk_ratio[{m.name}][{dl!r}]"
            values[key] = r
            constants[key] = r
            checks.append(_check(f"finite[{m.name}][{dl!r}]", r <= 10.0, r, 10.0))
    # Crossing families of axis tubes: both sides factorize, so the ratio is
    # 1 up to the end-cap volume and grid error.
    lw = next((m for m in members if m.name == "axes-n2-k2"), None)
    if lw is not None:
        r = mk_ratio(lw, 2.0**-5, grid_factor=8)
        values["loomis_whitney_ratio"] = r
        checks.append(_check("loomis_whitney_unit_ratio", abs(r - 1.0) <= 0.1, r, "1 +- 0.1"))
    return values, constants, checks


def _run_decompose(params: dict, seed: int):
    return _run_split_constants(params, decompose_constant, "decompose_C")


def _run_induction(params: dict, seed: int):
    return _run_split_constants(params, induction_constant, "induction_C")


def _run_split_constants(params: dict, fn, label: str):
    deltas = [float(d) for d in params["deltas"]]
    rho = float(params["rho"])
    factor = int(params["grid_factor"])
    names = params["members"]
    members = standard_suite() if names == "all" else [
        m for m in standard_suite() if m.name in names
    ]
    values = {}
    constants = {}
    checks = []
    for m in members:
        cs = []
        for dl in deltas:
            c = fn(m, dl, rho=rho, grid_factor=factor)
            cs.append(c)
            key = f"{label}[{m.name}][{dl!r}]"
            values[key] = c
            constants[key] = c
        spread = max(cs) / min(cs) if min(cs) > 0 else math.inf
        checks.append(_check(f"stable_across_scales[{m.name}]", spread <= 2.0, spread, 2.0))
    return values, constants, checks


def _parallel_line_set(n_lines: int, delta: float) -> list[Line]:
    """Parallel lines with feet spaced 4*delta: ball counts stay below half
    the non-concentration bound at every radius above delta."""
    u = Direction([1.0, 0.0])
    return [
        Line(u, [0.0, (i - (n_lines - 1) / 2.0) * 4.0 * delta]) for i in range(n_lines)
    ]


def _run_thin(params: dict, seed: int):
    n_lines = int(params["n_lines"])
    delta = float(params["delta"])
    n_seeds = int(params["seeds"])
    binom_trials = int(params["binomial_trials"])
    lines = _parallel_line_set(n_lines, delta)
    net = BallNet.build(2, delta)
    input_ratio = worst_ratio_of_lines(lines, delta, 1, 1.0, net)
    successes = 0
    attempts_used = []
    for s in range(n_seeds):
        try:
            res = random_thin(
                lines, A=2.0, C0=1.0, eps=0.0, delta=delta, seed=seed + s,
                net=net, d=1, beta=1.0, max_attempts=1,
            )
            successes += 1
            attempts_used.append(res.attempts)
        except ThinningError:
            pass
    rate = successes / n_seeds

    # Two far-apart lines at probability 1/2: keeping at least one line is
    # the only binding condition, so the success probability is exactly 3/4.
    small_delta = 1.0 / 64.0
    u = Direction([1.0, 0.0])
    pair = [Line(u, [0.0, 0.0]), Line(u, [0.0, 0.5])]
    small_net = BallNet.build(2, small_delta)
    trial_seeds = np.random.default_rng([seed, 101]).integers(2**62, size=binom_trials)
    wins = 0
    for t in range(binom_trials):
        try:
            random_thin(
                pair, A=2.0, C0=1.0, eps=0.0, delta=small_delta, seed=int(trial_seeds[t]),
                net=small_net, d=1, beta=1.0, max_attempts=1,
            )
            wins += 1
        except ThinningError:
            pass
    binom_rate = wins / binom_trials
    analytic = 1.0 - 0.25  # P(Binomial(2, 1/2) >= 1)

    values = {
        "input_worst_ratio": input_ratio,
        "success_rate": rate,
        "binomial_rate": binom_rate,
        "binomial_analytic": analytic,
    }
    constants = {"input_worst_ratio": input_ratio}
    checks = [
        _check("input_within_slack", input_ratio <= 1.0, input_ratio, 1.0),
        _check("thinning_success_rate", rate >= 0.9, rate, 0.9),
        _check(
            "binomial_matches_analytic",
            abs(binom_rate - analytic) <= 0.02,
            binom_rate,
            f"{analytic} +- 0.02",
        ),
    ]
    return values, constants, checks


def _run_dimension(params: dict, seed: int):
    values = {}
    constants = {}
    checks = []

    disk_h = float(params["disk_h"])
    G = Grid(2, disk_h, 1.0)
    centers = G.centers_of_linear(np.arange(G.m**2))
    disk = Region(G, np.nonzero(np.linalg.norm(centers, axis=1) <= 1.0)[0])
    fit = box_counting_dim(disk, [2.0**-j for j in range(1, 6)])
    values["disk_dim"] = fit.slope
    checks.append(_check("disk_dim", abs(fit.slope - 2.0) <= 0.1, fit.slope, "2 +- 0.1"))

    cd = float(params["cantor_delta"])
    offsets = cantor_offsets(0.5, cd)
    G1 = Grid(1, 2.0**-8, 1.0)
    cfit = box_counting_dim(
        Region.from_points(G1, offsets), [2.0**-j for j in range(1, 7)]
    )
    values["cantor_dim"] = cfit.slope
    checks.append(_check("cantor_dim", abs(cfit.slope - 0.5) <= 0.15, cfit.slope, "0.5 +- 0.15"))

    for fam_cfg in params["families"]:
        n, d, beta, dl = (
            int(fam_cfg["n"]),
            int(fam_cfg["d"]),
            float(fam_cfg["beta"]),
            float(fam_cfg["delta"]),
        )
        F = gen_lines_in_planes(n, d, beta, dl, size_cap=400_000)
        Gf = Grid.for_family(F, factor=4)
        rep = holder_comparison(F, Gf, F.p)
        tag = f"n{n}d{d}"
        values[f"deficit[{tag}]"] = rep.exponent_deficit
        values[f"dim_fit[{tag}]"] = rep.dim_fit
        constants[f"dim_fit[{tag}]"] = rep.dim_fit
        checks.append(_check(f"holder_chain[{tag}]", rep.chain_holds, rep.mass_lhs, rep.holder_rhs))
        checks.append(
            _check(f"deficit[{tag}]", rep.exponent_deficit >= -0.25, rep.exponent_deficit, -0.25)
        )
    return values, constants, checks


def _run_sharpness(params: dict, seed: int):
    factor = int(params["grid_factor"])
    values = {}
    constants = {}
    checks = []
    for cfg in params["configs"]:
        n, d, beta = int(cfg["n"]), int(cfg["d"]), float(cfg["beta"])
        scales = [float(s) for s in cfg["scales"]]
        spec = GeneratorSpec("planes", n, scales[0], d=d, beta=beta, size_cap=400_000)
        p = (d + beta) / (d + beta - 1.0)
        fit = exponent_fit_norms(spec, scales, p, grid_factor=factor)
        target = (1.0 - d) / (d + beta)
        tag = f"n{n}d{d}"
        values[f"slope[{tag}]"] = fit.slope
        values[f"residual[{tag}]"] = fit.residual
        values[f"fit_table[{tag}]"] = [
            [s, v] for s, v in zip(fit.scales, fit.values)
        ]
        constants[f"slope[{tag}]"] = fit.slope
        checks.append(
            _check(
                f"sharpness_exponent[{tag}]",
                abs(fit.slope - target) <= 0.15,
                fit.slope,
                f"{target} +- 0.15",
            )
        )
        checks.append(_check(f"fit_residual[{tag}]", fit.residual < 0.1, fit.residual, 0.1))
    return values, constants, checks


@dataclass(frozen=True)
class Scenario:
    runner: object
    description: str
    defaults: dict


SCENARIOS: dict[str, Scenario] = {
    "dichotomy": Scenario(
        _run_dichotomy,
        "randomized spread/concentrate certificates with exhaustive verification",
        {"trials": 500, "rhos": [0.05, 0.1, 0.3], "max_directions": 12},
    ),
    "kakeya": Scenario(
        _run_kakeya,
        "multilinear transversality norm ratios over the standard suite",
        {"deltas": list(MK_DELTAS), "grid_factor": 4, "members": "all"},
    ),
    "decompose": Scenario(
        _run_decompose,
        "two-term cap decomposition constants across scales",
        {
            "deltas": list(DECOMPOSE_DELTAS),
            "rho": DECOMPOSE_RHO,
            "grid_factor": 4,
            "members": "all",
        },
    ),
    "induction": Scenario(
        _run_induction,
        "coarsening-step constants across scales",
        {
            "deltas": list(DECOMPOSE_DELTAS),
            "rho": DECOMPOSE_RHO,
            "grid_factor": 4,
            "members": "all",
        },
    ),
    "thin": Scenario(
        _run_thin,
        "random thinning: size and ball condition across seeds, plus the exact binomial case",
        {"n_lines": 1024, "delta": 2.0**-12, "seeds": 20, "binomial_trials": 10_000},
    ),
    "dimension": Scenario(
        _run_dimension,
        "box-counting dimension checks and the duality comparison",
        {
            "disk_h": 2.0**-8,
            "cantor_delta": 2.0**-6,
            "families": [
                {"n": 2, "d": 1, "beta": 1.0, "delta": 2.0**-6},
                {"n": 3, "d": 2, "beta": 1.0, "delta": 2.0**-5},
            ],
        },
    ),
    "sharpness": Scenario(
        _run_sharpness,
        "scale exponent of the normalized norm on the parallel-plane configuration",
        {
            "grid_factor": 4,
            "configs": [
                {"n": 2, "d": 1, "beta": 1.0, "scales": [2.0**-3, 2.0**-4, 2.0**-5, 2.0**-6, 2.0**-7]},
                {"n": 3, "d": 2, "beta": 1.0, "scales": [2.0**-3, 2.0**-4, 2.0**-5]},
            ],
        },
    ),
}


def run_scenario(cfg: ExperimentConfig) -> ExperimentReport:
    """Execute one scenario and assemble its report."""
    t0 = time.time()
    runner = SCENARIOS[cfg.scenario].runner
    values, constants, checks = runner(cfg.resolved_params(), cfg.seed)
    payload = {
        "schema": REPORT_SCHEMA,
        "version": __version__,
        "name": cfg.name,
        "scenario": cfg.scenario,
        "config": cfg.to_dict(),
        "values": values,
        "constants": constants,
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
    }
    return ExperimentReport(payload=payload, wall_clock_s=time.time() - t0)


# ---------------------------------------------------------------------------
# golden values
# ---------------------------------------------------------------------------


def golden_dir() -> Path:
    env = os.environ.get("TUBELAB_GOLDEN_DIR")
    if env:
        return Path(env)
    return Path(__file__).parent / "goldens"


def golden_path() -> Path:
    return golden_dir() / "golden.json"


def load_golden() -> dict:
    path = golden_path()
    if not path.exists():
        raise FileNotFoundError(
            f"no golden file at {path}; run the scenarios once and freeze them with "
            "`tubelab freeze --reports <dir>` (or set TUBELAB_GOLDEN_DIR)"
        )
    return json.loads(path.read_text())


def freeze(reports: list[ExperimentReport]) -> Path:
    golden = {}
    if golden_path().exists():
        golden = json.loads(golden_path().read_text())
    for rep in reports:
        golden[rep.payload["name"]] = rep.payload["constants"]
    golden_dir().mkdir(parents=True, exist_ok=True)
    golden_path().write_text(json.dumps(golden, sort_keys=True, indent=1) + "\n")
    return golden_path()


def regress(reports: list[ExperimentReport], tolerance: float = 2.0) -> tuple[bool, list[dict]]:
    """Compare recorded constants against goldens within a multiplicative factor."""
    golden = load_golden()
    rows = []
    ok = True
    for rep in reports:
        name = rep.payload["name"]
        gold = golden.get(name)
        for key, val in rep.payload["constants"].items():
            if gold is None or key not in gold:
                rows.append({"scenario": name, "constant": key, "status": "missing-golden",
                             "value": val, "golden": None, "ratio": None})
                ok = False
                continue
            ref = gold[key]
            if abs(val) < 1e-9 and abs(ref) < 1e-9:
                ratio = 1.0
            elif ref == 0 or val == 0:
                ratio = math.inf
            else:
                ratio = val / ref
            good = (1.0 / tolerance) <= ratio <= tolerance
            rows.append({"scenario": name, "constant": key, "status": "ok" if good else "drift",
                         "value": val, "golden": ref, "ratio": ratio})
            ok = ok and good
    return ok, rows


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _load_config_file(path: Path) -> list[ExperimentConfig]:
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    extra = set(data) - {"schema", "scenarios"}
    if extra:
        raise ConfigError(f"unknown top-level config keys {sorted(extra)}")
    if data.get("schema") != CONFIG_SCHEMA:
        raise ConfigError(f"config schema must be {CONFIG_SCHEMA!r}, got {data.get('schema')!r}")
    scenarios = data.get("scenarios")
    if not isinstance(scenarios, list) or not scenarios:
        raise ConfigError("config must list at least one scenario")
    return [ExperimentConfig.from_dict(s) for s in scenarios]


def _write_report(rep: ExperimentReport, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{rep.name}.json"
    path.write_text(rep.to_json() + "\n")
    for key, val in rep.payload["values"].items():
        if key.startswith("fit_table"):
            csv_path = out_dir / f"{rep.name}.{key.split('[')[1].rstrip(']')}.csv"
            lines = ["scale,value"] + [f"{s!r},{v!r}" for s, v in val]
            csv_path.write_text("\n".join(lines) + "\n")
    return path


def _run_one(args_tuple):
    cfg_dict, overrides = args_tuple
    cfg = ExperimentConfig.from_dict(cfg_dict)
    if overrides.get("seed") is not None:
        cfg = ExperimentConfig(cfg.name, cfg.scenario, int(overrides["seed"]), cfg.params)
    if overrides.get("grid_h") is not None and "grid_factor" in SCENARIOS[cfg.scenario].defaults:
        params = dict(cfg.params)
        params["grid_factor"] = max(int(round(1.0 / float(overrides["grid_h"]))), 2)
        cfg = ExperimentConfig(cfg.name, cfg.scenario, cfg.seed, params)
    rep = run_scenario(cfg)
    return rep.to_json()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tubelab",
        description="desk-scale verification experiments for tube-incidence geometry",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the scenarios in a config file")
    p_run.add_argument("--config", required=True, type=Path)
    p_run.add_argument("--seed", type=int, default=None, help="override every scenario seed")
    p_run.add_argument("--out", type=Path, default=Path("reports"))
    p_run.add_argument(
        "--grid-h",
        type=float,
        default=None,
        help="override the grid step as a fraction of delta (e.g. 0.125 for h = delta/8)",
    )
    p_run.add_argument("--parallel", action="store_true", help="run scenarios in processes")

    p_reg = sub.add_parser("regress", help="compare report constants against goldens")
    p_reg.add_argument("reports", nargs="+", type=Path)

    p_frz = sub.add_parser("freeze", help="write golden constants from reports")
    p_frz.add_argument("reports", nargs="+", type=Path)

    sub.add_parser("list-scenarios", help="describe available scenarios")

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    if args.command == "list-scenarios":
        for name, sc in SCENARIOS.items():
            print(f"{name}: {sc.description}")
            print(f"  params: {json.dumps(sc.defaults, sort_keys=True)}")
        return 0

    if args.command == "run":
        try:
            configs = _load_config_file(args.config)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        overrides = {"seed": args.seed, "grid_h": args.grid_h}
        reports: list[ExperimentReport] = []
        if args.parallel and len(configs) > 1:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor() as pool:
                jsons = list(
                    pool.map(_run_one, [(c.to_dict(), overrides) for c in configs])
                )
            reports = [ExperimentReport.from_json(j) for j in jsons]
        else:
            for c in configs:
                reports.append(ExperimentReport.from_json(_run_one((c.to_dict(), overrides))))
        all_pass = True
        for rep in reports:
            path = _write_report(rep, args.out)
            status = "pass" if rep.passed else "FAIL"
            print(f"{rep.name}: {status} ({rep.wall_clock_s:.1f}s) -> {path}")
            all_pass = all_pass and rep.passed
        return 0 if all_pass else 1

    reports = []
    for path in args.reports:
        if path.is_dir():
            for f in sorted(path.glob("*.json")):
                reports.append(ExperimentReport.from_json(f.read_text()))
        else:
            reports.append(ExperimentReport.from_json(path.read_text()))
    if not reports:
        print("no reports found", file=sys.stderr)
        return 2

    if args.command == "freeze":
        path = freeze(reports)
        print(f"golden constants written to {path}")
        return 0

    try:
        ok, rows = regress(reports)
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    for row in rows:
        ratio = "-" if row["ratio"] is None else f"{row['ratio']:.3f}"
        print(
            f"{row['status']:>14s}  {row['scenario']}/{row['constant']}  "
            f"value={row['value']!r} golden={row['golden']!r} ratio={ratio}"
        )
    print("regression:", "pass" if ok else "FAIL")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
