"""Command-line harness: gen, run, sweep, verify.

Exit codes: 0 success, 2 malformed config or input, 3 no candidate estimate.
"""

import argparse
import csv
import hashlib
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .block_power import make_params, run_bounded_norm
from .errors import ContractViolation, NoCandidate, StreamFormatError
from .heavy_light import HeavyLightParams, run_heavy_light
from .instances import InstanceSpec, build_instance
from .linalg import SpectralSummary, correlation, make_rng, unit
from .oja import default_eta_grid, oja_pass, select_by_growth, subsample_then_oja
from .report import RunReport
from .sampling import log_factor
from .stream import RowStream, load_matrix, write_binary

ALGORITHMS = ("heavy_light", "block_power", "oja", "subsample_oja")
SCHEMA_VERSION = 1
SWEEP_COLUMNS = (
    "schema_version", "family", "R", "R_measured", "algorithm", "n_seeds", "mean_correlation",
    "floor_name", "floor", "success_rate", "c", "success_rate_c", "config_hash",
)
CONSTANT_KEYS = {
    "C1", "C2", "C_sample", "C_jl", "polylog_exponent", "eps_jl", "eta_max", "eta_min", "budget",
    "eps", "eta", "R_hint", "tau", "chunk", "oja_C", "heavy_store",
}
SWEEP_KEYS = {"family", "R_values", "algorithms", "instance", "c"}
CONFIG_KEYS = {"instance", "input", "truth", "algorithm", "seed", "seeds", "constants", "out", "sweep"}
SEED_ENV = "EIGSTREAM_SEED"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    instance: dict = None
    input: str = None
    truth: str = None
    algorithm: str = "heavy_light"
    seeds: list = field(default_factory=lambda: [0])
    constants: dict = field(default_factory=dict)
    out: str = None
    sweep: dict = None

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if any(not isinstance(s, int) or s < 0 for s in self.seeds):
            raise ConfigError("seeds must be non-negative integers")
        unknown = set(self.constants) - CONSTANT_KEYS
        if unknown:
            raise ConfigError(f"unknown constants {sorted(unknown)}")
        for k, v in self.constants.items():
            if k == "heavy_store":
                if not isinstance(v, bool):
                    raise ConfigError("heavy_store must be a boolean")
            elif not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"constant {k} must be positive, got {v!r}")
        if self.instance is not None:
            try:
                InstanceSpec.from_dict(self.instance)
            except (KeyError, ContractViolation, TypeError, ValueError) as exc:
                raise ConfigError(f"bad instance spec: {exc}") from None
        if self.sweep is not None:
            unknown = set(self.sweep) - SWEEP_KEYS
            if unknown:
                raise ConfigError(f"unknown sweep keys {sorted(unknown)}")
            if not self.sweep.get("R_values"):
                raise ConfigError("sweep needs R_values")
            for algo in self.sweep.get("algorithms", [self.algorithm]):
                if algo not in ALGORITHMS:
                    raise ConfigError(f"unknown algorithm {algo!r} in sweep")
        return self

    def config_hash(self):
        """Hash of everything that affects results (the output path does not)."""
        content = asdict(self)
        content.pop("out")
        blob = json.dumps(content, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _read_config_file(path):
    text = Path(path).read_text()
    if str(path).endswith(".toml"):
        try:
            import tomllib
        except ImportError:  # Python < 3.11
            import tomli as tomllib
        try:
            return tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed TOML config: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON config: {exc}") from None


def load_config(path=None, overrides=None):
    """Config file plus flag overrides (flags win, EIGSTREAM_SEED wins over both)."""
    raw = _read_config_file(path) if path else {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(raw) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    raw = dict(raw)
    if "seed" in raw:
        if "seeds" in raw:
            raise ConfigError("give either seed or seeds, not both")
        raw["seeds"] = [raw.pop("seed")]
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            raw["seeds"] = [int(env)]
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    if not isinstance(raw.get("constants", {}), dict):
        raise ConfigError("constants must be a mapping")
    return ExperimentConfig(**raw).validate()


# -- running one cell --------------------------------------------------------


def _load_problem(cfg, instance_override=None):
    """Returns (A, truth or None, family label, requested R or None)."""
    if instance_override is not None or cfg.instance is not None:
        spec = InstanceSpec.from_dict(instance_override or cfg.instance)
        inst = build_instance(spec)
        return inst.A, inst.truth, spec.family, spec.params.get("R")
    if cfg.input is None:
        raise ConfigError("config needs either an instance spec or an input path")
    A = load_matrix(cfg.input)
    truth = None
    if cfg.truth:
        truth = _sidecar_truth(json.loads(Path(cfg.truth).read_text()))
    return A, truth, "file", None


def _sidecar_truth(side):
    t = side["truth"]
    return SpectralSummary(t["sigma1_sq"], t["sigma2_sq"], np.asarray(t["v1"], dtype=np.float64))


def run_algorithm(A, algorithm, seed, constants, R_hint=None):
    """One algorithm on one shuffled stream; returns a RunReport (no timing)."""
    c = dict(constants)
    stream = RowStream(A, order_seed=seed)
    rng = make_rng(seed, 1)
    d = stream.d
    eta_grid = default_eta_grid(c.get("eta_max", 2.0**20), c.get("eta_min", 2.0**-10))
    seeds = {"order_seed": seed, "algorithm_seed": [seed, 1]}
    if algorithm == "heavy_light":
        hl_keys = ("C1", "C2", "C_sample", "C_jl", "polylog_exponent", "eps_jl", "budget", "chunk",
                   "heavy_store", "R_hint")
        kw = {k: c[k] for k in hl_keys if k in c}
        if "eps" in c:
            kw["eps_bp"] = c["eps"]
        if "budget" in kw:
            kw["budget"] = int(kw["budget"])
        if "chunk" in kw:
            kw["chunk"] = int(kw["chunk"])
        _, report = run_heavy_light(stream, HeavyLightParams(**kw), rng)
    elif algorithm == "block_power":
        params = make_params(stream.n, d, eps=c.get("eps"), eta=c.get("eta", 1.0),
                             C1=c.get("C1", 3.0), C2=c.get("C2", 8.0))
        res = run_bounded_norm(stream, params, rng, chunk=int(c.get("chunk", 256)))
        report = RunReport(
            algorithm="block_power", winner_branch="block_power", estimate=res.winner,
            winner_lane={"rho": res.winner_rho}, lanes=res.lanes, rows_read=res.rows_read,
            sketch_dims=res.sketch_dims,
            params={"n": params.n, "t": params.t, "eps": params.eps, "eta": params.eta,
                    "C2": params.C2, "alpha": params.alpha},
            extra={"scores": res.scores},
        )
    elif algorithm == "oja":
        res = oja_pass(stream, eta_grid, rng, chunk=int(c.get("chunk", 256)))
        v, info = select_by_growth(res, c.get("tau"))
        report = RunReport(
            algorithm="oja", winner_branch="fallback" if info["fallback"] else "oja",
            estimate=v, winner_lane=info, rows_read=res.rows_read,
            params={"eta_grid": list(res.etas), "tau": info["tau"]},
            extra={"log_growth": res.log_growth},
        )
    else:
        R = c.get("R_hint", R_hint)
        if R is None:
            raise ConfigError("subsample_oja needs constants.R_hint or an instance with R")
        res = subsample_then_oja(stream, float(R), rng, eta_grid, C_sample=c.get("C_sample", 8.0),
                                 eps_jl=c.get("eps_jl"), C_jl=c.get("C_jl", 1.0),
                                 chunk=int(c.get("chunk", 256)))
        report = RunReport(
            algorithm="subsample_oja",
            winner_branch="fallback" if res.winner_label["eta"] is None else "oja",
            estimate=res.winner, winner_lane=res.winner_label, lanes=res.lanes,
            rows_read=res.rows_read, sketch_dims=res.sketch_dims,
            params={"eps": res.eps, "R_hint": float(R)},
        )
    report.seeds = seeds
    report.estimate = unit(np.asarray(report.estimate, dtype=np.float64))
    return report


def floor_for(algorithm, R, d, report, oja_C=1.0):
    if algorithm == "heavy_light":
        return "1-8/sqrt(R)", 1.0 - 8.0 / math.sqrt(R)
    if algorithm == "block_power":
        return "1-3*alpha", 1.0 - 3.0 * report.params["alpha"]
    return "1-log(d)/(C*R)", 1.0 - log_factor(d) / (oja_C * R)


def _envelope(cfg, report, wall):
    return {
        "schema_version": SCHEMA_VERSION,
        "config_hash": cfg.config_hash(),
        "scientific": report.to_dict(),
        "metadata": {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "hostname": platform.node(),
            "python": platform.python_version(),
            "wall_seconds": wall,
        },
    }


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- commands ----------------------------------------------------------------


def cmd_gen(cfg):
    if cfg.instance is None:
        raise ConfigError("gen needs an instance spec")
    if not cfg.out:
        raise ConfigError("gen needs --out")
    inst = build_instance(InstanceSpec.from_dict(cfg.instance))
    write_binary(cfg.out, inst.A)
    sidecar = Path(str(cfg.out) + ".json")
    sidecar.write_text(json.dumps(inst.sidecar(), sort_keys=True, indent=1))
    print(f"wrote {cfg.out} ({inst.A.shape[0]}x{inst.A.shape[1]}) and {sidecar}")
    return 0


def cmd_run(cfg):
    A, truth, _, R = _load_problem(cfg)
    seed = cfg.seeds[0]
    t0 = time.perf_counter()
    report = run_algorithm(A, cfg.algorithm, seed, cfg.constants, R_hint=R)
    if truth is not None:
        report.correlation_vs_oracle = correlation(report.estimate, unit(truth.v1))
    env = _envelope(cfg, report, time.perf_counter() - t0)
    _emit(json.dumps(env, sort_keys=True, indent=1) + "\n", cfg.out)
    return 0


def _sweep_cell(A, truth, algorithm, seed, constants, R):
    t0 = time.perf_counter()
    try:
        report = run_algorithm(A, algorithm, seed, constants, R_hint=R)
    except NoCandidate as exc:
        return {"algorithm": algorithm, "seed": seed, "status": "no_candidate", "error": str(exc),
                "correlation": 0.0, "wall_seconds": time.perf_counter() - t0, "report": None}
    corr = correlation(report.estimate, unit(truth.v1))
    report.correlation_vs_oracle = corr
    return {"algorithm": algorithm, "seed": seed, "status": "ok", "correlation": corr,
            "winner_branch": report.winner_branch, "rows_stored_peak": report.rows_stored_peak,
            "wall_seconds": time.perf_counter() - t0, "report": report}


def cmd_sweep(cfg, threads=1):
    sw = cfg.sweep
    if sw is None:
        raise ConfigError("sweep needs a sweep section")
    family = sw.get("family", (cfg.instance or {}).get("family", "planted_gap"))
    algorithms = sw.get("algorithms", [cfg.algorithm])
    c_level = float(sw.get("c", 0.5))
    base = dict(sw.get("instance") or cfg.instance or {})
    base.setdefault("family", family)
    base.setdefault("params", {})
    h = cfg.config_hash()

    problems = {}
    for R in sw["R_values"]:
        spec = dict(base, params=dict(base["params"], R=R))
        try:
            problems[R] = build_instance(InstanceSpec.from_dict(spec))
        except (KeyError, ContractViolation, TypeError) as exc:
            raise ConfigError(f"bad sweep instance for R={R}: {exc}") from None

    cells = [(R, algo, seed) for R in sw["R_values"] for algo in algorithms for seed in cfg.seeds]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futures = [
            pool.submit(_sweep_cell, problems[R].A, problems[R].truth, algo, seed, cfg.constants, R)
            for R, algo, seed in cells
        ]
        results = [f.result() for f in futures]

    records, rows = [], []
    oja_C = cfg.constants.get("oja_C", 1.0)
    for (R, algo, seed), res in zip(cells, results):
        inst = problems[R]
        rep = res.pop("report")
        if rep is not None:
            name, floor = floor_for(algo, inst.truth.gap_R, inst.A.shape[1], rep, oja_C)
        else:
            name, floor = floor_for(algo, inst.truth.gap_R, inst.A.shape[1],
                                    RunReport("", "", [], params={"alpha": math.inf}), oja_C)
        res.update(R=R, R_measured=inst.truth.gap_R, floor_name=name, floor=floor,
                   success=res["correlation"] >= floor, success_c=res["correlation"] >= c_level,
                   scientific=rep.to_dict() if rep is not None else None)
        records.append(res)
    for R in sw["R_values"]:
        for algo in algorithms:
            cell = [r for r in records if r["R"] == R and r["algorithm"] == algo]
            corr = np.array([r["correlation"] for r in cell])
            floors = [r["floor"] for r in cell]
            rows.append({
                "schema_version": SCHEMA_VERSION, "family": family, "R": R,
                "R_measured": problems[R].truth.gap_R, "algorithm": algo, "n_seeds": len(cell),
                "mean_correlation": float(corr.mean()), "floor_name": cell[0]["floor_name"],
                "floor": float(np.mean(floors)),
                "success_rate": float(np.mean([r["success"] for r in cell])),
                "c": c_level,
                "success_rate_c": float(np.mean([r["success_c"] for r in cell])),
                "config_hash": h,
            })

    out = Path(cfg.out or "sweep")
    csv_path, json_path = out.with_suffix(".csv"), out.with_suffix(".json")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    wall = {"wall_seconds": [r.pop("wall_seconds") for r in records]}
    payload = {"schema_version": SCHEMA_VERSION, "config_hash": h, "config": asdict(cfg),
               "aggregates": rows, "records": records,
               "metadata": dict(wall, timestamp=datetime.now(timezone.utc).isoformat(),
                                hostname=platform.node())}
    json_path.write_text(json.dumps(payload, sort_keys=True, indent=1, default=str))
    print(f"wrote {csv_path} and {json_path}")
    return 0


def _vector_from(doc):
    if "scientific" in doc:
        return np.asarray(doc["scientific"]["estimate"], dtype=np.float64)
    if "truth" in doc:
        return np.asarray(doc["truth"]["v1"], dtype=np.float64)
    if "estimate" in doc:
        return np.asarray(doc["estimate"], dtype=np.float64)
    raise ConfigError("estimate file has no estimate or truth vector")


def cmd_verify(instance_path, estimate_path):
    side = json.loads(Path(instance_path).read_text())
    if "truth" not in side:
        raise ConfigError(f"{instance_path} is not an instance sidecar")
    v1 = unit(np.asarray(side["truth"]["v1"], dtype=np.float64))
    est = unit(_vector_from(json.loads(Path(estimate_path).read_text())))
    corr = correlation(est, v1)
    print(json.dumps({"correlation": corr}))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="eigstream", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gen", "run", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON or TOML experiment config")
        p.add_argument("--seed", type=int, help="shuffle/algorithm seed (EIGSTREAM_SEED overrides)")
        p.add_argument("--out", help="output path")
        p.add_argument("--algo", choices=ALGORITHMS)
        p.add_argument("--threads", type=int, default=1, help="worker threads for sweep cells")
    v = sub.add_parser("verify")
    v.add_argument("instance", help="instance sidecar JSON")
    v.add_argument("estimate", help="RunReport JSON or another sidecar")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args.instance, args.estimate)
        overrides = {"out": args.out, "algorithm": args.algo,
                     "seeds": [args.seed] if args.seed is not None else None}
        cfg = load_config(args.config, overrides)
        if args.command == "gen":
            return cmd_gen(cfg)
        if args.command == "run":
            return cmd_run(cfg)
        return cmd_sweep(cfg, args.threads)
    except (ConfigError, ContractViolation, StreamFormatError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NoCandidate as exc:
        print(f"no candidate: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
