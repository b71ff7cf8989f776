"""Command line: ``run``, ``sweep`` and ``check``.

Exit codes: 0 success, 1 config error, 2 invariant violation, 3 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .core import SmallLossError
from .environments import (
    PunishLastPlayed,
    ScriptAdversary,
    SemiBanditInstance,
    make_clique_union,
    make_contextual,
    make_layered_paths,
    make_shifting,
    make_smallloss_bandit,
)
from .evaluation import actual_regret, fit_scaling_exponent, shifting_regret
from .simulation import LearnerSpec, comparator_losses, simulate_graph, simulate_semibandit, violation_count
from .suites import SUITES, doubling_violations, run_suite

log = logging.getLogger("smallloss")

EXIT_OK, EXIT_CONFIG, EXIT_VIOLATION, EXIT_RUNTIME = 0, 1, 2, 3

CSV_HEADER = ["run_id", "seed", "algo", "instance", "phase", "t", "arm", "loss", "cum_loss",
              "best_fixed_cum_loss", "frozen_mass"]
FULL_TRACE_LIMIT = 100_000
CHECKPOINTS = 1024

ALGORITHMS = ("blackbox", "green_ix", "green_ix_graph", "mixed", "semibandit")
ENGINES = {"blackbox": ("hedge", "noisy_hedge"), "green_ix": ("hedge", "noisy_hedge"),
           "green_ix_graph": ("hedge", "noisy_hedge"), "mixed": ("hedge",), "semibandit": ("fpl",)}
INSTANCE_FIELDS = {
    "bandit": ("d", "mu_star", "mu_rest"),
    "cliques": ("num_cliques", "clique_size", "mu_star", "mu_rest"),
    "shifting": ("d", "K", "mu_star", "mu_rest"),
    "contextual": ("n_policies", "n_actions", "mu_star", "mu_rest"),
    "layered_paths": ("layers", "width", "mu_star", "mu_rest"),
}
SWEEP_PARAMS = ("mu_star", "d", "num_cliques", "T", "K")


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: dict
    instance: dict
    T: int
    seeds: tuple
    output_dir: str
    assertions: bool
    raw: bytes = b""

    @property
    def algo(self) -> str:
        return self.algorithm["name"]

    def digest(self) -> str:
        body = dict(algorithm=self.algorithm, instance=self.instance, T=self.T, seeds=list(self.seeds))
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:10]


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing required field {where}.{key}")
    return section[key]


def _unit_interval(value, name: str, allow_null: bool = False):
    if value is None and allow_null:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not 0 < value < 1:
        raise ConfigError(f"{name} must be a number in (0, 1), got {value!r}")
    return float(value)


def parse_config(data: dict, raw: bytes = b"") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    alg = dict(_require(data, "algorithm", "config"))
    name = _require(alg, "name", "algorithm")
    if name not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {name!r}; choose from {ALGORITHMS}")
    # eps and delta have no defaults; eps may be null to turn on doubling
    alg["eps"] = _unit_interval(_require(alg, "eps", "algorithm"), "algorithm.eps", allow_null=True)
    alg["delta"] = _unit_interval(_require(alg, "delta", "algorithm"), "algorithm.delta")
    engine = alg.get("engine")
    if engine is not None and engine not in ENGINES[name]:
        raise ConfigError(f"engine {engine!r} does not fit algorithm {name!r}")
    if engine == "noisy_hedge" and not alg.get("noise"):
        raise ConfigError("noisy_hedge needs a positive algorithm.noise")
    if name == "green_ix_graph" and not alg.get("kappa_guess"):
        raise ConfigError("green_ix_graph needs algorithm.kappa_guess")
    inst = dict(_require(data, "instance", "config"))
    kind = _require(inst, "kind", "instance")
    if kind not in INSTANCE_FIELDS:
        raise ConfigError(f"unknown instance kind {kind!r}; choose from {sorted(INSTANCE_FIELDS)}")
    for f in INSTANCE_FIELDS[kind]:
        _require(inst, f, "instance")
    if (name == "semibandit") != (kind == "layered_paths"):
        raise ConfigError("semibandit runs need a layered_paths instance and vice versa")
    T = _require(data, "T", "config")
    if isinstance(T, bool) or not isinstance(T, int) or T < 1:
        raise ConfigError(f"T must be a positive integer, got {T!r}")
    seeds = _require(data, "seeds", "config")
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds must be a non-empty list")
    for s in seeds:
        if isinstance(s, bool) or not isinstance(s, int) or not 0 <= s < 2 ** 64:
            raise ConfigError(f"seeds must be 64-bit non-negative integers, got {s!r}")
    out = data.get("output_dir", "out")
    asserts = data.get("assertions", "off")
    if asserts not in ("on", "off", True, False):
        raise ConfigError("assertions must be on or off")
    return ExperimentConfig(alg, inst, T, tuple(seeds), str(out), asserts in ("on", True), raw)


def load_config(path: str) -> ExperimentConfig:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from e
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    return parse_config(data, raw)


# ---------------------------------------------------------------- one seed


def build_instance(desc: dict, T: int, seed: int):
    kind = desc["kind"]
    mu = (float(desc["mu_star"]), float(desc["mu_rest"]))
    loss_kind = desc.get("loss_kind", "bernoulli")
    if kind == "bandit":
        inst = make_smallloss_bandit(int(desc["d"]), T, *mu, seed=seed, kind=loss_kind)
    elif kind == "cliques":
        inst = make_clique_union(int(desc["num_cliques"]), int(desc["clique_size"]), T, *mu, seed=seed,
                                 kind=loss_kind)
    elif kind == "shifting":
        inst = make_shifting(int(desc["d"]), T, int(desc["K"]), *mu, seed=seed, kind=loss_kind)
    elif kind == "contextual":
        inst = make_contextual(int(desc["n_policies"]), int(desc["n_actions"]), T, *mu, seed=seed)
    else:
        return make_layered_paths(int(desc["layers"]), int(desc["width"]), T, *mu, seed=seed, kind=loss_kind)
    adv = desc.get("adversary")
    if adv is not None and kind == "contextual":
        raise ConfigError("contextual instances carry their own loss table")
    if adv == "punish_last":
        inst = inst.with_adversary(PunishLastPlayed(inst.n_arms))
    elif isinstance(adv, dict) and "script" in adv:
        inst = inst.with_adversary(ScriptAdversary(adv["script"], inst.n_arms))
    elif adv is not None:
        raise ConfigError(f"unknown adversary {adv!r}")
    return inst


def learner_spec(alg: dict) -> LearnerSpec:
    return LearnerSpec(
        mode=alg["name"], eps=alg["eps"], delta=alg["delta"],
        alpha_guess=int(alg.get("alpha_guess", 1)), adapt_alpha=bool(alg.get("adapt_alpha", False)),
        kappa_guess=alg.get("kappa_guess"), noise=float(alg.get("noise", 0.0)),
        psi_c=alg.get("psi_c"), implicit=bool(alg.get("implicit", True)),
        audit_floor_scale=float(alg.get("audit_floor_scale", 1.0)),
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def trace_rows(res, phases) -> np.ndarray:
    T = res.horizon
    if T <= FULL_TRACE_LIMIT:
        return np.arange(T)
    picks = np.round(np.linspace(0, T - 1, CHECKPOINTS)).astype(np.int64)
    bounds = [b for ph in phases for b in (ph.start, ph.end - 1) if 0 <= b < T]
    return np.unique(np.concatenate([picks, np.asarray(bounds, dtype=np.int64)]))


def run_seed(cfg: ExperimentConfig, seed: int) -> tuple[str, dict]:
    """Simulate one seed; return (csv text, per-seed summary)."""
    try:
        inst = build_instance(cfg.instance, cfg.T, seed)
        spec = learner_spec(cfg.algorithm)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    if isinstance(inst, SemiBanditInstance):
        res = simulate_semibandit(inst, spec, seed)
    else:
        res = simulate_graph(inst, spec, seed)
    comp = comparator_losses(inst, res)
    eps = cfg.algorithm["eps"] or 0.0
    summ = actual_regret(res.arms, comp, eps)
    run_id = f"{cfg.digest()}-{seed}"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for t in trace_rows(res, res.phases):
        w.writerow([run_id, seed, cfg.algo, inst.name, int(res.phase_of_round[t]), int(t), int(res.arms[t]),
                    _fmt(res.incurred[t]), _fmt(summ.cum_loss[t]), _fmt(summ.best_fixed_cum_loss[t]),
                    _fmt(res.frozen_mass[t])])
    violations = violation_count(res)
    dbl = {}
    if spec.doubling:
        dbl = doubling_violations(res, getattr(inst, "true_alpha", None) if spec.adapt_alpha else None)
        violations += sum(dbl.values())
    row = dict(seed=seed, regret=summ.regret, apx_regret=summ.apx_regret, lstar=summ.lstar,
               learner_loss=summ.learner_loss, violations=violations, alpha_doublings=res.alpha_doublings,
               phases=[[ph.start, ph.end, ph.eps] for ph in res.phases], audit=_jsonable(res.audit))
    if cfg.instance["kind"] == "shifting":
        reg, apx = shifting_regret(res.arms, comp, int(cfg.instance["K"]), eps)
        row.update(shifting_regret=reg, shifting_apx_regret=apx)
    return buf.getvalue(), row


def _jsonable(audit: dict) -> dict:
    return {k: (v if not isinstance(v, (np.integer, np.floating)) else v.item()) for k, v in audit.items()}


def _run_seed_job(args):
    return run_seed(*args)


def run_experiment(cfg: ExperimentConfig, parallel: int = 1) -> tuple[list, dict]:
    jobs = [(cfg, s) for s in cfg.seeds]
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_run_seed_job, jobs))
    else:
        results = [run_seed(*j) for j in jobs]
    rows = [r for _, r in results]
    regrets = np.array([r["regret"] for r in rows])
    summary = dict(
        algo=cfg.algo, instance=build_instance_name(cfg), T=cfg.T, seeds=list(cfg.seeds),
        mean_regret=float(regrets.mean()), std_regret=float(regrets.std()),
        mean_lstar=float(np.mean([r["lstar"] for r in rows])),
        phases={str(r["seed"]): r["phases"] for r in rows},
        violations=int(sum(r["violations"] for r in rows)),
        per_seed=rows,
    )
    if cfg.instance["kind"] == "shifting":
        summary["mean_shifting_apx_regret"] = float(np.mean([r["shifting_apx_regret"] for r in rows]))
    return [c for c, _ in results], summary


def build_instance_name(cfg: ExperimentConfig) -> str:
    desc = cfg.instance
    return desc["kind"] + "-" + "-".join(f"{k}{desc[k]}" for k in INSTANCE_FIELDS[desc["kind"]])


def write_outputs(cfg: ExperimentConfig, csvs: list, summary: dict, out: Path, tag: str = "") -> None:
    out.mkdir(parents=True, exist_ok=True)
    for seed, text in zip(cfg.seeds, csvs):
        (out / f"{tag}run_{seed}.csv").write_text(text)
    (out / f"{tag}summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- commands


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out or cfg.output_dir)
    csvs, summary = run_experiment(cfg, args.parallel)
    write_outputs(cfg, csvs, summary, out)
    print(json.dumps({k: summary[k] for k in ("algo", "instance", "T", "mean_regret", "std_regret",
                                               "mean_lstar", "violations")}))
    if (cfg.assertions or args.assert_) and summary["violations"]:
        log.error("%d invariant violations", summary["violations"])
        return EXIT_VIOLATION
    return EXIT_OK


def _sweep_value(param: str, text: str):
    v = float(text)
    return int(v) if param in ("d", "num_cliques", "T", "K") else v


def apply_sweep(cfg: ExperimentConfig, param: str, value) -> ExperimentConfig:
    inst = dict(cfg.instance)
    T = cfg.T
    if param == "T":
        T = int(value)
    elif param == "d" and inst["kind"] == "cliques":
        if value % inst["num_cliques"]:
            raise ConfigError(f"d={value} is not a multiple of num_cliques={inst['num_cliques']}")
        inst["clique_size"] = value // inst["num_cliques"]
    elif param in INSTANCE_FIELDS[inst["kind"]]:
        inst[param] = value
    else:
        raise ConfigError(f"instance kind {inst['kind']!r} has no parameter {param!r}")
    return ExperimentConfig(cfg.algorithm, inst, T, cfg.seeds, cfg.output_dir, cfg.assertions, cfg.raw)


def sweep(cfg: ExperimentConfig, param: str, values: list, parallel: int = 1, out: Optional[Path] = None) -> dict:
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMS}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    rows = []
    violations = 0
    for v in values:
        sub = apply_sweep(cfg, param, v)
        csvs, summ = run_experiment(sub, parallel)
        if out is not None:
            write_outputs(sub, csvs, summ, out, tag=f"{param}={v}_")
        violations += summ["violations"]
        row = dict(value=v, mean_regret=summ["mean_regret"], std_regret=summ["std_regret"],
                   mean_lstar=summ["mean_lstar"], violations=summ["violations"])
        if "mean_shifting_apx_regret" in summ:
            row["mean_shifting_apx_regret"] = summ["mean_shifting_apx_regret"]
        rows.append(row)
    if param in ("d", "num_cliques", "K"):
        ykey = "mean_shifting_apx_regret" if param == "K" and "mean_shifting_apx_regret" in rows[0] else "mean_regret"
        pts = [(r["value"], r[ykey]) for r in rows]
    else:
        pts = [(r["mean_lstar"], r["mean_regret"]) for r in rows]
    report = dict(algo=cfg.algo, instance=cfg.instance["kind"], param=param, T=cfg.T, seeds=list(cfg.seeds),
                  rows=rows, violations=violations, fitted_exponent=None, r_squared=None)
    try:
        fit = fit_scaling_exponent(pts)
        report.update(fitted_exponent=fit.exponent, intercept=fit.intercept, r_squared=fit.r_squared,
                      fit_reliable=fit.reliable)
    except (ValueError, SmallLossError) as e:
        report["fit_error"] = str(e)
    return report


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    values = [_sweep_value(args.param, v) for v in args.values.split(",") if v.strip()]
    out = Path(args.out or cfg.output_dir)
    report = sweep(cfg, args.param, values, args.parallel, out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"sweep_{args.param}.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(json.dumps({k: report[k] for k in ("param", "fitted_exponent", "r_squared", "violations")}))
    if (cfg.assertions or args.assert_) and report["violations"]:
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_check(args) -> int:
    report = run_suite(args.suite, args.trials, args.seed)
    print(json.dumps(report.as_dict(), indent=2, sort_keys=True))
    return EXIT_OK if report.passed else EXIT_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="smallloss", description="Small-loss bandit experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run one experiment over its seeds")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.add_argument("--parallel", type=int, default=1)
    r.add_argument("--assert", dest="assert_", action="store_true", help="exit 2 on any invariant violation")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("sweep", help="run an experiment across parameter values and fit a power law")
    s.add_argument("--config", required=True)
    s.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    s.add_argument("--values", required=True)
    s.add_argument("--out")
    s.add_argument("--parallel", type=int, default=1)
    s.add_argument("--assert", dest="assert_", action="store_true")
    s.set_defaults(func=cmd_sweep)
    c = sub.add_parser("check", help="run a randomized invariant suite")
    c.add_argument("--suite", required=True, choices=sorted(SUITES))
    c.add_argument("--trials", type=int, required=True)
    c.add_argument("--seed", type=int, required=True)
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SmallLossError, OSError, ValueError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
