"""The online learning loop, evaluation metrics, and CSV output."""
from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .env import DEFAULT_HORIZON, DomainBundle, Environment, load_domain
from .explore import GLIB, ExplorerConfig, action_babble, oracle_step
from .filters import GROUND, LIFTED, FilterCache
from .learn import Dataset, LearnerConfig, LNDRLearner, Transition, should_retrain
from .logic import Literal, State
from .ndr import NO_PREDICTION, NDRSet, most_likely_next, sample_next
from .pddl import ProblemSpec, parse_problem, write_ndrs
from .planning import replan_policy

log = logging.getLogger(__name__)

EXPLORERS = ("glib-g", "glib-l", "babble", "oracle")
CSV_HEADER = ["seed", "interactions", "prediction_error", "planning_success", "sec_per_iter"]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    domain: str = "blocks"
    explorer: str = "glib-l"
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    episode_length: Optional[int] = None  # None: the domain default
    interactions: int = 1000
    eval_interval: int = 100
    eval_samples: int = 200
    suite: Optional[str] = None  # directory of problem files; None: the bundled suite
    seeds: List[int] = field(default_factory=lambda: [0])
    out: Optional[str] = None
    eval_seed: int = 12345
    goal_filters: bool = True
    midpolicy_replan: bool = True
    n_tries: int = 100
    k: Optional[int] = None
    filter_rollouts: int = 30
    plan_timeout: float = 10.0
    explore_plan_expansions: int = 60
    eval_plan_expansions: int = 3000
    record_timing: bool = True
    skip_planning_eval: bool = False

    def __post_init__(self) -> None:
        if self.explorer not in EXPLORERS:
            raise ConfigError(f"explorer must be one of {EXPLORERS}, got {self.explorer!r}")
        for name in ("interactions", "eval_interval", "eval_samples", "n_tries", "filter_rollouts"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.episode_length is not None and self.episode_length < 1:
            raise ConfigError("episode_length must be positive")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")

    @property
    def horizon(self) -> int:
        return self.episode_length or DEFAULT_HORIZON.get(self.domain, 25)


@dataclass(frozen=True)
class CurvePoint:
    interactions: int
    prediction_error: float
    planning_success: float
    seconds_per_iteration: float


@dataclass
class RunResult:
    seed: int
    points: List[CurvePoint]
    model: NDRSet
    explore_seconds: List[float]
    visited: set = field(default_factory=set)  # (state literals, action) pairs
    explorer: Optional[object] = None


# --- metrics -----------------------------------------------------------------

def prediction_error(m: NDRSet, transitions: Sequence[Transition]) -> float:
    """Fraction of transitions whose observed successor is not the model's most likely prediction."""
    if not transitions:
        raise ValueError("need at least one transition")
    wrong = 0
    for t in transitions:
        pred = most_likely_next(m, t.s, t.a)
        if pred is NO_PREDICTION or pred.literals != t.s_next.literals:
            wrong += 1
    return wrong / len(transitions)


def planning_success(m: NDRSet, suite: Sequence[ProblemSpec], truth: NDRSet, rng: np.random.Generator,
                     horizon: int, timeout: float = 10.0, max_expansions: int = 3000) -> float:
    """Fraction of suite problems solved by determinize-and-replan in the real dynamics."""
    if not suite:
        raise ValueError("empty planning suite")
    solved = 0
    for prob in suite:
        if len(prob.goal.literals) < 3:
            raise ValueError(f"suite goal of {prob.name} has fewer than 3 literals")
        state = {"s": prob.init}

        def env_step(a: Literal) -> State:
            state["s"] = sample_next(truth, state["s"], a, rng)
            return state["s"]

        trace = replan_policy(prob.init, prob.goal, m, env_step, horizon, timeout, max_expansions)
        solved += trace.reached_goal
    return solved / len(suite)


# --- the online loop -----------------------------------------------------------

def load_suite(cfg: ExperimentConfig, bundle: DomainBundle) -> List[ProblemSpec]:
    if cfg.suite is None:
        return bundle.suite
    path = Path(cfg.suite)
    if not path.is_dir():
        raise ConfigError(f"suite directory {path} not found")
    return [parse_problem(p.read_text(encoding="utf-8"), bundle.domain) for p in sorted(path.glob("*.ppddl"))]


def _eval_rng(cfg: ExperimentConfig, interactions: int) -> np.random.Generator:
    return np.random.default_rng([cfg.eval_seed, interactions])


def run_seed(cfg: ExperimentConfig, seed: int, bundle: Optional[DomainBundle] = None,
             track_visits: bool = False, pinned_goal=None,
             on_step: Optional[Callable[[int, Transition, NDRSet], Optional[bool]]] = None) -> RunResult:
    """One seed of the online loop. A truthy return from `on_step` ends the run early."""
    bundle = bundle or load_domain(cfg.domain)
    if cfg.explorer == "oracle" and bundle.truth is None:
        raise ConfigError(f"the oracle needs ground-truth rules, which {cfg.domain} lacks")
    suite = load_suite(cfg, bundle)
    if not suite and not cfg.skip_planning_eval:
        raise ConfigError(f"domain {cfg.domain} has no planning suite")
    horizon = cfg.horizon
    env = Environment(bundle.truth, bundle.problems, horizon)
    eval_set = env.sample_eval_transitions(cfg.eval_samples, np.random.default_rng(cfg.eval_seed))

    env_rng, explore_rng, filter_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))
    preds, aps = bundle.truth.predicates, bundle.truth.action_predicates
    model = NDRSet.empty(preds, aps)
    learner = LNDRLearner(cfg.learner)
    data = Dataset()

    glib = None
    filters = None
    if cfg.explorer in ("glib-g", "glib-l"):
        mode = GROUND if cfg.explorer == "glib-g" else LIFTED
        ecfg = ExplorerConfig(mode=mode, k=cfg.k, n_tries=cfg.n_tries, plan_timeout=cfg.plan_timeout,
                              plan_expansions=cfg.explore_plan_expansions,
                              midpolicy_replan=cfg.midpolicy_replan, horizon=horizon)
        glib = GLIB(preds, aps, ecfg, pinned_goal=pinned_goal)
        filters = FilterCache(mode, cfg.filter_rollouts, horizon, cfg.goal_filters)

    def evaluate(i: int, secs: List[float]) -> CurvePoint:
        err = prediction_error(model, eval_set)
        succ = 0.0
        if not cfg.skip_planning_eval:
            succ = planning_success(model, suite, bundle.truth, _eval_rng(cfg, i), horizon,
                                    cfg.plan_timeout, cfg.eval_plan_expansions)
        spi = float(np.mean(secs)) if (secs and cfg.record_timing) else 0.0
        return CurvePoint(i, err, succ, spi)

    inits: List[State] = []
    init_seen = set()
    points = [evaluate(0, [])]
    interval_secs: List[float] = []
    all_secs: List[float] = []
    visited = set()
    s = None
    for i in range(1, cfg.interactions + 1):
        if env.done:
            s = env.reset(env_rng)
            if (s.literals, s.objects) not in init_seen:
                init_seen.add((s.literals, s.objects))
                inits.append(s)
            if glib is not None:
                glib.reset_episode()
                glib.observe(s)
        t0 = time.perf_counter()
        if glib is not None:
            f = filters.get(model, inits, filter_rng)
            a = glib.act(s, model, explore_rng, f, remaining=horizon - env.t)
        elif cfg.explorer == "oracle":
            a = oracle_step(s, model, bundle.truth, explore_rng)
        else:
            a = action_babble(s, aps, explore_rng)
        dt = time.perf_counter() - t0
        interval_secs.append(dt)
        all_secs.append(dt)
        if track_visits:
            visited.add((s.literals, a))
        s_next = env.step(a, env_rng)
        t = Transition(s, a, s_next)
        data.add(t)
        if glib is not None:
            glib.observe(s_next)
        if should_retrain(model, t):
            model = learner.learn(data, model)
        s = s_next
        if on_step is not None and on_step(i, t, model):
            break
        if i % cfg.eval_interval == 0:
            points.append(evaluate(i, interval_secs))
            interval_secs = []
            log.info("seed %d, %d interactions: error %.3f success %.2f", seed, i,
                     points[-1].prediction_error, points[-1].planning_success)
    return RunResult(seed, points, model, all_secs, visited, glib)


def curve_csv(results: Sequence[RunResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in results:
        # the interaction-0 baseline stays in RunResult.points only
        for p in r.points[1:]:
            w.writerow([r.seed, p.interactions, f"{p.prediction_error:.6f}", f"{p.planning_success:.6f}",
                        f"{p.seconds_per_iteration:.6f}"])
    return buf.getvalue()


def summary_csv(cfg: ExperimentConfig, results: Sequence[RunResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["domain", "explorer", "interactions", "prediction_error", "planning_success", "sec_per_iter",
                "n_seeds"])
    by_i: Dict[int, List[CurvePoint]] = {}
    for r in results:
        for p in r.points:
            by_i.setdefault(p.interactions, []).append(p)
    for i in sorted(by_i):
        ps = by_i[i]
        w.writerow([cfg.domain, cfg.explorer, i,
                    f"{np.mean([p.prediction_error for p in ps]):.6f}",
                    f"{np.mean([p.planning_success for p in ps]):.6f}",
                    f"{np.mean([p.seconds_per_iteration for p in ps]):.6f}", len(ps)])
    return buf.getvalue()


def run(cfg: ExperimentConfig) -> Dict[int, List[CurvePoint]]:
    """Run every seed, write per-seed CSVs, final models and a merged summary under ``cfg.out``."""
    bundle = load_domain(cfg.domain)
    load_suite(cfg, bundle)  # fail fast on a bad suite path
    results = []
    out = Path(cfg.out) if cfg.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    for seed in cfg.seeds:
        r = run_seed(cfg, seed, bundle)
        results.append(r)
        if out is not None:
            stem = f"{cfg.domain}_{cfg.explorer}_seed{seed}"
            (out / f"{stem}.csv").write_text(curve_csv([r]), encoding="utf-8")
            (out / f"{stem}_model.ppddl").write_text(write_ndrs(r.model, f"{cfg.domain}-learned"),
                                                     encoding="utf-8")
    if out is not None:
        (out / f"{cfg.domain}_{cfg.explorer}_curves.csv").write_text(curve_csv(results), encoding="utf-8")
        (out / f"{cfg.domain}_{cfg.explorer}_summary.csv").write_text(summary_csv(cfg, results), encoding="utf-8")
    return {r.seed: r.points for r in results}


# --- config files ------------------------------------------------------------

_BOOL = {"true": True, "yes": True, "1": True, "on": True, "false": False, "no": False, "0": False, "off": False}


def parse_config_text(text: str) -> ExperimentConfig:
    """Flat ``key = value`` lines; ``#`` starts a comment. Learner keys take a ``learner.`` prefix."""
    exp_fields = {f.name: f for f in fields(ExperimentConfig)}
    learn_fields = {f.name: f for f in fields(LearnerConfig)}
    kw: Dict[str, object] = {}
    lkw: Dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (x.strip() for x in line.split("=", 1))
        if key.startswith("learner."):
            name = key[len("learner."):]
            if name not in learn_fields:
                raise ConfigError(f"line {lineno}: unknown learner key {name}")
            lkw[name] = _coerce(learn_fields[name].type, value, lineno)
        elif key == "seeds":
            kw["seeds"] = _parse_seeds(value, lineno)
        elif key in exp_fields and key != "learner":
            kw[key] = _coerce(exp_fields[key].type, value, lineno)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key}")
    cfg = ExperimentConfig(**kw)
    if lkw:
        cfg = replace(cfg, learner=LearnerConfig(**lkw))
    return cfg


def _parse_seeds(value: str, lineno: int) -> List[int]:
    try:
        if "," in value:
            return [int(x) for x in value.split(",") if x.strip()]
        return list(range(int(value)))
    except ValueError:
        raise ConfigError(f"line {lineno}: bad seeds value {value!r}") from None


def _coerce(typ, value: str, lineno: int):
    t = str(typ)
    try:
        if "bool" in t:
            return _BOOL[value.lower()]
        if "int" in t:
            return None if value.lower() == "none" else int(value)
        if "float" in t:
            return float(value)
        return None if value.lower() == "none" else value
    except (KeyError, ValueError):
        raise ConfigError(f"line {lineno}: cannot read {value!r} as {t}") from None
