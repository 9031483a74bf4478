"""Episodic environment backed by ground-truth NDRs compiled from bundled assets."""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .learn import Transition
from .logic import Literal, State
from .ndr import NDRSet, compile_ground_truth, ground_actions, sample_next
from .pddl import DomainSpec, ProblemSpec, parse_domain, parse_problem

DOMAINS = ("blocks", "gripper", "tireworld", "exploding_blocks")
DEFAULT_HORIZON = {"tireworld": 8}


class EpisodeExhaustedError(RuntimeError):
    pass


def assets_root() -> Path:
    return Path(str(resources.files("glib_lab") / "assets"))


@dataclass
class DomainBundle:
    name: str
    domain: DomainSpec
    problems: List[ProblemSpec]
    suite: List[ProblemSpec]
    truth: NDRSet


def _read_dir(path: Path, domain: DomainSpec) -> List[ProblemSpec]:
    if not path.is_dir():
        return []
    return [parse_problem(p.read_text(encoding="utf-8"), domain) for p in sorted(path.glob("*.ppddl"))]


def load_domain(name: str, root: Optional[Path] = None) -> DomainBundle:
    base = (root or assets_root()) / name
    dom_file = base / "domain.ppddl"
    if not dom_file.exists():
        raise FileNotFoundError(f"no domain asset at {dom_file}")
    domain = parse_domain(dom_file.read_text(encoding="utf-8"))
    problems = _read_dir(base / "problems", domain)
    suite = _read_dir(base / "suite", domain)
    return DomainBundle(name, domain, problems, suite, compile_ground_truth(domain))


@dataclass
class EnvConfig:
    domain: str
    episode_length: int = 25
    problems: List[ProblemSpec] = field(default_factory=list)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.episode_length < 1:
            raise ValueError("episode_length must be >= 1")


class Environment:
    """Samples a problem per episode and rolls ground-truth dynamics for T steps."""

    def __init__(self, truth: NDRSet, problems: Sequence[ProblemSpec], episode_length: int = 25):
        if not problems:
            raise ValueError("problem pool is empty")
        if episode_length < 1:
            raise ValueError("episode_length must be >= 1")
        self.truth = truth
        self.problems = list(problems)
        self.horizon = episode_length
        self.state: Optional[State] = None
        self.problem: Optional[ProblemSpec] = None
        self.t = 0

    @classmethod
    def from_bundle(cls, b: DomainBundle, episode_length: Optional[int] = None) -> "Environment":
        return cls(b.truth, b.problems, episode_length or DEFAULT_HORIZON.get(b.name, 25))

    @property
    def action_predicates(self):
        return self.truth.action_predicates

    @property
    def predicates(self):
        return self.truth.predicates

    def reset(self, rng: np.random.Generator) -> State:
        self.problem = self.problems[int(rng.integers(len(self.problems)))]
        self.state = self.problem.init
        self.t = 0
        return self.state

    @property
    def done(self) -> bool:
        return self.state is None or self.t >= self.horizon

    def step(self, a: Literal, rng: np.random.Generator) -> State:
        if self.state is None:
            raise EpisodeExhaustedError("call reset() before step()")
        if self.t >= self.horizon:
            raise EpisodeExhaustedError(f"episode of length {self.horizon} is over")
        self.state = sample_next(self.truth, self.state, a, rng)
        self.t += 1
        return self.state

    def actions(self, state: Optional[State] = None) -> List[Literal]:
        return ground_actions(self.truth.action_predicates, state or self.state)

    def sample_eval_transitions(self, n: int, rng: np.random.Generator) -> List[Transition]:
        """Random-rollout states with one random action each; leaves the live episode untouched."""
        if n < 1:
            raise ValueError("n must be >= 1")
        out: List[Transition] = []
        for _ in range(n):
            s = self.problems[int(rng.integers(len(self.problems)))].init
            acts = ground_actions(self.truth.action_predicates, s)
            for _ in range(int(rng.integers(self.horizon))):
                s = sample_next(self.truth, s, acts[int(rng.integers(len(acts)))], rng)
            a = acts[int(rng.integers(len(acts)))]
            out.append(Transition(s, a, sample_next(self.truth, s, a, rng)))
        return out
