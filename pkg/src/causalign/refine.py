"""Stochastic refinement of DAGs under the alignment-minus-sparsity score.

Each step proposes one uniformly random feasible edge move (the feasible
set is recomputed every step), scores the candidate through the shared
cached engine, and accepts with a Metropolis rule by default. Graphs
visited during the last collect_k steps are collected as the ensemble
handed to training-set synthesis.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .graph import Dag, EdgeMove, MoveKind, apply_move, feasible_moves, random_er
from .scm import Dataset
from .scoring import ScoreConfig, ScoreEngine, ScoreValue

__all__ = [
    "AcceptanceRule",
    "SeedMode",
    "RefineConfig",
    "StepRecord",
    "RefineTrace",
    "acceptance_probability",
    "feasible_moves_capped",
    "init_seed",
    "greedy_hill_climb",
    "refine",
    "best_scoring",
]


class AcceptanceRule(str, enum.Enum):
    METROPOLIS = "metropolis"
    LITERAL_RATIO = "literal_ratio"


class SeedMode(str, enum.Enum):
    RANDOM_DAG = "random_dag"
    GREEDY = "greedy_hill_climb"
    FROM_FILE = "from_file"


@dataclass(frozen=True)
class RefineConfig:
    """Search parameters.

    temperature=None resolves to max(0.01 * |seed total|, 1e-6) once the
    seed graph is scored. Proposals that would push a node's in-degree past
    score.regressor.max_in_degree are excluded from the feasible set, so
    the search never leaves the regime the regressor accepts.
    """

    n_steps: int = 2000
    collect_k: int = 200
    acceptance: AcceptanceRule = AcceptanceRule.METROPOLIS
    temperature: float | None = None
    seed_mode: SeedMode = SeedMode.RANDOM_DAG
    seed_graph_path: str | None = None
    seed_expected_edges: float | None = None
    dedup_collected: bool = False
    greedy_max_rounds: int = 64
    score: ScoreConfig = field(default_factory=ScoreConfig)

    def __post_init__(self):
        object.__setattr__(self, "acceptance", AcceptanceRule(self.acceptance))
        object.__setattr__(self, "seed_mode", SeedMode(self.seed_mode))
        if self.n_steps < 0:
            raise ConfigError("n_steps must be >= 0")
        if self.collect_k < 1:
            raise ConfigError("collect_k must be >= 1")
        if self.temperature is not None and self.temperature <= 0:
            raise ConfigError("temperature must be > 0")
        if self.seed_mode == SeedMode.FROM_FILE and not self.seed_graph_path:
            raise ConfigError("seed_mode=from_file requires seed_graph_path")


@dataclass(frozen=True)
class StepRecord:
    step: int
    move: EdgeMove | None
    s_curr: float
    s_cand: float
    alpha: float
    accepted: bool

    def to_json(self) -> dict:
        return {
            "step": self.step,
            "move": self.move.to_json() if self.move is not None else None,
            "s_curr": self.s_curr,
            "s_cand": self.s_cand,
            "alpha": self.alpha,
            "accepted": self.accepted,
        }


@dataclass
class RefineTrace:
    seed_dag: Dag
    seed_score: ScoreValue
    temperature: float
    steps: list[StepRecord]
    collected: list[Dag]
    best_dag: Dag
    best_score: ScoreValue
    final_dag: Dag
    final_score: ScoreValue


def acceptance_probability(
    s_curr: float,
    s_cand: float,
    rule: AcceptanceRule = AcceptanceRule.METROPOLIS,
    temperature: float = 1.0,
) -> float:
    """Probability of accepting the candidate.

    metropolis: 1 if s_cand >= s_curr else exp((s_cand - s_curr)/T); well
    behaved for scores of any sign. literal_ratio: min(1, s_cand/s_curr)
    clamped to [0, 1]; for s_curr == 0 the ratio is undefined and the rule
    degrades to accept-iff-not-worse.
    """
    rule = AcceptanceRule(rule)
    if rule == AcceptanceRule.METROPOLIS:
        delta = s_cand - s_curr
        if delta >= 0:
            return 1.0
        if temperature <= 0:
            raise ConfigError("temperature must be > 0")
        try:
            return math.exp(delta / temperature)
        except OverflowError:  # pragma: no cover - delta<0 can only underflow
            return 0.0
    if s_curr == 0.0:
        return 1.0 if s_cand >= 0.0 else 0.0
    ratio = s_cand / s_curr
    return min(1.0, max(0.0, ratio))


def feasible_moves_capped(dag: Dag, max_in_degree: int | None) -> list[EdgeMove]:
    """feasible_moves minus proposals that would push a node's in-degree
    past the cap (the gaining endpoint for adds and reversals)."""
    moves = feasible_moves(dag)
    if max_in_degree is None:
        return moves
    indeg = dag.in_degrees()
    out = []
    for m in moves:
        if m.kind == MoveKind.ADD and indeg[m.target] + 1 > max_in_degree:
            continue
        if m.kind == MoveKind.REVERSE and indeg[m.source] + 1 > max_in_degree:
            continue
        out.append(m)
    return out


def greedy_hill_climb(
    dataset: Dataset,
    score_config: ScoreConfig | None = None,
    max_rounds: int = 64,
    engine: ScoreEngine | None = None,
    start: Dag | None = None,
) -> Dag:
    """Deterministic best-first ascent from the empty graph.

    Each round scores every feasible move and takes the strictly best
    improvement; ties keep the first move in canonical order. Stops when
    no move improves the total or max_rounds is hit.
    """
    if engine is None:
        engine = ScoreEngine(dataset, score_config)
    cap = engine.config.regressor.max_in_degree
    current = start if start is not None else Dag(np.zeros((dataset.d, dataset.d), dtype=np.int8))
    s_curr = engine.score(current)
    for _ in range(max_rounds):
        best_move_dag = None
        best_total = s_curr.total
        for move in feasible_moves_capped(current, cap):
            cand = apply_move(current, move)
            s_cand = engine.score(cand)
            if s_cand.total > best_total:
                best_total = s_cand.total
                best_move_dag = cand
        if best_move_dag is None:
            break
        current = best_move_dag
        s_curr = engine.score(current)
    return current


def init_seed(
    dataset: Dataset,
    mode: SeedMode | str,
    rng: np.random.Generator,
    *,
    score_config: ScoreConfig | None = None,
    seed_graph_path: str | None = None,
    expected_edges: float | None = None,
    max_rounds: int = 64,
    engine: ScoreEngine | None = None,
) -> Dag:
    """Produce the starting graph for refinement.

    random_dag draws an ER graph with expected_edges defaulting to d;
    greedy_hill_climb runs the deterministic ascent; from_file loads an
    adjacency file (CSV or JSON edge list).
    """
    mode = SeedMode(mode)
    if mode == SeedMode.RANDOM_DAG:
        ee = float(dataset.d) if expected_edges is None else expected_edges
        return random_er(dataset.d, ee, rng)
    if mode == SeedMode.GREEDY:
        return greedy_hill_climb(dataset, score_config, max_rounds=max_rounds, engine=engine)
    if not seed_graph_path:
        raise ConfigError("from_file seed mode requires a path")
    from .io import load_graph  # local import keeps io optional for library use

    dag = load_graph(seed_graph_path)
    if dag.d != dataset.d:
        raise ConfigError(
            f"seed graph has d={dag.d} but dataset has d={dataset.d}"
        )
    return dag


def refine(
    dataset: Dataset,
    seed: Dag,
    config: RefineConfig,
    rng: np.random.Generator,
    engine: ScoreEngine | None = None,
) -> RefineTrace:
    """Run the stochastic search and return the full trace.

    Per step: draw one uniformly random capped feasible move, rescore the
    candidate incrementally (nodes whose parent sets the move changes are
    refit from scratch; the rest keep their terms), accept with
    acceptance_probability, and during the last collect_k steps append
    the post-decision current graph to the collected list (repeats
    allowed unless dedup_collected). Tracks the best-scoring visited
    graph, ties resolved to the earliest.
    """
    if engine is None:
        engine = ScoreEngine(dataset, config.score)
    cap = engine.config.regressor.max_in_degree
    s_seed = engine.score(seed)
    temperature = config.temperature
    if temperature is None:
        temperature = max(0.01 * abs(s_seed.total), 1e-6)

    current, s_curr = seed, s_seed
    # per-node AD terms of the current graph, carried across steps
    terms = [engine.node_term(j, seed.parents(j)) for j in range(seed.d)]
    best, s_best = seed, s_seed
    steps: list[StepRecord] = []
    collected: list[Dag] = []
    collect_from = config.n_steps - config.collect_k  # collect when step > this
    for t in range(1, config.n_steps + 1):
        moves = feasible_moves_capped(current, cap)
        if not moves:
            steps.append(StepRecord(t, None, s_curr.total, s_curr.total, 0.0, False))
        else:
            move = moves[int(rng.integers(len(moves)))]
            cand = apply_move(current, move)
            changed = (
                (move.source, move.target)
                if move.kind == MoveKind.REVERSE
                else (move.target,)
            )
            new_terms = list(terms)
            for node in changed:
                new_terms[node] = engine.refit_term(node, cand.parents(node))
            s_cand = engine.value_from_ad(
                engine.combine_terms(new_terms), cand.edge_count
            )
            alpha = acceptance_probability(
                s_curr.total, s_cand.total, config.acceptance, temperature
            )
            accepted = bool(rng.random() < alpha)
            steps.append(
                StepRecord(t, move, s_curr.total, s_cand.total, alpha, accepted)
            )
            if accepted:
                current, s_curr, terms = cand, s_cand, new_terms
                if s_curr.total > s_best.total:
                    best, s_best = current, s_curr
        if t > collect_from:
            collected.append(current)

    if config.dedup_collected:
        seen = set()
        unique = []
        for g in collected:
            if g not in seen:
                seen.add(g)
                unique.append(g)
        collected = unique

    return RefineTrace(
        seed_dag=seed,
        seed_score=s_seed,
        temperature=temperature,
        steps=steps,
        collected=collected,
        best_dag=best,
        best_score=s_best,
        final_dag=current,
        final_score=s_curr,
    )


def best_scoring(trace: RefineTrace) -> tuple[Dag, ScoreValue]:
    """The highest-total graph visited during the run (seed included),
    earliest visit winning ties."""
    return trace.best_dag, trace.best_score
