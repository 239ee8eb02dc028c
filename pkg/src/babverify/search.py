"""Verification strategies over the branch-and-bound tree.

The adaptive strategy descends the tree by UCB1 over node rewards, expands
exactly one node (or exactly resolves one fully-split leaf) per step, and
back-propagates after every change, terminating as soon as the root reward
hits +inf (counterexample) or -inf (all sub-problems verified). The baseline
explores the same tree breadth-first from a FIFO queue. Greedy is the
adaptive strategy with the exploration constant forced to zero.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .bound import (
    ConstraintSeq,
    PhaseConstraint,
    interval_analyze,
    linrelax_analyze,
)
from .lp import exact_leaf_check
from .model import Network, NeuronRef
from .specs import Specification, is_counterexample
from .tree import FROZEN_ROOT, BabTree, ucb1_score

MCTS = "mcts"
BFS = "bfs"
GREEDY = "greedy"

VERIFIED_TRUE = "verified_true"
VIOLATED_FALSE = "violated_false"
TIMEOUT = "timeout"


class SearchError(RuntimeError):
    """Internal invariant breach; maps to exit code 2 in the CLI."""


class NoEligibleNeuron(LookupError):
    """No ambiguous, unconstrained neuron remains; resolve the leaf exactly."""


@dataclass(frozen=True)
class SearchConfig:
    lam: float = 0.5
    c: float = 0.2
    timeout: float = 1000.0
    strategy: str = MCTS
    heuristic: str = "relax_area"
    domain: str = "linrelax"
    max_nodes: int | None = None
    pmin_mode: str = FROZEN_ROOT
    record_trace: bool = False
    exact_leaves: bool = True  # when off, exhausted leaves stay unknown

    def analyzer(self):
        if self.domain == "interval":
            return interval_analyze
        if self.domain == "linrelax":
            return linrelax_analyze
        raise ValueError(f"unknown domain {self.domain!r}")


@dataclass
class RunStats:
    nodes_expanded: int = 0
    appver_calls: int = 0
    lp_calls: int = 0
    wall_time: float = 0.0
    peak_tree_size: int = 1
    trace: list[int] | None = None


@dataclass
class Verdict:
    outcome: str
    counterexample: np.ndarray | None
    stats: RunStats


def select_relu(heuristic: str, net: Network, preact_bounds: np.ndarray,
                gamma: ConstraintSeq) -> NeuronRef:
    """Pick the ReLU to split on, deterministically.

    relax_area maximizes the triangle-relaxation area -l*u/(u-l), widest
    maximizes u-l, sequential takes the first eligible unit. Ties resolve to
    the lowest global index; only ambiguous units (l < 0 < u) not already
    constrained are eligible.
    """
    taken = set(gamma.sign_map(net))
    best_idx = -1
    best_score = -math.inf
    for i in range(preact_bounds.shape[0]):
        if i in taken:
            continue
        l, u = preact_bounds[i]
        if not (l < 0.0 < u):
            continue
        if heuristic == "sequential":
            return net.neuron_at(i)
        if heuristic == "relax_area":
            score = (-l * u) / (u - l)
        elif heuristic == "widest":
            score = u - l
        else:
            raise ValueError(f"unknown heuristic {heuristic!r}")
        if score > best_score:
            best_score = score
            best_idx = i
    if best_idx < 0:
        raise NoEligibleNeuron("no ambiguous unconstrained neuron left")
    return net.neuron_at(best_idx)


def verify(net: Network, s: Specification, cfg: SearchConfig) -> Verdict:
    """Run the configured strategy to a verdict.

    The root is analyzed once; a nonnegative bound or a confirmed root
    counterexample short-circuits without building a tree. Timeout is a
    verdict, never an error, and is only checked between steps.
    """
    s.check_dims(net)
    t0 = time.monotonic()
    stats = RunStats(trace=[] if cfg.record_trace else None)

    analyzer = cfg.analyzer()
    root_res = analyzer(net, s.region, ConstraintSeq(), s.property)
    stats.appver_calls = 1
    if root_res.p_hat >= 0.0:
        stats.wall_time = time.monotonic() - t0
        return Verdict(VERIFIED_TRUE, None, stats)
    if root_res.candidate is not None and is_counterexample(net, s, root_res.candidate):
        stats.wall_time = time.monotonic() - t0
        return _violated(net, s, root_res.candidate, stats)

    if net.relu_count < 1:
        raise SearchError("affine-only analysis is exact; an unresolved root "
                          "here means the bound computation is broken")
    tree = BabTree(root_res.p_hat, root_res.candidate, root_res.preact_bounds,
                   net.relu_count, cfg.lam, cfg.pmin_mode)

    c = 0.0 if cfg.strategy == GREEDY else cfg.c
    deadline = t0 + cfg.timeout
    if cfg.strategy == BFS:
        outcome = _bfs_loop(net, s, cfg, tree, stats, deadline)
    elif cfg.strategy in (MCTS, GREEDY):
        outcome = _mcts_loop(net, s, cfg, c, tree, stats, deadline)
    else:
        raise ValueError(f"unknown strategy {cfg.strategy!r}")

    stats.peak_tree_size = tree.size()
    stats.wall_time = time.monotonic() - t0
    if outcome == VIOLATED_FALSE:
        return _violated(net, s, tree.counterexample, stats)
    return Verdict(outcome, None, stats)


def greedy_verify(net: Network, s: Specification, cfg: SearchConfig) -> Verdict:
    """The adaptive strategy at c = 0 (pure exploitation)."""
    return verify(net, s, replace(cfg, strategy=GREEDY))


def bfs_verify(net: Network, s: Specification, cfg: SearchConfig) -> Verdict:
    return verify(net, s, replace(cfg, strategy=BFS))


def _violated(net, s, counterexample, stats) -> Verdict:
    if counterexample is None or not is_counterexample(net, s, counterexample):
        raise SearchError("violated verdict without a confirmed counterexample")
    return Verdict(VIOLATED_FALSE, counterexample, stats)


def _root_outcome(tree: BabTree) -> str | None:
    r = tree.root.reward
    if r == math.inf:
        return VIOLATED_FALSE
    if r == -math.inf:
        # leaves retired as unknown block a verified conclusion
        return TIMEOUT if tree.unknown_leaves else VERIFIED_TRUE
    return None


def _mcts_loop(net, s, cfg, c, tree, stats, deadline) -> str:
    while True:
        outcome = _root_outcome(tree)
        if outcome:
            return outcome
        if time.monotonic() > deadline:
            return TIMEOUT
        if cfg.max_nodes is not None and stats.nodes_expanded >= cfg.max_nodes:
            return TIMEOUT
        mcts_step(net, s, cfg, tree, stats, c)


def mcts_step(net, s, cfg, tree: BabTree, stats: RunStats, c: float | None = None) -> str:
    """One selection/expansion/back-propagation pass from the root.

    Descends by UCB1 (ties to the positive side, infinite rewards dominate)
    until a childless node; expands it on the heuristic's neuron with one
    analyzer call per side, or resolves it exactly when no eligible neuron
    remains. Returns "resolved" once the root reward is infinite, else
    "continue".
    """
    if c is None:
        c = 0.0 if cfg.strategy == GREEDY else cfg.c
    node = tree.root
    while node.children is not None:
        left = tree.node(node.children[0])
        right = tree.node(node.children[1])
        s_left = ucb1_score(left.reward, node.subtree_size, left.subtree_size, c)
        s_right = ucb1_score(right.reward, node.subtree_size, right.subtree_size, c)
        node = right if s_right > s_left else left
        if math.isinf(node.reward):
            raise SearchError(f"selection entered node {node.id} with infinite reward")

    _expand_or_resolve(net, s, cfg, tree, stats, node)
    if stats.trace is not None:
        stats.trace.append(node.id)
    stats.peak_tree_size = max(stats.peak_tree_size, tree.size())
    return "resolved" if _root_outcome(tree) else "continue"


def _bfs_loop(net, s, cfg, tree, stats, deadline) -> str:
    from collections import deque

    queue = deque([0])
    while queue:
        outcome = _root_outcome(tree)
        if outcome:
            return outcome
        if time.monotonic() > deadline:
            return TIMEOUT
        if cfg.max_nodes is not None and stats.nodes_expanded >= cfg.max_nodes:
            return TIMEOUT
        node = tree.node(queue.popleft())
        if math.isinf(node.reward):
            continue
        created = _expand_or_resolve(net, s, cfg, tree, stats, node)
        if stats.trace is not None:
            stats.trace.append(node.id)
        stats.peak_tree_size = max(stats.peak_tree_size, tree.size())
        for child_id in created:
            if not math.isinf(tree.node(child_id).reward):
                queue.append(child_id)
    outcome = _root_outcome(tree)
    if outcome is None:
        raise SearchError("queue exhausted with the root still unresolved")
    return outcome


def _expand_or_resolve(net, s, cfg, tree, stats, node) -> tuple[int, ...]:
    """Expand a childless node, or resolve it exactly when fully split.

    Returns the created child ids (empty for a leaf resolution).
    """
    try:
        neuron = select_relu(cfg.heuristic, net, node.preact_bounds, node.gamma)
    except NoEligibleNeuron:
        if not cfg.exact_leaves:
            # reporting-only mode: fully split false alarms stay unknown and
            # the run can only end in timeout, never verified
            tree.mark_unknown(node.id)
            if node.parent is not None:
                tree.backpropagate(node.parent)
            return ()
        leaf = exact_leaf_check(net, s, node.gamma, cfg.domain)
        stats.lp_calls += leaf.lp_calls
        tree.resolve_leaf(node.id, violated=not leaf.verified, witness=leaf.witness)
        if node.parent is not None:
            tree.backpropagate(node.parent)
        return ()

    analyzer = cfg.analyzer()
    results = []
    for sign in (1, -1):
        child_gamma = node.gamma.extended(PhaseConstraint(neuron, sign))
        res = analyzer(net, s.region, child_gamma, s.property)
        stats.appver_calls += 1
        valid = (not res.infeasible and res.p_hat < 0.0
                 and res.candidate is not None
                 and is_counterexample(net, s, res.candidate))
        results.append((res.p_hat, res.candidate, valid, res.infeasible,
                        res.preact_bounds))
    children = tree.expand(node.id, neuron, results)
    stats.nodes_expanded += 1
    tree.backpropagate(node.id)
    return children
