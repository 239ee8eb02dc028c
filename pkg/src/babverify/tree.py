"""Branch-and-bound search tree: rewards, subtree sizes, node bookkeeping.

Each node identifies a sub-problem by the phase-constraint sequence on its
root path. A node's reward is its counterexample potentiality: -inf once the
sub-problem is verified, +inf once a concrete counterexample is known, and
otherwise a convex mix of normalized depth and normalized bound violation
clamped to [0, 1]. Parents carry the max of their children's rewards and the
size of their subtree, which the UCB1 selection rule consumes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bound import ConstraintSeq, PhaseConstraint
from .model import NeuronRef

UNEXPANDED = "unexpanded"
EXPANDED = "expanded"
VERIFIED = "verified"
VIOLATED = "violated"
EXHAUSTED = "exhausted"

FROZEN_ROOT = "frozen_root"
RUNNING_MIN = "running_min"


class TreeError(RuntimeError):
    """Structural misuse (double expansion, childless backpropagation, ...)."""


def potentiality(p_hat: float, candidate_valid: bool, depth: int, K: int,
                 lam: float, p_min: float) -> float:
    """Counterexample potentiality of a node.

    -inf when the bound already proves the sub-problem (p_hat >= 0, with an
    exact zero counted as proved, and the infeasible +inf case included);
    +inf when the bound's candidate is a confirmed counterexample; otherwise
    lam * depth / K + (1 - lam) * clamp(p_hat / p_min, 0, 1), which lies in
    [0, 1]. p_min is the negative normalizer (the root bound by default), and
    the clamp keeps deeper, more violated nodes from exceeding 1.
    """
    if not (0 <= depth <= K):
        raise ValueError(f"depth {depth} outside [0, {K}]")
    if K < 1:
        raise ValueError("K must be at least 1")
    if not p_min < 0:
        raise ValueError(f"p_min must be negative, got {p_min}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda {lam} outside [0, 1]")
    if p_hat >= 0.0:
        return -math.inf
    if candidate_valid:
        return math.inf
    ratio = min(max(p_hat / p_min, 0.0), 1.0)
    return lam * (depth / K) + (1.0 - lam) * ratio


def ucb1_score(child_reward: float, parent_size: int, child_size: int,
               c: float) -> float:
    """UCB1 value of a child: reward plus c * sqrt(2 ln parent / child).

    Infinite rewards dominate the exploration term in either direction, so
    verified subtrees are never re-entered and found counterexamples always
    win the selection.
    """
    if child_size < 1:
        raise ValueError("child_size must be >= 1")
    if parent_size < child_size + 1:
        raise ValueError("parent_size must exceed child_size")
    if c < 0:
        raise ValueError("exploration constant must be >= 0")
    if math.isinf(child_reward):
        return child_reward
    return child_reward + c * math.sqrt(2.0 * math.log(parent_size) / child_size)


@dataclass
class BabNode:
    id: int
    parent: int | None
    edge: PhaseConstraint | None
    depth: int
    gamma: ConstraintSeq
    p_hat: float
    candidate: np.ndarray | None
    reward: float
    subtree_size: int = 1
    children: tuple[int, int] | None = None
    status: str = UNEXPANDED
    split_neuron: NeuronRef | None = None
    preact_bounds: np.ndarray | None = None  # cached for the split heuristic


class BabTree:
    """Single-writer tree for one verification run."""

    def __init__(self, root_p_hat: float, root_candidate, root_preact,
                 K: int, lam: float, pmin_mode: str = FROZEN_ROOT):
        if root_p_hat >= 0:
            raise TreeError("tree is only built for an unresolved root")
        if pmin_mode not in (FROZEN_ROOT, RUNNING_MIN):
            raise ValueError(f"unknown pmin_mode {pmin_mode!r}")
        self.K = K
        self.lam = lam
        self.pmin_mode = pmin_mode
        self.p_min = root_p_hat
        root = BabNode(
            id=0, parent=None, edge=None, depth=0, gamma=ConstraintSeq(),
            p_hat=root_p_hat, candidate=root_candidate,
            reward=potentiality(root_p_hat, False, 0, K, lam, root_p_hat),
            preact_bounds=root_preact,
        )
        self.nodes: list[BabNode] = [root]
        self.counterexample: np.ndarray | None = None
        self.unknown_leaves = 0

    @property
    def root(self) -> BabNode:
        return self.nodes[0]

    def node(self, node_id: int) -> BabNode:
        return self.nodes[node_id]

    def size(self) -> int:
        return len(self.nodes)

    def _reward(self, p_hat: float, valid: bool, depth: int) -> float:
        if self.pmin_mode == RUNNING_MIN and p_hat < self.p_min:
            self.p_min = p_hat
        return potentiality(p_hat, valid, depth, self.K, self.lam, self.p_min)

    def expand(self, node_id: int, neuron: NeuronRef, results) -> tuple[int, int]:
        """Create the two phase children of a node, positive side first.

        results holds one (p_hat, candidate, valid, infeasible, preact)
        tuple per side, positive then negative. Rewards and statuses follow
        the potentiality cases; an infeasible side is an (empty, hence
        verified) leaf. Does not propagate to ancestors.
        """
        node = self.nodes[node_id]
        if node.children is not None:
            raise TreeError(f"node {node_id} already expanded")
        if any(pc.neuron == neuron for pc in node.gamma.items):
            raise TreeError(f"neuron {neuron} already constrained on this path")
        ids = []
        for sign, res in zip((1, -1), results):
            p_hat, candidate, valid, infeasible, preact = res
            edge = PhaseConstraint(neuron, sign)
            if infeasible:
                reward, status = -math.inf, VERIFIED
            else:
                reward = self._reward(p_hat, valid, node.depth + 1)
                if reward == -math.inf:
                    status = VERIFIED
                elif reward == math.inf:
                    status = VIOLATED
                else:
                    status = UNEXPANDED
            child = BabNode(
                id=len(self.nodes), parent=node_id, edge=edge,
                depth=node.depth + 1, gamma=node.gamma.extended(edge),
                p_hat=p_hat, candidate=candidate, reward=reward,
                status=status, preact_bounds=preact,
            )
            if status == VIOLATED and self.counterexample is None:
                self.counterexample = candidate
            self.nodes.append(child)
            ids.append(child.id)
        node.children = (ids[0], ids[1])
        node.split_neuron = neuron
        node.status = EXPANDED
        return node.children

    def mark_unknown(self, node_id: int) -> None:
        """Retire a fully split leaf without resolving it.

        The -inf reward only removes the leaf from selection; the leaf count
        keeps the run from ever concluding verified while such leaves exist.
        """
        node = self.nodes[node_id]
        if node.children is not None:
            raise TreeError("cannot retire an expanded node")
        node.status = EXHAUSTED
        node.reward = -math.inf
        self.unknown_leaves += 1

    def resolve_leaf(self, node_id: int, violated: bool, witness=None) -> None:
        """Record the exact (LP) outcome of a fully phase-fixed leaf."""
        node = self.nodes[node_id]
        if node.children is not None:
            raise TreeError("cannot resolve an expanded node as a leaf")
        node.status = EXHAUSTED
        if violated:
            node.reward = math.inf
            node.status = VIOLATED
            node.candidate = witness
            if self.counterexample is None:
                self.counterexample = witness
        else:
            node.reward = -math.inf
            node.status = VERIFIED

    def backpropagate(self, node_id: int) -> None:
        """Refresh reward, size, and status from node up to the root."""
        cur = self.nodes[node_id]
        if cur.children is None:
            raise TreeError("backpropagate needs a node with children")
        while True:
            left = self.nodes[cur.children[0]]
            right = self.nodes[cur.children[1]]
            cur.reward = max(left.reward, right.reward)
            cur.subtree_size = 1 + left.subtree_size + right.subtree_size
            if left.status == VERIFIED and right.status == VERIFIED:
                cur.status = VERIFIED
            elif left.status == VIOLATED or right.status == VIOLATED:
                cur.status = VIOLATED
            if cur.parent is None:
                return
            cur = self.nodes[cur.parent]

    def check_consistency(self) -> None:
        """Whole-tree sweep of the structural invariants; raises on breach."""
        for node in self.nodes:
            if node.children is None:
                if node.subtree_size != 1:
                    raise TreeError(f"leaf {node.id} has size {node.subtree_size}")
                continue
            left = self.nodes[node.children[0]]
            right = self.nodes[node.children[1]]
            want = 1 + left.subtree_size + right.subtree_size
            if node.subtree_size != want:
                raise TreeError(
                    f"node {node.id} size {node.subtree_size}, expected {want}"
                )
            if node.reward != max(left.reward, right.reward):
                raise TreeError(f"node {node.id} reward is not the children's max")
            if left.parent != node.id or right.parent != node.id:
                raise TreeError(f"node {node.id} children disagree on parent")
        for node in self.nodes[1:]:
            if math.isfinite(node.reward) and not 0.0 <= node.reward <= 1.0:
                raise TreeError(f"node {node.id} finite reward outside [0, 1]")
            seen = [pc.neuron for pc in node.gamma.items]
            if len(set(seen)) != len(seen):
                raise TreeError(f"node {node.id} repeats a neuron on its path")

    # -- dumps -----------------------------------------------------------

    def to_json(self) -> str:
        out = []
        for node in self.nodes:
            edge = None
            if node.edge is not None:
                edge = {
                    "layer": node.edge.neuron.layer_index,
                    "unit": node.edge.neuron.unit_index,
                    "sign": "+" if node.edge.sign == 1 else "-",
                }
            out.append({
                "id": node.id,
                "parent": node.parent,
                "edge": edge,
                "depth": node.depth,
                "p_hat": _json_float(node.p_hat),
                "reward": _json_float(node.reward),
                "size": node.subtree_size,
                "status": node.status,
            })
        return json.dumps(out, indent=2)

    def to_dot(self) -> str:
        lines = ["digraph bab {", "  node [shape=box, fontsize=10];"]
        for node in self.nodes:
            label = f"R={_fmt(node.reward)}\\np={_fmt(node.p_hat)}"
            color = {VERIFIED: "palegreen", VIOLATED: "lightcoral"}.get(
                node.status, "white")
            lines.append(
                f'  n{node.id} [label="{label}", style=filled, fillcolor={color}];'
            )
            if node.parent is not None:
                sgn = "+" if node.edge.sign == 1 else "-"
                mark = f"r{sgn}({node.edge.neuron.layer_index},{node.edge.neuron.unit_index})"
                lines.append(f'  n{node.parent} -> n{node.id} [label="{mark}"];')
        lines.append("}")
        return "\n".join(lines)


def _json_float(v: float):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.3g}"
