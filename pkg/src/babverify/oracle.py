"""Ground truth by exhaustive phase enumeration.

Every ambiguous ReLU under plain interval bounds at the root gets both
phases enumerated; each full assignment is resolved exactly by LP. Interval
bounds only tighten under phase constraints, so a unit that is stable at the
root stays stable in every enumerated branch and the assignments cover the
whole region. Intentionally independent of the tree search: the only shared
ingredients are the bound propagation and the LP leaf check.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .bound import ConstraintSeq, PhaseConstraint, preactivation_bounds
from .lp import exact_leaf_check
from .model import Network
from .specs import Specification

VERIFIED = "verified"
VIOLATED = "violated"

MAX_AMBIGUOUS = 12


class OracleCapacity(ValueError):
    """Instance has more ambiguous neurons than brute force will take."""


@dataclass(frozen=True)
class GroundTruth:
    verdict: str
    witness: np.ndarray | None
    ambiguous: int
    lp_calls: int


def ambiguous_at_root(net: Network, s: Specification) -> list[int]:
    """Flat indices of interval-ambiguous units over the whole region."""
    preact = preactivation_bounds(net, s.region, ConstraintSeq(), "interval")
    return [i for i in range(preact.shape[0])
            if preact[i, 0] < 0.0 < preact[i, 1]]


def ground_truth(net: Network, s: Specification,
                 max_ambiguous: int = MAX_AMBIGUOUS) -> GroundTruth:
    """Exact verdict for the verification problem.

    Returns the first violating assignment's witness (enumeration order is
    the positive phase first per neuron, so the result is deterministic).
    """
    s.check_dims(net)
    flat = ambiguous_at_root(net, s)
    if len(flat) > max_ambiguous:
        raise OracleCapacity(
            f"{len(flat)} ambiguous neurons exceed the cap {max_ambiguous}"
        )
    refs = [net.neuron_at(i) for i in flat]
    lp_calls = 0
    for signs in product((1, -1), repeat=len(refs)):
        gamma = ConstraintSeq(tuple(
            PhaseConstraint(ref, sign) for ref, sign in zip(refs, signs)
        ))
        leaf = exact_leaf_check(net, s, gamma, domain="interval")
        lp_calls += leaf.lp_calls
        if not leaf.verified:
            return GroundTruth(VIOLATED, leaf.witness, len(flat), lp_calls)
    return GroundTruth(VERIFIED, None, len(flat), lp_calls)
