"""Approximated verifiers: sound lower bounds on the property margin.

Two abstract domains are provided. ``interval_analyze`` propagates plain
interval bounds layer by layer. ``linrelax_analyze`` keeps one symbolic
affine lower and upper bound per neuron in terms of the network input,
relaxing each ambiguous ReLU with the triangle upper bound and a 0/1-slope
lower bound, and concretizing only at the end.

Both accept a sequence of ReLU phase constraints: each constrained neuron's
pre-activation interval is intersected with [0, inf) or (-inf, 0] before the
activation, and an empty intersection makes the whole sub-problem infeasible.
The returned p_hat is a sound lower bound on the concrete margin over every
input in the region whose pre-activation signs satisfy the constraints, and
the returned candidate is a heuristic witness corner (never trusted without
a concrete validity check).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as k
from .model import RELU, Network, NeuronRef
from .specs import InputRegion, OutputProperty

POSITIVE = 1
NEGATIVE = -1

INFEASIBILITY_TOL = 1e-9


class BoundError(ValueError):
    """Dimension mismatch or invalid constraint sequence."""


@dataclass(frozen=True)
class PhaseConstraint:
    neuron: NeuronRef
    sign: int  # POSITIVE or NEGATIVE

    def __post_init__(self):
        if self.sign not in (POSITIVE, NEGATIVE):
            raise BoundError(f"sign must be +1 or -1, got {self.sign}")


@dataclass(frozen=True)
class ConstraintSeq:
    """Ordered ReLU phase constraints identifying a sub-problem.

    The empty sequence is the root problem. No neuron may appear twice.
    """

    items: tuple[PhaseConstraint, ...] = ()

    def __post_init__(self):
        items = tuple(self.items)
        refs = [pc.neuron for pc in items]
        if len(set(refs)) != len(refs):
            raise BoundError("constraint sequence repeats a neuron")
        object.__setattr__(self, "items", items)

    def __len__(self) -> int:
        return len(self.items)

    def extended(self, pc: PhaseConstraint) -> "ConstraintSeq":
        return ConstraintSeq(self.items + (pc,))

    def sign_map(self, net: Network) -> dict[int, int]:
        """Flat neuron index -> phase sign."""
        return {net.flat_index(pc.neuron): pc.sign for pc in self.items}


EMPTY_SEQ = ConstraintSeq()


@dataclass(frozen=True)
class BoundResult:
    p_hat: float  # +inf when infeasible
    candidate: np.ndarray | None
    infeasible: bool
    preact_bounds: np.ndarray | None  # (relu_count, 2), post-intersection

    def __post_init__(self):
        if self.infeasible:
            assert self.candidate is None and math.isinf(self.p_hat)


def minimize_affine_over_box(coeffs, offset: float, region: InputRegion):
    """Exact minimizer of coeffs . x + offset over the box.

    Zero coefficients resolve to the lower corner for determinism.
    """
    a = np.asarray(coeffs, dtype=np.float64)
    if a.shape != (region.dim,):
        raise BoundError(f"coeffs shape {a.shape} != region dim {region.dim}")
    argmin = np.where(a > 0, region.lower, np.where(a < 0, region.upper, region.lower))
    return argmin, float(a @ argmin + offset)


def interval_analyze(net: Network, region: InputRegion, gamma: ConstraintSeq,
                     prop: OutputProperty) -> BoundResult:
    state = _propagate_interval(net, region, gamma)
    if state["infeasible"]:
        return BoundResult(math.inf, None, True, None)
    y_lo, y_hi = state["out_lo"], state["out_hi"]
    M, c = state["lin_M"], state["lin_c"]

    best = math.inf
    best_corner = None
    for row, off in zip(prop.coeffs, prop.offsets):
        lo_k, _ = k.interval_affine(_as2d(row), np.array([off]), y_lo, y_hi)
        if lo_k[0] < best:
            best = float(lo_k[0])
            g = row @ M
            gc = float(row @ c + off)
            best_corner, _ = minimize_affine_over_box(g, gc, region)
    return BoundResult(best, best_corner, False, state["preact"])


def linrelax_analyze(net: Network, region: InputRegion, gamma: ConstraintSeq,
                     prop: OutputProperty) -> BoundResult:
    state = _propagate_linrelax(net, region, gamma)
    if state["infeasible"]:
        return BoundResult(math.inf, None, True, None)
    Al, cl, Au, cu = state["Al"], state["cl"], state["Au"], state["cu"]

    best = math.inf
    best_corner = None
    for row, off in zip(prop.coeffs, prop.offsets):
        W = _as2d(row)
        gA = k.mixed_matmul(W, Al, Au)[0]
        gc = float(k.mixed_matvec(W, cl, cu)[0] + off)
        corner, val = minimize_affine_over_box(gA, gc, region)
        if val < best:
            best = val
            best_corner = corner
    return BoundResult(best, best_corner, False, state["preact"])


def preactivation_bounds(net: Network, region: InputRegion, gamma: ConstraintSeq,
                         domain: str = "linrelax") -> np.ndarray | None:
    """Per-ReLU (lower, upper) pre-activation bounds, post-intersection.

    Identical to the preact_bounds field of the corresponding analyze call;
    the margin step is simply skipped. Returns None if gamma is infeasible.
    """
    prop_state = _propagate(net, region, gamma, domain)
    return None if prop_state["infeasible"] else prop_state["preact"]


def _propagate(net, region, gamma, domain):
    if domain == "interval":
        return _propagate_interval(net, region, gamma)
    if domain == "linrelax":
        return _propagate_linrelax(net, region, gamma)
    raise BoundError(f"unknown domain {domain!r}")


def _check_dims(net: Network, region: InputRegion) -> None:
    if region.dim != net.input_dim:
        raise BoundError(f"region dim {region.dim} != input_dim {net.input_dim}")


def _as2d(row: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(row[None, :])


def _intersect(pl, pu, signs, base, width):
    """Apply phase constraints to pre-activation bounds in place.

    Returns False if some constrained interval became empty.
    """
    for u in range(width):
        sign = signs.get(base + u)
        if sign is None:
            continue
        if sign == POSITIVE:
            pl[u] = max(pl[u], 0.0)
        else:
            pu[u] = min(pu[u], 0.0)
        if pl[u] > pu[u] + INFEASIBILITY_TOL:
            return False
    return True


def _propagate_interval(net: Network, region: InputRegion, gamma: ConstraintSeq):
    _check_dims(net, region)
    signs = gamma.sign_map(net)
    lo = region.lower.copy()
    hi = region.upper.copy()
    n = net.input_dim
    # linearization used only for candidate extraction: stably-off units drop
    # out, every other ReLU passes through as identity
    M = np.eye(n)
    c = np.zeros(n)

    preact = []
    base = 0
    for layer in net.layers:
        lo, hi = k.interval_affine(layer.weights, layer.bias, lo, hi)
        M = layer.weights @ M
        c = layer.weights @ c + layer.bias
        if layer.activation == RELU:
            if not _intersect(lo, hi, signs, base, layer.out_dim):
                return {"infeasible": True}
            preact.append(np.stack([lo, hi], axis=1))
            off = hi <= 0.0
            M[off] = 0.0
            c[off] = 0.0
            lo = np.maximum(lo, 0.0)
            hi = np.maximum(hi, 0.0)
            base += layer.out_dim
    return {
        "infeasible": False,
        "out_lo": lo,
        "out_hi": hi,
        "lin_M": M,
        "lin_c": c,
        "preact": _stack_preact(preact),
    }


def _propagate_linrelax(net: Network, region: InputRegion, gamma: ConstraintSeq):
    _check_dims(net, region)
    signs = gamma.sign_map(net)
    n = net.input_dim
    blo = np.ascontiguousarray(region.lower)
    bhi = np.ascontiguousarray(region.upper)
    # symbolic bounds of the current activations over the input:
    #   Al x + cl <= activation <= Au x + cu  for all x in the box
    Al = np.eye(n)
    cl = np.zeros(n)
    Au = np.eye(n)
    cu = np.zeros(n)

    preact = []
    base = 0
    for layer in net.layers:
        W = layer.weights
        pAl = k.mixed_matmul(W, Al, Au)
        pcl = k.mixed_matvec(W, cl, cu) + layer.bias
        pAu = k.mixed_matmul(W, Au, Al)
        pcu = k.mixed_matvec(W, cu, cl) + layer.bias
        pl = k.concretize(pAl, pcl, blo, bhi, True)
        pu = k.concretize(pAu, pcu, blo, bhi, False)
        if layer.activation == RELU:
            if not _intersect(pl, pu, signs, base, layer.out_dim):
                return {"infeasible": True}
            preact.append(np.stack([pl, pu], axis=1))
            Al, cl, Au, cu = _relax_relu(pAl, pcl, pAu, pcu, pl, pu)
            base += layer.out_dim
        else:
            Al, cl, Au, cu = pAl, pcl, pAu, pcu
    return {
        "infeasible": False,
        "Al": Al,
        "cl": cl,
        "Au": Au,
        "cu": cu,
        "preact": _stack_preact(preact),
    }


def _relax_relu(pAl, pcl, pAu, pcu, pl, pu):
    """Per-unit ReLU relaxation given post-intersection concrete bounds.

    Stable-positive units keep their exact forms, stable-negative units
    become zero. An ambiguous unit gets the triangle upper bound
    u (z - l) / (u - l) and the lower bound alpha * z with alpha = 0 when
    |l| >= u, else 1.
    """
    m = pl.shape[0]
    Al = pAl.copy()
    cl = pcl.copy()
    Au = pAu.copy()
    cu = pcu.copy()
    for i in range(m):
        l, u = pl[i], pu[i]
        if l >= 0.0:
            continue
        if u <= 0.0:
            Al[i] = 0.0
            cl[i] = 0.0
            Au[i] = 0.0
            cu[i] = 0.0
            continue
        slope = u / (u - l)
        Au[i] *= slope
        cu[i] = slope * cu[i] - slope * l
        alpha = 0.0 if -l >= u else 1.0
        Al[i] *= alpha
        cl[i] *= alpha
    return Al, cl, Au, cu


def _stack_preact(preact: list[np.ndarray]) -> np.ndarray:
    if preact:
        return np.concatenate(preact, axis=0)
    return np.empty((0, 2))


def ambiguous_neurons(preact: np.ndarray, exclude: frozenset[int] | set[int] = frozenset()):
    """Flat indices of units whose bounds straddle zero, minus the excluded set."""
    out = []
    for i in range(preact.shape[0]):
        if i in exclude:
            continue
        if preact[i, 0] < 0.0 < preact[i, 1]:
            out.append(i)
    return out
