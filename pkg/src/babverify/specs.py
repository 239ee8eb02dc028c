"""Verification specifications: input box, conjunctive output property, margins.

A specification pairs a box over the network input with a conjunction of
closed half-spaces over the output. The property holds at an output y iff
coeffs . y + offset >= 0 for every constraint; the margin is the minimum of
those values, so the property holds iff margin(y) >= 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .model import Network, forward


class SpecError(ValueError):
    """Inconsistent or malformed specification."""


@dataclass(frozen=True)
class InputRegion:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64)
        hi = np.asarray(self.upper, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise SpecError("lower/upper must be vectors of equal length")
        if np.any(lo > hi):
            raise SpecError("region has lower > upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def clip(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=np.float64), self.lower, self.upper)


@dataclass(frozen=True)
class OutputProperty:
    """Conjunction of constraints coeffs . y + offset >= 0."""

    coeffs: np.ndarray  # (num_constraints, output_dim)
    offsets: np.ndarray  # (num_constraints,)

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.coeffs, dtype=np.float64))
        d = np.atleast_1d(np.asarray(self.offsets, dtype=np.float64))
        if C.shape[0] == 0:
            raise SpecError("property needs at least one constraint")
        if d.shape != (C.shape[0],):
            raise SpecError("offsets length must match constraint count")
        object.__setattr__(self, "coeffs", C)
        object.__setattr__(self, "offsets", d)

    @property
    def num_constraints(self) -> int:
        return self.coeffs.shape[0]

    @property
    def output_dim(self) -> int:
        return self.coeffs.shape[1]


@dataclass(frozen=True)
class Specification:
    region: InputRegion
    property: OutputProperty

    def check_dims(self, net: Network) -> None:
        if self.region.dim != net.input_dim:
            raise SpecError(
                f"region dim {self.region.dim} != network input_dim {net.input_dim}"
            )
        if self.property.output_dim != net.output_dim:
            raise SpecError(
                f"property dim {self.property.output_dim} != network "
                f"output_dim {net.output_dim}"
            )


def robustness_spec(center, epsilon: float, label: int, domain_lower: float,
                    domain_upper: float, output_dim: int) -> Specification:
    """Local-robustness specification around a reference point.

    The region is the epsilon-ball (in the max norm) around center clipped to
    the domain box; the property requires y[label] >= y[j] for every j !=
    label, as output_dim - 1 half-space constraints with zero offset.
    """
    center = np.asarray(center, dtype=np.float64)
    if epsilon < 0:
        raise SpecError("epsilon must be non-negative")
    if not (0 <= label < output_dim):
        raise SpecError(f"label {label} out of range for output_dim {output_dim}")
    if domain_lower > domain_upper:
        raise SpecError("domain_lower > domain_upper")
    lo = np.clip(center - epsilon, domain_lower, domain_upper)
    hi = np.clip(center + epsilon, domain_lower, domain_upper)
    rows = []
    for j in range(output_dim):
        if j == label:
            continue
        row = np.zeros(output_dim)
        row[label] = 1.0
        row[j] = -1.0
        rows.append(row)
    prop = OutputProperty(np.array(rows), np.zeros(len(rows)))
    return Specification(InputRegion(lo, hi), prop)


def margin(prop: OutputProperty, y) -> float:
    """Smallest constraint value at y; the property holds iff this is >= 0."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (prop.output_dim,):
        raise SpecError(f"output shape {y.shape} != property dim {prop.output_dim}")
    return float(np.min(prop.coeffs @ y + prop.offsets))


def is_counterexample(net: Network, s: Specification, x) -> bool:
    """True iff x lies in the region (inclusive) and strictly violates the
    property. Judged against the original specification only; phase
    constraints from the search never enter here."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (s.region.dim,):
        raise SpecError(f"input shape {x.shape} != region dim {s.region.dim}")
    if not s.region.contains(x):
        return False
    return margin(s.property, forward(net, x)) < 0.0


# -- JSON format --------------------------------------------------------------

def spec_from_json(obj, output_dim: int) -> Specification:
    """Build a Specification from the spec JSON format.

    Either a robustness form {"center": [...], "epsilon": e, "label": k,
    "domain": [lo, hi]} or an explicit form {"box": {"lower": [...],
    "upper": [...]}, "constraints": [{"coeffs": [...], "offset": d}, ...]}.
    """
    if isinstance(obj, (str, bytes)):
        try:
            obj = json.loads(obj)
        except json.JSONDecodeError as e:
            raise SpecError(f"invalid JSON: {e}") from e
    if "center" in obj:
        for key in ("epsilon", "label", "domain"):
            if key not in obj:
                raise SpecError(f'robustness spec missing "{key}"')
        dlo, dhi = obj["domain"]
        return robustness_spec(obj["center"], float(obj["epsilon"]),
                               int(obj["label"]), float(dlo), float(dhi),
                               output_dim)
    if "box" in obj:
        if "constraints" not in obj or not obj["constraints"]:
            raise SpecError("explicit spec needs a non-empty constraints list")
        region = InputRegion(np.asarray(obj["box"]["lower"], dtype=np.float64),
                             np.asarray(obj["box"]["upper"], dtype=np.float64))
        C = np.array([c["coeffs"] for c in obj["constraints"]], dtype=np.float64)
        d = np.array([c["offset"] for c in obj["constraints"]], dtype=np.float64)
        return Specification(region, OutputProperty(C, d))
    raise SpecError('spec JSON needs either "center" or "box"')


def spec_to_json(s: Specification) -> dict:
    return {
        "box": {"lower": s.region.lower.tolist(), "upper": s.region.upper.tolist()},
        "constraints": [
            {"coeffs": row.tolist(), "offset": float(off)}
            for row, off in zip(s.property.coeffs, s.property.offsets)
        ],
    }
