"""Deterministic generation of benchmark problems with oracle ground truth.

Networks are random fully-connected ReLU nets (2-4 affine layers, 4-32 units
per hidden layer, small input/output dims) paired with local-robustness
specifications on [0, 1] inputs. The perturbation radius is tuned per
problem so the number of interval-ambiguous neurons at the root stays in a
bracket brute force can handle, and the profile biases the radius so the
verdict mix skews violated-heavy, certified-heavy, or mixed. Every problem
is labeled with the exhaustive-enumeration oracle's verdict.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import IDENTITY, RELU, Layer, Network, forward, serialize
from .oracle import ground_truth
from .specs import Specification, margin, robustness_spec, spec_to_json

PROFILES = ("violated_rich", "mixed", "certified_rich")

MIN_AMBIGUOUS = 2
MAX_AMBIGUOUS = 12
PROBE_SAMPLES = 200
MAX_EPS_TRIES = 24


def random_network(rng: np.random.Generator) -> Network:
    num_affine = int(rng.integers(2, 5))  # 1-3 hidden ReLU layers
    input_dim = int(rng.integers(2, 6))
    output_dim = int(rng.integers(2, 5))
    widths = [input_dim] + [int(rng.integers(4, 33)) for _ in range(num_affine - 1)]
    widths.append(output_dim)
    layers = []
    for k in range(num_affine):
        fan_in = widths[k]
        W = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(widths[k + 1], fan_in))
        b = rng.normal(0.0, 0.1, size=widths[k + 1])
        act = RELU if k < num_affine - 1 else IDENTITY
        layers.append(Layer(W, b, act))
    return Network(tuple(layers))


def _probe_violated(net: Network, s: Specification, rng: np.random.Generator) -> bool:
    """Cheap sampling probe; True means the problem is certainly violated."""
    lo, hi = s.region.lower, s.region.upper
    pts = rng.uniform(size=(PROBE_SAMPLES, lo.shape[0])) * (hi - lo) + lo
    for x in pts:
        if margin(s.property, forward(net, x)) < 0.0:
            return True
    return False


def _count_ambiguous(net: Network, s: Specification) -> int:
    from .oracle import ambiguous_at_root

    return len(ambiguous_at_root(net, s))


def _tune_problem(net: Network, rng: np.random.Generator, want_violated: bool):
    """Pick center/label/epsilon so ambiguity lands in the bracket and the
    sampling probe agrees with the wanted skew when it can."""
    input_dim, output_dim = net.input_dim, net.output_dim
    center = rng.uniform(0.1, 0.9, size=input_dim)
    label = int(np.argmax(forward(net, center)))
    eps = 0.08 if want_violated else 0.03
    accepted = None
    for _ in range(MAX_EPS_TRIES):
        s = robustness_spec(center, eps, label, 0.0, 1.0, output_dim)
        amb = _count_ambiguous(net, s)
        if amb > MAX_AMBIGUOUS:
            eps *= 0.65
            continue
        if amb < MIN_AMBIGUOUS:
            eps *= 1.5
            if eps > 1.0:
                return None
            continue
        violated = _probe_violated(net, s, rng)
        accepted = (s, eps, amb)
        if violated == want_violated:
            return accepted
        eps *= 1.35 if want_violated else 0.75
    return accepted


def gen_suite(seed: int, count: int, profile: str, out_dir) -> dict:
    """Write models and a manifest under out_dir; return the manifest dict."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if profile not in PROFILES:
        raise ValueError(f"profile must be one of {PROFILES}")
    rng = np.random.default_rng(seed)
    out_dir = Path(out_dir)
    (out_dir / "models").mkdir(parents=True, exist_ok=True)

    if profile == "violated_rich":
        want = [True] * count
        for i in range(0, count, 5):
            want[i] = False  # keep some certified problems in the mix
    elif profile == "certified_rich":
        want = [False] * count
        for i in range(0, count, 5):
            want[i] = True
    else:
        want = [i % 2 == 0 for i in range(count)]

    problems = []
    for i in range(count):
        while True:
            net = random_network(rng)
            tuned = _tune_problem(net, rng, want[i])
            if tuned is not None:
                break
        s, eps, amb = tuned
        truth = ground_truth(net, s)
        pid = f"p{i:03d}"
        model_rel = f"models/{pid}.json"
        with open(out_dir / model_rel, "w") as fh:
            json.dump(serialize(net), fh)
        problems.append({
            "id": pid,
            "model": model_rel,
            "spec": spec_to_json(s),
            "epsilon": eps,
            "ground_truth": truth.verdict,
            "ambiguous": amb,
        })

    n_violated = sum(p["ground_truth"] == "violated" for p in problems)
    manifest = {
        "seed": seed,
        "count": count,
        "profile": profile,
        "violated_fraction": n_violated / count,
        "problems": problems,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest
