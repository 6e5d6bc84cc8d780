import random

import pytest

from protoguide import (
    AlignmentConfig,
    Observation,
    Protocol,
    parse_protocol,
)


def make_protocol_doc(n_steps=3, dur=(0, 3600000), sterile_steps=(),
                      parameters=None, materials=None, proto_id="proto"):
    materials = materials or []
    lines = [
        f"id: {proto_id}",
        "title: Test protocol",
        'version: "1"',
        f"materials: [{', '.join(materials)}]",
        "steps:",
    ]
    for i in range(n_steps):
        lines += [
            f"  - index: {i}",
            f"    id: step{i}",
            f"    name: Step {i}",
            f"    action_label: act{i}",
            f"    description: do thing {i}",
            f"    expected_duration_ms: [{dur[0]}, {dur[1]}]",
        ]
        if i in sterile_steps:
            lines.append("    requires_sterile: true")
        if parameters and i in parameters:
            lines.append("    parameters:")
            for name, unit, exp, tol in parameters[i]:
                lines.append(f"      - {{name: {name}, unit: {unit}, "
                             f"expected: {exp}, tolerance: {tol}}}")
    return "\n".join(lines) + "\n"


def make_protocol(n_steps=3, **kw) -> Protocol:
    return parse_protocol(make_protocol_doc(n_steps, **kw))


def obs(seq_no, t_ms, label, conf=0.9, session_id="s", **kw) -> Observation:
    return Observation(session_id=session_id, seq_no=seq_no, t_ms=t_ms,
                       action_label=label, confidence=conf, **kw)


def random_config(rng: random.Random) -> AlignmentConfig:
    return AlignmentConfig(
        mismatch_floor=rng.choice([1e-4, 1e-3, 1e-2]),
        off_emission=rng.choice([1e-3, 1e-2, 0.1]),
        skip_penalty=rng.uniform(0.5, 5.0),
        regress_penalty=rng.uniform(0.5, 6.0),
        off_penalty=rng.uniform(0.5, 6.0),
        confidence_floor=1e-6,
    )


def random_instance(rng: random.Random, max_paths=30000):
    """Random (protocol, observations, config) small enough to enumerate."""
    while True:
        n = rng.randint(1, 6)
        t = rng.randint(1, 8)
        if (n + 1) ** t <= max_paths:
            break
    p = make_protocol(n)
    labels = [s.action_label for s in p.steps] + ["unknown"]
    observations = []
    t_ms = 0
    for i in range(t):
        t_ms += rng.randint(0, 4000)
        observations.append(obs(0, t_ms, rng.choice(labels),
                                conf=rng.choice([0.3, 0.6, 0.9, 1.0])))
    return p, observations, random_config(rng)


@pytest.fixture
def protocol3():
    return make_protocol(3)
