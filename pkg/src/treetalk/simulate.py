"""Scripted survey respondents with a planted group structure.

Three archetypes mirror the production findings: one group strongly
prefers local explanations, a majority group prefers global ones, and a
third prefers global explanations while rating them verbose. Ratings and
selection accuracy per scenario are templated per group, with small
deterministic noise, so participant clustering can recover the planted
partition.
"""

from __future__ import annotations

import random
from typing import Mapping, Sequence

from .analytics import SCENARIOS
from .errors import ValidationError
from .service.core import PAGES_PER_SCENARIO, ScenarioBundle
from .service.log import ResponseLog
from .study import Study

# (CR, UR, VR) rating template per group per scenario.
GROUP_RATINGS: tuple[Mapping[str, tuple[int, int, int]], ...] = (
    {   # group 0: strongly prefers local explanations
        "local-SHAP": (3, 3, 2),
        "local-easy": (5, 5, 1),
        "local-hard": (4, 4, 2),
        "global-easy": (2, 2, 5),
        "global-hard": (1, 2, 5),
    },
    {   # group 1: majority, rates global explanations most understandable
        "local-SHAP": (3, 4, 2),
        "local-easy": (3, 3, 2),
        "local-hard": (3, 3, 3),
        "global-easy": (5, 4, 3),
        "global-hard": (4, 5, 3),
    },
    {   # group 2: prefers global but finds the narration verbose
        "local-SHAP": (4, 3, 1),
        "local-easy": (2, 1, 2),
        "local-hard": (1, 2, 2),
        "global-easy": (5, 5, 5),
        "global-hard": (5, 4, 5),
    },
)

# (before flips, after flips) away from the correct selection C.
GROUP_FLIPS: tuple[Mapping[str, tuple[int, int]], ...] = (
    {
        "local-SHAP": (3, 2),
        "local-easy": (2, 0),
        "local-hard": (2, 1),
        "global-easy": (5, 4),
        "global-hard": (5, 5),
    },
    {
        "local-SHAP": (3, 2),
        "local-easy": (3, 2),
        "local-hard": (3, 2),
        "global-easy": (3, 1),
        "global-hard": (3, 1),
    },
    {
        "local-SHAP": (2, 1),
        "local-easy": (4, 3),
        "local-hard": (4, 3),
        "global-easy": (5, 0),
        "global-hard": (5, 0),
    },
)

GROUP_FEEDBACK = (
    "I prefer the patient-specific story.",
    "The full rule list helps me see the model.",
    "Global rules are useful but the wording needs work.",
)

RATING_NOISE = 0.3  # chance of shifting each rating by one step


def _flip_bits(bits: Sequence[int], count: int, rng: random.Random) -> list[int]:
    out = list(bits)
    for idx in rng.sample(range(len(out)), min(count, len(out))):
        out[idx] = 1 - out[idx]
    return out


def _noisy_rating(value: int, rng: random.Random) -> int:
    if rng.random() < RATING_NOISE:
        value += rng.choice((-1, 1))
    return max(1, min(5, value))


def planted_groups(participants: int, group_sizes: Sequence[int]) -> dict[str, int]:
    """Deterministic participant -> group assignment (ids are sim-NNN)."""
    if sum(group_sizes) != participants:
        raise ValidationError("group sizes must sum to the participant count")
    assignment: dict[str, int] = {}
    i = 0
    for group, size in enumerate(group_sizes):
        for _ in range(size):
            assignment[f"sim-{i:03d}"] = group
            i += 1
    return assignment


def simulate_log(
    study: Study,
    log: ResponseLog,
    *,
    participants: int = 50,
    seed: int = 0,
    group_sizes: Sequence[int] = (12, 22, 16),
) -> dict[str, int]:
    """Write scripted page-1/page-2 submissions for every participant.

    Records go straight into the response log (the service export path
    reads them back), two per scenario in display order. Returns the
    planted participant -> group map.
    """
    if len(group_sizes) != len(GROUP_RATINGS):
        raise ValidationError(f"expected {len(GROUP_RATINGS)} group sizes")
    assignment = planted_groups(participants, group_sizes)
    rng = random.Random(f"{seed}:simulate")
    ordered: list[ScenarioBundle] = sorted(study.bundles, key=lambda b: b.order_index)
    for participant, group in assignment.items():
        for bundle in ordered:
            correct = bundle.correct.bits
            u_flips, v_flips = GROUP_FLIPS[group][bundle.scenario]
            before = _flip_bits(correct, u_flips, rng)
            after = _flip_bits(correct, v_flips, rng)
            cr, ur, vr = (
                _noisy_rating(v, rng) for v in GROUP_RATINGS[group][bundle.scenario]
            )
            log.append(
                participant,
                bundle.scenario,
                1,
                {"selection": before, "dwell_seconds": round(rng.uniform(65, 180), 1)},
            )
            log.append(
                participant,
                bundle.scenario,
                2,
                {
                    "selection": after,
                    "dwell_seconds": round(rng.uniform(70, 220), 1),
                    "ratings": {
                        "completeness": cr,
                        "understandability": ur,
                        "verboseness": vr,
                    },
                    "free_text": GROUP_FEEDBACK[group],
                },
            )
    expected = participants * len(SCENARIOS) * PAGES_PER_SCENARIO
    written, _ = log.read_all()
    if len(written) < expected:
        raise ValidationError("simulation wrote fewer records than expected")
    return assignment
