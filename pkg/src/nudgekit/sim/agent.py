"""How a simulated subject reacts to an advice."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .profiles import SubjectProfile


@dataclass(frozen=True)
class AgentResponse:
    seen: bool
    accepted: bool
    seen_at: int | None = None


def timing_decay(profile: SubjectProfile, seen_at: int, ideal_time: int | None) -> float:
    if ideal_time is None or profile.decay_tau_min <= 0:
        return 1.0
    return math.exp(-abs(seen_at - ideal_time) / (profile.decay_tau_min * 60.0))


def agent_respond(
    profile: SubjectProfile,
    seen_at: int | None,
    in_use: bool,
    rng: np.random.Generator,
    *,
    ideal_time: int | None = None,
    factor: float = 1.0,
) -> AgentResponse:
    """Decide whether an advice is seen and accepted.

    ``seen_at`` is None for an advice that expired without being shown.
    Advice met while using the phone is accepted with ``p_in_use`` times the
    timing decay, advice found later with ``p_not_in_use``. One uniform draw is
    consumed either way so streams stay aligned.
    """
    u = float(rng.random())
    if seen_at is None:
        return AgentResponse(False, False)
    if in_use:
        p = profile.p_in_use * timing_decay(profile, seen_at, ideal_time)
    else:
        p = profile.p_not_in_use
    p = min(1.0, max(0.0, p * factor))
    return AgentResponse(True, u < p, seen_at)
