"""Scripted subjects: sleep schedule, commute, phone habits, sensor noise and
how they respond to advice."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..rng import substream
from .world import Node, World

# (app_id, app_type, daytime weight, evening weight)
DEFAULT_APPS: tuple[tuple[str, str, float, float], ...] = (
    ("chat", "communication", 4.0, 3.0),
    ("mail", "communication", 2.0, 0.5),
    ("tube", "video", 1.0, 3.0),
    ("flix", "video", 0.3, 2.0),
    ("tunes", "music", 1.0, 1.0),
    ("news", "reading", 1.5, 1.0),
    ("books", "reading", 0.3, 1.0),
    ("puzzle", "game", 0.5, 1.5),
    ("cards", "game", 0.3, 1.0),
)


@dataclass(frozen=True)
class SubjectProfile:
    subject_id: str
    home: Node = (2, 2)
    work: Node = (10, 8)
    # sleep schedule, minutes after the 18:00 anchor
    bed_mean_min: float = 330.0
    bed_std_min: float = 20.0
    bed_drift_min_per_day: float = 0.0
    sleep_len_mean_min: float = 440.0
    sleep_len_std_min: float = 25.0
    disturbance_rate: float = 0.3
    # commute, minutes after midnight
    departure_min: float = 480.0
    return_min: float = 1050.0
    departure_std_min: float = 4.0
    walk_speed_mps: float = 1.3
    steps_per_m: float = 1.35
    # indoor activity
    bouts_per_day: float = 6.0
    bout_steps: float = 450.0
    daily_step_jitter: float = 0.3
    # phone habits
    session_rate_day_per_h: float = 1.6
    session_rate_evening_per_h: float = 2.4
    session_len_mean_min: float = 7.0
    pre_departure_use_prob: float = 0.7
    pre_bed_use_prob: float = 0.8
    apps: tuple[tuple[str, str, float, float], ...] = DEFAULT_APPS
    # sensors
    gps_sigma_m: float = 3.0
    noise_scale: float = 1.0
    night_event_rate: float = 1.0  # scales occasional early-dawn and noisy nights
    # responses
    p_in_use: float = 0.6
    p_not_in_use: float = 0.2
    decay_tau_min: float = 90.0  # 0 disables timing decay
    break_engaged_factor: float = 1.0
    break_idle_factor: float = 0.35
    bed_compliance: float = 0.3
    confirm_prob: float = 0.8

    def __post_init__(self) -> None:
        for name in ("p_in_use", "p_not_in_use", "pre_departure_use_prob", "pre_bed_use_prob", "confirm_prob", "bed_compliance"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not self.p_in_use > self.p_not_in_use:
            raise ValueError("p_in_use must exceed p_not_in_use")
        if self.home == self.work:
            raise ValueError("home and work must be different nodes")

    @property
    def noisy(self) -> bool:
        return self.noise_scale > 0


def compliant(profile: SubjectProfile) -> SubjectProfile:
    """Always uses the phone before leaving and accepts every advice it sees."""
    return replace(
        profile,
        p_in_use=1.0,
        p_not_in_use=0.0,
        decay_tau_min=0.0,
        daily_step_jitter=0.0,
        departure_std_min=0.0,
        pre_departure_use_prob=1.0,
        break_idle_factor=1.0,
        confirm_prob=1.0,
    )


def zero_noise(profile: SubjectProfile) -> SubjectProfile:
    return replace(profile, gps_sigma_m=0.0, noise_scale=0.0)


def zero_drift(profile: SubjectProfile) -> SubjectProfile:
    """A stationary subject: fixed schedule mean and no occasional odd nights
    (early dawn, noisy bedroom), so the sleeping environment never changes."""
    return replace(profile, bed_drift_min_per_day=0.0, night_event_rate=0.0)


def _nodes(world: World, rng: np.random.Generator) -> tuple[Node, Node]:
    w, h = world.config.width, world.config.height
    while True:
        home = (int(rng.integers(1, w - 1)), int(rng.integers(1, h - 1)))
        work = (int(rng.integers(1, w - 1)), int(rng.integers(1, h - 1)))
        d = abs(home[0] - work[0]) + abs(home[1] - work[1])
        if home[0] != work[0] and home[1] != work[1] and 5 <= d <= 14:
            return home, work


def make_profiles(
    n: int,
    seed: int,
    world: World,
    *,
    preset: str = "default",
    noise_scale: float = 1.0,
    irregular_fraction: float = 0.5,
) -> list[SubjectProfile]:
    """``n`` varied subjects; ``preset`` is default, compliant, zero_noise or zero_drift.

    A share of subjects are irregular sleepers with a wide bed-time spread.
    """
    out = []
    n_irregular = int(round(irregular_fraction * n))
    for k in range(n):
        rng = substream(seed, "profile", k)
        home, work = _nodes(world, rng)
        irregular = k >= n - n_irregular
        p = SubjectProfile(
            subject_id=f"s{k:02d}",
            home=home,
            work=work,
            bed_mean_min=float(rng.normal(330, 20)),
            bed_std_min=float(rng.uniform(45, 70) if irregular else rng.uniform(10, 20)),
            sleep_len_mean_min=float(rng.uniform(410, 470)),
            disturbance_rate=float(rng.uniform(0.1, 0.5)),
            departure_min=float(rng.uniform(465, 510)),
            return_min=float(rng.uniform(1020, 1060)),
            bouts_per_day=float(rng.uniform(4, 8)),
            session_rate_day_per_h=float(rng.uniform(1.2, 2.0)),
            session_rate_evening_per_h=float(rng.uniform(1.8, 3.0)),
            gps_sigma_m=3.0 * noise_scale,
            noise_scale=noise_scale,
        )
        if preset == "compliant":
            p = compliant(p)
        elif preset == "zero_noise":
            p = zero_noise(p)
        elif preset == "zero_drift":
            p = zero_drift(p)
        elif preset != "default":
            raise ValueError(f"unknown profile preset {preset!r}")
        out.append(p)
    return out
