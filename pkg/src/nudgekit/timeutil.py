"""Timestamp helpers.

Every timestamp in the package is an integer count of UTC seconds since the
epoch. Analysis days run from 18:00 of the previous calendar day to 18:00 of
the named day.
"""

from __future__ import annotations

from datetime import date, datetime, timedelta, timezone

DAY_S = 86_400
ANCHOR_HOUR = 18
_EPOCH = date(1970, 1, 1)


def parse_ts(text: str | int | float) -> int:
    """Parse ISO-8601 (``Z`` or offset) or epoch seconds into epoch seconds."""
    if isinstance(text, (int, float)):
        return int(text)
    s = text.strip()
    if s.endswith("Z"):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_ts(t: int) -> str:
    return datetime.fromtimestamp(t, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def day_start(d: date) -> int:
    """Midnight UTC of calendar date ``d``."""
    return (d - _EPOCH).days * DAY_S


def to_date(t: int) -> date:
    return _EPOCH + timedelta(days=t // DAY_S)


def anchor_of(day_id: date) -> int:
    """Start of the analysis day ``day_id``: 18:00 on the previous date."""
    return day_start(day_id) - (24 - ANCHOR_HOUR) * 3600


def analysis_day(t: int) -> date:
    """The analysis day containing ``t`` (a time at 17:55 belongs to the day ending at 18:00)."""
    return to_date(t + (24 - ANCHOR_HOUR) * 3600)


def minutes_since_anchor(t: int, day_id: date | None = None) -> float:
    if day_id is None:
        day_id = analysis_day(t)
    return (t - anchor_of(day_id)) / 60.0


def clock_minutes(t: int) -> float:
    """Minutes since midnight UTC."""
    return (t % DAY_S) / 60.0


def weekday(t: int) -> int:
    """Monday = 0 .. Sunday = 6."""
    return to_date(t).weekday()
