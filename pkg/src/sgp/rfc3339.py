"""RFC 3339 timestamp helpers.

Python 3.10's ``fromisoformat`` rejects the trailing ``Z`` that web feeds
use everywhere, so we normalise it ourselves. All timestamps in this
package are timezone-aware UTC at whole-second precision.
"""

from __future__ import annotations

from datetime import datetime, timezone

__all__ = ["parse_rfc3339", "format_rfc3339", "utcnow"]


def parse_rfc3339(text: str) -> datetime:
    """Parse an RFC 3339 timestamp into an aware UTC datetime.

    Accepts a trailing ``Z`` or a numeric offset; naive input is taken as
    UTC. Sub-second digits are dropped. Raises ValueError on garbage.
    """
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    dt = datetime.fromisoformat(raw)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).replace(microsecond=0)


def format_rfc3339(dt: datetime) -> str:
    """Render an aware datetime as ``YYYY-MM-DDThh:mm:ssZ``."""
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    dt = dt.astimezone(timezone.utc).replace(microsecond=0)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def utcnow() -> datetime:
    """Current UTC time at second precision."""
    return datetime.now(timezone.utc).replace(microsecond=0)
