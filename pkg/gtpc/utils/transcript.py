# gtpc/utils/transcript.py
from typing import Any, Dict, List


def append_entry(
    transcript: List[Dict[str, Any]],
    kind: str,
    details: str | None = None,
    **values: Any,
) -> Dict[str, Any]:
    """Appends one structured record to a run transcript and returns it.

    Fields whose value is ``None`` are left out so the jsonl history stays compact.
    """
    entry = {
        "kind": kind,
        **({"details": details} if details else {}),
        **{name: value for name, value in values.items() if value is not None},
    }
    transcript.append(entry)
    return entry
