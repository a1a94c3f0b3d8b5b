"""Prompt templates and the fenced structured-output contract.

Generators answer inside a fenced block whose info string names a schema::

    ```json metrics
    {"metrics": [...]}
    ```

:func:`extract_block` tolerates prose around the block, untagged ``json``
fences and, as a last resort, a bare JSON object.  The first candidate that
parses and passes the caller's validator wins.
"""

from __future__ import annotations

import json
import re
from functools import lru_cache
from importlib import resources
from typing import Any, Callable, Mapping

_PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")
_FENCE = re.compile(r"```([^\n`]*)\n(.*?)```", re.DOTALL)

TEMPLATE_VERSION = "v1"


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return resources.files("appqual.prompts").joinpath(f"{name}.{TEMPLATE_VERSION}.txt").read_text(
        encoding="utf-8"
    )


def render(template: str, values: Mapping[str, Any]) -> str:
    """Fill ``{name}`` placeholders; other braces (JSON examples) pass through."""
    missing = {m for m in _PLACEHOLDER.findall(template) if m not in values}
    if missing:
        raise KeyError(f"template placeholders without values: {sorted(missing)}")
    return _PLACEHOLDER.sub(lambda m: str(values[m.group(1)]), template)


def render_named(name: str, **values: Any) -> str:
    return render(load_template(name), values)


def fenced(schema: str, payload: Any) -> str:
    """Format ``payload`` the way generators are asked to answer."""
    return f"```json {schema}\n{json.dumps(payload, ensure_ascii=False, indent=2)}\n```"


def _bare_objects(text: str):
    dec = json.JSONDecoder()
    i = text.find("{")
    while i != -1:
        try:
            obj, _ = dec.raw_decode(text, i)
        except json.JSONDecodeError:
            pass
        else:
            yield obj
        i = text.find("{", i + 1)


def extract_block(text: str, schema: str, validate: Callable[[Any], Any] | None = None) -> Any:
    """Return the first well-formed payload for ``schema`` found in ``text``.

    ``validate`` may transform the payload and raises ``ValueError`` (or
    ``KeyError``/``TypeError``) to reject it.  Returns ``None`` when nothing
    acceptable is present.
    """
    tagged, untagged = [], []
    for info, body in _FENCE.findall(text or ""):
        words = info.strip().split()
        if len(words) >= 2 and words[0] == "json" and words[1] == schema:
            tagged.append(body)
        elif not words or words == ["json"]:
            untagged.append(body)

    def candidates():
        for body in tagged + untagged:
            try:
                yield json.loads(body)
            except json.JSONDecodeError:
                continue
        yield from _bare_objects(text or "")

    for obj in candidates():
        if validate is None:
            return obj
        try:
            return validate(obj)
        except (ValueError, KeyError, TypeError):
            continue
    return None
