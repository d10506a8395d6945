"""Registry of fixed prompt templates and their rendering.

Template bodies live as UTF-8 text files under ``litrag/templates`` with
``{name}`` placeholders. Rendering is a single-pass substitution: text coming
in through a binding is inserted literally and never re-expanded.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from typing import Mapping

from .errors import TemplateError

_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")

_TEMPLATE_FILES = {
    "keyword-extraction": "keyword_extraction.txt",
    "cq-answering": "cq_answering.txt",
    "categorical-conversion": "categorical_conversion.txt",
    "dl-filter": "dl_filter.txt",
}

# Query string sent with the keyword-extraction template.
KEYWORD_EXTRACTION_QUERY = (
    "your task is to extract the deep learning related keywords from the "
    "provided context for the literature survey"
)


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    body: str
    placeholders: tuple[str, ...]

    def render(self, bindings: Mapping[str, str]) -> str:
        missing = [name for name in self.placeholders if name not in bindings]
        if missing:
            raise TemplateError(
                f"template {self.id!r}: unbound placeholder(s) {', '.join(missing)}"
            )

        def substitute(match: re.Match[str]) -> str:
            return bindings[match.group(1)]

        return _PLACEHOLDER_RE.sub(substitute, self.body)


def _load(template_id: str) -> PromptTemplate:
    filename = _TEMPLATE_FILES[template_id]
    body = resources.files("litrag.templates").joinpath(filename).read_text("utf-8")
    names = []
    for name in _PLACEHOLDER_RE.findall(body):
        if name not in names:
            names.append(name)
    return PromptTemplate(id=template_id, body=body, placeholders=tuple(names))


class PromptRegistry:
    """Immutable after construction; safe to share between threads."""

    def __init__(self) -> None:
        self._templates = {tid: _load(tid) for tid in _TEMPLATE_FILES}

    def get(self, template_id: str) -> PromptTemplate:
        try:
            return self._templates[template_id]
        except KeyError:
            raise TemplateError(f"unknown template id {template_id!r}") from None

    def render(self, template_id: str, bindings: Mapping[str, str]) -> str:
        return self.get(template_id).render(bindings)

    def ids(self) -> tuple[str, ...]:
        return tuple(sorted(self._templates))


_default_registry: PromptRegistry | None = None


def default_registry() -> PromptRegistry:
    global _default_registry
    if _default_registry is None:
        _default_registry = PromptRegistry()
    return _default_registry


def render(template_id: str, bindings: Mapping[str, str]) -> str:
    return default_registry().render(template_id, bindings)
