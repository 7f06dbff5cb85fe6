"""Render ordered in-context examples plus the user query into one prompt."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .corpus import CandidateExample
from .errors import TemplateError

SECTION_NAMES = ("preamble", "example_block", "example_block_no_context", "query_block", "joiner")

DEFAULT_TEMPLATE_TEXT = {
    "preamble": "You are a helpful assistant. Follow the examples and answer the final instruction.",
    "example_block": "### Instruction:\n{query}\n### Context:\n{context}\n### Response:\n{response}",
    "example_block_no_context": "### Instruction:\n{query}\n### Response:\n{response}",
    "query_block": "### Instruction:\n{query}\n### Response:\n",
    "joiner": "\n\n",
}


@dataclass(frozen=True)
class PromptTemplate:
    preamble: str
    example_block: str
    query_block: str
    joiner: str
    example_block_no_context: str | None = None

    def __post_init__(self):
        for placeholder in ("{query}", "{context}", "{response}"):
            if placeholder not in self.example_block:
                raise TemplateError(f"example_block is missing {placeholder}")
        if "{query}" not in self.query_block:
            raise TemplateError("query_block is missing {query}")
        if self.example_block_no_context is None:
            object.__setattr__(self, "example_block_no_context", self._derive_no_context())
        else:
            for placeholder in ("{query}", "{response}"):
                if placeholder not in self.example_block_no_context:
                    raise TemplateError(f"example_block_no_context is missing {placeholder}")

    def _derive_no_context(self) -> str:
        # drop every line that references the context placeholder; templates
        # whose context header sits on its own line should supply the
        # explicit no-context section instead
        lines = [line for line in self.example_block.split("\n") if "{context}" not in line]
        return "\n".join(lines)


def default_template() -> PromptTemplate:
    return PromptTemplate(**DEFAULT_TEMPLATE_TEXT)


def load_template(path: str | Path) -> PromptTemplate:
    """Parse a template file of ``---section---`` delimited blocks.

    Section content is the interior lines joined with newlines, so a
    joiner of one blank line is written as three empty lines.
    """
    sections: dict[str, list[str]] = {}
    current: str | None = None
    text = Path(path).read_text(encoding="utf-8")
    if text.endswith("\n"):  # the line-terminating newline is not content
        text = text[:-1]
    for raw in text.split("\n"):
        name = raw.strip()
        if name.startswith("---") and name.endswith("---") and len(name) > 6:
            current = name[3:-3]
            if current not in SECTION_NAMES:
                raise TemplateError(f"unknown template section {current!r}")
            if current in sections:
                raise TemplateError(f"duplicate template section {current!r}")
            sections[current] = []
        elif current is not None:
            sections[current].append(raw)
    missing = {"preamble", "example_block", "query_block", "joiner"} - set(sections)
    if missing:
        raise TemplateError(f"template file is missing sections: {sorted(missing)}")
    content = {name: "\n".join(lines) for name, lines in sections.items()}
    return PromptTemplate(
        preamble=content["preamble"],
        example_block=content["example_block"],
        query_block=content["query_block"],
        joiner=content["joiner"],
        example_block_no_context=content.get("example_block_no_context"),
    )


def fill_example_block(template: PromptTemplate, example: CandidateExample) -> str:
    if example.context is None:
        block = template.example_block_no_context
        return block.replace("{query}", example.query).replace("{response}", example.response)
    return (
        template.example_block
        .replace("{query}", example.query)
        .replace("{context}", example.context)
        .replace("{response}", example.response)
    )


def render_prompt(sequence, query: str, template: PromptTemplate | None = None) -> str:
    """Preamble, one block per example in order, then the query block."""
    template = template or default_template()
    parts = []
    if template.preamble:
        parts.append(template.preamble)
    parts.extend(fill_example_block(template, example) for example in sequence)
    parts.append(template.query_block.replace("{query}", query))
    return template.joiner.join(parts)
