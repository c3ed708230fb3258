"""Prompt acquisition: class names, a surgical prompt template, and a frozen
corpus of language-model instrument descriptions.

The corpus is a static asset so identical runs see identical prompt text; no
generation happens at runtime. Classes outside the corpus (e.g. synthetic
shape classes) fall back to the long description carried in their manifest.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Union

PROMPT_TEMPLATE = "the surgical instrument area represented by the {name}"

PROMPT_SOURCES = ("name", "template", "description", "gpt", "bard")


class PromptError(ValueError):
    """Raised when a prompt source cannot be resolved for a class."""


@dataclass
class PromptBundle:
    """The prompt strings and (once encoded) text features for one class."""

    class_id: int
    class_name: str
    prompts: tuple[str, ...]

    def __post_init__(self):
        if len(self.prompts) < 1:
            raise PromptError(f"class {self.class_name!r}: at least one prompt required")


def load_prompt_corpus(path: Optional[Union[str, Path]] = None) -> dict:
    """Load the frozen description corpus; `path` overrides the built-in asset."""
    if path:
        text = Path(path).read_text(encoding="utf-8")
    else:
        text = resources.files("promptseg.assets").joinpath("instrument_prompts.json").read_text(
            encoding="utf-8"
        )
    corpus = json.loads(text)
    for name, entry in corpus.items():
        if not isinstance(entry, dict):
            raise PromptError(f"corpus entry for {name!r} must be an object")
    return corpus


def resolve_prompt(
    class_name: str,
    source: str,
    description: Optional[str] = None,
    corpus: Optional[dict] = None,
) -> str:
    """Produce the prompt string for one class and one acquisition source.

    `description` is the class's own long appearance description (from the
    dataset manifest); it backs the `description` source and is the fallback
    for `gpt`/`bard` when the class is not in the frozen corpus.
    """
    if source not in PROMPT_SOURCES:
        raise PromptError(f"unknown prompt source {source!r}; expected one of {PROMPT_SOURCES}")
    if source == "name":
        return class_name
    if source == "template":
        return PROMPT_TEMPLATE.format(name=class_name)
    if source == "description":
        if not description:
            raise PromptError(f"class {class_name!r} has no long description")
        return description
    # gpt / bard
    corpus = corpus if corpus is not None else load_prompt_corpus()
    entry = corpus.get(class_name.lower())
    if entry is not None and source in entry:
        return entry[source]
    if description:
        return description
    raise PromptError(
        f"class {class_name!r} is not in the {source} corpus and has no fallback description"
    )


def build_prompt_bundles(
    classes: Sequence,
    sources: Sequence[str] = ("name", "template", "description"),
    corpus_path: Optional[Union[str, Path]] = None,
) -> list[PromptBundle]:
    """Assemble one bundle per class, one prompt per requested source.

    `classes` is a sequence of objects with class_id / name / description
    attributes (see promptseg.synthdata.ClassSpec).
    """
    if len(sources) < 1:
        raise PromptError("at least one prompt source required")
    corpus = load_prompt_corpus(corpus_path) if any(s in ("gpt", "bard") for s in sources) else {}
    bundles = []
    for spec in classes:
        prompts = tuple(
            resolve_prompt(spec.name, source, description=spec.description, corpus=corpus)
            for source in sources
        )
        bundles.append(PromptBundle(class_id=spec.class_id, class_name=spec.name, prompts=prompts))
    return bundles
