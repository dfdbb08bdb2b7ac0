"""Fixed prompt recipe for text-to-3D generators.

A recipe maps each class to synonyms, brand names, size adjectives and
colours, plus an instruction template with ``{size}``, ``{color}`` and
``{noun}`` placeholders. Nouns are drawn uniformly from synonyms and brands
together.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

DEFAULT_TEMPLATE = "Generate a {size} {color} {noun}"

# consonant-initial sizes so the template's fixed "a" article stays correct
DEFAULT_SIZES = ["small", "large", "big", "tiny", "medium-sized", "compact", "huge"]
DEFAULT_COLORS = [
    "red", "blue", "green", "yellow", "black", "white", "grey", "silver",
    "purple", "orange", "brown", "pink",
]

_DEFAULT_NOUNS = {
    "car": (["car", "sports car", "convertible", "sedan", "SUV", "hatchback",
             "station wagon", "pickup"], ["Ford", "Volkswagen", "Toyota"]),
    "person": (["person", "man walking", "woman walking", "pedestrian", "child",
                "man standing", "woman standing"], []),
    "bicycle": (["bicycle", "bike", "mountain bike", "road bike", "city bike"], []),
    "bicyclist": (["cyclist", "man riding a bicycle", "woman riding a bicycle",
                   "person on a bike"], []),
    "motorcycle": (["motorcycle", "motorbike", "scooter", "dirt bike", "chopper"],
                   ["Harley-Davidson", "Ducati"]),
    "motorcyclist": (["motorcyclist", "man riding a motorcycle",
                      "person on a motorbike", "biker"], []),
    "truck": (["truck", "lorry", "delivery truck", "dump truck", "semi truck",
               "box truck"], []),
    "bus": (["bus", "city bus", "coach", "school bus", "double-decker bus"], []),
}


@dataclass(frozen=True)
class ClassRecipe:
    synonyms: list[str]
    brands: list[str] = field(default_factory=list)
    sizes: list[str] = field(default_factory=lambda: list(DEFAULT_SIZES))
    colors: list[str] = field(default_factory=lambda: list(DEFAULT_COLORS))
    template: str = DEFAULT_TEMPLATE

    def __post_init__(self):
        if not self.synonyms:
            raise ValueError("a class recipe needs at least one synonym")
        if not self.sizes or not self.colors:
            raise ValueError("size and color lists must be non-empty")

    @property
    def nouns(self) -> list[str]:
        return list(self.synonyms) + list(self.brands)


@dataclass(frozen=True)
class PromptRecipe:
    classes: dict[str, ClassRecipe]

    @classmethod
    def default(cls) -> "PromptRecipe":
        return cls({name: ClassRecipe(list(syn), list(brands))
                    for name, (syn, brands) in _DEFAULT_NOUNS.items()})

    @classmethod
    def from_dict(cls, doc) -> "PromptRecipe":
        template = doc.get("template", DEFAULT_TEMPLATE)
        sizes = doc.get("sizes", DEFAULT_SIZES)
        colors = doc.get("colors", DEFAULT_COLORS)
        classes = {}
        for name, spec in doc["classes"].items():
            classes[name] = ClassRecipe(
                synonyms=list(spec["synonyms"]),
                brands=list(spec.get("brands", [])),
                sizes=list(spec.get("sizes", sizes)),
                colors=list(spec.get("colors", colors)),
                template=spec.get("template", template),
            )
        return cls(classes)

    @classmethod
    def load(cls, path) -> "PromptRecipe":
        text = Path(path).read_text(encoding="utf-8")
        return cls.from_dict(yaml.safe_load(text))

    def to_dict(self) -> dict:
        return {"classes": {
            name: {"synonyms": r.synonyms, "brands": r.brands, "sizes": r.sizes,
                   "colors": r.colors, "template": r.template}
            for name, r in self.classes.items()
        }}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def build_prompt(recipe, class_name, rng) -> str:
    try:
        spec = recipe.classes[class_name]
    except KeyError:
        raise KeyError(f"class {class_name!r} not in prompt recipe") from None
    size = spec.sizes[int(rng.integers(len(spec.sizes)))]
    color = spec.colors[int(rng.integers(len(spec.colors)))]
    nouns = spec.nouns
    noun = nouns[int(rng.integers(len(nouns)))]
    return spec.template.format(size=size, color=color, noun=noun)
