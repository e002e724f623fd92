# This file is part of ts_vzen.
#
# Developed for the Vera C. Rubin Observatory Telescope and Site Systems.
# This product includes software developed by the LSST Project
# (https://www.lsst.org).
# See the COPYRIGHT file at the top-level directory of this distribution
# for details of code ownership.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.

"""Synthetic GUI screens and the action grammar.

A scene is a set of non-overlapping widgets on a flat background, tinted
by the platform it imitates. One widget is the target of the next action.
Generation draws everything from an `Rng`, so a (seed, difficulty, canvas)
triple fully determines the record and its pixels.
"""

__all__ = [
    "PLATFORMS",
    "WIDGET_KINDS",
    "VERBS",
    "PRETRAIN_VERBS",
    "DIFFICULTIES",
    "SMALL_TARGET_AREA",
    "ActionTemplate",
    "ACTION_TEMPLATES",
    "ParsedAction",
    "Widget",
    "SyntheticScene",
    "format_action",
    "parse_action",
    "normalize_action",
    "render_scene",
    "synth_scene",
    "synth_record",
    "synth_pretrain_record",
]

import dataclasses
import re
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import GenerationError, SceneValidationError
from .font import GLYPH_HEIGHT, GLYPH_WIDTH, draw_text, text_width
from .grounding import BBox
from .records import FLOAT_DECIMALS, GuideRecord
from .rng import Rng
from .vision import ImageRaster

PLATFORMS = ("apollo", "contlo", "gmail", "calendar", "canva")
WIDGET_KINDS = ("button", "textfield", "icon", "checkbox", "link")
VERBS = ("CLICK", "TYPE", "SCROLL", "OPEN")
PRETRAIN_VERBS = ("READ", "LOCATE")
DIFFICULTIES = ("easy", "small-target", "cluttered")

SMALL_TARGET_AREA = 0.02
"""Largest target area, as a fraction of the canvas, for small-target scenes.
"""

_WIDGET_COUNTS = {"easy": (3, 6), "small-target": (3, 12), "cluttered": (8, 12)}
_GAP = 3
_PLACEMENT_TRIES = 200
_SCENE_TRIES = 50

_LABELS = {
    "apollo": ("Search", "Leads", "Export", "Save", "Filter", "Contacts", "Enrich", "Lists"),
    "contlo": ("Campaign", "Segment", "Publish", "Preview", "Audience", "Draft", "Schedule", "Flows"),
    "gmail": ("Compose", "Inbox", "Send", "Reply", "Archive", "Delete", "Starred", "Spam"),
    "calendar": ("Today", "Event", "Month", "Week", "Invite", "Remind", "Agenda", "Create"),
    "canva": ("Design", "Upload", "Share", "Resize", "Text", "Photos", "Brand", "Present"),
}
_FIELD_LABELS = ("Email", "Subject", "Name", "Title", "Query", "Note", "Phone", "Company")
_TYPED_TEXT = ("hello", "report", "meeting", "invoice", "q3 plan", "launch", "budget", "weekly")
_ICONS = {
    "home": "H",
    "search": "S",
    "menu": "M",
    "close": "X",
    "add": "+",
    "help": "?",
    "bell": "B",
    "mail": "@",
}

_THEMES = {
    "apollo": ((0.96, 0.96, 0.98), ((0.20, 0.35, 0.80), (0.15, 0.55, 0.45), (0.85, 0.45, 0.15))),
    "contlo": ((0.98, 0.95, 0.92), ((0.55, 0.25, 0.70), (0.90, 0.30, 0.35), (0.25, 0.60, 0.85))),
    "gmail": ((1.00, 1.00, 1.00), ((0.80, 0.20, 0.15), (0.25, 0.45, 0.85), (0.95, 0.75, 0.15))),
    "calendar": ((0.94, 0.97, 1.00), ((0.10, 0.45, 0.85), (0.20, 0.65, 0.35), (0.95, 0.55, 0.10))),
    "canva": ((0.95, 0.98, 0.97), ((0.00, 0.70, 0.75), (0.45, 0.30, 0.85), (0.95, 0.40, 0.55))),
}
_BORDER = (0.15, 0.15, 0.15)
_TEXT_DARK = (0.05, 0.05, 0.05)
_TEXT_LIGHT = (1.0, 1.0, 1.0)
_FIELD_FILL = (1.0, 1.0, 1.0)
_PLACEHOLDER = (0.45, 0.45, 0.45)
_LINK = (0.10, 0.20, 0.80)
_HIGHLIGHT = (0.90, 0.05, 0.05)
_CHECKBOX = 9
_LINK_HEIGHT = GLYPH_HEIGHT + 2


@dataclasses.dataclass(frozen=True)
class ActionTemplate:
    """Verb, the widget kinds it applies to and its task phrasing."""

    verb: str
    kinds: Tuple[str, ...]
    task: str

    def compatible(self, kind: str) -> bool:
        return kind in self.kinds


ACTION_TEMPLATES = {
    "CLICK": ActionTemplate("CLICK", ("button", "checkbox", "icon", "link"), "Click the '{label}' {noun}"),
    "TYPE": ActionTemplate("TYPE", ("textfield",), "Type '{text}' into the '{label}' {noun}"),
    "SCROLL": ActionTemplate("SCROLL", ("link", "button"), "Scroll to the '{label}' {noun}"),
    "OPEN": ActionTemplate("OPEN", ("link", "icon"), "Open the '{label}' {noun}"),
}

_NOUNS = {"button": "button", "textfield": "field", "icon": "icon", "checkbox": "checkbox", "link": "link"}


@dataclasses.dataclass(frozen=True)
class ParsedAction:
    verb: str
    label: str
    argument: Optional[str] = None


_ACTION_PATTERN = re.compile(r"^\s*([A-Za-z]+)\s*\(\s*([^,()]+?)\s*(?:,\s*([^,()]+?)\s*)?\)\s*$")


def format_action(verb: str, label: str, argument: Optional[str] = None) -> str:
    if argument is None:
        return f"{verb}({label})"
    return f"{verb}({label}, {argument})"


def parse_action(text: str) -> Optional[ParsedAction]:
    """Parse ``VERB(label)`` or ``TYPE(label, text)``.

    Returns None if ``text`` does not follow the grammar, the verb is
    unknown or the argument count is wrong for the verb.
    """
    match = _ACTION_PATTERN.match(text)
    if match is None:
        return None
    verb, label, argument = match.group(1).upper(), match.group(2), match.group(3)
    if verb not in VERBS + PRETRAIN_VERBS:
        return None
    if (verb == "TYPE") != (argument is not None):
        return None
    return ParsedAction(verb, label, argument)


def normalize_action(text: str) -> str:
    """Lower case, single spaces and no spaces around brackets and commas."""
    return re.sub(r"\s*([(),])\s*", r"\1", " ".join(text.split()).lower())


@dataclasses.dataclass(frozen=True)
class Widget:
    """One widget; the rectangle is in pixels, ``fill`` is RGB in [0, 1]."""

    kind: str
    x: int
    y: int
    w: int
    h: int
    label: str
    fill: Tuple[float, float, float]

    @property
    def area(self) -> int:
        return self.w * self.h

    def overlaps(self, other: "Widget", gap: int = 0) -> bool:
        return not (
            self.x + self.w + gap <= other.x
            or other.x + other.w + gap <= self.x
            or self.y + self.h + gap <= other.y
            or other.y + other.h + gap <= self.y
        )

    def bbox(self, canvas: int) -> BBox:
        """Normalized box of the widget rectangle, rounded for storage."""
        return BBox(
            round((self.x + self.w / 2) / canvas, FLOAT_DECIMALS),
            round((self.y + self.h / 2) / canvas, FLOAT_DECIMALS),
            round(self.w / canvas, FLOAT_DECIMALS),
            round(self.h / canvas, FLOAT_DECIMALS),
        )


@dataclasses.dataclass(frozen=True)
class SyntheticScene:
    widgets: Tuple[Widget, ...]
    canvas: int
    target_index: int = 0
    platform: str = "apollo"
    highlight: bool = False

    def validate(self) -> None:
        """Raise `SceneValidationError` if the scene is malformed."""
        if self.platform not in _THEMES:
            raise SceneValidationError(f"unknown platform {self.platform!r}")
        for i, widget in enumerate(self.widgets):
            if widget.kind not in WIDGET_KINDS:
                raise SceneValidationError(f"widget {i}: unknown kind {widget.kind!r}")
            if widget.w <= 0 or widget.h <= 0:
                raise SceneValidationError(f"widget {i}: empty rectangle")
            if (
                widget.x < 0
                or widget.y < 0
                or widget.x + widget.w > self.canvas
                or widget.y + widget.h > self.canvas
            ):
                raise SceneValidationError(
                    f"widget {i} at ({widget.x}, {widget.y}, {widget.w}, {widget.h}) "
                    f"outside the {self.canvas}x{self.canvas} canvas"
                )
        if self.widgets and not 0 <= self.target_index < len(self.widgets):
            raise SceneValidationError(f"target_index {self.target_index} out of range")

    @property
    def target(self) -> Widget:
        return self.widgets[self.target_index]

    @property
    def background(self) -> Tuple[float, float, float]:
        return _THEMES[self.platform][0]


def _luminance(color: Sequence[float]) -> float:
    r, g, b = color
    return 0.299 * r + 0.587 * g + 0.114 * b


def _frame(canvas: np.ndarray, x0: int, y0: int, x1: int, y1: int, color) -> None:
    """1-pixel rectangle outline with inclusive corners, clipped."""
    size = canvas.shape[0]
    xa, xb = max(x0, 0), min(x1, size - 1)
    ya, yb = max(y0, 0), min(y1, size - 1)
    if xa > xb or ya > yb:
        return
    for y in (y0, y1):
        if 0 <= y < size:
            canvas[y, xa : xb + 1] = color
    for x in (x0, x1):
        if 0 <= x < size:
            canvas[ya : yb + 1, x] = color


def _draw_widget(canvas: np.ndarray, widget: Widget) -> None:
    x, y, w, h = widget.x, widget.y, widget.w, widget.h
    if widget.kind == "link":
        draw_text(canvas, widget.label, x, y, _LINK)
        canvas[y + h - 1, x : x + w] = _LINK
        return
    if widget.kind == "checkbox":
        top = y + (h - _CHECKBOX) // 2
        canvas[top : top + _CHECKBOX, x : x + _CHECKBOX] = _FIELD_FILL
        _frame(canvas, x, top, x + _CHECKBOX - 1, top + _CHECKBOX - 1, _BORDER)
        draw_text(canvas, widget.label, x + _CHECKBOX + 3, y + (h - GLYPH_HEIGHT) // 2, _TEXT_DARK)
        return

    fill = _FIELD_FILL if widget.kind == "textfield" else widget.fill
    canvas[y : y + h, x : x + w] = fill
    _frame(canvas, x, y, x + w - 1, y + h - 1, _BORDER)
    text_y = y + (h - GLYPH_HEIGHT) // 2
    if widget.kind == "textfield":
        draw_text(canvas, widget.label, x + 3, text_y, _PLACEHOLDER)
        return
    text = _ICONS.get(widget.label, widget.label[:1]) if widget.kind == "icon" else widget.label
    color = _TEXT_LIGHT if _luminance(fill) < 0.5 else _TEXT_DARK
    draw_text(canvas, text, x + (w - text_width(text)) // 2, text_y, color)


def render_scene(scene: SyntheticScene) -> ImageRaster:
    """Rasterize ``scene``.

    Widgets are drawn in order on the platform background: filled
    rectangles with 1-pixel borders and 5x7 labels. A highlighted scene
    also gets a frame two pixels outside the target.

    Raises
    ------
    SceneValidationError
        If a widget lies outside the canvas or the scene is otherwise
        malformed.
    """
    scene.validate()
    canvas = np.empty((scene.canvas, scene.canvas, 3), dtype=np.float64)
    canvas[:] = scene.background
    for widget in scene.widgets:
        _draw_widget(canvas, widget)
    if scene.highlight and scene.widgets:
        t = scene.target
        _frame(canvas, t.x - 2, t.y - 2, t.x + t.w + 1, t.y + t.h + 1, _HIGHLIGHT)
    return ImageRaster(canvas)


def _labels_for(kind: str, platform: str) -> Sequence[str]:
    if kind == "textfield":
        return _FIELD_LABELS
    if kind == "icon":
        return tuple(_ICONS)
    return _LABELS[platform]


def _make_widget(rng: Rng, kind: str, label: str, platform: str) -> Tuple[str, int, int, tuple]:
    """Return (kind, w, h, fill) for a widget showing ``label``."""
    fill = tuple(rng.choice(_THEMES[platform][1]))
    label_w = text_width(label)
    if kind == "button":
        w, h = label_w + 2 * rng.integers(3, 9), GLYPH_HEIGHT + 2 * rng.integers(3, 7)
    elif kind == "textfield":
        w = max(label_w + 8, rng.integers(50, 81))
        h = GLYPH_HEIGHT + 2 * rng.integers(3, 6)
    elif kind == "icon":
        w = h = rng.integers(GLYPH_WIDTH + 6, GLYPH_WIDTH + 13)
    elif kind == "checkbox":
        w, h = _CHECKBOX + 3 + label_w, _CHECKBOX
    else:
        w, h = label_w, _LINK_HEIGHT
    return kind, w, h, fill


def _place(rng: Rng, w: int, h: int, canvas: int, placed: List[Widget]) -> Optional[Tuple[int, int]]:
    if w > canvas or h > canvas:
        return None
    for _ in range(_PLACEMENT_TRIES):
        x = rng.integers(0, canvas - w + 1)
        y = rng.integers(0, canvas - h + 1)
        probe = Widget("button", x, y, w, h, "", (0, 0, 0))
        if not any(probe.overlaps(other, _GAP) for other in placed):
            return x, y
    return None


def _try_scene(
    rng: Rng, difficulty: str, canvas: int, highlight: bool
) -> Optional[Tuple[SyntheticScene, ActionTemplate, Optional[str]]]:
    platform = rng.choice(PLATFORMS)
    low, high = _WIDGET_COUNTS[difficulty]
    count = rng.integers(low, high + 1)
    template = ACTION_TEMPLATES[rng.choice(VERBS)]
    kind = rng.choice(template.kinds)
    label = rng.choice(_labels_for(kind, platform))
    _, w, h, fill = _make_widget(rng, kind, label, platform)
    if difficulty == "small-target" and w * h >= SMALL_TARGET_AREA * canvas * canvas:
        return None
    position = _place(rng, w, h, canvas, [])
    if position is None:
        return None
    widgets = [Widget(kind, position[0], position[1], w, h, label, fill)]
    used = {label}
    for _ in range(count - 1):
        other_kind = rng.choice(WIDGET_KINDS)
        choices = [c for c in _labels_for(other_kind, platform) if c not in used]
        if not choices:
            continue
        other_label = rng.choice(choices)
        _, w, h, fill = _make_widget(rng, other_kind, other_label, platform)
        position = _place(rng, w, h, canvas, widgets)
        if position is None:
            return None
        widgets.append(Widget(other_kind, position[0], position[1], w, h, other_label, fill))
        used.add(other_label)
    text = rng.choice(_TYPED_TEXT) if template.verb == "TYPE" else None
    scene = SyntheticScene(tuple(widgets), canvas, 0, platform, highlight)
    return scene, template, text


def synth_scene(
    rng: Rng, difficulty: str = "easy", canvas: int = 160, highlight: bool = False
) -> Tuple[SyntheticScene, ActionTemplate, Optional[str]]:
    """Sample a scene, the template of its next action and the typed text.

    The target is widget 0.

    Raises
    ------
    ValueError
        If ``difficulty`` is unknown.
    GenerationError
        If no scene satisfying the constraints was found within the retry
        budget.
    """
    if difficulty not in DIFFICULTIES:
        raise ValueError(f"unknown difficulty {difficulty!r}; expected one of {DIFFICULTIES}")
    for _ in range(_SCENE_TRIES):
        result = _try_scene(rng, difficulty, canvas, highlight)
        if result is not None:
            return result
    raise GenerationError(
        f"no {difficulty} scene on a {canvas}px canvas after {_SCENE_TRIES} attempts"
    )


def _prior_actions(rng: Rng, scene: SyntheticScene) -> List[str]:
    others = list(scene.widgets[1:])
    actions = []
    for _ in range(rng.integers(0, 4)):
        if not others:
            break
        widget = rng.choice(others)
        verbs = [v for v in VERBS if ACTION_TEMPLATES[v].compatible(widget.kind)]
        verb = rng.choice(verbs)
        text = rng.choice(_TYPED_TEXT) if verb == "TYPE" else None
        actions.append(format_action(verb, widget.label, text))
    return actions


def synth_record(
    rng: Rng, difficulty: str = "easy", canvas: int = 160, image_ref: str = ""
) -> Tuple[GuideRecord, SyntheticScene]:
    """Sample a GUIDE record and the scene its image is rendered from.

    The task names the target widget; the history holds zero to three
    earlier actions on other widgets, the newest of which is the last
    action.
    """
    scene, template, text = synth_scene(rng, difficulty, canvas)
    target = scene.target
    task = template.task.format(label=target.label, text=text, noun=_NOUNS[target.kind])
    prior = _prior_actions(rng, scene)
    record = GuideRecord(
        image_ref=image_ref,
        task=task,
        history=tuple(prior[:-1]),
        last_action=prior[-1] if prior else "",
        next_action=format_action(template.verb, target.label, text),
        bbox=target.bbox(canvas),
        platform=scene.platform,
    )
    return record, scene


def synth_pretrain_record(
    rng: Rng, task_kind: str, canvas: int = 160, image_ref: str = ""
) -> Tuple[GuideRecord, SyntheticScene]:
    """Sample a pretraining record.

    ``"ocr"`` highlights the target and asks for its label as
    ``READ(label)``; ``"grounding"`` names the label and asks for its
    location as ``LOCATE(label)``. Both are supervised with the target box.
    """
    if task_kind not in ("ocr", "grounding"):
        raise ValueError(f"unknown pretraining task {task_kind!r}")
    scene, _, _ = synth_scene(rng, "easy", canvas, highlight=task_kind == "ocr")
    target = scene.target
    if task_kind == "ocr":
        task, action = "Read the label of the highlighted widget", format_action("READ", target.label)
    else:
        task, action = f"Locate '{target.label}'", format_action("LOCATE", target.label)
    record = GuideRecord(
        image_ref=image_ref,
        task=task,
        history=(),
        last_action="",
        next_action=action,
        bbox=target.bbox(canvas),
        platform=scene.platform,
    )
    return record, scene
