"""Declarative site templates.

A template is plain data: the workplaces a site starts with and the
tools on their bars. Tool functions dispatch by agent label to handlers
registered on the server side; templates never carry code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import UniError, INVALID_TEMPLATE
from .model import Scheme


@dataclass
class ToolSpec:
    name: str
    command_key: str
    group: str = ""
    purpose: str = ""
    agent: str = "echo"


@dataclass
class ToolbarSpec:
    name: str
    tools: list[ToolSpec] = field(default_factory=list)


@dataclass
class WorkplaceSpec:
    name: str
    scheme: Scheme = Scheme.TECHNOLOGICAL
    toolbars: list[ToolbarSpec] = field(default_factory=list)


@dataclass
class SiteTemplate:
    name: str
    workplaces: list[WorkplaceSpec] = field(default_factory=list)


def _doc_workplace(name: str, tools: list[tuple[str, str]]) -> WorkplaceSpec:
    return WorkplaceSpec(
        name=name,
        toolbars=[
            ToolbarSpec(
                name=name.lower(),
                tools=[ToolSpec(name=t.replace("_", " ").title(), command_key=t, purpose=p) for t, p in tools],
            )
        ],
    )


# Stage-per-workplace editor: one workplace per conceptual element of a
# document, each with a small dedicated toolkit.
DOCUMENT_EDITOR = SiteTemplate(
    name="document-editor",
    workplaces=[
        _doc_workplace(
            "Document",
            [("open_document", "open a document on the desktop"),
             ("save_document", "save the whole document"),
             ("print_document", "print the document"),
             ("page_setup", "page size and margins")],
        ),
        _doc_workplace(
            "Text",
            [("enter_text", "type text"),
             ("format_text", "character and paragraph formatting"),
             ("spellcheck", "check spelling"),
             ("hyphenation", "hyphenate words")],
        ),
        _doc_workplace(
            "Table",
            [("insert_table", "insert a table"),
             ("edit_cells", "edit table cells"),
             ("table_style", "table borders and shading")],
        ),
        _doc_workplace(
            "Figure",
            [("insert_figure", "insert a picture"),
             ("crop_figure", "crop the picture"),
             ("figure_layout", "text wrap around the picture")],
        ),
        _doc_workplace(
            "Formula",
            [("insert_formula", "insert a formula"),
             ("edit_formula", "edit the formula")],
        ),
        _doc_workplace(
            "Reference",
            [("insert_link", "insert a link"),
             ("insert_citation", "insert a citation"),
             ("table_of_contents", "build the table of contents")],
        ),
    ],
)

EMPTY = SiteTemplate(name="empty", workplaces=[])

REGISTRY: dict[str, SiteTemplate] = {
    EMPTY.name: EMPTY,
    DOCUMENT_EDITOR.name: DOCUMENT_EDITOR,
}


def get_template(name: str) -> SiteTemplate:
    tpl = REGISTRY.get(name)
    if tpl is None:
        raise UniError(INVALID_TEMPLATE, f"unknown site template: {name!r}")
    return tpl


def template_from_json(data: dict) -> SiteTemplate:
    if not isinstance(data, dict) or not isinstance(data.get("name"), str):
        raise UniError(INVALID_TEMPLATE, "template needs a 'name'")
    workplaces: list[WorkplaceSpec] = []
    for wp in data.get("workplaces", []):
        if not isinstance(wp, dict) or not isinstance(wp.get("name"), str):
            raise UniError(INVALID_TEMPLATE, "workplace needs a 'name'")
        try:
            scheme = Scheme(wp.get("scheme", "Technological"))
        except ValueError as exc:
            raise UniError(INVALID_TEMPLATE, f"bad scheme: {wp.get('scheme')!r}") from exc
        bars: list[ToolbarSpec] = []
        for bar in wp.get("toolbars", []):
            tools = []
            for tool in bar.get("tools", []):
                key = tool.get("command_key")
                if not isinstance(key, str) or not key:
                    raise UniError(INVALID_TEMPLATE, "tool needs a 'command_key'")
                tools.append(
                    ToolSpec(
                        name=tool.get("name", key),
                        command_key=key,
                        group=tool.get("group", ""),
                        purpose=tool.get("purpose", ""),
                        agent=tool.get("agent", "echo"),
                    )
                )
            bars.append(ToolbarSpec(name=bar.get("name", "tools"), tools=tools))
        workplaces.append(WorkplaceSpec(name=wp["name"], scheme=scheme, toolbars=bars))
    tpl = SiteTemplate(name=data["name"], workplaces=workplaces)
    _check_unique_keys(tpl)
    return tpl


def _check_unique_keys(tpl: SiteTemplate) -> None:
    for wp in tpl.workplaces:
        seen: set[str] = set()
        for bar in wp.toolbars:
            for tool in bar.tools:
                if tool.command_key in seen:
                    raise UniError(
                        INVALID_TEMPLATE,
                        f"duplicate command_key {tool.command_key!r} in workplace {wp.name!r}",
                    )
                seen.add(tool.command_key)


def load_template(path: str | Path) -> SiteTemplate:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UniError(INVALID_TEMPLATE, f"cannot read template: {exc}") from exc
    return template_from_json(data)
