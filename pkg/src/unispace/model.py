"""Structural entities of a personal domain: partitions, sites,
workplaces, toolbars and the cognitive-complexity limits."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .signs import Sign, SignId


class MountKind(str, Enum):
    RESIDENT = "Resident"
    MOUNTED_DEVICE = "MountedDevice"
    CLOUD_REMOTE = "CloudRemote"


class SiteKind(str, Enum):
    SYSTEM = "System"
    DATA_SITE = "DataSite"
    APPLICATION = "ApplicationSite"


class Scheme(str, Enum):
    TECHNOLOGICAL = "Technological"
    GENUS_SPECIES = "GenusSpecies"
    MIXED = "Mixed"


@dataclass
class ComplexityLimits:
    """Cognitive load ceilings used by the structure linter.

    Mental limits gate classification groupings (menus, tabs, partition
    lists); perceptual limits gate flat displayed collections (toolbars,
    desktop icons). Research ranges run lower (3-5 mental, 12-16
    perceptual); the defaults here are the hard ceilings.
    """

    mental_elements: int = 7
    perceptual_elements: int = 20
    mental_depth: int = 3
    perceptual_depth: int = 7

    def __post_init__(self) -> None:
        for name in ("mental_elements", "perceptual_elements", "mental_depth", "perceptual_depth"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class Tool:
    sign: Sign
    command_key: str
    group: str = ""


@dataclass
class Toolbar:
    id: SignId
    name: str
    tools: list[Tool] = field(default_factory=list)


@dataclass
class Desktop:
    id: SignId
    open_handles: list[str] = field(default_factory=list)
    layout: list[tuple[SignId, tuple[float, float, float, float]]] = field(default_factory=list)


@dataclass
class Workplace:
    id: SignId
    name: str
    desktop: Desktop
    toolbars: list[Toolbar] = field(default_factory=list)
    scheme: Scheme = Scheme.TECHNOLOGICAL

    def command_keys(self) -> set[str]:
        return {t.command_key for bar in self.toolbars for t in bar.tools}


@dataclass
class Site:
    id: SignId
    name: str
    workplaces: list[Workplace]
    storage_ref: SignId
    kind: SiteKind = SiteKind.APPLICATION

    def workplace(self, name: str) -> Workplace:
        for wp in self.workplaces:
            if wp.name == name:
                return wp
        raise KeyError(name)

    def command_keys(self) -> set[str]:
        keys: set[str] = set()
        for wp in self.workplaces:
            keys |= wp.command_keys()
        return keys


@dataclass
class Partition:
    id: SignId
    name: str
    mount: MountKind = MountKind.RESIDENT
    source: str = ""  # device label or cloud endpoint, empty for resident
    site_portals: list[SignId] = field(default_factory=list)
    mounted: bool = True


# Base tool set, wired to hardware keys on a real device and therefore
# reachable from every space. command_key -> (display name, purpose).
SYSTEM_TOOLS: dict[str, tuple[str, str]] = {
    "system": ("System", "transition to the task management workplace of the personal domain"),
    "site": ("Site", "switch to the desktop for managing the tasks of the site"),
    "what_is_this": ("What is this?", "information about the purpose of the object"),
    "find": ("Find", "search for resources"),
    "select": ("Select", "selection of an object"),
    "undo": ("UnDo", "cancel the operation"),
    "redo": ("ReDo", "restore the canceled operation"),
    "repeat": ("Repeat", "repeats the last performed operation"),
    "save": ("Save", "save the object"),
    "command": ("Command", "command line output"),
    "create_task": ("Create task", "create a new task"),
    "complete_task": ("Complete task", "completion of the task"),
    "exit": ("Exit", "return from the subtask to the calling task"),
    "enter": ("Enter", "completes the entry of data or commands"),
}

# Tools that appear once an object is selected.
SELECTION_TOOLS: dict[str, tuple[str, str]] = {
    "properties": ("Properties", "go to the place to change the properties of the object"),
    "structure": ("Structure", "go to the place of visualization of the structure of the object"),
    "move": ("Move", "move the selected object to the clipboard"),
    "copy": ("Copy", "copy the object to the clipboard"),
    "insert": ("Insert", "insert an object from the clipboard"),
    "delete": ("Delete", "move the object to the trash container"),
}

MANDATORY_WORKPLACES = ("TaskMgmt", "DataMgmt")
