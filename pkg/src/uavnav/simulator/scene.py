"""Scene description and the line-oriented scene file format.

Scene files use plan coordinates: ``x`` is the world lateral axis and ``y``
the world forward axis at zero yaw; ``size_z`` is a height. Grammar::

    # comment
    room.size_x = 10          # top-level key = value lines
    carpet.size_y = 5
    palette.4 = 200 60 50     # class id -> RGB
    [helipad]                 # exactly one helipad stanza
    center_x = 0
    ...
    [box]                     # one stanza per obstacle
    center_x = -1.2
    center_y = -0.6
    size_x = 0.6
    size_y = 0.6
    size_z = 1.8
    class = 4
    roof_class = 12

Stanza keys: center_x, center_y, size_x, size_y, size_z, class, roof_class and,
for the helipad, patch_class and patch_size (the square sign painted on top).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from ..segmentation import BACKGROUND, CARPET, HELIPAD_BOX, HELIPAD_H, N_CLASSES


class ParseError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        where = f"{path or '<scene>'}:{line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


class InvariantError(ValueError):
    pass


DEFAULT_PALETTE: dict[int, tuple[int, int, int]] = {
    BACKGROUND: (128, 128, 128),
    CARPET: (60, 110, 60),
    HELIPAD_BOX: (230, 200, 40),
    HELIPAD_H: (200, 40, 200),
    4: (200, 60, 50),
    5: (50, 90, 200),
    6: (240, 140, 40),
    7: (40, 180, 180),
    8: (140, 70, 30),
    9: (120, 50, 160),
    10: (180, 220, 90),
    11: (250, 170, 190),
    12: (30, 30, 30),
    13: (240, 240, 240),
    14: (100, 160, 230),
    15: (160, 140, 100),
    16: (90, 20, 40),
}


@dataclass(frozen=True)
class Box:
    center_x: float
    center_y: float
    size_x: float
    size_y: float
    size_z: float
    body_class: int
    roof_class: int
    patch_class: Optional[int] = None
    patch_size: float = 0.0

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(x0, x1, y0, y1) footprint in plan coordinates."""
        hx, hy = self.size_x / 2, self.size_y / 2
        return (self.center_x - hx, self.center_x + hx, self.center_y - hy, self.center_y + hy)

    def contains_plan(self, x: float, y: float) -> bool:
        x0, x1, y0, y1 = self.bounds
        return x0 <= x <= x1 and y0 <= y <= y1


@dataclass(frozen=True)
class Room:
    size_x: float = 10.0
    size_y: float = 10.0
    height: float = 5.0


@dataclass(frozen=True)
class Carpet:
    center_x: float = 0.0
    center_y: float = 0.0
    size_x: float = 4.0
    size_y: float = 5.0

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        hx, hy = self.size_x / 2, self.size_y / 2
        return (self.center_x - hx, self.center_x + hx, self.center_y - hy, self.center_y + hy)


@dataclass
class SceneSpec:
    helipad: Box
    obstacles: list[Box] = field(default_factory=list)
    carpet: Carpet = field(default_factory=Carpet)
    room: Room = field(default_factory=Room)
    palette: dict[int, tuple[int, int, int]] = field(default_factory=lambda: dict(DEFAULT_PALETTE))

    @property
    def boxes(self) -> list[Box]:
        """Helipad first, then obstacles."""
        return [self.helipad, *self.obstacles]

    def validate(self) -> "SceneSpec":
        cx0, cx1, cy0, cy1 = self.carpet.bounds
        rx, ry = self.room.size_x / 2, self.room.size_y / 2
        if not (-rx <= cx0 and cx1 <= rx and -ry <= cy0 and cy1 <= ry):
            raise InvariantError("carpet must lie inside the room")
        for i, box in enumerate(self.boxes):
            name = "helipad" if i == 0 else f"box {i}"
            if min(box.size_x, box.size_y, box.size_z) <= 0:
                raise InvariantError(f"{name}: sizes must be positive")
            x0, x1, y0, y1 = box.bounds
            if not (cx0 <= x0 and x1 <= cx1 and cy0 <= y0 and y1 <= cy1):
                raise InvariantError(f"{name}: obstacle must lie within the carpet bounds")
            if box.size_z >= self.room.height:
                raise InvariantError(f"{name}: taller than the room")
            for cls in (box.body_class, box.roof_class, box.patch_class):
                if cls is not None and not 0 <= cls < N_CLASSES:
                    raise InvariantError(f"{name}: class id {cls} must be in 0..{N_CLASSES - 1}")
        if self.helipad.patch_class is None:
            raise InvariantError("helipad needs a patch_class for its sign")
        missing = set(range(N_CLASSES)) - set(self.palette)
        if missing:
            raise InvariantError(f"palette lacks colours for classes {sorted(missing)}")
        return self


_BOX_KEYS = {"center_x", "center_y", "size_x", "size_y", "size_z", "class", "roof_class"}
_HELIPAD_KEYS = _BOX_KEYS | {"patch_class", "patch_size"}


def _number(value: str, lineno: int, path: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ParseError(f"expected a number, got {value!r}", lineno, path) from None


def _box_from(fields: dict, start: int, path: str, helipad: bool) -> Box:
    required = _BOX_KEYS | ({"patch_class"} if helipad else set())
    missing = required - fields.keys()
    if missing:
        raise ParseError(f"stanza missing keys {sorted(missing)}", start, path)

    def as_int(key):
        value, lineno = fields[key]
        if value != int(value):
            raise ParseError(f"{key} must be an integer", lineno, path)
        return int(value)

    return Box(
        center_x=fields["center_x"][0], center_y=fields["center_y"][0],
        size_x=fields["size_x"][0], size_y=fields["size_y"][0], size_z=fields["size_z"][0],
        body_class=as_int("class"), roof_class=as_int("roof_class"),
        patch_class=as_int("patch_class") if "patch_class" in fields else None,
        patch_size=fields["patch_size"][0] if "patch_size" in fields else 0.0,
    )


def parse_scene(text: str, path: str = "<scene>") -> SceneSpec:
    top: dict[str, tuple[str, int]] = {}
    stanzas: list[tuple[str, int, dict]] = []
    current: Optional[dict] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            kind = line[1:-1].strip()
            if kind not in ("box", "helipad"):
                raise ParseError(f"unknown stanza [{kind}]", lineno, path)
            current = {}
            stanzas.append((kind, lineno, current))
            continue
        if "=" not in line:
            raise ParseError(f"expected key = value, got {raw.strip()!r}", lineno, path)
        key, value = (part.strip() for part in line.split("=", 1))
        if current is None:
            top[key] = (value, lineno)
            continue
        kind = stanzas[-1][0]
        allowed = _HELIPAD_KEYS if kind == "helipad" else _BOX_KEYS
        if key not in allowed:
            raise ParseError(f"unknown key {key!r} in [{kind}]", lineno, path)
        if key in current:
            raise ParseError(f"duplicate key {key!r}", lineno, path)
        current[key] = (_number(value, lineno, path), lineno)

    room_kw, carpet_kw = {}, {}
    palette = dict(DEFAULT_PALETTE)
    for key, (value, lineno) in top.items():
        if key.startswith("palette."):
            try:
                cls = int(key.split(".", 1)[1])
                rgb = tuple(int(c) for c in value.split())
            except ValueError:
                raise ParseError(f"bad palette entry {key} = {value}", lineno, path) from None
            if len(rgb) != 3 or not all(0 <= c <= 255 for c in rgb):
                raise ParseError(f"palette colour must be three 0..255 ints, got {value!r}", lineno, path)
            palette[cls] = rgb
        elif key in ("room.size_x", "room.size_y", "room.height"):
            room_kw[key.split(".", 1)[1]] = _number(value, lineno, path)
        elif key in ("carpet.center_x", "carpet.center_y", "carpet.size_x", "carpet.size_y"):
            carpet_kw[key.split(".", 1)[1]] = _number(value, lineno, path)
        else:
            raise ParseError(f"unknown key {key!r}", lineno, path)

    helipads = [s for s in stanzas if s[0] == "helipad"]
    if len(helipads) != 1:
        raise InvariantError(f"scene must contain exactly one [helipad], found {len(helipads)}")
    _, hl, hf = helipads[0]
    scene = SceneSpec(
        helipad=_box_from(hf, hl, path, helipad=True),
        obstacles=[_box_from(f, l, path, helipad=False) for k, l, f in stanzas if k == "box"],
        carpet=Carpet(**carpet_kw),
        room=Room(**room_kw),
        palette=palette,
    )
    return scene.validate()


def load_scene(path: Union[str, Path]) -> SceneSpec:
    path = Path(path)
    return parse_scene(path.read_text(), str(path))


def format_scene(scene: SceneSpec) -> str:
    lines = [
        f"room.size_x = {scene.room.size_x:g}",
        f"room.size_y = {scene.room.size_y:g}",
        f"room.height = {scene.room.height:g}",
        f"carpet.center_x = {scene.carpet.center_x:g}",
        f"carpet.center_y = {scene.carpet.center_y:g}",
        f"carpet.size_x = {scene.carpet.size_x:g}",
        f"carpet.size_y = {scene.carpet.size_y:g}",
    ]
    lines += [f"palette.{k} = {r} {g} {b}" for k, (r, g, b) in sorted(scene.palette.items())]

    def stanza(kind, box):
        out = ["", f"[{kind}]"]
        for key, value in (("center_x", box.center_x), ("center_y", box.center_y),
                           ("size_x", box.size_x), ("size_y", box.size_y), ("size_z", box.size_z),
                           ("class", box.body_class), ("roof_class", box.roof_class)):
            out.append(f"{key} = {value:g}")
        if kind == "helipad":
            out.append(f"patch_class = {box.patch_class}")
            out.append(f"patch_size = {box.patch_size:g}")
        return out

    lines += stanza("helipad", scene.helipad)
    for box in scene.obstacles:
        lines += stanza("box", box)
    return "\n".join(lines) + "\n"


def default_scene() -> SceneSpec:
    """Eight boxes and the helipad on a 4 x 5 m carpet (shipped as data/default_scene.txt)."""
    text = resources.files("uavnav").joinpath("data/default_scene.txt").read_text()
    return parse_scene(text, "default_scene.txt")


def empty_scene() -> SceneSpec:
    base = default_scene()
    return SceneSpec(helipad=base.helipad, obstacles=[], carpet=base.carpet, room=base.room,
                     palette=dict(base.palette))
