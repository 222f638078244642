"""AndroidManifest parsing with namespace-stripped attribute storage."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator
from xml.parsers import expat

from sastmeta.errors import XmlError


def local_name(qname: str) -> str:
    return qname.rsplit(":", 1)[-1].rsplit("}", 1)[-1]


@dataclass
class ManifestElement:
    tag: str
    attrs: dict[str, str]  # keyed by local name: "android:allowBackup" is stored as "allowBackup"
    line: int
    children: list["ManifestElement"] = field(default_factory=list)

    def lookup(self, name: str, mode: str = "local") -> str | None:
        """Attribute value by local name (``mode="local"``) or by literal key (``mode="raw"``).

        Raw mode asks the stripped storage for the key exactly as written, so a
        prefixed key such as ``android:allowBackup`` never resolves.
        """
        if mode == "local":
            return self.attrs.get(local_name(name))
        if mode == "raw":
            return self.attrs.get(name)
        raise ValueError(f"unknown lookup mode {mode!r}")

    def iter(self, tag: str | None = None) -> Iterator["ManifestElement"]:
        if tag is None or self.tag == tag:
            yield self
        for child in self.children:
            yield from child.iter(tag)

    def find(self, tag: str) -> "ManifestElement | None":
        return next((c for c in self.children if c.tag == tag), None)


@dataclass
class ManifestDoc:
    root: ManifestElement

    def iter(self, tag: str | None = None) -> Iterator[ManifestElement]:
        return self.root.iter(tag)

    def get_element(self, tag: str, attribute: str, mode: str = "local") -> str | None:
        """First ``tag`` element's ``attribute``, or None."""
        for el in self.iter(tag):
            return el.lookup(attribute, mode)
        return None

    @property
    def min_sdk(self) -> int | None:
        value = self.get_element("uses-sdk", "minSdkVersion")
        try:
            return int(value) if value is not None else None
        except ValueError:
            return None


def parse_manifest(xml: str | bytes) -> ManifestDoc:
    parser = expat.ParserCreate()
    stack: list[ManifestElement] = []
    roots: list[ManifestElement] = []

    def start(name, attrs):
        el = ManifestElement(local_name(name), {local_name(k): v for k, v in attrs.items()}, parser.CurrentLineNumber)
        (stack[-1].children if stack else roots).append(el)
        stack.append(el)

    def end(name):
        stack.pop()

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    try:
        parser.Parse(xml, True)
    except expat.ExpatError as exc:
        raise XmlError(f"manifest: {exc}") from None
    if not roots:
        raise XmlError("manifest: no root element")
    return ManifestDoc(roots[0])
