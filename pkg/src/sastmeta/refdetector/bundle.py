"""Pre-extracted app bundles: ``manifest.xml`` plus a ``src/`` tree."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from sastmeta.errors import XmlError
from sastmeta.refdetector.manifest import parse_manifest

MANIFEST_NAME = "manifest.xml"
SOURCE_SUFFIXES = (".java", ".kt", ".smali")


@dataclass(frozen=True)
class AppBundle:
    apk_id: str
    manifest: str
    sources: dict[str, str] = field(default_factory=dict)
    declared_min_sdk: int | None = None
    manifest_name: str = MANIFEST_NAME

    @classmethod
    def from_texts(cls, apk_id: str, manifest: str, sources: dict[str, str] | None = None) -> "AppBundle":
        """Build a bundle in memory, reading the min SDK from the manifest when it parses."""
        try:
            min_sdk = parse_manifest(manifest).min_sdk
        except XmlError:
            min_sdk = None
        return cls(apk_id, manifest, dict(sources or {}), min_sdk)


def is_bundle(path: str | Path) -> bool:
    return (Path(path) / MANIFEST_NAME).is_file()


def load_bundle(path: str | Path) -> AppBundle:
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise XmlError(f"{root}: no {MANIFEST_NAME}")
    sources = {}
    src = root / "src"
    if src.is_dir():
        for f in sorted(src.rglob("*")):
            if f.is_file() and f.suffix in SOURCE_SUFFIXES:
                sources[f.relative_to(root).as_posix()] = f.read_text(encoding="utf-8", errors="replace")
    manifest = manifest_path.read_text(encoding="utf-8", errors="replace")
    return AppBundle.from_texts(root.name, manifest, sources)


def bundle_size_mb(path: str | Path) -> float:
    root = Path(path)
    if root.is_file():
        return root.stat().st_size / 2**20
    return sum(f.stat().st_size for f in root.rglob("*") if f.is_file()) / 2**20
