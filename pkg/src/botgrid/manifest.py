"""Permission extraction from Android manifests in any supported form.

Three ingestion forms are accepted: a full APK (ZIP wrapping a binary
manifest), a standalone manifest file (binary or plaintext XML, told
apart by magic bytes), and a plain permission-list text file with one
permission per line.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass

from . import axml
from .apk import MANIFEST_ENTRY, open_apk
from .errors import MalformedXml, NotAZip
from .xmldoc import ANDROID_NS, ManifestDocument, XmlAttribute, XmlElement

PERMISSION_ELEMENTS = ("uses-permission", "uses-permission-sdk-23")


@dataclass(frozen=True)
class PermissionSet:
    """Canonical permissions requested by one application."""

    app_id: str
    permissions: frozenset[str]

    def __len__(self) -> int:
        return len(self.permissions)

    def __contains__(self, permission: str) -> bool:
        return permission in self.permissions


@dataclass
class ExtractionStats:
    """Diagnostics tallied while walking one manifest."""

    elements_seen: int = 0
    skipped_blank: int = 0


def parse_plain_manifest(text: str) -> ManifestDocument:
    """Parse a decompiled/plaintext manifest into the shared tree shape."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise MalformedXml(str(exc)) from exc
    return ManifestDocument(_convert_etree(root))


def _convert_etree(node: ET.Element) -> XmlElement:
    element = XmlElement(_split_tag(node.tag)[1])
    for key, value in node.attrib.items():
        ns, name = _split_tag(key)
        element.attributes.append(XmlAttribute(ns, name, value))
    for child in node:
        element.children.append(_convert_etree(child))
    return element


def _split_tag(tag: str) -> tuple[str, str]:
    # ElementTree spells namespaced names as {uri}local.
    if tag.startswith("{"):
        uri, _, local = tag[1:].partition("}")
        return uri, local
    return "", tag


def extract_permissions(
    doc: ManifestDocument, app_id: str, stats: ExtractionStats | None = None
) -> PermissionSet:
    """Collect requested permission names from a parsed manifest."""
    stats = stats if stats is not None else ExtractionStats()
    names: set[str] = set()
    for element in doc.root.iter():
        if element.name not in PERMISSION_ELEMENTS:
            continue
        stats.elements_seen += 1
        value = element.attribute("name", ANDROID_NS)
        if value is None:
            value = element.attribute("name", "")
        if value is None or not value.strip():
            stats.skipped_blank += 1
            continue
        names.add(value.strip())
    return PermissionSet(app_id, frozenset(names))


def parse_permission_list(text: str, app_id: str) -> PermissionSet:
    """One permission per line; blank lines and # comments ignored."""
    names = set()
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        names.add(line)
    return PermissionSet(app_id, frozenset(names))


def write_permission_list(perms: PermissionSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for name in sorted(perms.permissions):
            fh.write(name + "\n")


def parse_manifest_bytes(data: bytes) -> ManifestDocument:
    """Standalone manifest file, binary or plaintext by magic bytes."""
    if axml.is_axml(data):
        return axml.parse_axml(data)
    try:
        text = data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise MalformedXml(f"manifest is neither AXML nor UTF-8 XML: {exc}") from exc
    return parse_plain_manifest(text)


def permissions_from_apk(path) -> PermissionSet:
    archive = open_apk(path)
    if MANIFEST_ENTRY not in archive:
        raise NotAZip(f"{path}: archive has no {MANIFEST_ENTRY} entry")
    doc = parse_manifest_bytes(archive.read(MANIFEST_ENTRY))
    return extract_permissions(doc, str(path))


def permissions_from_manifest(path) -> PermissionSet:
    with open(path, "rb") as fh:
        data = fh.read()
    return extract_permissions(parse_manifest_bytes(data), str(path))


def permissions_from_permlist(path) -> PermissionSet:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_permission_list(fh.read(), str(path))


_READERS = {
    "apk": permissions_from_apk,
    "manifest": permissions_from_manifest,
    "permlist": permissions_from_permlist,
}


def read_permissions(path, kind: str) -> PermissionSet:
    """Dispatch on the declared source kind: apk, manifest, or permlist."""
    try:
        reader = _READERS[kind]
    except KeyError:
        raise ValueError(f"unknown source kind {kind!r}, expected one of {sorted(_READERS)}")
    return reader(path)


def sniff_kind(path) -> str:
    """Guess apk vs. manifest from leading magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    return "apk" if head[:2] == b"PK" else "manifest"
