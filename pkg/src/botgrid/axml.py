"""Decoder for Android's binary XML (AXML) manifest encoding.

The format is a little-endian chunk stream: an outer file chunk (type
0x0003), a string pool (0x0001, UTF-16LE by default or UTF-8 when pool
flag 0x100 is set), an optional resource map (0x0180), then namespace
and element chunks that describe the document tree.  All string-valued
fields are indices into the pool.

Every read is bounds-checked against the declared chunk sizes, so
arbitrary input either parses or fails with one of the declared errors;
it never reads out of bounds or allocates proportionally to a forged
length field.
"""

from __future__ import annotations

import struct

from .errors import BadMagic, BadStringIndex, TruncatedChunk, UnbalancedElements
from .xmldoc import ManifestDocument, XmlAttribute, XmlElement

RES_STRING_POOL_TYPE = 0x0001
RES_XML_TYPE = 0x0003
RES_XML_START_NAMESPACE = 0x0100
RES_XML_END_NAMESPACE = 0x0101
RES_XML_START_ELEMENT = 0x0102
RES_XML_END_ELEMENT = 0x0103
RES_XML_CDATA = 0x0104
RES_XML_RESOURCE_MAP = 0x0180

UTF8_FLAG = 0x00000100
NO_INDEX = 0xFFFFFFFF

# Typed-value dataType codes that appear in manifest attributes.
TYPE_REFERENCE = 0x01
TYPE_STRING = 0x03
TYPE_FLOAT = 0x04
TYPE_INT_DEC = 0x10
TYPE_INT_HEX = 0x11
TYPE_INT_BOOLEAN = 0x12

ATTRIBUTE_RECORD_SIZE = 20


def is_axml(data: bytes) -> bool:
    """True when the buffer starts with the AXML file chunk header."""
    return len(data) >= 4 and data[:2] == b"\x03\x00" and data[2:4] == b"\x08\x00"


class _Reader:
    """Bounds-checked little-endian cursor over one buffer region."""

    def __init__(self, data: bytes, pos: int, limit: int):
        self.data = data
        self.pos = pos
        self.limit = limit

    def need(self, n: int) -> None:
        if self.pos + n > self.limit:
            raise TruncatedChunk(
                f"need {n} bytes at offset {self.pos}, only {self.limit - self.pos} remain"
            )

    def u8(self) -> int:
        self.need(1)
        v = self.data[self.pos]
        self.pos += 1
        return v

    def u16(self) -> int:
        self.need(2)
        v = struct.unpack_from("<H", self.data, self.pos)[0]
        self.pos += 2
        return v

    def u32(self) -> int:
        self.need(4)
        v = struct.unpack_from("<I", self.data, self.pos)[0]
        self.pos += 4
        return v

    def skip(self, n: int) -> None:
        self.need(n)
        self.pos += n


class _StringPool:
    """Lazy string pool; strings decode on first reference."""

    def __init__(self, data: bytes, chunk_start: int, header_size: int, chunk_size: int):
        rd = _Reader(data, chunk_start + 8, chunk_start + chunk_size)
        self.string_count = rd.u32()
        self.style_count = rd.u32()
        flags = rd.u32()
        self.is_utf8 = bool(flags & UTF8_FLAG)
        strings_start = rd.u32()
        styles_start = rd.u32()

        offsets_at = chunk_start + header_size
        if offsets_at + 4 * self.string_count > chunk_start + chunk_size:
            raise TruncatedChunk("string offset table exceeds pool chunk")
        self._offsets = [
            struct.unpack_from("<I", data, offsets_at + 4 * i)[0]
            for i in range(self.string_count)
        ]
        self._data = data
        self._base = chunk_start + strings_start
        end = chunk_start + (styles_start if self.style_count and styles_start else chunk_size)
        self._end = min(end, chunk_start + chunk_size)
        if self._base > self._end:
            raise TruncatedChunk("string data region starts past pool chunk end")
        self._cache: dict[int, str] = {}

    def get(self, index: int) -> str:
        if index in self._cache:
            return self._cache[index]
        if index >= self.string_count:
            raise BadStringIndex(f"string index {index} out of range ({self.string_count})")
        try:
            s = self._decode(self._base + self._offsets[index])
        except (struct.error, IndexError) as exc:
            raise BadStringIndex(f"string {index} lies outside the pool data") from exc
        self._cache[index] = s
        return s

    def _decode(self, at: int) -> str:
        if self.is_utf8:
            return self._decode_utf8(at)
        return self._decode_utf16(at)

    def _decode_utf16(self, at: int) -> str:
        # u16 char count; high bit extends the length with a second word.
        if at + 2 > self._end:
            raise BadStringIndex("UTF-16 length field out of bounds")
        n = struct.unpack_from("<H", self._data, at)[0]
        at += 2
        if n & 0x8000:
            if at + 2 > self._end:
                raise BadStringIndex("extended UTF-16 length out of bounds")
            n = ((n & 0x7FFF) << 16) | struct.unpack_from("<H", self._data, at)[0]
            at += 2
        if at + 2 * n > self._end:
            raise BadStringIndex("UTF-16 string data out of bounds")
        try:
            return self._data[at : at + 2 * n].decode("utf-16-le")
        except UnicodeDecodeError as exc:
            raise BadStringIndex(f"undecodable UTF-16 string: {exc}") from exc

    def _decode_utf8(self, at: int) -> str:
        # Two varlen fields: UTF-16 char count (unused) then byte count.
        at = self._skip_utf8_len(at)
        nbytes, at = self._read_utf8_len(at)
        if at + nbytes > self._end:
            raise BadStringIndex("UTF-8 string data out of bounds")
        try:
            return self._data[at : at + nbytes].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise BadStringIndex(f"undecodable UTF-8 string: {exc}") from exc

    def _skip_utf8_len(self, at: int) -> int:
        _, at = self._read_utf8_len(at)
        return at

    def _read_utf8_len(self, at: int) -> tuple[int, int]:
        if at + 1 > self._end:
            raise BadStringIndex("UTF-8 length field out of bounds")
        n = self._data[at]
        at += 1
        if n & 0x80:
            if at + 1 > self._end:
                raise BadStringIndex("extended UTF-8 length out of bounds")
            n = ((n & 0x7F) << 8) | self._data[at]
            at += 1
        return n, at


def _format_typed_value(data_type: int, data: int, pool: _StringPool) -> str:
    if data_type == TYPE_STRING:
        return pool.get(data)
    if data_type == TYPE_INT_BOOLEAN:
        return "true" if data else "false"
    if data_type == TYPE_INT_DEC:
        if data & 0x80000000:
            data -= 1 << 32
        return str(data)
    if data_type == TYPE_INT_HEX:
        return f"0x{data:x}"
    if data_type == TYPE_REFERENCE:
        return f"@0x{data:08x}"
    if data_type == TYPE_FLOAT:
        return repr(struct.unpack("<f", struct.pack("<I", data))[0])
    return f"0x{data:08x}"


def parse_axml(data: bytes) -> ManifestDocument:
    """Decode an AXML buffer into the manifest element tree."""
    if len(data) < 8:
        raise TruncatedChunk(f"AXML header needs 8 bytes, got {len(data)}")
    file_type, header_size = struct.unpack_from("<HH", data, 0)
    if file_type != RES_XML_TYPE or header_size != 8:
        raise BadMagic(
            f"expected file chunk type 0x0003 with header size 8, "
            f"got type 0x{file_type:04x} size {header_size}"
        )
    declared = struct.unpack_from("<I", data, 4)[0]
    if declared > len(data):
        raise TruncatedChunk(f"file chunk declares {declared} bytes, buffer has {len(data)}")
    limit = declared
    pos = 8

    pool: _StringPool | None = None
    root: XmlElement | None = None
    stack: list[XmlElement] = []
    ns_depth = 0

    while pos < limit:
        if pos + 8 > limit:
            raise TruncatedChunk(f"chunk header at offset {pos} is truncated")
        ctype, chsize = struct.unpack_from("<HH", data, pos)
        csize = struct.unpack_from("<I", data, pos + 4)[0]
        if csize < chsize or chsize < 8:
            raise TruncatedChunk(
                f"chunk 0x{ctype:04x} declares size {csize} with header {chsize}"
            )
        if pos + csize > limit:
            raise TruncatedChunk(
                f"chunk 0x{ctype:04x} at offset {pos} overruns the file chunk"
            )

        if pool is None:
            if ctype != RES_STRING_POOL_TYPE:
                raise BadMagic(
                    f"expected string pool chunk after file header, got 0x{ctype:04x}"
                )
            pool = _StringPool(data, pos, chsize, csize)
        elif ctype == RES_XML_RESOURCE_MAP or ctype == RES_XML_CDATA:
            pass  # length-honored skip
        elif ctype == RES_XML_START_NAMESPACE:
            ns_depth += 1
        elif ctype == RES_XML_END_NAMESPACE:
            if ns_depth == 0:
                raise UnbalancedElements("namespace end without a matching start")
            ns_depth -= 1
        elif ctype == RES_XML_START_ELEMENT:
            element = _parse_start_element(data, pos, chsize, csize, pool)
            if stack:
                stack[-1].children.append(element)
            elif root is None:
                root = element
            else:
                raise UnbalancedElements("second root element")
            stack.append(element)
        elif ctype == RES_XML_END_ELEMENT:
            name = _parse_end_element(data, pos, chsize, csize, pool)
            if not stack:
                raise UnbalancedElements(f"end of element {name!r} with no element open")
            opened = stack.pop()
            if opened.name != name:
                raise UnbalancedElements(
                    f"element {opened.name!r} closed by end tag {name!r}"
                )
        # Unknown chunk types are skipped by their declared length.

        pos += csize

    if stack:
        raise UnbalancedElements(f"{len(stack)} element(s) left open at end of input")
    if root is None:
        raise UnbalancedElements("document contains no element")
    return ManifestDocument(root)


def _parse_start_element(
    data: bytes, start: int, header_size: int, chunk_size: int, pool: _StringPool
) -> XmlElement:
    rd = _Reader(data, start + header_size, start + chunk_size)
    ns_idx = rd.u32()
    name_idx = rd.u32()
    attr_start = rd.u16()
    attr_size = rd.u16()
    attr_count = rd.u16()
    rd.skip(6)  # id/class/style attribute indices

    if name_idx == NO_INDEX:
        raise BadStringIndex("element with no name string")
    name = pool.get(name_idx)
    element = XmlElement(name)
    if ns_idx != NO_INDEX:
        pool.get(ns_idx)  # validate the reference even though names are unprefixed

    if attr_size < ATTRIBUTE_RECORD_SIZE:
        raise TruncatedChunk(f"attribute record size {attr_size} below minimum 20")
    attrs_at = start + header_size + attr_start
    if attrs_at + attr_count * attr_size > start + chunk_size:
        raise TruncatedChunk(
            f"{attr_count} attribute records overrun the element chunk"
        )
    for i in range(attr_count):
        ard = _Reader(data, attrs_at + i * attr_size, start + chunk_size)
        a_ns = ard.u32()
        a_name = ard.u32()
        a_raw = ard.u32()
        ard.u16()  # typed value size
        ard.u8()  # res0
        a_type = ard.u8()
        a_data = ard.u32()

        if a_name == NO_INDEX:
            raise BadStringIndex("attribute with no name string")
        namespace = "" if a_ns == NO_INDEX else pool.get(a_ns)
        if a_raw != NO_INDEX:
            value = pool.get(a_raw)
        else:
            value = _format_typed_value(a_type, a_data, pool)
        element.attributes.append(XmlAttribute(namespace, pool.get(a_name), value))
    return element


def _parse_end_element(
    data: bytes, start: int, header_size: int, chunk_size: int, pool: _StringPool
) -> str:
    rd = _Reader(data, start + header_size, start + chunk_size)
    rd.u32()  # namespace
    name_idx = rd.u32()
    if name_idx == NO_INDEX:
        raise BadStringIndex("end tag with no name string")
    return pool.get(name_idx)
