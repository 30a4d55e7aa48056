"""Pull raw byte streams out of APK/ZIP containers."""
from __future__ import annotations

import io
import re
import zipfile
import zlib

from ..errors import MalformedArchive, NoMatchingEntry
from .imaging import ByteStream, EntryKind

_DEX_NAME = re.compile(r"^classes(\d*)\.dex$")
MANIFEST_NAME = "AndroidManifest.xml"
ARCHIVE_SUFFIXES = {".apk", ".zip", ".jar", ".xapk"}


def dex_order(name: str) -> int:
    """classes.dex -> 1, classes2.dex -> 2, ..."""
    m = _DEX_NAME.match(name)
    if m is None:
        raise ValueError(f"{name!r} is not a dex entry name")
    return int(m.group(1)) if m.group(1) else 1


def extract_streams(archive_bytes: bytes, selector: EntryKind | str = EntryKind.DEX,
                    source: str = "<memory>") -> list[ByteStream]:
    """Byte streams selected from an archive.

    DEX concatenates every root-level ``classes*.dex`` entry in natural numeric
    order into a single stream; MANIFEST returns the raw ``AndroidManifest.xml``
    entry; RAW passes the input through untouched.
    """
    selector = EntryKind(selector)
    if selector is EntryKind.RAW:
        return [ByteStream(bytes(archive_bytes), source, EntryKind.RAW)]
    try:
        zf = zipfile.ZipFile(io.BytesIO(archive_bytes))
    except (zipfile.BadZipFile, OSError) as exc:
        raise MalformedArchive(f"{source}: {exc}") from None
    with zf:
        names = [i.filename for i in zf.infolist() if not i.is_dir()]
        if selector is EntryKind.DEX:
            wanted = sorted((n for n in names if _DEX_NAME.match(n)), key=dex_order)
            if not wanted:
                raise NoMatchingEntry(f"{source}: no classes*.dex entries")
        else:
            if MANIFEST_NAME not in names:
                raise NoMatchingEntry(f"{source}: no {MANIFEST_NAME}")
            wanted = [MANIFEST_NAME]
        try:
            data = b"".join(zf.read(n) for n in wanted)
        except (zipfile.BadZipFile, zipfile.LargeZipFile, EOFError, zlib.error, NotImplementedError) as exc:
            raise MalformedArchive(f"{source}: {exc}") from None
    return [ByteStream(data, f"{source}!{'+'.join(wanted)}", selector)]
