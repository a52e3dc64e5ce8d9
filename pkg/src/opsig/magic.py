"""Payload identification from leading bytes. File names are never consulted."""

from __future__ import annotations

ELF_MAGIC = b"\x7fELF"
DEX_MAGIC = b"dex\n"
ZIP_MAGIC = b"PK\x03\x04"
PNG_MAGIC = b"\x89PNG\r\n\x1a\n"

# Zip local-file headers store entry names uncompressed, so an apk is
# recognisable without inflating anything.
APK_MANIFEST_ENTRY = b"AndroidManifest.xml"

# Only these kinds contribute class-level signatures; images and unrecognised
# resources are inert.
EXECUTABLE_TYPES = frozenset({"elf", "dex", "zipjar", "apk"})


def detect_file_type(data: bytes) -> str:
    if data.startswith(ELF_MAGIC):
        return "elf"
    if data.startswith(DEX_MAGIC):
        return "dex"
    if data.startswith(ZIP_MAGIC):
        return "apk" if APK_MANIFEST_ENTRY in data else "zipjar"
    if data.startswith(PNG_MAGIC):
        return "png"
    return "unknown"
