"""Regenerate tests/fixtures/fixture_1mb.apk and its golden image hashes.

The archive holds two dex entries (1 MiB of bytes in total) plus a manifest and
a resource file.  Entries are stored uncompressed with a fixed timestamp so the
archive bytes do not depend on the local zlib.  Golden hashes are computed with
exact rational arithmetic (fractions.Fraction), independently of apkgan's
integer resampler.

    python3 scripts/make_fixture_archive.py [--out tests/fixtures]
"""
import argparse
import hashlib
import io
import json
import math
import random
import zipfile
from fractions import Fraction
from pathlib import Path

SIZES = (32, 64, 128, 256, 360, 400)
STAMP = (2020, 1, 1, 0, 0, 0)


def dex_like(rng: random.Random, n: int) -> bytes:
    """Header, then runs of smooth ramps, constant padding and noise."""
    out = bytearray(b"dex\n035\x00")
    while len(out) < n:
        kind = rng.randrange(3)
        k = rng.randrange(64, 4096)
        if kind == 0:
            a, b = rng.randrange(256), rng.randrange(256)
            out += bytes(a + (b - a) * i // k for i in range(k))
        elif kind == 1:
            out += bytes([rng.randrange(256)]) * k
        else:
            out += rng.randbytes(k)
    return bytes(out[:n])


def build_archive() -> tuple[bytes, bytes]:
    rng = random.Random(20240607)
    d1 = dex_like(rng, 655360)
    d2 = dex_like(rng, 393216)
    manifest = ("<?xml version=\"1.0\"?><manifest package=\"org.example.fixture\">"
                + "<uses-permission name=\"p\"/>" * 40 + "</manifest>").encode()
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
        # written out of numeric order on purpose
        for name, data in (("classes2.dex", d2), ("AndroidManifest.xml", manifest),
                           ("res/raw/blob.bin", rng.randbytes(2048)), ("classes.dex", d1)):
            zf.writestr(zipfile.ZipInfo(name, STAMP), data)
    return buf.getvalue(), d1 + d2, manifest


def oracle_image(data: bytes, width: int) -> bytes:
    n, t = len(data), width * width
    if n == 1:
        return bytes([data[0]]) * t
    out = bytearray()
    for j in range(t):
        pos = Fraction(j * (n - 1), t - 1)
        i0 = math.floor(pos)
        i1 = min(i0 + 1, n - 1)
        value = data[i0] + (data[i1] - data[i0]) * (pos - i0)
        out.append(math.floor(value + Fraction(1, 2)))
    return bytes(out)


def pgm(pixels: bytes, width: int) -> bytes:
    return f"P5\n{width} {width}\n255\n".encode("ascii") + pixels


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "tests" / "fixtures"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    archive, dex, manifest = build_archive()
    (out / "fixture_1mb.apk").write_bytes(archive)
    golden = {
        "archive_sha256": hashlib.sha256(archive).hexdigest(),
        "dex_length": len(dex),
        "dex_sha256": hashlib.sha256(dex).hexdigest(),
        "dex": {str(w): hashlib.sha256(pgm(oracle_image(dex, w), w)).hexdigest() for w in SIZES},
        "manifest": {str(w): hashlib.sha256(pgm(oracle_image(manifest, w), w)).hexdigest() for w in SIZES},
    }
    (out / "fixture_1mb.golden.json").write_text(json.dumps(golden, indent=1) + "\n", encoding="utf-8")
    print(f"archive {len(archive)} bytes, dex {len(dex)} bytes -> {out}")


if __name__ == "__main__":
    main()
