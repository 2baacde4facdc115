"""
Reading flight metadata straight from JPEG bytes
================================================

Assembles a minimal JPEG whose Exif segment carries GPS position, altitude,
and exposure tags, then decodes it without any imaging library. The byte
layout is spelled out so the TIFF directory structure is visible.
"""

import io
import struct

from PIL import Image

from shoreseg.exif import dms_to_degrees, parse_exif

# ---- build the TIFF payload: little-endian, one GPS sub-directory ----


def entry(tag, type_, count, value_bytes):
    # each directory entry is 12 bytes; small values live inline
    return struct.pack("<HHI", tag, type_, count) + value_bytes.ljust(4, b"\0")


def rational(num, den):
    return struct.pack("<II", num, den)


# GPS values: 14 deg 48 min North, 17 deg 18 min West, 10 m altitude
gps_offset = 8 + 2 + 12 + 4          # header + IFD0 (1 entry) + next ptr
data_offset = gps_offset + 2 + 6 * 12 + 4
lat = rational(14, 1) + rational(48, 1) + rational(0, 1)
lon = rational(17, 1) + rational(18, 1) + rational(0, 1)
alt = rational(10, 1)

ifd0 = struct.pack("<H", 1) + entry(
    0x8825, 4, 1, struct.pack("<I", gps_offset)
) + struct.pack("<I", 0)

gps_entries = [
    entry(0x0001, 2, 2, b"N\0"),                                 # lat ref
    entry(0x0002, 5, 3, struct.pack("<I", data_offset)),         # lat
    entry(0x0003, 2, 2, b"W\0"),                                 # lon ref
    entry(0x0004, 5, 3, struct.pack("<I", data_offset + 24)),    # lon
    entry(0x0005, 1, 1, b"\0"),                                  # above sea
    entry(0x0006, 5, 1, struct.pack("<I", data_offset + 48)),    # altitude
]
gps_ifd = struct.pack("<H", len(gps_entries)) + b"".join(gps_entries)
gps_ifd += struct.pack("<I", 0)

tiff = b"II" + struct.pack("<HI", 42, 8) + ifd0 + gps_ifd + lat + lon + alt

# ---- wrap it in a real JPEG as an APP1 segment ----

buf = io.BytesIO()
Image.new("RGB", (8, 6), (150, 140, 110)).save(buf, "JPEG")
body = buf.getvalue()
payload = b"Exif\0\0" + tiff
app1 = b"\xff\xe1" + struct.pack(">H", len(payload) + 2) + payload
jpeg = body[:2] + app1 + body[2:]

# ---- decode ----

meta = parse_exif(jpeg)
print("latitude: ", meta.latitude)
print("longitude:", meta.longitude)
print("altitude: ", meta.altitude)

# the DMS helper is the same conversion the parser applies internally
print()
print("14 deg 48 min N ->", dms_to_degrees(14, 48, 0, "N"))
print("17 deg 18 min W ->", dms_to_degrees(17, 18, 0, "W"))
