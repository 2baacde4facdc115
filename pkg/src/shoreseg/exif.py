"""Flight metadata extraction from JPEG APP1 (EXIF/TIFF) segments.

The parser walks the JPEG marker stream, locates the first APP1 segment
carrying the Exif header, and reads the embedded TIFF structure (either
byte order): IFD0, the Exif sub-IFD, and the GPS sub-IFD. Exactly six
fields are extracted: latitude, longitude, altitude, shutter, aperture,
and ISO. Everything else is skipped.

All reads are bounds-checked against the declared APP1 payload; corrupt
structures raise MalformedExif rather than crashing or reading past the
segment.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction

from .errors import MalformedExif, NotJpeg

__all__ = ["FlightMetadata", "parse_exif", "dms_to_degrees"]

# JPEG markers
_SOI = 0xD8
_EOI = 0xD9
_SOS = 0xDA
_APP1 = 0xE1
_STANDALONE = {0x01} | set(range(0xD0, 0xD8))  # TEM, RST0-7: no length field

_EXIF_HEADER = b"Exif\x00\x00"
_TIFF_MAGIC = 42

# IFD0 pointer tags
_TAG_EXIF_IFD = 0x8769
_TAG_GPS_IFD = 0x8825

# Exif IFD tags
_TAG_EXPOSURE_TIME = 0x829A
_TAG_F_NUMBER = 0x829D
_TAG_ISO = 0x8827

# GPS IFD tags
_TAG_GPS_LAT_REF = 0x0001
_TAG_GPS_LAT = 0x0002
_TAG_GPS_LON_REF = 0x0003
_TAG_GPS_LON = 0x0004
_TAG_GPS_ALT_REF = 0x0005
_TAG_GPS_ALT = 0x0006

# TIFF field types -> element byte size
_TYPE_BYTE = 1
_TYPE_ASCII = 2
_TYPE_SHORT = 3
_TYPE_LONG = 4
_TYPE_RATIONAL = 5
_TYPE_SIZES = {1: 1, 2: 1, 3: 2, 4: 4, 5: 8, 6: 1, 7: 1, 8: 2, 9: 4, 10: 8, 11: 4, 12: 8}


@dataclass(frozen=True)
class FlightMetadata:
    """The six metadata fields a survey flight record carries.

    Attributes:
        latitude: signed decimal degrees, south negative, in [-90, 90].
        longitude: signed decimal degrees, west negative, in [-180, 180].
        altitude: meters relative to the reference; sign from the
            altitude reference byte (0 = above).
        shutter: exposure time in seconds as an exact rational.
        aperture: f-number as an exact rational.
        iso: sensitivity rating.

    Any field may be None when the corresponding tags are absent.
    """

    latitude: float | None = None
    longitude: float | None = None
    altitude: float | None = None
    shutter: Fraction | None = None
    aperture: Fraction | None = None
    iso: int | None = None

    def is_empty(self) -> bool:
        """True when no field was extracted."""
        return all(
            getattr(self, name) is None
            for name in ("latitude", "longitude", "altitude", "shutter", "aperture", "iso")
        )

    def to_json_dict(self) -> dict:
        """JSON-ready mapping; absent fields omitted, rationals as 'num/den'."""
        out: dict = {}
        if self.latitude is not None:
            out["latitude"] = self.latitude
        if self.longitude is not None:
            out["longitude"] = self.longitude
        if self.altitude is not None:
            out["altitude"] = self.altitude
        if self.shutter is not None:
            out["shutter"] = f"{self.shutter.numerator}/{self.shutter.denominator}"
        if self.aperture is not None:
            out["aperture"] = f"{self.aperture.numerator}/{self.aperture.denominator}"
        if self.iso is not None:
            out["iso"] = self.iso
        return out


def dms_to_degrees(degrees: float, minutes: float, seconds: float, ref: str) -> float:
    """Converts a degree/minute/second triple plus hemisphere to signed degrees."""
    value = degrees + minutes / 60.0 + seconds / 3600.0
    if ref in ("S", "W"):
        value = -value
    return value


# ===================== JPEG segment walk =====================

def parse_exif(data: bytes) -> FlightMetadata:
    """Extracts flight metadata from a JPEG byte stream.

    Args:
        data: complete JPEG file contents.

    Returns:
        FlightMetadata; empty (all fields None) when the file carries no
        Exif APP1 segment or none of the six tags.

    Raises:
        NotJpeg: the stream does not start with the start-of-image marker.
        MalformedExif: the marker stream or TIFF structure is truncated or
            internally inconsistent.
    """
    if not isinstance(data, (bytes, bytearray)):
        raise TypeError("parse_exif expects bytes")
    data = bytes(data)
    if len(data) < 2 or data[0] != 0xFF or data[1] != _SOI:
        raise NotJpeg("missing JPEG start-of-image marker")

    pos = 2
    n = len(data)
    while True:
        if pos >= n:
            # header section ended without SOS/EOI: truncated stream
            raise MalformedExif("marker stream ended without start-of-scan")
        # skip fill bytes
        while pos < n and data[pos] == 0xFF and pos + 1 < n and data[pos + 1] == 0xFF:
            pos += 1
        if pos + 2 > n:
            raise MalformedExif("truncated marker")
        if data[pos] != 0xFF:
            raise MalformedExif(f"expected marker at byte {pos}")
        marker = data[pos + 1]
        pos += 2
        if marker in (_EOI, _SOS):
            return FlightMetadata()  # no Exif segment before image data
        if marker == _SOI or marker in _STANDALONE:
            continue  # length-less marker; nothing to skip
        if pos + 2 > n:
            raise MalformedExif("segment length truncated")
        seg_len = struct.unpack(">H", data[pos : pos + 2])[0]
        if seg_len < 2:
            raise MalformedExif(f"segment length {seg_len} below minimum")
        if pos + seg_len > n:
            raise MalformedExif("segment payload truncated")
        payload = data[pos + 2 : pos + seg_len]
        if marker == _APP1 and payload.startswith(_EXIF_HEADER):
            return _parse_tiff(payload[len(_EXIF_HEADER) :])
        pos += seg_len


# ===================== TIFF structure =====================

def _parse_tiff(buf: bytes) -> FlightMetadata:
    """Parses the TIFF body of an Exif APP1 payload."""
    if len(buf) < 8:
        raise MalformedExif("TIFF header truncated")
    if buf[0:2] == b"II":
        endian = "<"
    elif buf[0:2] == b"MM":
        endian = ">"
    else:
        raise MalformedExif("unknown TIFF byte order")
    magic = struct.unpack(endian + "H", buf[2:4])[0]
    if magic != _TIFF_MAGIC:
        raise MalformedExif(f"bad TIFF magic {magic}")
    ifd0_offset = struct.unpack(endian + "I", buf[4:8])[0]

    ifd0 = _read_ifd(buf, endian, ifd0_offset)
    exif_ifd: dict = {}
    gps_ifd: dict = {}
    exif_ptr = _scalar(ifd0.get(_TAG_EXIF_IFD), (_TYPE_LONG, _TYPE_SHORT))
    if exif_ptr is not None:
        exif_ifd = _read_ifd(buf, endian, exif_ptr)
    gps_ptr = _scalar(ifd0.get(_TAG_GPS_IFD), (_TYPE_LONG, _TYPE_SHORT))
    if gps_ptr is not None:
        gps_ifd = _read_ifd(buf, endian, gps_ptr)

    # exposure tags normally live in the Exif sub-IFD; fall back to IFD0
    tags = dict(ifd0)
    tags.update(exif_ifd)

    shutter = _rational_field(tags.get(_TAG_EXPOSURE_TIME))
    aperture = _rational_field(tags.get(_TAG_F_NUMBER))
    iso_val = _scalar(tags.get(_TAG_ISO), (_TYPE_SHORT, _TYPE_LONG))
    iso = int(iso_val) if iso_val is not None else None

    latitude = _coordinate(gps_ifd, _TAG_GPS_LAT, _TAG_GPS_LAT_REF, "NS", 90.0)
    longitude = _coordinate(gps_ifd, _TAG_GPS_LON, _TAG_GPS_LON_REF, "EW", 180.0)
    altitude = _altitude(gps_ifd)

    return FlightMetadata(
        latitude=latitude,
        longitude=longitude,
        altitude=altitude,
        shutter=shutter,
        aperture=aperture,
        iso=iso,
    )


def _read_ifd(buf: bytes, endian: str, offset: int) -> dict:
    """Reads one IFD into {tag: (type, count, value_bytes)}.

    Values longer than 4 bytes are resolved through their offset; every
    access is bounds-checked against the TIFF slice.
    """
    if offset + 2 > len(buf):
        raise MalformedExif(f"IFD offset {offset} out of bounds")
    entry_count = struct.unpack(endian + "H", buf[offset : offset + 2])[0]
    end = offset + 2 + 12 * entry_count
    if end > len(buf):
        raise MalformedExif("IFD entry table truncated")

    entries: dict = {}
    for i in range(entry_count):
        base = offset + 2 + 12 * i
        tag, ftype, count = struct.unpack(endian + "HHI", buf[base : base + 8])
        size = _TYPE_SIZES.get(ftype)
        if size is None:
            continue  # unknown field type: skip the entry
        total = size * count
        if total > len(buf):
            raise MalformedExif(f"tag 0x{tag:04X} value size {total} exceeds segment")
        if total <= 4:
            value = buf[base + 8 : base + 8 + total]
        else:
            voff = struct.unpack(endian + "I", buf[base + 8 : base + 12])[0]
            if voff + total > len(buf):
                raise MalformedExif(f"tag 0x{tag:04X} value offset out of bounds")
            value = buf[voff : voff + total]
        entries[tag] = (ftype, count, value, endian)
    return entries


# ===================== field decoding =====================

def _scalar(entry, accepted_types) -> int | None:
    """First unsigned integer of an entry, or None if absent/mistyped."""
    if entry is None:
        return None
    ftype, count, value, endian = entry
    if ftype not in accepted_types or count < 1:
        return None
    if ftype == _TYPE_SHORT:
        return struct.unpack(endian + "H", value[0:2])[0]
    return struct.unpack(endian + "I", value[0:4])[0]


def _rationals(entry, expect: int) -> list[Fraction] | None:
    """Decodes an unsigned-rational entry to Fractions, or None if absent.

    Raises MalformedExif on zero denominators.
    """
    if entry is None:
        return None
    ftype, count, value, endian = entry
    if ftype != _TYPE_RATIONAL or count < expect:
        return None
    out = []
    for i in range(expect):
        num, den = struct.unpack(endian + "II", value[8 * i : 8 * i + 8])
        if den == 0:
            raise MalformedExif("rational with zero denominator")
        out.append(Fraction(num, den))
    return out

def _rational_field(entry) -> Fraction | None:
    vals = _rationals(entry, 1)
    return vals[0] if vals is not None else None


def _ascii_ref(entry, allowed: str) -> str | None:
    """First character of an ASCII entry when it is one of ``allowed``."""
    if entry is None:
        return None
    ftype, count, value, _ = entry
    if ftype != _TYPE_ASCII or count < 1 or len(value) < 1:
        return None
    if value[0] >= 128:
        return None
    ch = chr(value[0])
    return ch if ch in allowed else None


def _coordinate(gps_ifd: dict, value_tag: int, ref_tag: int, hemis: str, bound: float) -> float | None:
    """Signed decimal degrees from a DMS rational triple plus reference tag.

    Both the value and its hemisphere reference must be present; otherwise
    the field is absent. Out-of-range results are corruption.
    """
    dms = _rationals(gps_ifd.get(value_tag), 3)
    ref = _ascii_ref(gps_ifd.get(ref_tag), hemis)
    if dms is None or ref is None:
        return None
    degrees = dms_to_degrees(float(dms[0]), float(dms[1]), float(dms[2]), ref)
    if not -bound <= degrees <= bound:
        raise MalformedExif(f"coordinate {degrees} outside [-{bound}, {bound}]")
    return degrees


def _altitude(gps_ifd: dict) -> float | None:
    """Altitude in meters; sign from the reference byte (0 = above)."""
    alt = _rational_field(gps_ifd.get(_TAG_GPS_ALT))
    if alt is None:
        return None
    value = float(alt)
    ref_entry = gps_ifd.get(_TAG_GPS_ALT_REF)
    if ref_entry is not None:
        ftype, count, raw, _ = ref_entry
        if ftype == _TYPE_BYTE and count >= 1 and len(raw) >= 1 and raw[0] == 1:
            value = -value
    return value
