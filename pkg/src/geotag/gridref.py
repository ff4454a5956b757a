"""OS National Grid references and conversion to normalized location features.

The pipeline is: grid reference string -> easting/northing of the cell's
south-west corner -> cell centroid (corner + resolution/2 on both axes) ->
OSGB36 latitude/longitude (inverse transverse Mercator on the Airy 1830
ellipsoid) -> WGS84 latitude/longitude (7-parameter Helmert transformation)
-> min-max normalization against rough UK bounds.

Projection formulas and constants follow the Ordnance Survey publication
"A guide to coordinate systems in Great Britain" (the standard reference for
the National Grid). The Helmert parameter set is the OS-published single
set for the whole of Great Britain, accurate to about 5 m - two orders of
magnitude below the 1 km cell size this package consumes.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import (BadDigits, BadSquareLetters, EmptyInput, GeotagError,
                     NonFiniteInput, OddDigitCount, OutOfDomain)

# Rough UK bounding box used for min-max normalization of (lat, lon).
LAT_MIN, LAT_MAX = 49.9, 61.9
LON_MIN, LON_MAX = -8.6, 2.1

# Airy 1830 ellipsoid (OSGB36 datum) and GRS80 (WGS84/ETRS89 datum).
_AIRY_A, _AIRY_B = 6377563.396, 6356256.909
_WGS84_A, _WGS84_B = 6378137.000, 6356752.3141

# National Grid transverse Mercator parameters: scale on the central
# meridian, true origin (49N 2W) and its false easting/northing.
_F0 = 0.9996012717
_PHI0 = math.radians(49.0)
_LAM0 = math.radians(-2.0)
_E0, _N0 = 400000.0, -100000.0

# OSGB36 -> WGS84 Helmert parameters (OS-published set, position-vector
# convention): translations in metres, rotations in arc-seconds, scale in ppm.
_HELMERT_OSGB36_TO_WGS84 = (446.448, -125.157, 542.060, 0.1502, 0.2470, 0.8421, -20.4894)
_HELMERT_WGS84_TO_OSGB36 = tuple(-p for p in _HELMERT_OSGB36_TO_WGS84)

# National Grid extent: 7 easting x 13 northing 100-km squares cover Great
# Britain; conversions outside this window are refused rather than
# extrapolated.
_DOMAIN_E = (0.0, 700000.0)
_DOMAIN_N = (0.0, 1300000.0)

_GRID_LETTERS = "ABCDEFGHJKLMNOPQRSTUVWXYZ"  # 5x5 layout, 'I' excluded
_GRIDREF_RE = re.compile(r"^([A-HJ-Z]{2})(\d*)$")


@dataclass(frozen=True)
class GridRef:
    """A parsed grid reference: 100-km square letters plus offsets within it."""

    letters: str
    easting_within: int
    northing_within: int
    resolution: int

    def __post_init__(self):
        if len(self.letters) != 2 or any(c not in _GRID_LETTERS for c in self.letters):
            raise BadSquareLetters(f"invalid 100-km square code {self.letters!r}")
        if self.resolution not in (1, 10, 100, 1000, 10000):
            raise GeotagError(f"unsupported resolution {self.resolution} m")
        for v, axis in ((self.easting_within, "easting"), (self.northing_within, "northing")):
            if not 0 <= v < 100000:
                raise GeotagError(f"{axis} offset {v} outside [0, 100000)")
            if v % self.resolution != 0:
                raise GeotagError(f"{axis} offset {v} not a multiple of resolution")


def parse_gridref(text: str) -> GridRef:
    """Parse a letter-form grid reference such as "TQ3080" or "TQ 30 80".

    Whitespace is ignored and letters are case-insensitive. The digit block
    must contain an even count of 2-10 digits, split equally into easting
    and northing; 2k digits per axis means a cell 10^(5-k) metres across.
    """
    if text is None or not text.strip():
        raise EmptyInput("empty grid reference")
    compact = "".join(text.split()).upper()
    if len(compact) < 2:
        raise BadSquareLetters(f"grid reference {text!r} too short for square letters")
    m = _GRIDREF_RE.match(compact)
    if m is None:
        letters = compact[:2]
        if not re.match(r"^[A-HJ-Z]{2}$", letters):
            raise BadSquareLetters(f"invalid 100-km square code {letters!r}")
        raise BadDigits(f"grid reference {text!r} has non-digit characters after the square code")
    letters, digits = m.groups()
    if len(digits) % 2 != 0:
        raise OddDigitCount(f"grid reference {text!r} has {len(digits)} digits (must be even)")
    if not 2 <= len(digits) <= 10:
        raise BadDigits(f"grid reference {text!r} has {len(digits)} digits (expected 2-10)")
    half = len(digits) // 2
    resolution = 10 ** (5 - half)
    return GridRef(
        letters=letters,
        easting_within=int(digits[:half]) * resolution,
        northing_within=int(digits[half:]) * resolution,
        resolution=resolution,
    )


def format_gridref(g: GridRef) -> str:
    """Inverse of parse_gridref (no internal spaces)."""
    k = 5 - int(round(math.log10(g.resolution)))
    return (f"{g.letters}{g.easting_within // g.resolution:0{k}d}"
            f"{g.northing_within // g.resolution:0{k}d}")


def _square_offset(letters: str) -> tuple[int, int]:
    """Easting/northing in metres of a 100-km square's south-west corner.

    Both letters index the same 5x5 layout (A..E on the top row, V..Z on the
    bottom); the first letter selects a 500-km block relative to square S,
    the second a 100-km square within the block.
    """
    i1 = _GRID_LETTERS.index(letters[0])
    i2 = _GRID_LETTERS.index(letters[1])
    e = (i1 % 5 - 2) * 500000 + (i2 % 5) * 100000
    n = (3 - i1 // 5) * 500000 + (4 - i2 // 5) * 100000
    return e, n


def gridref_to_easting_northing(g: GridRef) -> tuple[float, float]:
    """Full National Grid easting/northing of the cell's south-west corner."""
    e0, n0 = _square_offset(g.letters)
    return float(e0 + g.easting_within), float(n0 + g.northing_within)


def _meridian_arc(phi: float, a: float, b: float) -> float:
    n = (a - b) / (a + b)
    n2, n3 = n * n, n * n * n
    dphi, sphi = phi - _PHI0, phi + _PHI0
    return b * _F0 * (
        (1 + n + 1.25 * n2 + 1.25 * n3) * dphi
        - (3 * n + 3 * n2 + 21.0 / 8.0 * n3) * math.sin(dphi) * math.cos(sphi)
        + (15.0 / 8.0 * (n2 + n3)) * math.sin(2 * dphi) * math.cos(2 * sphi)
        - (35.0 / 24.0 * n3) * math.sin(3 * dphi) * math.cos(3 * sphi)
    )


def en_to_osgb36_latlon(easting: float, northing: float) -> tuple[float, float]:
    """Inverse transverse Mercator: grid metres -> OSGB36 degrees."""
    a, b = _AIRY_A, _AIRY_B
    e2 = 1 - (b * b) / (a * a)

    phi = _PHI0
    m = 0.0
    while abs(northing - _N0 - m) >= 1e-5:  # iterate to 0.01 mm
        phi = (northing - _N0 - m) / (a * _F0) + phi
        m = _meridian_arc(phi, a, b)

    sin_phi = math.sin(phi)
    nu = a * _F0 / math.sqrt(1 - e2 * sin_phi * sin_phi)
    rho = a * _F0 * (1 - e2) * (1 - e2 * sin_phi * sin_phi) ** -1.5
    eta2 = nu / rho - 1

    tan_phi = math.tan(phi)
    t2 = tan_phi * tan_phi
    t4 = t2 * t2
    t6 = t4 * t2
    sec_phi = 1.0 / math.cos(phi)
    nu3, nu5, nu7 = nu ** 3, nu ** 5, nu ** 7

    vii = tan_phi / (2 * rho * nu)
    viii = tan_phi / (24 * rho * nu3) * (5 + 3 * t2 + eta2 - 9 * t2 * eta2)
    ix = tan_phi / (720 * rho * nu5) * (61 + 90 * t2 + 45 * t4)
    x = sec_phi / nu
    xi = sec_phi / (6 * nu3) * (nu / rho + 2 * t2)
    xii = sec_phi / (120 * nu5) * (5 + 28 * t2 + 24 * t4)
    xiia = sec_phi / (5040 * nu7) * (61 + 662 * t2 + 1320 * t4 + 720 * t6)

    de = easting - _E0
    lat = phi - vii * de ** 2 + viii * de ** 4 - ix * de ** 6
    lon = _LAM0 + x * de - xi * de ** 3 + xii * de ** 5 - xiia * de ** 7
    return math.degrees(lat), math.degrees(lon)


def osgb36_latlon_to_en(lat: float, lon: float) -> tuple[float, float]:
    """Forward transverse Mercator: OSGB36 degrees -> grid metres."""
    a, b = _AIRY_A, _AIRY_B
    e2 = 1 - (b * b) / (a * a)
    phi, lam = math.radians(lat), math.radians(lon)

    sin_phi, cos_phi = math.sin(phi), math.cos(phi)
    nu = a * _F0 / math.sqrt(1 - e2 * sin_phi * sin_phi)
    rho = a * _F0 * (1 - e2) * (1 - e2 * sin_phi * sin_phi) ** -1.5
    eta2 = nu / rho - 1
    m = _meridian_arc(phi, a, b)

    cos3, cos5 = cos_phi ** 3, cos_phi ** 5
    t2 = math.tan(phi) ** 2
    t4 = t2 * t2

    i = m + _N0
    ii = (nu / 2) * sin_phi * cos_phi
    iii = (nu / 24) * sin_phi * cos3 * (5 - t2 + 9 * eta2)
    iiia = (nu / 720) * sin_phi * cos5 * (61 - 58 * t2 + t4)
    iv = nu * cos_phi
    v = (nu / 6) * cos3 * (nu / rho - t2)
    vi = (nu / 120) * cos5 * (5 - 18 * t2 + t4 + 14 * eta2 - 58 * t2 * eta2)

    dl = lam - _LAM0
    northing = i + ii * dl ** 2 + iii * dl ** 4 + iiia * dl ** 6
    easting = _E0 + iv * dl + v * dl ** 3 + vi * dl ** 5
    return easting, northing


def _geodetic_to_cartesian(lat: float, lon: float, a: float, b: float) -> tuple[float, float, float]:
    e2 = 1 - (b * b) / (a * a)
    phi, lam = math.radians(lat), math.radians(lon)
    sin_phi = math.sin(phi)
    nu = a / math.sqrt(1 - e2 * sin_phi * sin_phi)
    return (nu * math.cos(phi) * math.cos(lam),
            nu * math.cos(phi) * math.sin(lam),
            (1 - e2) * nu * sin_phi)


def _cartesian_to_geodetic(x: float, y: float, z: float, a: float, b: float) -> tuple[float, float]:
    e2 = 1 - (b * b) / (a * a)
    p = math.hypot(x, y)
    phi = math.atan2(z, p * (1 - e2))
    for _ in range(100):
        sin_phi = math.sin(phi)
        nu = a / math.sqrt(1 - e2 * sin_phi * sin_phi)
        phi_next = math.atan2(z + e2 * nu * sin_phi, p)
        if abs(phi_next - phi) < 1e-14:
            phi = phi_next
            break
        phi = phi_next
    return math.degrees(phi), math.degrees(math.atan2(y, x))


def _helmert(xyz: tuple[float, float, float], params) -> tuple[float, float, float]:
    tx, ty, tz, rx_s, ry_s, rz_s, s_ppm = params
    rx, ry, rz = (math.radians(r / 3600.0) for r in (rx_s, ry_s, rz_s))
    s1 = 1 + s_ppm * 1e-6
    x, y, z = xyz
    return (tx + s1 * (x - rz * y + ry * z),
            ty + s1 * (rz * x + y - rx * z),
            tz + s1 * (-ry * x + rx * y + z))


def osgb36_to_wgs84(lat: float, lon: float) -> tuple[float, float]:
    xyz = _geodetic_to_cartesian(lat, lon, _AIRY_A, _AIRY_B)
    return _cartesian_to_geodetic(*_helmert(xyz, _HELMERT_OSGB36_TO_WGS84),
                                  _WGS84_A, _WGS84_B)


def wgs84_to_osgb36(lat: float, lon: float) -> tuple[float, float]:
    xyz = _geodetic_to_cartesian(lat, lon, _WGS84_A, _WGS84_B)
    return _cartesian_to_geodetic(*_helmert(xyz, _HELMERT_WGS84_TO_OSGB36),
                                  _AIRY_A, _AIRY_B)


def en_to_wgs84(easting: float, northing: float) -> tuple[float, float]:
    """National Grid metres -> WGS84 degrees, with domain guard."""
    if not (_DOMAIN_E[0] <= easting < _DOMAIN_E[1]
            and _DOMAIN_N[0] <= northing < _DOMAIN_N[1]):
        raise OutOfDomain(
            f"point ({easting}, {northing}) outside the National Grid extent "
            f"[0, 700 km) x [0, 1300 km)")
    return osgb36_to_wgs84(*en_to_osgb36_latlon(easting, northing))


def gridref_to_latlon(g: GridRef) -> tuple[float, float]:
    """WGS84 (lat, lon) of the grid cell's CENTROID.

    The reference names the cell's south-west corner; the point converted is
    offset by resolution/2 on both axes, so a 1 km cell maps to its centre.
    """
    e, n = gridref_to_easting_northing(g)
    return en_to_wgs84(e + g.resolution / 2.0, n + g.resolution / 2.0)


def normalize_location(lat: float, lon: float) -> np.ndarray:
    """Min-max normalize WGS84 degrees against rough UK bounds.

    Pure affine map, evaluated in float64 and never clamped: points outside
    the box map outside [0, 1] and stay there.
    """
    if not (math.isfinite(lat) and math.isfinite(lon)):
        raise NonFiniteInput(f"non-finite coordinates ({lat}, {lon})")
    return np.array([(lat - LAT_MIN) / (LAT_MAX - LAT_MIN),
                     (lon - LON_MIN) / (LON_MAX - LON_MIN)], dtype=np.float64)
