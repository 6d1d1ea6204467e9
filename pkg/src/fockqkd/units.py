"""Unit-suffixed quantity parsing for netlists and CLI flags.

Internally everything is SI with angular frequency in rad/s. Ordinary
frequency suffixes (Hz, GHz, ...) on an angular-frequency field are
multiplied by 2*pi; the bare ``G`` suffix means 1e9 rad/s.
"""

import math
import re

from .errors import InvalidArgumentError

_NUMBER = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_QUANTITY = re.compile(rf"^\s*({_NUMBER})\s*([A-Za-z/µ°]*)\s*$")

_PI2 = 2.0 * math.pi

UNITS = {
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9, "ps": 1e-12, "fs": 1e-15},
    "length": {"m": 1e-3, "km": 1.0},
    "loss": {"dB": 1.0},
    "loss_per_length": {"dB/km": 1.0},
    "delay_per_length": {"s/km": 1.0, "us/km": 1e-6, "µs/km": 1e-6, "ns/km": 1e-9},
    "angle": {"rad": 1.0, "deg": math.pi / 180.0, "°": math.pi / 180.0},
    "angular_frequency": {
        "rad/s": 1.0,
        "G": 1e9,
        "Grad/s": 1e9,
        "Trad/s": 1e12,
        "Hz": _PI2,
        "kHz": _PI2 * 1e3,
        "MHz": _PI2 * 1e6,
        "GHz": _PI2 * 1e9,
        "THz": _PI2 * 1e12,
    },
    "rate": {"Hz": 1.0, "/s": 1.0, "1/s": 1.0, "kHz": 1e3, "MHz": 1e6},
    "dimensionless": {"": 1.0},
}

# length is stored in km because fiber attenuation is quoted per km


def parse_quantity(value, kind, *, allow_bare=False):
    """Convert ``value`` (number or "<number> <unit>") to the internal unit of ``kind``.

    Bare numbers are accepted for dimensionless fields always and for other
    kinds only when ``allow_bare`` is set (then they are taken as internal
    units already).
    """
    table = UNITS[kind]
    if isinstance(value, bool):
        raise InvalidArgumentError(f"expected a {kind} quantity, got a boolean")
    if isinstance(value, (int, float)):
        if kind == "dimensionless" or allow_bare:
            return float(value)
        raise InvalidArgumentError(
            f"{kind} quantity {value!r} needs a unit suffix (one of {', '.join(sorted(table))})"
        )
    if not isinstance(value, str):
        raise InvalidArgumentError(f"cannot parse {value!r} as a {kind} quantity")
    m = _QUANTITY.match(value)
    if m is None:
        raise InvalidArgumentError(f"cannot parse {value!r} as a {kind} quantity")
    number, unit = float(m.group(1)), m.group(2)
    if unit == "" and (kind == "dimensionless" or allow_bare):
        return number
    if unit not in table:
        raise InvalidArgumentError(
            f"unit {unit!r} is not valid for {kind} (expected one of {', '.join(sorted(table))})"
        )
    out = number * table[unit]
    if not math.isfinite(out):
        raise InvalidArgumentError(f"non-finite quantity {value!r}")
    return out


def db_to_transmission(loss_db):
    """Power transmission factor for a loss in dB."""
    return 10.0 ** (-loss_db / 10.0)
