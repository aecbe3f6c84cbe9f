"""Measured inter-group crosstalk of the 1-km and 18.4-km ring-core fiber systems."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass


@dataclass(frozen=True)
class CrosstalkTable:
    """``xt_db[a][b]`` is the crosstalk from source ``groups[a]`` into destination ``groups[b]``."""

    groups: tuple[int, ...]
    xt_db: tuple[tuple[float, ...], ...]
    system_length_km: float
    label: str = ""

    def __post_init__(self):
        groups = tuple(int(g) for g in self.groups)
        xt = tuple(tuple(float(v) for v in row) for row in self.xt_db)
        n = len(groups)
        if len(xt) != n or any(len(r) != n for r in xt):
            raise ValueError(f"crosstalk matrix must be {n}x{n}")
        for a in range(n):
            if xt[a][a] != 0:
                raise ValueError("diagonal entries must be 0 dB")
            if any(xt[a][b] >= 0 for b in range(n) if b != a):
                raise ValueError("off-diagonal entries must be negative (dB)")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "xt_db", xt)

    def xt(self, source: int, destination: int) -> float:
        return self.xt_db[self.groups.index(source)][self.groups.index(destination)]

    def subset(self, groups) -> tuple[tuple[float, ...], ...]:
        """Matrix restricted to ``groups`` (in that order), for building a scenario."""
        missing = [g for g in groups if g not in self.groups]
        if missing:
            raise KeyError(f"groups {missing} not in table {self.label!r}")
        return tuple(tuple(self.xt(s, d) for d in groups) for s in groups)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["source\\destination"] + [f"|l|={g}" for g in self.groups])
        for g, row in zip(self.groups, self.xt_db):
            w.writerow([f"|l|={g}"] + [f"{v:g}" for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, system_length_km: float, label: str = "") -> "CrosstalkTable":
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        groups = tuple(int(h.split("=")[-1]) for h in rows[0][1:])
        src = tuple(int(r[0].split("=")[-1]) for r in rows[1:])
        if src != groups:
            raise ValueError("row and column groups differ")
        return cls(groups, tuple(tuple(float(v) for v in r[1:]) for r in rows[1:]), system_length_km, label)


def table_1km() -> CrosstalkTable:
    return CrosstalkTable(
        groups=(1, 2, 3, 4),
        xt_db=(
            (0.0, -4.43, -15.03, -18.57),
            (-5.09, 0.0, -11.26, -18.04),
            (-17.36, -11.94, 0.0, -14.05),
            (-20.99, -17.29, -13.8, 0.0),
        ),
        system_length_km=1.0,
        label="entire optical system with 1-km GIRCF",
    )


def table_18km() -> CrosstalkTable:
    return CrosstalkTable(
        groups=(2, 3, 4),
        xt_db=(
            (0.0, -5.19, -7.66),
            (-7.33, 0.0, -8.68),
            (-8.39, -7.9, 0.0),
        ),
        system_length_km=18.4,
        label="entire optical system with 18.4-km GIRCF",
    )


def fiber_only_xt(short: CrosstalkTable, long: CrosstalkTable, pair: tuple[int, int]) -> tuple[float, float]:
    """Crosstalk added by the extra fiber between two measured systems.

    Each direction's linear leakage of the short system is subtracted from the
    long one; the two directions are averaged in linear power.  Returns the
    result in dB over the length difference and normalized to 1 km assuming
    leakage grows linearly with length.
    """
    i, j = pair
    diffs = []
    for s, d in ((i, j), (j, i)):
        try:
            x = 10 ** (long.xt(s, d) / 10) - 10 ** (short.xt(s, d) / 10)
        except ValueError:
            raise KeyError(f"pair {pair} missing from one of the tables") from None
        if x <= 0:
            raise ValueError(f"no fiber-induced crosstalk for {s}->{d}: long system does not exceed short one")
        diffs.append(x)
    delta_km = long.system_length_km - short.system_length_km
    if delta_km <= 0:
        raise ValueError("long table must describe a longer system")
    avg = sum(diffs) / 2
    return 10 * math.log10(avg), 10 * math.log10(avg / delta_km)


def xt_at_length(xt_per_km_db: float, length_km: float) -> float:
    """Scale a per-km crosstalk to ``length_km`` under linear power accumulation."""
    return xt_per_km_db + 10 * math.log10(length_km)
