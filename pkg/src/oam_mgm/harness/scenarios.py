"""Built-in sweep presets modelled on the two transmission experiments."""

from __future__ import annotations

from ..channel import ChannelScenario, NoiseModel
from ..dmt import DmtConfig
from ..xtalk import CrosstalkTable, table_1km, table_18km
from .sweep import CalibrationTarget, SweepSpec

# Short frames keep a 200-frame sweep of both presets within minutes on one core.
HARNESS_N_DATA = 4

_ROP_GRID = tuple(float(r) for r in range(-30, 1, 2))

# kappa values are the output of calibrate_noise on each preset's own target
# (60 frames, rel_tol 0.1); see README for the procedure.
PRESETS = {
    "table1_3mg": dict(
        groups=(2, 3, 4),
        table=table_1km,
        length_km=1.0,
        formats={2: 4, 3: 16, 4: 16},
        responsivity={2: (1.0, 0.6), 3: (1.0, 0.6), 4: (1.0, 0.6)},
        kappa=6.26e-5,
        calibration=CalibrationTarget(rop_dbm=-14.0, ber=3.8e-3, mg=3),
    ),
    "table2_2mg": dict(
        groups=(3, 4),
        table=table_18km,
        length_km=18.4,
        formats={3: 4, 4: 4},
        responsivity={3: (1.0, 0.6), 4: (1.0, 0.6)},
        kappa=8.20e-5,
        calibration=CalibrationTarget(rop_dbm=-21.0, ber=3.8e-3, mg=3),
    ),
}


def scenario_names() -> list[str]:
    return sorted(PRESETS)


def _entry(name: str) -> dict:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; known: {', '.join(scenario_names())}") from None


def preset_table(name: str) -> CrosstalkTable:
    """Measured crosstalk table the preset draws its matrix from."""
    return _entry(name)["table"]()


def preset(name: str) -> SweepSpec:
    """Fully populated sweep spec of a named preset."""
    p = _entry(name)
    groups = p["groups"]
    sc = ChannelScenario(
        groups=groups,
        crosstalk_db=p["table"]().subset(groups),
        length_km=p["length_km"],
        responsivity=p["responsivity"],
        noise=NoiseModel(sigma0_sq=0.0, kappa=p["kappa"]),
    )
    return SweepSpec(
        scenario=sc,
        dmt=DmtConfig(n_data=HARNESS_N_DATA),
        formats=dict(p["formats"]),
        rop_grid_dbm=_ROP_GRID,
        name=name,
        calibration=p["calibration"],
    )
