"""Link-level simulator and receiver DSP for OAM mode-group multiplexed IM-DD links.

Each mode group is launched on a single OAM mode, scrambled inside the group by
random degenerate-mode coupling, and received on two photodiodes (the +l and
-l branches).  The receiver equalizes each branch on its own and merges them
per subcarrier with maximal-ratio combining.
"""

from .signal import (
    ComplexWaveform,
    QamConstellation,
    derive_rng,
    mean_power,
    qam_demap,
    qam_map,
)

__all__ = [
    "ComplexWaveform",
    "QamConstellation",
    "derive_rng",
    "mean_power",
    "qam_demap",
    "qam_map",
]

__version__ = "0.1.0"
