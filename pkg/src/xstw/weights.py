"""Gain/priority tables: the optimization variable and the codec's prior.

A table holds one (gain, priority) pair per component-band, 30 entries in
config order: the 10 bands of Y deepest level first, then Cb, then Cr.
Priorities are a single global permutation of 0..29; rank 0 is refined first.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from xstw.dwt import NUM_BANDS, SubbandLayout, synthesis_gain

NUM_COMPONENTS = 3
NUM_ENTRIES = NUM_COMPONENTS * NUM_BANDS
MAX_GAIN = 15


@dataclasses.dataclass(frozen=True)
class WeightTable:
    gains: np.ndarray  # (30,) ints in [0, 15]
    priorities: np.ndarray  # (30,) permutation of 0..29

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=np.int64)
        priorities = np.asarray(self.priorities, dtype=np.int64)
        if gains.shape != (NUM_ENTRIES,) or priorities.shape != (NUM_ENTRIES,):
            raise ValueError(f"need {NUM_ENTRIES} gains and priorities")
        if gains.min() < 0 or gains.max() > MAX_GAIN:
            raise ValueError(f"gain out of [0, {MAX_GAIN}]")
        if sorted(priorities.tolist()) != list(range(NUM_ENTRIES)):
            raise ValueError("priorities must be a permutation of 0..29")
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "priorities", priorities)

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightTable):
            return NotImplemented
        return bool(
            np.array_equal(self.gains, other.gains)
            and np.array_equal(self.priorities, other.priorities)
        )

    def entry(self, component: int, band_id: int) -> tuple[int, int]:
        i = component * NUM_BANDS + band_id
        return int(self.gains[i]), int(self.priorities[i])


def priority_ranks(fractions: np.ndarray) -> np.ndarray:
    """Rank values descending; ties broken by ascending position."""
    order = np.argsort(-np.asarray(fractions, dtype=np.float64), kind="stable")
    ranks = np.empty(len(order), dtype=np.int64)
    ranks[order] = np.arange(len(order))
    return ranks


def vector_to_table(v) -> WeightTable:
    """Map 30 reals to a table: integer parts become gains (clamped to
    [0, 15]), fractional parts ranked descending become priorities."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (NUM_ENTRIES,):
        raise ValueError(f"need {NUM_ENTRIES} values, got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite weight vector")
    gains = np.floor(np.clip(v, 0.0, np.nextafter(MAX_GAIN + 1, 0))).astype(np.int64)
    fractions = v - np.floor(v)
    return WeightTable(gains=gains, priorities=priority_ranks(fractions))


def default_table(layout: SubbandLayout | None = None) -> WeightTable:
    """Distortion-weighted defaults derived from measured synthesis energies.

    Gains follow round(log2 sqrt(energy)), shifted so the smallest is 0;
    chroma bands reuse the luma values.  Priorities rank all 30 entries by
    descending energy, ties by position.
    """
    energies = np.array([synthesis_gain(b) for b in range(NUM_BANDS)])
    gains_band = np.rint(0.5 * np.log2(energies)).astype(np.int64)
    gains_band -= gains_band.min()
    gains = np.tile(gains_band, NUM_COMPONENTS)
    priorities = priority_ranks(np.tile(energies, NUM_COMPONENTS))
    return WeightTable(gains=gains, priorities=priorities)


def table_to_vector(t: WeightTable) -> np.ndarray:
    """Embed a table as reals whose mapping reproduces it exactly.

    The fractional parts encode the priority ranks (larger fraction = better
    rank), so vector_to_table(table_to_vector(t)) == t.
    """
    fractions = (NUM_ENTRIES - t.priorities.astype(np.float64)) / (NUM_ENTRIES + 1)
    return t.gains.astype(np.float64) + fractions


def table_to_config(t: WeightTable) -> str:
    """Serialize as two lines: 30 gains then 30 priorities, Y/Cb/Cr order."""
    gains = " ".join(str(int(g)) for g in t.gains)
    priorities = " ".join(str(int(p)) for p in t.priorities)
    return f"gains: {gains}\npriorities: {priorities}\n"


def parse_config(text: str) -> WeightTable:
    """Exact inverse of :func:`table_to_config`."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if len(lines) != 2 or not lines[0].startswith("gains:") or not lines[1].startswith(
        "priorities:"
    ):
        raise ValueError("expected a 'gains:' line then a 'priorities:' line")
    try:
        gains = [int(tok) for tok in lines[0].split(":", 1)[1].split()]
        priorities = [int(tok) for tok in lines[1].split(":", 1)[1].split()]
    except ValueError:
        raise ValueError("weights must be ASCII decimal integers") from None
    if len(gains) != NUM_ENTRIES:
        raise ValueError(f"expected {NUM_ENTRIES} gains, got {len(gains)}")
    if len(priorities) != NUM_ENTRIES:
        raise ValueError(f"expected {NUM_ENTRIES} priorities, got {len(priorities)}")
    return WeightTable(gains=np.array(gains), priorities=np.array(priorities))
