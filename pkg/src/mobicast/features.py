"""Channel normalization and per-day model feature construction.

Case counts and mobility flows span several orders of magnitude across
regions, so both go through log1p before z-scoring; population uses plain
log (it is strictly positive). Statistics are computed once on the training
slice and frozen. A channel whose transformed values are constant is
flagged and passed through raw, untouched, in both directions.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date

import numpy as np

from .errors import DomainError

# channel -> pre-transform applied before z-scoring
CHANNELS = {"daily": "log1p", "cum": "log1p", "mob": "log1p", "pop": "log"}

_STD_FLOOR = 1e-12
_LOG_CLIP = 50.0  # inverse transform guard; real data stays far below exp(50)


@dataclass(frozen=True)
class ChannelStats:
    transform: str  # "log1p" | "log" | "none"
    mean: float
    std: float
    constant: bool


def _apply_transform(kind: str, x: np.ndarray) -> np.ndarray:
    if kind == "log1p":
        return np.log1p(x)
    if kind == "log":
        return np.log(x)
    return np.asarray(x, dtype=np.float64)


def _invert_transform(kind: str, x: np.ndarray) -> np.ndarray:
    x = np.clip(x, -_LOG_CLIP, _LOG_CLIP)
    if kind == "log1p":
        return np.expm1(x)
    if kind == "log":
        return np.exp(x)
    return x


@dataclass(frozen=True)
class NormalizationStats:
    """Frozen per-channel transforms: raw -> (pre-transform, z-score)."""

    channels: dict[str, ChannelStats]

    @classmethod
    def fit(
        cls,
        daily: np.ndarray,
        cum: np.ndarray,
        mobility: np.ndarray,
        population: np.ndarray,
    ) -> "NormalizationStats":
        arrays = {"daily": daily, "cum": cum, "mob": mobility, "pop": population}
        channels = {}
        for name, arr in arrays.items():
            kind = CHANNELS[name]
            t = _apply_transform(kind, np.asarray(arr, dtype=np.float64))
            mean = float(t.mean())
            std = float(t.std())
            constant = std <= _STD_FLOOR
            channels[name] = ChannelStats(kind, mean, 1.0 if constant else std, constant)
        return cls(channels)

    def normalize(self, channel: str, x: np.ndarray | float) -> np.ndarray:
        cs = self._get(channel)
        x = np.asarray(x, dtype=np.float64)
        if cs.constant:
            return x.copy()
        return (_apply_transform(cs.transform, x) - cs.mean) / cs.std

    def denormalize(self, channel: str, z: np.ndarray | float) -> np.ndarray:
        cs = self._get(channel)
        z = np.asarray(z, dtype=np.float64)
        if cs.constant:
            return z.copy()
        return _invert_transform(cs.transform, z * cs.std + cs.mean)

    def _get(self, channel: str) -> ChannelStats:
        try:
            return self.channels[channel]
        except KeyError:
            raise DomainError(f"unknown normalization channel {channel!r}") from None

    def to_dict(self) -> dict:
        return {
            name: {
                "transform": cs.transform,
                "mean": cs.mean,
                "std": cs.std,
                "constant": cs.constant,
            }
            for name, cs in self.channels.items()
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(
            {
                name: ChannelStats(
                    v["transform"], float(v["mean"]), float(v["std"]), bool(v["constant"])
                )
                for name, v in d.items()
            }
        )


def weekday_onehot(weekday: int) -> np.ndarray:
    """0=Monday .. 6=Sunday, one-hot of width 7."""
    if not 0 <= weekday <= 6:
        raise DomainError(f"weekday {weekday} out of range")
    v = np.zeros(7)
    v[weekday] = 1.0
    return v


def day_case_features(
    daily: np.ndarray, cum: np.ndarray, population: np.ndarray, stats: NormalizationStats
) -> np.ndarray:
    """Per-node case-stream features for one day: (N, 3) = [daily, cum, pop], normalized."""
    return np.column_stack(
        [
            stats.normalize("daily", daily),
            stats.normalize("cum", cum),
            stats.normalize("pop", population),
        ]
    )


def day_mobility_features(
    mobility: np.ndarray, cum: np.ndarray, day: date, stats: NormalizationStats
) -> np.ndarray:
    """Per-node mobility-stream features for one day: (N, N+8).

    Node i's row is [normalized outflow row i (N), normalized cumulative
    cases (1), weekday one-hot (7)].
    """
    n = mobility.shape[0]
    onehot = weekday_onehot(day.weekday())
    return np.column_stack(
        [
            stats.normalize("mob", mobility),
            stats.normalize("cum", cum).reshape(n, 1),
            np.tile(onehot, (n, 1)),
        ]
    )
