"""
Time-series containers and preprocessing.

Every container is a frozen dataclass holding a read-only numpy array, so
instances can be shared freely between threads and worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidBand, NonFiniteInput, OutOfRange, ZeroVariance

__all__ = [
    "TimeSeries",
    "Recording",
    "BandSpec",
    "DEFAULT_BANDS",
    "standardize",
    "bandpass",
    "segment",
    "read_csv",
    "write_csv",
    "parse_bands",
]

TAPER_HZ = 0.5


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """A single uniformly sampled channel.

    Parameters
    ----------
    values : array_like
        Samples, any unit. Non-finite values are rejected.
    sample_rate : float
        Sampling frequency in Hz.
    label : str
        Channel identifier.
    """

    values: np.ndarray
    sample_rate: float = 1.0
    label: str = "x"

    def __post_init__(self):
        arr = _frozen_array(self.values)
        if arr.size < 1:
            raise ValueError("a TimeSeries needs at least one sample")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteInput(f"channel {self.label!r} contains NaN or Inf")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    def __len__(self) -> int:
        return self.values.size

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(values, self.sample_rate, self.label)


@dataclass(frozen=True)
class Recording:
    """Equal-length channels sharing one sample rate, with an optional event time."""

    channels: tuple
    event_onset: Optional[float] = None

    def __post_init__(self):
        chans = tuple(self.channels)
        if not chans:
            raise ValueError("a Recording needs at least one channel")
        n = len(chans[0])
        rate = chans[0].sample_rate
        for ch in chans:
            if len(ch) != n:
                raise ValueError("all channels must have the same length")
            if ch.sample_rate != rate:
                raise ValueError("all channels must share one sample rate")
        labels = [ch.label for ch in chans]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate channel labels: {labels}")
        if self.event_onset is not None:
            onset = float(self.event_onset)
            if not 0.0 < onset < n / rate:
                raise OutOfRange(
                    f"event_onset {onset} s is not strictly inside (0, {n / rate}) s")
            object.__setattr__(self, "event_onset", onset)
        object.__setattr__(self, "channels", chans)

    @classmethod
    def from_array(cls, data, sample_rate=1.0, labels=None, event_onset=None):
        """Build from a (samples x channels) array."""
        data = np.asarray(data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if labels is None:
            labels = [f"ch{i}" for i in range(data.shape[1])]
        chans = tuple(TimeSeries(data[:, i], sample_rate, str(lab))
                      for i, lab in enumerate(labels))
        return cls(chans, event_onset)

    def __len__(self) -> int:
        return len(self.channels[0])

    @property
    def sample_rate(self) -> float:
        return self.channels[0].sample_rate

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    @property
    def labels(self) -> list:
        return [ch.label for ch in self.channels]

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    def as_array(self) -> np.ndarray:
        """Samples as a (samples x channels) array."""
        return np.column_stack([ch.values for ch in self.channels])

    def channel(self, key) -> TimeSeries:
        if isinstance(key, (int, np.integer)):
            return self.channels[int(key)]
        for ch in self.channels:
            if ch.label == key:
                return ch
        raise KeyError(f"no channel labelled {key!r}")

    def index_of(self, label: str) -> int:
        return self.labels.index(label)

    def map_channels(self, fn) -> "Recording":
        return Recording(tuple(fn(ch) for ch in self.channels), self.event_onset)


@dataclass(frozen=True)
class BandSpec:
    name: str
    low_hz: float
    high_hz: float

    def validate(self, sample_rate: float) -> None:
        nyquist = sample_rate / 2.0
        if not (0.0 < self.low_hz < self.high_hz < nyquist):
            raise InvalidBand(
                f"band {self.name!r} [{self.low_hz}, {self.high_hz}] Hz is invalid "
                f"for sample rate {sample_rate} Hz (Nyquist {nyquist} Hz)")


# Conventional EEG band edges; configurable, not taken from any particular study.
DEFAULT_BANDS = {
    "delta": BandSpec("delta", 1.0, 4.0),
    "theta": BandSpec("theta", 4.0, 8.0),
    "alpha": BandSpec("alpha", 8.0, 12.0),
    "mu": BandSpec("mu", 8.0, 13.0),
    "beta": BandSpec("beta", 13.0, 30.0),
    "gamma": BandSpec("gamma", 30.0, 45.0),
}


def parse_bands(text: Optional[str]) -> list:
    """Parse ``"alpha,beta"`` or ``"slow:0.5-2,alpha"`` into BandSpec objects.

    An empty or ``None`` string, or the name ``broadband``, means no filtering
    and yields ``[None]``.
    """
    if text is None or not text.strip():
        return [None]
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if item == "broadband":
            out.append(None)
        elif ":" in item:
            name, rng = item.split(":", 1)
            lo, hi = rng.split("-", 1)
            out.append(BandSpec(name.strip(), float(lo), float(hi)))
        elif item in DEFAULT_BANDS:
            out.append(DEFAULT_BANDS[item])
        else:
            raise InvalidBand(f"unknown band {item!r}; use name:low-high")
    return out or [None]


def standardize(series: TimeSeries) -> TimeSeries:
    """Shift to zero mean and scale to unit sample standard deviation (ddof=1)."""
    x = series.values
    if x.size < 2:
        raise ZeroVariance("need at least two samples to standardize")
    centred = x - x.mean()
    sd = centred.std(ddof=1)
    if sd == 0.0 or not np.isfinite(sd):
        raise ZeroVariance(f"channel {series.label!r} is constant")
    z = centred / sd
    # second pass removes the residual rounding in the mean
    z = z - z.mean()
    return series.with_values(z)


def _band_mask(freqs: np.ndarray, band: BandSpec) -> np.ndarray:
    """Gain per rfft bin: 1 inside the band, cosine ramps just inside each edge, 0 outside."""
    width = min(TAPER_HZ, (band.high_hz - band.low_hz) / 2.0)
    gain = np.zeros_like(freqs)
    inside = (freqs >= band.low_hz) & (freqs <= band.high_hz)
    gain[inside] = 1.0
    lo_ramp = inside & (freqs < band.low_hz + width)
    gain[lo_ramp] = 0.5 * (1.0 - np.cos(np.pi * (freqs[lo_ramp] - band.low_hz) / width))
    hi_ramp = inside & (freqs > band.high_hz - width)
    gain[hi_ramp] = 0.5 * (1.0 - np.cos(np.pi * (band.high_hz - freqs[hi_ramp]) / width))
    return gain


def bandpass(series: TimeSeries, band: BandSpec) -> TimeSeries:
    """Zero-phase band-pass filter by spectral masking.

    The real FFT of the series is multiplied by a real, non-negative gain that
    is exactly zero outside ``[low_hz, high_hz]`` and ramps up with a raised
    cosine over the first and last 0.5 Hz inside the band. A real gain
    introduces no phase shift, so event timing is preserved.
    """
    band.validate(series.sample_rate)
    n = len(series)
    spectrum = np.fft.rfft(series.values)
    freqs = np.fft.rfftfreq(n, d=1.0 / series.sample_rate)
    filtered = np.fft.irfft(spectrum * _band_mask(freqs, band), n=n)
    return series.with_values(filtered)


def _sample_index(t: float, rate: float) -> int:
    return int(round(t * rate))


def segment(rec: Recording, window) -> Recording:
    """Cut every channel to the time window ``(start_s, end_s)``.

    Sample indices are ``round(start_s * rate)`` up to (excluding)
    ``round(end_s * rate)``. The event onset is re-referenced to the new start,
    or dropped if it no longer lies strictly inside the segment.
    """
    start_s, end_s = map(float, window)
    rate = rec.sample_rate
    n = len(rec)
    i0, i1 = _sample_index(start_s, rate), _sample_index(end_s, rate)
    if not (start_s >= 0 and start_s < end_s and 0 <= i0 < i1 <= n):
        raise OutOfRange(
            f"window ({start_s}, {end_s}) s is outside the recording (0, {rec.duration}) s")
    chans = tuple(ch.with_values(ch.values[i0:i1]) for ch in rec.channels)
    onset = None
    if rec.event_onset is not None:
        rel = rec.event_onset - i0 / rate
        if 0.0 < rel < (i1 - i0) / rate:
            onset = rel
    return Recording(chans, onset)


def segment_samples(rec: Recording, i0: int, i1: int) -> Recording:
    """Index-based variant of :func:`segment` (half-open ``[i0, i1)``)."""
    n = len(rec)
    if not 0 <= i0 < i1 <= n:
        raise OutOfRange(f"sample range [{i0}, {i1}) outside [0, {n})")
    return segment(rec, (i0 / rec.sample_rate, i1 / rec.sample_rate))


# --------------------------------------------------------------------------
# CSV ingestion
# --------------------------------------------------------------------------

def _sidecar_path(path) -> str:
    return os.fspath(path) + ".json"


def read_csv(source, sample_rate: Optional[float] = None,
             event_onset: Optional[float] = None) -> Recording:
    """Read a recording from CSV text: a header row of labels, one column per channel.

    ``source`` may be a path or an open text stream. When it is a path and a
    sidecar ``<path>.json`` exists, ``sample_rate`` and ``event_onset`` are
    read from it unless given explicitly.
    """
    meta = {}
    if isinstance(source, (str, os.PathLike)):
        side = _sidecar_path(source)
        if os.path.exists(side):
            with open(side, encoding="utf-8") as fh:
                meta = json.load(fh)
        with open(source, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    else:
        rows = list(csv.reader(source))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if len(rows) < 2:
        raise ValueError("CSV needs a header row and at least one sample row")
    labels = [c.strip() for c in rows[0]]
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ValueError(f"non-numeric CSV cell: {exc}") from None
    if data.shape[1] != len(labels):
        raise ValueError("ragged CSV: row width differs from header")
    if sample_rate is None:
        sample_rate = meta.get("sample_rate", 1.0)
    if event_onset is None:
        event_onset = meta.get("event_onset")
    return Recording.from_array(data, sample_rate, labels, event_onset)


def write_csv(rec: Recording, dest=None, sidecar: bool = True) -> Optional[str]:
    """Write ``rec`` as CSV. Returns the text when ``dest`` is None.

    Values use ``repr`` so a read-back reproduces every sample bit-for-bit.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(rec.labels)
    for row in rec.as_array():
        w.writerow([repr(float(v)) for v in row])
    text = buf.getvalue()
    if dest is None:
        return text
    if hasattr(dest, "write"):
        dest.write(text)
        return None
    with open(dest, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    if sidecar:
        with open(_sidecar_path(dest), "w", encoding="utf-8") as fh:
            json.dump({"sample_rate": rec.sample_rate, "event_onset": rec.event_onset},
                      fh, sort_keys=True)
            fh.write("\n")
    return None
