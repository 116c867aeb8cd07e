"""Synthetic irregular satellite image time series.

Series are stored as ``values`` [t, c, h, w] reflectances, a list of acquisition
dates and a per-date validity mask [t, h, w] (True = clear pixel).
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

REFERENCE_DATE = dt.date(2014, 3, 3)
BACKGROUND = 255
BAND_NAMES = ("B2", "B3", "B4", "B8", "B5", "B6", "B7", "B8A", "B11", "B12")
SITS_FORMAT = "alise-sits/1"

# bare soil / full canopy endmembers, same band order as BAND_NAMES
_SOIL = np.array([0.07, 0.10, 0.13, 0.22, 0.16, 0.19, 0.21, 0.23, 0.32, 0.26])
_CANOPY = np.array([0.03, 0.07, 0.03, 0.45, 0.09, 0.28, 0.38, 0.46, 0.18, 0.09])


@dataclass
class Sits:
    values: np.ndarray
    dates: list[dt.date]
    validity: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        self.validity = np.asarray(self.validity, dtype=bool)
        self.dates = [_as_date(d) for d in self.dates]
        if self.values.ndim != 4:
            raise ValueError(f"values must be [t, c, h, w], got shape {self.values.shape}")
        t, _, h, w = self.values.shape
        if t < 1:
            raise ValueError("a series needs at least one acquisition")
        if len(self.dates) != t or self.validity.shape != (t, h, w):
            raise ValueError(
                f"inconsistent series: {t} images, {len(self.dates)} dates, "
                f"validity {self.validity.shape}"
            )
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError("dates must be strictly increasing")

    @property
    def t(self) -> int:
        return self.values.shape[0]

    @property
    def c(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[2], self.values.shape[3]

    def take(self, idx: Sequence[int]) -> "Sits":
        idx = np.asarray(idx, dtype=np.int64)
        return Sits(self.values[idx], [self.dates[i] for i in idx], self.validity[idx])

    def crop(self, top: int, left: int, size: int) -> "Sits":
        sl = (slice(top, top + size), slice(left, left + size))
        return Sits(self.values[:, :, sl[0], sl[1]], self.dates, self.validity[:, sl[0], sl[1]])


@dataclass
class LabeledSits:
    """A multi-year series with one class map per calendar year.

    ``change`` flags pixels whose class differs between the first two years,
    background excluded.
    """

    sits: Sits
    labels: np.ndarray
    change: np.ndarray
    start_year: int
    seed: int | None = None

    def year(self, i: int) -> Sits:
        """Sub-series holding the acquisitions of calendar year ``start_year + i``."""
        year = self.start_year + i
        idx = [j for j, d in enumerate(self.sits.dates) if d.year == year]
        if not idx:
            raise ValueError(f"no acquisition in {year}")
        return self.sits.take(idx)

    def crop(self, top: int, left: int, size: int) -> "LabeledSits":
        sl = (slice(top, top + size), slice(left, left + size))
        return LabeledSits(
            self.sits.crop(top, left, size),
            self.labels[:, sl[0], sl[1]],
            self.change[sl[0], sl[1]],
            self.start_year,
            self.seed,
        )


@dataclass
class SynthConfig:
    n_series: int = 1
    size: int = 16
    n_classes: int = 5
    # 20-30 acquisitions per year; several years so pre-training sees every season at
    # many absolute offsets (a two-year span leaves the encoder year-dependent)
    min_dates: int = 80
    max_dates: int = 120
    start_year: int = 2018
    n_years: int = 4
    change_rate: float = 0.3
    cloud_rate: float = 0.15
    background_rate: float = 0.15
    noise: float = 0.01
    parcel_area: int = 24
    onset_jitter: float = 12.0
    t_w_max: int = 10
    n_bands: int = len(BAND_NAMES)

    def validate(self):
        if self.n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.n_classes}")
        if self.size < 4:
            raise ValueError(f"spatial size must be >= 4, got {self.size}")
        if self.min_dates < 2 * self.t_w_max:
            raise ValueError(
                f"min_dates={self.min_dates} is below 2 * t_w_max = {2 * self.t_w_max}"
            )
        if self.max_dates < self.min_dates:
            raise ValueError("max_dates < min_dates")
        if self.n_years < 2:
            raise ValueError("change labels need at least two years")
        n_days = (dt.date(self.start_year + self.n_years, 1, 1) - dt.date(self.start_year, 1, 1)).days
        if self.max_dates > n_days:
            raise ValueError("more dates requested than days in the year span")
        if not 0.0 <= self.change_rate <= 1.0 or not 0.0 <= self.background_rate < 1.0:
            raise ValueError("rates must lie in [0, 1]")
        if self.n_bands > len(BAND_NAMES):
            raise ValueError(f"at most {len(BAND_NAMES)} bands")


def _as_date(d) -> dt.date:
    if isinstance(d, dt.datetime):
        return d.date()
    if isinstance(d, dt.date):
        return d
    return dt.date.fromisoformat(str(d))


def delta_t(dates: Sequence) -> np.ndarray:
    """Day offsets of ``dates`` from the 2014-03-03 reference date."""
    out = np.array([(_as_date(d) - REFERENCE_DATE).days for d in dates], dtype=np.int64)
    if (out < 0).any():
        first = _as_date(dates[int(np.argmin(out))])
        raise ValueError(f"date {first} precedes the reference date {REFERENCE_DATE}")
    return out


def _class_profiles(n_classes: int, rng: np.random.Generator):
    # onsets spread over the season so classes differ by timing more than by mean reflectance
    onset = np.linspace(70, 200, n_classes) + rng.uniform(-5, 5, n_classes)
    duration = rng.uniform(70, 110, n_classes)
    amplitude = rng.uniform(0.75, 0.95, n_classes)
    slope = rng.uniform(6, 12, (n_classes, 2))
    tint = rng.normal(0.0, 0.01, (n_classes, len(BAND_NAMES)))
    return onset, duration, amplitude, slope, tint


def _double_logistic(doy, onset, offset, amplitude, s_up, s_down):
    return amplitude * (1.0 / (1.0 + np.exp(-(doy - onset) / s_up)) - 1.0 / (1.0 + np.exp(-(doy - offset) / s_down)))


def _parcels(size: int, area: int, rng: np.random.Generator) -> np.ndarray:
    n = max(2, round(size * size / area))
    seeds = rng.uniform(0, size, (n, 2))
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    d = (yy[..., None] - seeds[:, 0]) ** 2 + (xx[..., None] - seeds[:, 1]) ** 2
    return np.argmin(d, axis=-1)


def _one_series(cfg: SynthConfig, profiles, rng: np.random.Generator, seed: int) -> LabeledSits:
    onset, duration, amplitude, slope, tint = profiles
    k, size, nb = cfg.n_classes, cfg.size, cfg.n_bands

    parcel = _parcels(size, cfg.parcel_area, rng)
    n_parcels = parcel.max() + 1
    cls = np.empty((cfg.n_years, n_parcels), dtype=np.int64)
    is_bg = rng.random(n_parcels) < cfg.background_rate
    cls[0] = rng.integers(0, k, n_parcels)
    for y in range(1, cfg.n_years):
        swap = rng.random(n_parcels) < cfg.change_rate
        shift = rng.integers(1, k, n_parcels)
        cls[y] = np.where(swap, (cls[y - 1] + shift) % k, cls[y - 1])
    cls_px = cls[:, parcel]
    labels = np.where(is_bg[parcel][None], BACKGROUND, cls_px).astype(np.uint8)
    change = (labels[0] != labels[1]) & (labels[0] != BACKGROUND) & (labels[1] != BACKGROUND)

    first = dt.date(cfg.start_year, 1, 1)
    n_days = (dt.date(cfg.start_year + cfg.n_years, 1, 1) - first).days
    t = int(rng.integers(cfg.min_dates, cfg.max_dates + 1))
    offsets = np.sort(rng.choice(n_days, size=t, replace=False))
    dates = [first + dt.timedelta(days=int(o)) for o in offsets]
    years = np.array([d.year - cfg.start_year for d in dates])
    doy = np.array([d.timetuple().tm_yday for d in dates], dtype=np.float64)

    # per parcel and year phenology jitter (intra-class variability)
    jit = rng.normal(0.0, cfg.onset_jitter, (cfg.n_years, n_parcels))
    amp_f = rng.uniform(0.85, 1.15, (cfg.n_years, n_parcels))
    bg_onset = rng.uniform(0, 300, n_parcels)
    bg_amp = rng.uniform(0.0, 0.35, n_parcels)

    veg = np.empty((t, n_parcels))
    spectra = np.empty((cfg.n_years, n_parcels, nb))
    for y in range(cfg.n_years):
        c = cls[y]
        sel = years == y
        on = np.where(is_bg, bg_onset, onset[c] + jit[y])
        off = on + np.where(is_bg, 150.0, duration[c])
        amp = np.where(is_bg, bg_amp, amplitude[c] * amp_f[y])
        s_up = np.where(is_bg, 15.0, slope[c, 0])
        s_dn = np.where(is_bg, 15.0, slope[c, 1])
        veg[sel] = _double_logistic(doy[sel, None], on, off, amp, s_up, s_dn)
        spectra[y] = np.where(is_bg[:, None], 0.0, tint[c, :nb])

    canopy, soil = _CANOPY[:nb], _SOIL[:nb]
    refl = soil[None, None] + veg[:, :, None] * (canopy - soil)[None, None]
    refl = refl + spectra[years]
    values = refl[:, parcel].transpose(0, 3, 1, 2)
    values = values + rng.normal(0.0, cfg.noise, values.shape)

    validity = np.ones((t, size, size), dtype=bool)
    for i in np.flatnonzero(rng.random(t) < cfg.cloud_rate):
        ch, cw = rng.integers(size // 4, size + 1, 2)
        top, left = rng.integers(0, size - ch + 1), rng.integers(0, size - cw + 1)
        validity[i, top:top + ch, left:left + cw] = False
        values[i, :, top:top + ch, left:left + cw] += rng.uniform(0.25, 0.5)

    sits = Sits(values.astype(np.float32), dates, validity)
    return LabeledSits(sits, labels, change, cfg.start_year, seed)


def synth_generate(cfg: SynthConfig, seed: int) -> list[LabeledSits]:
    """Generate ``cfg.n_series`` labeled series, bit-reproducible for a given seed.

    Class phenologies are drawn once from ``seed`` so that every series of a
    dataset shares them; each series then gets its own child generator.
    """
    cfg.validate()
    root = np.random.SeedSequence(seed)
    profiles = _class_profiles(cfg.n_classes, np.random.default_rng(root.spawn(1)[0]))
    children = np.random.SeedSequence(seed, spawn_key=(1,)).spawn(cfg.n_series)
    return [
        _one_series(cfg, profiles, np.random.default_rng(ss), seed) for ss in children
    ]


@dataclass
class NormStats:
    median: np.ndarray
    iqr: np.ndarray
    channels: tuple = field(default=BAND_NAMES)

    def save(self, path):
        lines = [f"median={','.join(repr(float(v)) for v in self.median)}",
                 f"iqr={','.join(repr(float(v)) for v in self.iqr)}",
                 f"channels={','.join(self.channels)}"]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "NormStats":
        kv = _read_kv(Path(path))
        return cls(
            np.array([float(v) for v in kv["median"].split(",")]),
            np.array([float(v) for v in kv["iqr"].split(",")]),
            tuple(kv["channels"].split(",")),
        )


def compute_stats(series: Sequence[Sits]) -> NormStats:
    """Per-channel median and inter-quartile range over valid pixels only."""
    c = series[0].c
    per_channel = [
        np.concatenate([s.values[:, ch][s.validity] for s in series]) for ch in range(c)
    ]
    q = np.array([np.percentile(v, [25, 50, 75]) for v in per_channel])
    return NormStats(q[:, 1], q[:, 2] - q[:, 0], BAND_NAMES[:c])


def robust_normalize(raw: Sits, stats: NormStats) -> Sits:
    median = np.asarray(stats.median, dtype=np.float64)
    iqr = np.asarray(stats.iqr, dtype=np.float64)
    bad = np.flatnonzero(~(iqr > 0))
    if bad.size:
        name = stats.channels[bad[0]] if bad[0] < len(stats.channels) else str(bad[0])
        raise ValueError(f"zero inter-quartile range in channel {bad[0]} ({name})")
    out = (raw.values - median[None, :, None, None]) / iqr[None, :, None, None]
    if not np.isfinite(out).all():
        raise ValueError("normalized values are not finite")
    return Sits(out.astype(np.float32), raw.dates, raw.validity)


def normalize_labeled(items: Sequence[LabeledSits], stats: NormStats) -> list[LabeledSits]:
    return [
        LabeledSits(robust_normalize(it.sits, stats), it.labels, it.change, it.start_year, it.seed)
        for it in items
    ]


def select_consecutive(s: Sits, n: int, seed) -> Sits:
    """Contiguous run of ``n`` acquisitions starting at a uniformly random index."""
    if s.t < n:
        raise ValueError(f"cannot select {n} consecutive dates from a series of {s.t}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    start = int(rng.integers(0, s.t - n + 1))
    return s.take(range(start, start + n))


# -- on-disk format ---------------------------------------------------------

def _read_kv(path: Path) -> dict[str, str]:
    out = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip() and not line.startswith("#"):
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def write_sits(path, item: Sits | LabeledSits, seed: int | None = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    s = item.sits if isinstance(item, LabeledSits) else item
    t, c, h, w = s.values.shape
    meta = {
        "format": SITS_FORMAT,
        "shape": f"{t},{c},{h},{w}",
        "channels": ",".join(BAND_NAMES[:c]),
        "dates": ",".join(d.isoformat() for d in s.dates),
    }
    s.values.astype("<f4").tofile(path / "values.f32")
    s.validity.astype(np.uint8).tofile(path / "validity.u8")
    if isinstance(item, LabeledSits):
        meta["years"] = str(item.labels.shape[0])
        meta["start_year"] = str(item.start_year)
        item.labels.astype(np.uint8).tofile(path / "labels.u8")
        item.change.astype(np.uint8).tofile(path / "change.u8")
        seed = item.seed if seed is None else seed
    if seed is not None:
        meta["seed"] = str(seed)
    (path / "meta.txt").write_text("".join(f"{k}={v}\n" for k, v in meta.items()), encoding="utf-8")
    return path


def read_sits(path) -> Sits | LabeledSits:
    path = Path(path)
    meta = _read_kv(path / "meta.txt")
    if meta.get("format") != SITS_FORMAT:
        raise ValueError(f"{path}: unknown format {meta.get('format')!r}")
    t, c, h, w = (int(v) for v in meta["shape"].split(","))
    values = np.fromfile(path / "values.f32", dtype="<f4").reshape(t, c, h, w)
    validity = np.fromfile(path / "validity.u8", dtype=np.uint8).reshape(t, h, w).astype(bool)
    s = Sits(values.astype(np.float32), meta["dates"].split(","), validity)
    if "years" not in meta:
        return s
    n_years = int(meta["years"])
    labels = np.fromfile(path / "labels.u8", dtype=np.uint8).reshape(n_years, h, w)
    change = np.fromfile(path / "change.u8", dtype=np.uint8).reshape(h, w).astype(bool)
    seed = int(meta["seed"]) if "seed" in meta else None
    return LabeledSits(s, labels, change, int(meta["start_year"]), seed)


def write_dataset(root, items: Sequence[LabeledSits]) -> Path:
    root = Path(root)
    for i, it in enumerate(items):
        write_sits(root / f"series_{i:05d}", it)
    return root


def read_dataset(root) -> list:
    return [read_sits(p) for p in sorted(Path(root).glob("series_*")) if p.is_dir()]
