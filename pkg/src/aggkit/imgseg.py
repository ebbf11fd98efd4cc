"""Backdrop color segmentation of aggregate photographs.

Pipeline: RGB -> CIE L*a*b* (chroma rescaled per image), histogram turning
points for the backdrop and object colors, chroma distance to the object
color, thresholding, then morphological cleaning.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from skimage import color, filters, io, segmentation

from .errors import AggkitError, SegmentationError, SingleClusterError

_N_BINS = 256
_SMOOTH = 5
_MIN_PEAK_GAP = 10
_MIN_CLUSTER_FRAC = 0.02
_VALLEY = 0.5
_STRUCT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True, eq=False)
class LabImage:
    """L* in [0, 100]; a* and b* min-max rescaled to [0, 1] within the image."""

    L: np.ndarray
    a: np.ndarray
    b: np.ndarray
    a_range: tuple[float, float]
    b_range: tuple[float, float]

    @property
    def shape(self) -> tuple[int, int]:
        return self.L.shape


@dataclass(frozen=True, eq=False)
class BinaryMask:
    data: np.ndarray
    scale: float | None = None  # length units per pixel

    def __post_init__(self):
        object.__setattr__(self, "data", np.asarray(self.data, dtype=bool))
        if self.data.ndim != 2:
            raise AggkitError("mask must be 2-D")

    @property
    def shape(self):
        return self.data.shape

    @property
    def area_px(self) -> int:
        return int(self.data.sum())

    def n_components(self) -> int:
        return int(ndimage.label(self.data, structure=_STRUCT)[1])


def _as_rgb8(rgb) -> np.ndarray:
    img = np.asarray(rgb)
    if img.ndim == 2:
        img = np.stack([img] * 3, axis=-1)
    if img.ndim != 3 or img.shape[2] < 3:
        raise AggkitError(f"expected an RGB image, got shape {img.shape}")
    img = img[..., :3]
    if img.dtype != np.uint8:
        if np.issubdtype(img.dtype, np.floating) and img.max() <= 1.0:
            img = np.rint(img * 255)
        img = np.clip(img, 0, 255).astype(np.uint8)
    return img


def _minmax(x: np.ndarray) -> tuple[np.ndarray, tuple[float, float]]:
    lo, hi = float(x.min()), float(x.max())
    # below this spread the channel is neutral up to conversion round-off
    if hi - lo < 1e-2:
        return np.full(x.shape, 0.5), (lo, hi)
    return (x - lo) / (hi - lo), (lo, hi)


def rgb_to_lab(rgb) -> LabImage:
    """Convert 8-bit RGB to L*a*b* under D65 and rescale the chroma channels.

    A channel with no spread maps to 0.5, so neutral-only images sit at the
    midpoint.
    """
    lab = color.rgb2lab(_as_rgb8(rgb), illuminant="D65")
    a, ar = _minmax(lab[..., 1])
    b, br = _minmax(lab[..., 2])
    return LabImage(lab[..., 0], a, b, ar, br)


def _climb(h: np.ndarray, i: int) -> int:
    n = len(h)
    while True:
        best = i
        if i > 0 and h[i - 1] > h[best]:
            best = i - 1
        if i < n - 1 and h[i + 1] > h[best]:
            best = i + 1
        if best == i:
            return i
        i = best


def representative_colors(channel) -> tuple[float, float]:
    """Backdrop and object values of a two-tone channel.

    The smoothed CDF is scanned for its two sharpest upward bends (second
    difference maxima at least 10 bins apart). Each is refined to the mean
    of the pixels near the adjacent histogram mode, and the smoothed
    histogram must fall below half the lower mode between the two. The
    cluster holding more pixels is the backdrop; on a tie the lower value is.

    Returns
    -------
    (bg_value, fg_value)

    Raises
    ------
    SingleClusterError
        If the histogram does not show two distinct populations.
    """
    x = np.asarray(channel, dtype=float).ravel()
    x = x[np.isfinite(x)]
    if x.size == 0:
        raise SingleClusterError("empty channel")
    x = np.clip(x, 0.0, 1.0)
    hist = np.histogram(x, bins=_N_BINS, range=(0.0, 1.0))[0].astype(float) / x.size
    # empty guard bins let masses in the first or last bin bend the CDF too
    guard = _SMOOTH + 1
    cdf = np.cumsum(np.pad(hist, guard))
    pad = _SMOOTH // 2
    sm = np.convolve(np.pad(cdf, pad, mode="edge"), np.ones(_SMOOTH) / _SMOOTH, mode="valid")
    d2 = np.full(len(sm), -np.inf)
    d2[1:-1] = sm[2:] - 2.0 * sm[1:-1] + sm[:-2]
    p1 = int(np.argmax(d2))
    if not d2[p1] > 0:
        raise SingleClusterError("channel histogram has a single cluster")
    hsm = np.convolve(np.pad(hist, pad), np.ones(_SMOOTH) / _SMOOTH, mode="valid")
    bins = np.minimum((x * _N_BINS).astype(int), _N_BINS - 1)

    def mode_near(p):
        m = _climb(hsm, int(np.clip(p - guard + pad, 0, _N_BINS - 1)))
        return max(range(max(0, m - pad), min(_N_BINS, m + pad + 1)), key=lambda k: hist[k])

    m1 = mode_near(p1)
    # a second population must start after the first has fallen off again,
    # so a concave stretch has to separate the two rising edges, and the
    # smoothed histogram must dip well below both modes between them
    floor = -0.05 * d2[p1]
    modes = None
    for q in np.argsort(-d2, kind="stable"):
        q = int(q)
        if d2[q] <= 0.05 * d2[p1]:
            break
        if abs(q - p1) < _MIN_PEAK_GAP:
            continue
        lo_i, hi_i = min(p1, q), max(p1, q)
        if not d2[lo_i:hi_i].min() < floor:
            continue
        m2 = mode_near(q)
        a, b = min(m1, m2), max(m1, m2)
        if b - a < 2 or hsm[a:b + 1].min() > _VALLEY * min(hsm[a], hsm[b]):
            continue
        modes = (a, b)
        break
    if modes is None:
        raise SingleClusterError("channel histogram has a single cluster")
    values = [float(x[np.abs(bins - m) <= 2].mean()) for m in modes]
    lo, hi = values
    if hi - lo < _MIN_PEAK_GAP / _N_BINS / 2:
        raise SingleClusterError("representative colors coincide")
    cut = 0.5 * (lo + hi)
    n_hi = int(np.count_nonzero(x > cut))
    n_lo = x.size - n_hi
    if min(n_lo, n_hi) < _MIN_CLUSTER_FRAC * x.size:
        raise SingleClusterError("second color cluster is too small")
    return (lo, hi) if n_lo >= n_hi else (hi, lo)


def distance_map(lab: LabImage, ref, gamma: float = 2.0, normalize: bool = True) -> np.ndarray:
    """Chroma distance ``|a-a0|**gamma + |b-b0|**gamma`` to a reference color.

    With ``normalize`` the result is min-max scaled to [0, 1].
    """
    if gamma < 1:
        raise AggkitError("gamma must be >= 1")
    a0, b0 = ref
    d = np.abs(lab.a - a0) ** gamma + np.abs(lab.b - b0) ** gamma
    if normalize:
        span = d.max() - d.min()
        d = (d - d.min()) / span if span > 0 else np.zeros_like(d)
    return d


def _pad_close(m: np.ndarray, iterations: int) -> np.ndarray:
    p = iterations + 1
    big = np.pad(m, p)
    big = ndimage.binary_dilation(big, _STRUCT, iterations=iterations)
    big = ndimage.binary_erosion(big, _STRUCT, iterations=iterations, border_value=1)
    return big[p:-p, p:-p]


def _open(m: np.ndarray, iterations: int) -> np.ndarray:
    e = ndimage.binary_erosion(m, _STRUCT, iterations=iterations, border_value=1)
    return ndimage.binary_dilation(e, _STRUCT, iterations=iterations)


def clean_mask(mask, iterations: int = 2, clear_border: bool = True, largest_only: bool = False) -> np.ndarray:
    """Open, close, fill holes, drop border-touching components."""
    m = np.asarray(mask, dtype=bool)
    m = _open(m, iterations)
    m = _pad_close(m, iterations) & True
    m = ndimage.binary_fill_holes(m)
    if clear_border:
        m = segmentation.clear_border(m)
    if largest_only and m.any():
        lab, n = ndimage.label(m, structure=_STRUCT)
        sizes = np.bincount(lab.ravel())[1:]
        m = lab == (int(np.argmax(sizes)) + 1)
    return m


def threshold_value(gray, method: str = "otsu", value: float | None = None) -> float:
    g = np.asarray(gray, dtype=float)
    if method == "fixed":
        if value is None:
            raise AggkitError("fixed thresholding needs a value")
        return float(value)
    if method == "otsu":
        if g.min() == g.max():
            return float(g.min())
        return float(filters.threshold_otsu(g, nbins=_N_BINS))
    raise AggkitError(f"no global threshold for method {method!r}")


def binarize_and_clean(gray, method: str = "otsu", value: float | None = None,
                       window: int | None = None, offset: float = 0.02,
                       iterations: int = 2, clear_border: bool = True,
                       largest_only: bool = False, scale: float | None = None) -> BinaryMask:
    """Threshold a distance raster and clean the result.

    Foreground is where the raster is at or below the threshold, since low
    values mean close to the object color.

    Parameters
    ----------
    method : {'otsu', 'fixed', 'adaptive'}
        ``adaptive`` compares each pixel with its local mean minus ``offset``
        over a square ``window`` (default 1/8 of the shorter side).
    """
    g = np.asarray(gray, dtype=float)
    if method == "adaptive":
        w = window or max(3, min(g.shape) // 8)
        local = ndimage.uniform_filter(g, size=int(w), mode="reflect")
        fg = g <= local - offset
    else:
        fg = g <= threshold_value(g, method, value)
    m = clean_mask(fg, iterations, clear_border, largest_only)
    if not m.any():
        raise SegmentationError("no foreground left after cleaning")
    return BinaryMask(m, scale)


def segment(rgb, gamma: float = 2.0, method: str = "otsu", value: float | None = None,
            window: int | None = None, offset: float = 0.02, largest_only: bool = False,
            clear_border: bool = True, ref_color=None) -> BinaryMask:
    """Segment objects photographed against a uniform colored backdrop.

    ``ref_color`` ``(a0, b0)`` in scaled chroma bypasses automatic color
    detection, for scenes where it reports a single cluster.
    """
    lab = rgb_to_lab(rgb)
    if ref_color is None:
        ref_color = object_color(lab)
    d = distance_map(lab, ref_color, gamma)
    return binarize_and_clean(d, method, value, window, offset,
                              clear_border=clear_border, largest_only=largest_only)


def object_color(lab: LabImage) -> tuple[float, float]:
    """Median scaled chroma of pixels nearer the object tone than the backdrop.

    The channel (a* or b*) with the wider backdrop/object gap decides the split.
    """
    best = None
    for ch in (lab.a, lab.b):
        try:
            bg, fg = representative_colors(ch)
        except SingleClusterError:
            continue
        if best is None or abs(fg - bg) > abs(best[2] - best[1]):
            best = (ch, bg, fg)
    if best is None:
        raise SingleClusterError("no chroma channel separates object from backdrop")
    ch, bg, fg = best
    near = np.abs(ch - fg) < np.abs(ch - bg)
    return float(np.median(lab.a[near])), float(np.median(lab.b[near]))


def read_image(path) -> np.ndarray:
    try:
        img = io.imread(str(path))
    except (OSError, ValueError) as exc:
        raise AggkitError(f"cannot decode image {path}: {exc}") from exc
    return _as_rgb8(img)


def write_pgm(mask, path) -> None:
    """Binary PGM (P5): 255 foreground, 0 background."""
    m = mask.data if isinstance(mask, BinaryMask) else np.asarray(mask, dtype=bool)
    h, w = m.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write((m.astype(np.uint8) * 255).tobytes())


def read_pgm(path, scale: float | None = None) -> BinaryMask:
    """Read a P5 or P2 graymap; nonzero pixels are foreground."""
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise AggkitError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos].decode("ascii"))
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == "P5":
        dtype = np.uint8 if maxval < 256 else ">u2"
        body = data[pos + 1:]
        n = w * h * (1 if maxval < 256 else 2)
        if len(body) < n:
            raise AggkitError(f"{path}: truncated PGM raster")
        arr = np.frombuffer(body[:n], dtype=dtype).reshape(h, w)
    elif magic == "P2":
        arr = np.array(data[pos:].split()[: w * h], dtype=int)
        if arr.size < w * h:
            raise AggkitError(f"{path}: truncated PGM raster")
        arr = arr.reshape(h, w)
    else:
        raise AggkitError(f"{path}: not a PGM file ({magic})")
    return BinaryMask(arr > 0, scale)
