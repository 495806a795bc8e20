"""Page image representation, binarization, ink profiles, and elastic morphing.

Images are plain numpy arrays: grayscale pages are 2-D uint8 (0 = black ink,
255 = white paper), binary masks are 2-D bool (True = ink). All operations
are pure; RNG-driven ones take an explicit seed and are deterministic.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import DomainError, ParameterError
from .glyphs import DEFAULT_GLYPHS

__all__ = [
    "MorphParams",
    "InkProfile",
    "binarize",
    "otsu_threshold",
    "ink_profile",
    "moving_average",
    "elastic_morph",
    "render_word",
    "synth_word",
    "mask_to_gray",
    "gray_to_mask",
    "load_page",
    "save_mask_pgm",
    "load_pgm",
    "save_pgm",
    "mask_to_png_bytes",
]

_NOISE_STREAM = 0x6E6F6973  # distinct RNG stream for salt-and-pepper flips


@dataclass(frozen=True)
class MorphParams:
    """Elastic morphing parameters: peak displacement, field smoothness, seed."""

    amplitude: float = 2.0
    smoothness: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ParameterError("amplitude must be >= 0")
        if self.smoothness <= 0:
            raise ParameterError("smoothness must be > 0")


@dataclass(frozen=True)
class InkProfile:
    """Per-row or per-column ink counts plus their low-pass filtered version."""

    axis: str  # "horizontal" (per row) or "vertical" (per column)
    counts: np.ndarray
    smoothed: np.ndarray


def otsu_threshold(img: np.ndarray) -> int:
    """Global Otsu threshold: argmax over t of between-class variance for the
    split {pixel <= t} vs {pixel > t}; ties resolved toward the smallest t."""
    img = np.asarray(img)
    if img.size == 0:
        raise DomainError("empty image")
    hist = np.bincount(img.ravel().astype(np.int64), minlength=256).astype(np.float64)
    total = hist.sum()
    w0 = np.cumsum(hist)
    sum0 = np.cumsum(hist * np.arange(256))
    w1 = total - w0
    mean_total = sum0[-1]
    # between-class variance w0*w1*(mu0-mu1)^2, guarded against empty classes
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = sum0 / w0
        mu1 = (mean_total - sum0) / w1
        sigma_b = w0 * w1 * (mu0 - mu1) ** 2
    sigma_b[~np.isfinite(sigma_b)] = 0.0
    return int(np.argmax(sigma_b))


def binarize(img: np.ndarray) -> np.ndarray:
    """Threshold a grayscale page with global Otsu; dark pixels become ink."""
    img = np.asarray(img)
    if img.size == 0 or img.ndim != 2:
        raise DomainError("empty image")
    t = otsu_threshold(img)
    return img <= t


def moving_average(values: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average with symmetric-reflection edge handling.

    The symmetric extension makes the filter mass preserving: the sum of the
    output equals the sum of the input up to float rounding.
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    if window <= 0 or window % 2 == 0:
        raise ParameterError("window must be odd and positive")
    if window > n:
        raise ParameterError("window larger than profile length")
    r = window // 2
    if r == 0:
        return values.copy()
    padded = np.pad(values, r, mode="symmetric")
    kernel = np.full(window, 1.0 / window)
    return np.convolve(padded, kernel, mode="valid")


def ink_profile(mask: np.ndarray, axis: str, window: int) -> InkProfile:
    """Ink counts per row (horizontal) or per column (vertical), smoothed."""
    mask = np.asarray(mask, dtype=bool)
    if mask.size == 0:
        raise DomainError("empty image")
    if axis == "horizontal":
        counts = mask.sum(axis=1)
    elif axis == "vertical":
        counts = mask.sum(axis=0)
    else:
        raise ParameterError(f"unknown axis {axis!r}")
    smoothed = moving_average(counts.astype(np.float64), window)
    return InkProfile(axis=axis, counts=counts.astype(np.int64), smoothed=smoothed)


def _displacement_field(shape: tuple[int, int], params: MorphParams) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(params.seed)
    dy = rng.uniform(-params.amplitude, params.amplitude, size=shape)
    dx = rng.uniform(-params.amplitude, params.amplitude, size=shape)
    dy = gaussian_filter(dy, sigma=params.smoothness, mode="reflect")
    dx = gaussian_filter(dx, sigma=params.smoothness, mode="reflect")
    np.clip(dy, -params.amplitude, params.amplitude, out=dy)
    np.clip(dx, -params.amplitude, params.amplitude, out=dx)
    return dy, dx


def elastic_morph(mask: np.ndarray, params: MorphParams) -> np.ndarray:
    """Displace pixels by a Gaussian-smoothed random field clipped to the
    amplitude; nearest-neighbor resampling keeps the image strictly binary.

    Deterministic for a given seed; amplitude 0 is the identity.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.size == 0:
        raise DomainError("empty image")
    if params.amplitude == 0:
        return mask.copy()
    h, w = mask.shape
    dy, dx = _displacement_field((h, w), params)
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    src_y = np.clip(np.rint(yy + dy).astype(np.int64), 0, h - 1)
    src_x = np.clip(np.rint(xx + dx).astype(np.int64), 0, w - 1)
    return mask[src_y, src_x]


def render_word(
    text: str,
    glyphs: dict[str, np.ndarray] | None = None,
    scale: int = 1,
    gap: int = 1,
    pad: int = 0,
) -> np.ndarray:
    """Render glyph bitmaps left to right into a binary word image."""
    if glyphs is None:
        glyphs = DEFAULT_GLYPHS
    if scale < 1:
        raise ParameterError("scale must be >= 1")
    if not text:
        raise DomainError("empty text")
    for ch in text:
        if ch not in glyphs:
            raise DomainError(f"unknown glyph {ch!r}")
    tiles = [glyphs[ch] for ch in text]
    height = max(t.shape[0] for t in tiles)
    parts = []
    for i, tile in enumerate(tiles):
        if i > 0 and gap > 0:
            parts.append(np.zeros((height, gap), dtype=bool))
        if tile.shape[0] < height:
            tile = np.pad(tile, ((0, height - tile.shape[0]), (0, 0)))
        parts.append(tile)
    word = np.concatenate(parts, axis=1)
    if scale > 1:
        word = np.kron(word, np.ones((scale, scale), dtype=bool))
    if pad > 0:
        word = np.pad(word, pad)
    return word


def synth_word(
    text: str,
    glyphs: dict[str, np.ndarray] | None = None,
    scale: int = 2,
    morph: MorphParams | None = None,
    noise_p: float = 0.0,
    gap: int = 1,
    pad: int | None = None,
) -> tuple[np.ndarray, str]:
    """Generate one synthetic word image plus its ground-truth label.

    Renders the glyphs, applies elastic morphing, then flips pixels with
    probability noise_p (salt and pepper). Fully deterministic per seed.
    """
    if morph is None:
        morph = MorphParams(amplitude=0.0, smoothness=1.0, seed=0)
    if not 0.0 <= noise_p < 1.0:
        raise ParameterError("noise_p must be in [0, 1)")
    if pad is None:
        pad = int(math.ceil(morph.amplitude)) + 1
    img = render_word(text, glyphs=glyphs, scale=scale, gap=gap, pad=pad)
    img = elastic_morph(img, morph)
    if noise_p > 0:
        rng = np.random.default_rng([morph.seed, _NOISE_STREAM])
        flips = rng.random(img.shape) < noise_p
        img = img ^ flips
    return img, text


def mask_to_gray(mask: np.ndarray) -> np.ndarray:
    """Render a binary mask as uint8 grayscale (ink 0, background 255)."""
    return np.where(np.asarray(mask, dtype=bool), 0, 255).astype(np.uint8)


def gray_to_mask(img: np.ndarray) -> np.ndarray:
    return binarize(img)


# ---------------------------------------------------------------------------
# File formats: PGM (P5) and PNG grayscale.

def save_pgm(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        fh.write(img.tobytes())


def load_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    return _parse_pgm(data)


def _parse_pgm(data: bytes) -> np.ndarray:
    if not data.startswith(b"P5"):
        raise DomainError("not a P5 PGM file")
    # header = magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments allowed
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    width, height, maxval = (int(t) for t in tokens)
    if maxval > 255:
        raise DomainError("16-bit PGM not supported")
    expected = width * height
    pixels = np.frombuffer(data, dtype=np.uint8, count=expected, offset=pos)
    return pixels.reshape(height, width).copy()


def save_mask_pgm(path, mask: np.ndarray) -> None:
    """Write a binary mask as a 0/255 P5 PGM (ink rendered as 0)."""
    save_pgm(path, mask_to_gray(mask))


def load_page(path) -> np.ndarray:
    """Read a PGM (P5) or PNG grayscale page scan as 2-D uint8."""
    path = str(path)
    if path.lower().endswith((".pgm", ".pnm")):
        return load_pgm(path)
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def mask_to_png_bytes(mask: np.ndarray) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(mask_to_gray(mask)).save(buf, format="PNG")
    return buf.getvalue()
