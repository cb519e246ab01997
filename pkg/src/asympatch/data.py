"""Dataset ingestion and the two-view augmentation pipeline.

Two sources are supported: the classic 3073-byte-record binary image format
(1 label byte + 32x32x3 pixels stored as full R, G, B planes, row-major) and
a deterministic synthetic generator of class-distinguishable grating images,
which is the default at desk scale — nothing is ever downloaded.

``augment`` implements random-resized-crop with bilinear resampling plus the
usual photometric ops, and crucially returns the :class:`~asympatch.geometry.CropBox`
alongside the pixels: patch-overlap geometry depends only on the crop rect
and flip flag, never on color ops. Crop coordinates are continuous
(sub-pixel); the identity configuration (full-image crop at native size, all
probabilities zero) reproduces the source pixels exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .geometry import CropBox, Rect

CIFAR_RECORD_BYTES = 3073
CIFAR_SIDE = 32


@dataclass
class ImageRecord:
    """One image: (H, W, 3) float pixels in [0, 1], label, and a source id."""

    pixels: np.ndarray
    label: int
    source_id: str


@dataclass(frozen=True)
class AugmentParams:
    """Augmentation knobs for one view family.

    The CIFAR-style preset: crop area fraction in [0.15, 1.0], aspect ratio
    in [3/4, 4/3], flip 0.5, color jitter 0.8 with max intensities
    0.4/0.4/0.4/0.1 (brightness/contrast/saturation/hue), grayscale 0.2, no
    blur, no solarization. The ImageNet-style presets add blur/solarization
    and a 0.2 saturation cap behind the same fields.
    """

    view_size: int
    area_range: tuple[float, float] = (0.15, 1.0)
    aspect_range: tuple[float, float] = (0.75, 4.0 / 3.0)
    flip_prob: float = 0.5
    jitter_prob: float = 0.8
    brightness: float = 0.4
    contrast: float = 0.4
    saturation: float = 0.4
    hue: float = 0.1
    grayscale_prob: float = 0.2
    blur_prob: float = 0.0
    blur_sigma: tuple[float, float] = (0.1, 2.0)
    solarize_prob: float = 0.0
    solarize_threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.area_range[0] <= self.area_range[1] <= 1.0:
            raise ValueError("area range must satisfy 0 < lo <= hi <= 1")
        if not 0.0 < self.aspect_range[0] <= self.aspect_range[1]:
            raise ValueError("invalid aspect ratio range")
        for name in ("flip_prob", "jitter_prob", "grayscale_prob",
                     "blur_prob", "solarize_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a probability, got {v}")


def cifar_augment_params(view_size: int = CIFAR_SIDE) -> AugmentParams:
    """Table of CIFAR augmentation parameters; views 1 and 2 share it."""
    return AugmentParams(view_size=view_size)


def imagenet_augment_params(view_size: int = 224) -> tuple[AugmentParams, AugmentParams]:
    """ImageNet-style (view-1, view-2) parameter pair: asymmetric blur and
    solarization only on view 2."""
    base = AugmentParams(
        view_size=view_size,
        area_range=(0.08, 1.0),
        saturation=0.2,
    )
    t1 = replace(base, blur_prob=1.0)
    t2 = replace(base, blur_prob=0.1, solarize_prob=0.2)
    return t1, t2


def identity_augment_params(view_size: int) -> AugmentParams:
    """Deterministic pass-through view: full-image crop, no color ops."""
    return AugmentParams(
        view_size=view_size,
        area_range=(1.0, 1.0),
        aspect_range=(1.0, 1.0),
        flip_prob=0.0,
        jitter_prob=0.0,
        grayscale_prob=0.0,
    )


# ---------------------------------------------------------------------------
# ingestion

def load_cifar(path) -> list[ImageRecord]:
    """Parse a binary file of 3073-byte records into image records.

    Byte layout per record: 1 label byte, then 1024 red bytes, 1024 green,
    1024 blue, each plane row-major. Pixels are scaled to [0, 1].
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) == 0 or len(raw) % CIFAR_RECORD_BYTES:
        raise ValueError(
            f"{path}: size {len(raw)} is not a multiple of {CIFAR_RECORD_BYTES}"
        )
    data = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
    labels = data[:, 0]
    bad = np.flatnonzero(labels > 9)
    if bad.size:
        raise ValueError(
            f"{path}: record {bad[0]} has label {labels[bad[0]]} > 9"
        )
    planes = data[:, 1:].reshape(-1, 3, CIFAR_SIDE, CIFAR_SIDE)
    pixels = planes.transpose(0, 2, 3, 1).astype(float) / 255.0
    return [
        ImageRecord(pixels=pixels[i], label=int(labels[i]), source_id=f"cifar:{i}")
        for i in range(pixels.shape[0])
    ]


def synth_dataset(n_per_class: int, n_classes: int, image_size: int,
                  seed: int) -> list[ImageRecord]:
    """Deterministic grating images with class-dependent orientation,
    frequency, and color, separable by a pixel-mean classifier."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if n_classes < 1:
        raise ValueError("n_classes must be >= 1")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:image_size, 0:image_size] / image_size
    records = []
    for c in range(n_classes):
        theta = np.pi * c / n_classes
        freq = 2.0 + 1.5 * c
        hue = 2.0 * np.pi * c / max(n_classes, 2)
        color = 0.35 + 0.3 * (1.0 + np.array([
            np.cos(hue),
            np.cos(hue - 2.0 * np.pi / 3.0),
            np.cos(hue - 4.0 * np.pi / 3.0),
        ]))
        for i in range(n_per_class):
            phase = rng.uniform(0.0, 2.0 * np.pi)
            wave = np.sin(2.0 * np.pi * freq *
                          (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
            base = 0.5 + 0.45 * wave
            pix = base[:, :, None] * color[None, None, :]
            pix = pix + rng.normal(0.0, 0.02, size=pix.shape)
            records.append(ImageRecord(
                pixels=np.clip(pix, 0.0, 1.0),
                label=c,
                source_id=f"synth:{seed}:{c}:{i}",
            ))
    return records


def synth_manifest(n_per_class: int, n_classes: int, image_size: int,
                   seed: int) -> str:
    """Plain-text header describing a generated fixture set."""
    return (
        f"seed={seed}\nclasses={n_classes}\nn_per_class={n_per_class}\n"
        f"image_size={image_size}\n"
    )


# ---------------------------------------------------------------------------
# augmentation

def augment(record: ImageRecord, params: AugmentParams,
            rng: np.random.Generator) -> tuple[np.ndarray, CropBox]:
    """Random-resized-crop + photometric ops; returns (pixels, crop box).

    All randomness flows through ``rng``. The returned box carries the crop
    rect in source coordinates, the flip flag, and the view size — exactly
    what the sampler needs to evaluate patch-overlap geometry.
    """
    src = np.asarray(record.pixels, dtype=float)
    h_img, w_img = src.shape[:2]
    rect = _sample_crop_rect(w_img, h_img, params, rng)
    flip = bool(rng.random() < params.flip_prob)
    view = _resize_bilinear(src, rect, params.view_size, flip)
    view = _color_ops(view, params, rng)
    box = CropBox(rect=rect, flip=flip, view_size=params.view_size,
                  source_size=(float(w_img), float(h_img)))
    return view, box


def _sample_crop_rect(w_img, h_img, params, rng) -> Rect:
    lo, hi = params.area_range
    alo, ahi = params.aspect_range
    for _ in range(10):
        area = rng.uniform(lo, hi) * w_img * h_img
        ar = np.exp(rng.uniform(np.log(alo), np.log(ahi)))
        w = np.sqrt(area * ar)
        h = np.sqrt(area / ar)
        if w < 1.0 or h < 1.0:
            continue              # degenerate crop: resample
        if w <= w_img and h <= h_img:
            x0 = rng.uniform(0.0, w_img - w)
            y0 = rng.uniform(0.0, h_img - h)
            return Rect(x0, y0, x0 + w, y0 + h)
    # fallback mirrors the usual random-resized-crop behavior: centered,
    # clamped to the image
    w = min(float(w_img), np.sqrt(hi * w_img * h_img))
    h = min(float(h_img), w)
    x0 = (w_img - w) / 2.0
    y0 = (h_img - h) / 2.0
    return Rect(x0, y0, x0 + w, y0 + h)


def _resize_bilinear(src: np.ndarray, rect: Rect, view_size: int,
                     flip: bool) -> np.ndarray:
    """Sample the crop rect onto a view_size grid with bilinear weights.

    View pixel (u, v) shows source coordinate
    ``x = x0 + (u + 0.5) * sx`` (mirrored when flipped), which makes the
    identity configuration land exactly on pixel centers and reproduce the
    source bit-for-bit.
    """
    h_img, w_img = src.shape[:2]
    sx = (rect.x1 - rect.x0) / view_size
    sy = (rect.y1 - rect.y0) / view_size
    u = np.arange(view_size) + 0.5
    if flip:
        xs = rect.x0 + (view_size - u) * sx
    else:
        xs = rect.x0 + u * sx
    ys = rect.y0 + u * sy
    # continuous coords -> pixel-index space, clamped at the borders
    xi = np.clip(xs - 0.5, 0.0, w_img - 1.0)
    yi = np.clip(ys - 0.5, 0.0, h_img - 1.0)
    x0 = np.floor(xi).astype(int)
    y0 = np.floor(yi).astype(int)
    x1 = np.minimum(x0 + 1, w_img - 1)
    y1 = np.minimum(y0 + 1, h_img - 1)
    fx = (xi - x0)[None, :, None]
    fy = (yi - y0)[:, None, None]
    top = src[y0][:, x0] * (1.0 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1.0 - fx) + src[y1][:, x1] * fx
    return top * (1.0 - fy) + bot * fy


def _luma(x: np.ndarray) -> np.ndarray:
    return 0.299 * x[..., 0] + 0.587 * x[..., 1] + 0.114 * x[..., 2]


def _color_ops(view: np.ndarray, params: AugmentParams,
               rng: np.random.Generator) -> np.ndarray:
    """Photometric ops in a fixed order: brightness, contrast, saturation,
    hue (each gated independently), then grayscale, blur, solarize."""
    x = view
    if params.jitter_prob > 0.0:
        if rng.random() < params.jitter_prob and params.brightness > 0.0:
            f = rng.uniform(1.0 - params.brightness, 1.0 + params.brightness)
            x = np.clip(x * f, 0.0, 1.0)
        if rng.random() < params.jitter_prob and params.contrast > 0.0:
            f = rng.uniform(1.0 - params.contrast, 1.0 + params.contrast)
            mean = _luma(x).mean()
            x = np.clip((x - mean) * f + mean, 0.0, 1.0)
        if rng.random() < params.jitter_prob and params.saturation > 0.0:
            f = rng.uniform(1.0 - params.saturation, 1.0 + params.saturation)
            l = _luma(x)[..., None]
            x = np.clip((x - l) * f + l, 0.0, 1.0)
        if rng.random() < params.jitter_prob and params.hue > 0.0:
            shift = rng.uniform(-params.hue, params.hue)
            x = _shift_hue(x, shift)
    if params.grayscale_prob > 0.0 and rng.random() < params.grayscale_prob:
        x = np.repeat(_luma(x)[..., None], 3, axis=2)
    if params.blur_prob > 0.0 and rng.random() < params.blur_prob:
        sigma = rng.uniform(*params.blur_sigma)
        x = np.stack([ndimage.gaussian_filter(x[..., c], sigma)
                      for c in range(3)], axis=2)
        x = np.clip(x, 0.0, 1.0)
    if params.solarize_prob > 0.0 and rng.random() < params.solarize_prob:
        x = np.where(x >= params.solarize_threshold, 1.0 - x, x)
    return x


def _shift_hue(x: np.ndarray, shift: float) -> np.ndarray:
    h, s, v = _rgb_to_hsv(x)
    return _hsv_to_rgb((h + shift) % 1.0, s, v)


def _rgb_to_hsv(x):
    r, g, b = x[..., 0], x[..., 1], x[..., 2]
    maxc = x.max(axis=-1)
    minc = x.min(axis=-1)
    v = maxc
    span = maxc - minc
    s = np.where(maxc > 0.0, span / np.where(maxc > 0.0, maxc, 1.0), 0.0)
    safe = np.where(span > 0.0, span, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(maxc == r, bc - gc,
                 np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(span > 0.0, (h / 6.0) % 1.0, 0.0)
    return h, s, v


def _hsv_to_rgb(h, s, v):
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(int) % 6
    choices = [
        (v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q),
    ]
    r = np.select([i == k for k in range(6)], [c[0] for c in choices])
    g = np.select([i == k for k in range(6)], [c[1] for c in choices])
    b = np.select([i == k for k in range(6)], [c[2] for c in choices])
    return np.stack([r, g, b], axis=-1)
