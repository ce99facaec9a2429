"""Shared domain types and run configuration.

Images are wrapped in :class:`GrayImage`; intermediate feature maps stay
plain 2-D float arrays for speed. Patch matrices keep patches as columns,
flattened row-major, so a filter row dotted with a column is the same
number produced by sliding the reshaped kernel over the image.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Optional

import numpy as np

MAX_FILTERS = 16  # packed pixel codes must fit 16-bit integers

PCA = "pca"
DAE = "dae"


@dataclass(frozen=True)
class GrayImage:
    """Grayscale image, row-major pixels in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError("image must be a 2-D array with positive size")
        if not np.isfinite(p).all():
            raise ValueError("image contains non-finite pixels")
        if p.min() < 0.0 or p.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        object.__setattr__(self, "pixels", p)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class PatchShape:
    """Receptive field size; both sides odd so zero padding is symmetric."""

    k1: int
    k2: int

    def __post_init__(self):
        for side in (self.k1, self.k2):
            if side < 1:
                raise ValueError("patch sides must be >= 1")
            if side % 2 == 0:
                raise ValueError("patch side must be odd")

    @property
    def dim(self) -> int:
        return self.k1 * self.k2


@dataclass(frozen=True)
class PatchMatrix:
    """Column-stacked flattened patches, shape (k1*k2, m)."""

    shape: PatchShape
    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != self.shape.dim:
            raise ValueError("patch data must be (k1*k2, m)")
        if d.shape[1] < 1:
            raise ValueError("patch matrix needs at least one column")
        if not np.isfinite(d).all():
            raise ValueError("patch matrix contains non-finite entries")
        object.__setattr__(self, "data", d)

    @property
    def columns(self) -> int:
        return self.data.shape[1]


ORTHO_TOL = 1e-8


@dataclass(frozen=True)
class FilterBank:
    """Learned convolution weights for one layer.

    ``weights`` rows reshape row-major to k1 x k2 kernels. Banks learned by
    the autoencoder carry per-filter biases; principal-component banks have
    orthonormal rows and optionally keep the full eigenvalue spectrum for
    diagnostics.
    """

    layer_kind: str
    shape: PatchShape
    weights: np.ndarray
    biases: Optional[np.ndarray] = None
    spectrum: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.layer_kind not in (PCA, DAE):
            raise ValueError("layer_kind must be 'pca' or 'dae'")
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[1] != self.shape.dim:
            raise ValueError("weights must be (L, k1*k2)")
        if not np.isfinite(w).all():
            raise ValueError("weights contain non-finite entries")
        object.__setattr__(self, "weights", w)
        if self.layer_kind == DAE:
            if self.biases is None:
                raise ValueError("autoencoder bank requires biases")
            b = np.asarray(self.biases, dtype=np.float64)
            if b.shape != (w.shape[0],) or not np.isfinite(b).all():
                raise ValueError("biases must be a finite length-L vector")
            object.__setattr__(self, "biases", b)
        elif self.biases is not None:
            raise ValueError("pca bank must not carry biases")
        if self.layer_kind == PCA:
            gram = w @ w.T
            resid = np.abs(gram - np.eye(w.shape[0])).max()
            if resid >= ORTHO_TOL:
                raise ValueError(f"pca rows not orthonormal (residual {resid:.3g})")
        if self.spectrum is not None:
            s = np.asarray(self.spectrum, dtype=np.float64)
            object.__setattr__(self, "spectrum", s)

    @property
    def count(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class WhiteningTransform:
    """Symmetric decorrelating matrix U (D + eps I)^(-1/2) U^T."""

    matrix: np.ndarray
    epsilon: float

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("whitening matrix must be square")
        if not np.isfinite(m).all():
            raise ValueError("whitening matrix contains non-finite entries")
        if np.abs(m - m.T).max() > 1e-10:
            raise ValueError("whitening matrix must be symmetric within 1e-10")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class FeatureMapStack:
    """All response maps for one image: layer1 (L1, h, w), layer2 (L1, L2, h, w)."""

    layer1: np.ndarray
    layer2: np.ndarray

    def __post_init__(self):
        l1 = np.asarray(self.layer1)
        l2 = np.asarray(self.layer2)
        if l1.ndim != 3 or l2.ndim != 4:
            raise ValueError("layer1 must be 3-D and layer2 4-D")
        if l2.shape[0] != l1.shape[0] or l2.shape[2:] != l1.shape[1:]:
            raise ValueError("layer sizes inconsistent")

    @property
    def image_size(self) -> tuple[int, int]:
        h, w = self.layer1.shape[1:]
        return (w, h)

    def map_count(self, trans_layer: bool) -> int:
        l1, l2 = self.layer1.shape[0], self.layer2.shape[1]
        return l1 * (l2 + 1) if trans_layer else l1 * l2


@dataclass(frozen=True)
class EncoderConfig:
    """Block histogram geometry plus the run's toggle record."""

    block_w: int
    block_h: int
    stride_x: int
    stride_y: int
    bins: int
    trans_layer: bool
    lcn_enabled: bool

    def __post_init__(self):
        if self.block_w < 1 or self.block_h < 1:
            raise ValueError("block sides must be >= 1")
        if self.stride_x < 1 or self.stride_y < 1:
            raise ValueError("strides must be >= 1")
        if self.bins < 2 or (self.bins & (self.bins - 1)) != 0:
            raise ValueError("bins must be a power of two")


@dataclass(frozen=True)
class HistogramFeature:
    """Sparse concatenated block histograms.

    ``indices`` are strictly increasing positions into the dense histogram
    vector and ``counts`` the nonzero counts at those positions.
    """

    dim: int
    indices: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        cnt = np.asarray(self.counts, dtype=np.int64)
        if idx.shape != cnt.shape or idx.ndim != 1:
            raise ValueError("indices and counts must be matching 1-D arrays")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise ValueError("index out of range")
            if (np.diff(idx) <= 0).any():
                raise ValueError("indices must be strictly increasing")
            if (cnt <= 0).any():
                raise ValueError("stored counts must be positive")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "counts", cnt)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


_TRUE = {"on", "true", "1", "yes"}
_FALSE = {"off", "false", "0", "no"}

# exact config-file keys, in canonical serialization order
_KEYS = (
    "patch_k1", "patch_k2", "l1", "l2", "lcn", "lcn_c", "whiten_epsilon",
    "learner", "dae_corruption", "dae_epochs", "dae_lr", "dae_tradeoff_c",
    "patches_per_layer", "block_w", "block_h", "stride_x", "stride_y",
    "trans_layer", "preprocess_at_extraction", "classifier", "svm_c",
    "wpca_dim", "wpca_sqrt", "seed", "bins",
)


@dataclass(frozen=True)
class Config:
    """Full hyperparameter record for one experiment."""

    patch_k1: int = 7
    patch_k2: int = 7
    l1: int = 8
    l2: int = 8
    lcn: bool = True
    lcn_c: float = 10.0
    whiten_epsilon: float = 0.1
    learner: str = PCA
    dae_corruption: float = 0.10
    dae_epochs: int = 50
    dae_lr: float = 0.01
    dae_tradeoff_c: float = 1.0
    patches_per_layer: int = 100000
    block_w: int = 7
    block_h: int = 7
    stride_x: int = 3
    stride_y: int = 3
    trans_layer: bool = True
    preprocess_at_extraction: bool = True
    classifier: str = "svm"
    svm_c: float = 1.0
    wpca_dim: int = 64
    wpca_sqrt: bool = False
    seed: int = 0
    bins: Optional[int] = None  # derived as 2**l1 when omitted

    def resolved_bins(self) -> int:
        return 2**self.l1 if self.bins is None else self.bins

    def patch_shape(self) -> PatchShape:
        return PatchShape(self.patch_k1, self.patch_k2)

    def encoder(self) -> EncoderConfig:
        return EncoderConfig(
            block_w=self.block_w,
            block_h=self.block_h,
            stride_x=self.stride_x,
            stride_y=self.stride_y,
            bins=self.resolved_bins(),
            trans_layer=self.trans_layer,
            lcn_enabled=self.lcn,
        )

    def with_overrides(self, **kw) -> "Config":
        return replace(self, **kw)


def validate_config(config: Config) -> list[str]:
    """Return every violated invariant as a message; empty list means ok."""
    errors = []
    for name in ("patch_k1", "patch_k2"):
        side = getattr(config, name)
        if side < 1:
            errors.append(f"{name} must be >= 1")
        elif side % 2 == 0:
            errors.append("patch side must be odd")
    for name in ("l1", "l2"):
        val = getattr(config, name)
        if not 1 <= val <= MAX_FILTERS:
            errors.append(f"{name} must lie in 1..{MAX_FILTERS}")
    if 1 <= config.l1 <= MAX_FILTERS and config.resolved_bins() != 2**config.l1:
        errors.append("bins must equal 2^L1")
    if config.lcn_c <= 0:
        errors.append("lcn_c must be > 0")
    if config.whiten_epsilon < 0:
        errors.append("whiten_epsilon must be >= 0")
    if config.learner not in (PCA, DAE):
        errors.append("learner must be pca or dae")
    if not 0.0 <= config.dae_corruption < 1.0:
        errors.append("dae_corruption must lie in [0, 1)")
    if config.dae_epochs < 1:
        errors.append("dae_epochs must be >= 1")
    if config.dae_lr <= 0:
        errors.append("dae_lr must be > 0")
    if config.dae_tradeoff_c <= 0:
        errors.append("dae_tradeoff_c must be > 0")
    if config.patches_per_layer < 1:
        errors.append("patches_per_layer must be >= 1")
    if config.block_w < 1 or config.block_h < 1:
        errors.append("block sides must be >= 1")
    if config.stride_x < 1 or config.stride_y < 1:
        errors.append("strides must be >= 1")
    else:
        if config.stride_x > config.block_w or config.stride_y > config.block_h:
            errors.append("stride must not exceed the block side")
    if config.classifier not in ("svm", "wpca_cosine"):
        errors.append("classifier must be svm or wpca_cosine")
    if config.svm_c <= 0:
        errors.append("svm_c must be > 0")
    if config.wpca_dim < 1:
        errors.append("wpca_dim must be >= 1")
    if not 0 <= config.seed < 2**64:
        errors.append("seed must fit in 64 bits unsigned")
    return errors


class ConfigError(ValueError):
    pass


def _parse_bool(key, raw):
    low = raw.lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ConfigError(f"{key}: expected on|off, got {raw!r}")


def parse_config(text: str) -> Config:
    """Parse the flat key=value config format ('#' starts a comment)."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = raw

    kwargs = {}
    hints = {f.name: f.type for f in fields(Config)}
    for key, raw in values.items():
        hint = hints[key]
        try:
            if hint == "bool":
                kwargs[key] = _parse_bool(key, raw)
            elif hint == "int":
                kwargs[key] = int(raw)
            elif hint == "float":
                kwargs[key] = float(raw)
            elif key == "bins":
                kwargs[key] = int(raw)
            else:
                kwargs[key] = raw
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    return Config(**kwargs)


def load_config(path) -> Config:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def format_config(config: Config) -> str:
    """Canonical text form; stable byte-for-byte for identical configs."""
    lines = []
    for key in _KEYS:
        val = getattr(config, key)
        if key == "bins":
            val = config.resolved_bins()
        if isinstance(val, bool):
            rendered = "on" if val else "off"
        elif isinstance(val, float):
            rendered = repr(val)
        else:
            rendered = str(val)
        lines.append(f"{key}={rendered}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TrainedModel:
    """Everything needed to map an image to a label."""

    config: Config
    bank1: FilterBank
    bank2: FilterBank
    whiten1: WhiteningTransform
    whiten2: WhiteningTransform
    encoder: EncoderConfig
    classifier: object

    def __post_init__(self):
        if 2**self.bank1.count != self.encoder.bins:
            raise ValueError("bank1 filter count inconsistent with encoder bins")
        if self.bank1.shape.dim != self.whiten1.dim:
            raise ValueError("layer-1 whitening dimension mismatch")
        if self.bank2.shape.dim != self.whiten2.dim:
            raise ValueError("layer-2 whitening dimension mismatch")

    def feature_dim(self, image_w: int, image_h: int) -> int:
        groups = self.bank2.count + (1 if self.encoder.trans_layer else 0)
        nx = (image_w - self.encoder.block_w) // self.encoder.stride_x + 1
        ny = (image_h - self.encoder.block_h) // self.encoder.stride_y + 1
        return groups * nx * ny * self.encoder.bins


def derived_stride(block_side: int) -> int:
    """Half the block side, floored, never below one pixel."""
    return max(1, block_side // 2)
