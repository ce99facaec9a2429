"""Mapping images through both filter layers.

Each output pixel is the response of a filter to the window centered on it
in the zero-padded input, so maps keep the input's size. With
``preprocess_at_extraction`` on (the default), every window is contrast
normalized and whitened with the layer's training-fit transform before the
dot product; switching it off gives the plain sliding correlation.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .preprocess import LcnParams, lcn_rows
from .types import (DAE, FeatureMapStack, FilterBank, GrayImage, PatchShape,
                    TrainedModel, WhiteningTransform)


def _as_map(image) -> np.ndarray:
    if isinstance(image, GrayImage):
        return image.pixels
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("expected a 2-D image or map")
    return arr


def _pad_widths(shape: PatchShape):
    return ((shape.k1 - 1) // 2,), ((shape.k2 - 1) // 2,)


def pad_same(image, shape: PatchShape):
    """Zero-pad by (k-1)/2 on each side so response maps keep the input size."""
    arr = _as_map(image)
    padded = np.pad(arr, _pad_widths(shape))
    if isinstance(image, GrayImage):
        return GrayImage(padded)
    return padded


def window_rows(arr: np.ndarray, shape: PatchShape) -> np.ndarray:
    """All k1 x k2 windows of the padded input, one flattened row per pixel."""
    padded = np.pad(arr, _pad_widths(shape))
    windows = sliding_window_view(padded, (shape.k1, shape.k2))
    return windows.reshape(arr.size, shape.dim)


def map_layer(image, bank: FilterBank, whiten: WhiteningTransform | None = None,
              lcn: LcnParams | None = None,
              preprocess_at_extraction: bool = True) -> np.ndarray:
    """Response maps of one filter bank, shape (L, h, w).

    ``lcn=None`` skips contrast normalization and ``whiten=None`` skips
    whitening; both are skipped regardless when the preprocessing flag is
    off. Autoencoder banks add their bias and squash through tanh.
    """
    arr = _as_map(image)
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("empty input")
    rows = window_rows(arr, bank.shape)
    if preprocess_at_extraction:
        if lcn is not None:
            rows = lcn_rows(rows, lcn)
        if whiten is not None:
            if whiten.dim != bank.shape.dim:
                raise ValueError("whitening dimension mismatch")
            rows = rows @ whiten.matrix  # symmetric, so right-multiply works
    responses = rows @ bank.weights.T
    if bank.layer_kind == DAE:
        responses = np.tanh(responses + bank.biases[None, :])
    h, w = arr.shape
    return responses.T.reshape(bank.count, h, w).copy()


def build_stack(image, model: TrainedModel) -> FeatureMapStack:
    """Both layers' maps for one image.

    Second-layer maps are computed from every first-layer map; whether the
    first-layer maps also reach the encoder is decided later by the
    trans-layer flag.
    """
    lcn = LcnParams(model.config.lcn_c) if model.config.lcn else None
    flag = model.config.preprocess_at_extraction
    layer1 = map_layer(image, model.bank1, model.whiten1, lcn, flag)
    l1 = model.bank1.count
    l2 = model.bank2.count
    h, w = layer1.shape[1:]
    layer2 = np.empty((l1, l2, h, w), dtype=np.float64)
    for i in range(l1):
        layer2[i] = map_layer(layer1[i], model.bank2, model.whiten2, lcn, flag)
    return FeatureMapStack(layer1=layer1, layer2=layer2)
