import numpy as np
import pytest

from translayer import (FilterBank, GrayImage, PatchShape, WhiteningTransform,
                        build_stack, map_layer, pad_same)
from translayer.preprocess import LcnParams, lcn_patch
from translayer.types import DAE, PCA


def pca_bank(weights, side):
    w = np.asarray(weights, dtype=np.float64)
    # orthonormalize rows so the bank invariant holds
    q, _ = np.linalg.qr(w.T)
    return FilterBank(layer_kind=PCA, shape=PatchShape(side, side),
                      weights=q.T[: w.shape[0]])


def dae_bank(weights, biases, side):
    return FilterBank(layer_kind=DAE, shape=PatchShape(side, side),
                      weights=np.asarray(weights, dtype=np.float64),
                      biases=np.asarray(biases, dtype=np.float64))


# --- padding ----------------------------------------------------------------

def test_pad_sizes():
    img = GrayImage(np.zeros((28, 28)))
    padded = pad_same(img, PatchShape(7, 7))
    assert padded.pixels.shape == (34, 34)


def test_pad_identity_for_unit_shape():
    img = GrayImage(np.random.default_rng(0).random((5, 4)))
    out = pad_same(img, PatchShape(1, 1))
    assert np.array_equal(out.pixels, img.pixels)


def test_pad_zero_border_and_asymmetric_sides():
    arr = np.ones((4, 4))
    out = pad_same(arr, PatchShape(3, 5))
    assert out.shape == (6, 8)
    assert out[0].sum() == 0 and out[:, 0].sum() == 0 and out[:, 1].sum() == 0
    assert np.array_equal(out[1:5, 2:6], arr)


def test_pad_all_zero():
    out = pad_same(np.zeros((3, 3)), PatchShape(3, 3))
    assert not out.any()


# --- single-layer mapping -----------------------------------------------

def delta_bank(side):
    w = np.zeros((1, side * side))
    w[0, (side * side) // 2] = 1.0
    return FilterBank(layer_kind=PCA, shape=PatchShape(side, side), weights=w)


def test_delta_filter_reproduces_input():
    img = np.random.default_rng(1).random((9, 9))
    out = map_layer(img, delta_bank(3), preprocess_at_extraction=False)
    assert out.shape == (1, 9, 9)
    assert np.abs(out[0] - img).max() < 1e-15


def test_constant_image_with_preprocessing():
    # zero padding keeps an all-zero image constant in every window; for a
    # nonzero constant, only interior windows stay constant
    lcn = LcnParams(10.0)
    wh = WhiteningTransform(matrix=np.eye(9), epsilon=0.0)
    bank = pca_bank(np.random.default_rng(2).normal(size=(2, 9)), 3)
    biases = np.array([0.3, -0.2])
    dbank = dae_bank(np.zeros((2, 9)) + 0.1 * np.eye(2, 9), biases, 3)

    zero = GrayImage(np.zeros((6, 6)))
    assert np.abs(map_layer(zero, bank, wh, lcn, True)).max() == 0.0
    dae = map_layer(zero, dbank, wh, lcn, True)
    for i, b in enumerate(biases):
        assert np.abs(dae[i] - np.tanh(b)).max() < 1e-15

    half = GrayImage(np.full((6, 6), 0.5))
    pca_interior = map_layer(half, bank, wh, lcn, True)[:, 1:5, 1:5]
    assert np.abs(pca_interior).max() == 0.0
    dae_interior = map_layer(half, dbank, wh, lcn, True)[:, 1:5, 1:5]
    for i, b in enumerate(biases):
        assert np.abs(dae_interior[i] - np.tanh(b)).max() < 1e-15


def brute_force_map(img, bank, whiten, lcn, flag):
    """Naive per-pixel oracle: pad, slice the window, preprocess, dot."""
    k1, k2 = bank.shape.k1, bank.shape.k2
    padded = np.pad(img, (((k1 - 1) // 2,), ((k2 - 1) // 2,)))
    h, w = img.shape
    out = np.zeros((bank.count, h, w))
    for r in range(h):
        for c in range(w):
            window = padded[r:r + k1, c:c + k2].ravel()
            if flag:
                if lcn is not None:
                    window = lcn_patch(window, lcn)
                if whiten is not None:
                    window = whiten.matrix @ window
            for f in range(bank.count):
                val = float(bank.weights[f] @ window)
                if bank.layer_kind == DAE:
                    val = np.tanh(val + bank.biases[f])
                out[f, r, c] = val
    return out


@pytest.mark.parametrize("kind", [PCA, DAE])
@pytest.mark.parametrize("flag", [False, True])
def test_matches_naive_window_oracle(kind, flag):
    gen = np.random.default_rng(3)
    img = gen.random((12, 12))
    lcn = LcnParams(10.0)
    mat = gen.normal(size=(9, 9))
    wh = WhiteningTransform(matrix=0.5 * (mat + mat.T), epsilon=0.1)
    if kind == PCA:
        bank = pca_bank(gen.normal(size=(3, 9)), 3)
    else:
        bank = dae_bank(gen.normal(scale=0.4, size=(3, 9)), gen.normal(size=3), 3)
    got = map_layer(img, bank, wh, lcn, flag)
    want = brute_force_map(img, bank, wh, lcn, flag)
    assert np.abs(got - want).max() < 1e-12


def test_response_linearity_without_preprocessing():
    gen = np.random.default_rng(4)
    img = gen.random((10, 10))
    bank = pca_bank(gen.normal(size=(2, 25)), 5)
    one = map_layer(img, bank, preprocess_at_extraction=False)
    scaled = map_layer(2.5 * img, bank, preprocess_at_extraction=False)
    assert np.abs(scaled - 2.5 * one).max() < 1e-10


# --- full stacks -----------------------------------------------------------

def test_stack_shapes_and_counts(tiny_model, glyph_train):
    image = glyph_train[0][0]
    stack = build_stack(image, tiny_model)
    l1, l2 = tiny_model.bank1.count, tiny_model.bank2.count
    assert stack.layer1.shape == (l1, 28, 28)
    assert stack.layer2.shape == (l1, l2, 28, 28)
    assert stack.map_count(trans_layer=True) == l1 * (l2 + 1)
    assert stack.map_count(trans_layer=False) == l1 * l2


def test_map_count_eight_by_eight():
    from translayer.types import FeatureMapStack
    stack = FeatureMapStack(layer1=np.zeros((8, 4, 4)),
                            layer2=np.zeros((8, 8, 4, 4)))
    assert stack.map_count(trans_layer=True) == 72
    assert stack.map_count(trans_layer=False) == 64


def test_build_stack_is_pure(tiny_model, glyph_train):
    image = glyph_train[0][1]
    before = image.pixels.copy()
    a = build_stack(image, tiny_model)
    b = build_stack(image, tiny_model)
    assert np.array_equal(a.layer1, b.layer1)
    assert np.array_equal(a.layer2, b.layer2)
    assert np.array_equal(image.pixels, before)
