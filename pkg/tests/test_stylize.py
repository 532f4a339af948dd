import numpy as np
import pytest

from strokepaint.compositor import CompositorConfig
from strokepaint.core import ShapeError
from strokepaint.painter import PainterConfig
from strokepaint.pipeline import PaintConfig, StrokeLog, paint, replay
from strokepaint.rasterizer import LOWER, UPPER, rasterize_soft
from strokepaint.samples import circle, stripes
from strokepaint.stylize import (PyramidExtractor, StyleWeights, StylizeObjective, content_loss,
                                 gram, render_edge_map, style_loss, stylize_strokes)


@pytest.fixture(scope="module")
def painted():
    I = circle(48)
    cfg = PaintConfig(budget=10, canvas_size=0, painter=PainterConfig(working_res=32, iters=30),
                      compositor=CompositorConfig(top_k=2))
    return I, paint(I, cfg).log


def test_extractor_shapes_and_constant():
    ex = PyramidExtractor()
    F = ex.features(np.full((20, 16, 3), 0.3))
    assert [f.shape for f in F] == [(20, 16, 6), (10, 8, 6), (5, 4, 6)]
    assert all(np.abs(f[:, :, 3:]).max() < 1e-12 for f in F)
    img = np.random.default_rng(0).random((20, 16, 3))
    assert all(np.array_equal(a, b) for a, b in zip(ex.features(img), ex.features(img.copy())))


def test_extractor_vjp():
    rng = np.random.default_rng(1)
    ex = PyramidExtractor()
    img = rng.random((13, 18, 3))
    G = [rng.standard_normal(f.shape) for f in ex.features(img)]
    g = ex.vjp(img, G)
    d = rng.standard_normal(img.shape)

    def f(x):
        return sum(np.sum(a * b) for a, b in zip(ex.features(x), G))

    fd = (f(img + 1e-6 * d) - f(img - 1e-6 * d)) / 2e-6
    assert np.sum(g * d) == pytest.approx(fd, rel=1e-6)
    g2 = ex.vjp(img, [None, G[1], None])
    fd2 = (np.sum(ex.features(img + 1e-6 * d)[1] * G[1])
           - np.sum(ex.features(img - 1e-6 * d)[1] * G[1])) / 2e-6
    assert np.sum(g2 * d) == pytest.approx(fd2, rel=1e-6)


def test_style_loss_properties():
    rng = np.random.default_rng(2)
    a, b = rng.random((16, 16, 3)), rng.random((24, 20, 3))
    assert style_loss(a, a) == 0
    assert style_loss(a, b) == pytest.approx(style_loss(b, a))
    assert style_loss(a, b) > 0


class PixelFeatures:
    """One layer holding the raw pixels."""

    content_layer = 0

    def features(self, img):
        return [np.asarray(img, dtype=float)]

    def vjp(self, img, grads):
        return grads[0]


def test_gram_permutation_invariance():
    rng = np.random.default_rng(3)
    a, s = rng.random((8, 8, 3)), rng.random((8, 8, 3))
    perm = rng.permutation(64)
    ap = a.reshape(64, 3)[perm].reshape(8, 8, 3)
    ex = PixelFeatures()
    assert style_loss(ap, s, ex) == pytest.approx(style_loss(a, s, ex), abs=1e-15)
    assert np.allclose(gram(ap), gram(a))


def test_content_loss_properties():
    rng = np.random.default_rng(4)
    a = rng.random((16, 16, 3))
    assert content_loss(a, a) == 0
    ex = PixelFeatures()
    assert content_loss(a, a + 0.01, ex) == pytest.approx(1e-4)
    assert content_loss(a, a + 0.02, ex) == pytest.approx(4 * content_loss(a, a + 0.01, ex))


def test_render_edge_map(painted):
    I, log = painted
    assert not render_edge_map(StrokeLog(log.header, []), 48, 48).any()
    E = render_edge_map(log)
    assert E.shape == (48, 48) and E.min() >= 0 and E.max() <= 1
    one = StrokeLog(log.header, log.steps[:1])
    first = log.steps[0]
    if first.n_strokes == 1 and first.region == (0.0, 0.0, 1.0, 1.0):
        assert np.allclose(render_edge_map(one), rasterize_soft(first.array[0], None, 48, 48, 50.0)[1])


def test_zero_iterations_unchanged(painted):
    I, log = painted
    out = stylize_strokes(log, I, stripes(32), StyleWeights(iters=0))
    assert out == log and out.to_jsonl() == log.to_jsonl()


def test_shape_mismatch(painted):
    _, log = painted
    with pytest.raises(ShapeError):
        stylize_strokes(log, circle(40), stripes(32), StyleWeights(iters=1))


def test_objective_gradient(painted):
    I, log = painted
    w = StyleWeights(style=1.0, content=0.5, dt=0.5)
    obj = StylizeObjective(log, I, stripes(32), w)
    x = obj.x0.ravel()
    loss, g = obj(x)
    rng = np.random.default_rng(5)
    for j in rng.choice(x.size, 8, replace=False):
        e = np.zeros_like(x)
        e[j] = 1e-7
        fd = (obj(x + e)[0] - obj(x - e)[0]) / 2e-7
        assert g[j] == pytest.approx(fd, rel=2e-2, abs=1e-6)


def test_content_only_never_worse(painted):
    I, log = painted
    w = StyleWeights(style=0, content=1, dt=0, iters=15, step_size=0.01)
    out = stylize_strokes(log, I, stripes(32), w)
    before = StylizeObjective(log, I, stripes(32), w)
    after = StylizeObjective(out, I, stripes(32), w)
    assert after.terms(after.x0)["content"] <= before.terms(before.x0)["content"]
    assert [s.n_strokes for s in out.steps] == [s.n_strokes for s in log.steps]
    assert [s.region for s in out.steps] == [s.region for s in log.steps]
    arr = np.concatenate([s.array for s in out.steps])
    assert np.all(arr >= LOWER) and np.all(arr <= UPPER)
    assert replay(out).shape == I.shape


def test_default_objective_not_increased(painted):
    I, log = painted
    w = StyleWeights(iters=10)
    out = stylize_strokes(log, I, stripes(32), w)
    obj0 = StylizeObjective(log, I, stripes(32), w)
    obj1 = StylizeObjective(out, I, stripes(32), w)
    assert obj1(obj1.x0.ravel())[0] <= obj0(obj0.x0.ravel())[0]


def test_weights_validation():
    with pytest.raises(ValueError):
        StyleWeights(style=0, content=0, dt=0)
    with pytest.raises(ValueError):
        StyleWeights(dt=-1)
