import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strokepaint.imageio import write_image
from strokepaint.rasterizer import (AffineMap, BrushTexture, Placement, StrokeParams, builtin_brush,
                                    clamp_params, edge_backward, edge_forward, grad_strokes,
                                    load_brush, rasterize_reference, rasterize_soft,
                                    region_outer_map, render_strokes, stroke_affine, stroke_image)

FLAT = BrushTexture(np.ones((128, 128)), "flat")


def rand_stroke(rng, lo=0.2, hi=0.8):
    p = np.empty(8)
    p[0:2] = rng.uniform(lo, hi, 2)
    p[2:4] = rng.uniform(0.1, 0.9, 2)
    p[4] = rng.random()
    p[5:8] = rng.random(3)
    return p


# ------------------------------------------------------------ brushes

def test_builtin_brushes():
    for name in ("oval", "rect-soft"):
        b = load_brush(name)
        assert b.alpha.max() == 1.0 and b.alpha.shape == (128, 128)
        assert b.alpha[64, 64] == 1.0 and b.alpha[0, 0] < 1.0
    with pytest.raises(KeyError):
        builtin_brush("nope")


def test_load_brush_png(tmp_path, monkeypatch):
    img = np.zeros((20, 20, 1))
    img[5:15, 5:15] = 0.5
    write_image(tmp_path / "half.png", img)
    b = load_brush(tmp_path / "half.png")
    assert b.alpha.max() == 1.0 and b.full_rotation
    monkeypatch.setenv("STROKEPAINT_BRUSH_DIR", str(tmp_path))
    assert load_brush("half").sha256 == b.sha256
    write_image(tmp_path / "black.png", np.zeros((4, 4, 1)))
    with pytest.raises(ValueError):
        load_brush(tmp_path / "black.png")
    with pytest.raises(OSError):
        load_brush(tmp_path / "missing.png")


# ------------------------------------------------------------ affine maps

def test_stroke_affine_examples():
    m = stroke_affine(StrokeParams(0.5, 0.5, 1, 1, 0, 0, 0, 0), 100, 60)
    assert np.allclose(m.linear, [[100, 0], [0, 60]]) and np.allclose(m.offset, [50, 30])
    r = stroke_affine(StrokeParams(0.5, 0.5, 1, 1, 0.5, 0, 0, 0), 100, 100)
    d = r.linear @ [1.0, 0.0]  # brush x axis
    assert abs(d[0]) < 1e-12 and d[1] > 0


def test_compose_with_region_scale():
    m = stroke_affine(StrokeParams(0.3, 0.6, 0.4, 0.2, 0.2, 0, 0, 0), 64, 64)
    outer = AffineMap.scale_translate(2, 3)
    c = outer.compose(m)
    # outer scaling multiplies the rows (x and y outputs) of the linear part
    assert np.allclose(c.linear, np.diag([2, 3]) @ m.linear)
    assert np.allclose(c.offset, [2 * m.tx, 3 * m.ty])


def test_affine_inverse():
    m = AffineMap(2, 0.5, 3, -1, 1.5, 4)
    x, y = m.apply(*m.inverse().apply(0.7, -2.0))
    assert (x, y) == pytest.approx((0.7, -2.0))
    with pytest.raises(ValueError):
        AffineMap(1, 2, 0, 2, 4, 0)


def test_stroke_params_validation():
    with pytest.raises(ValueError):
        StrokeParams(0.5, 0.5, 0.001, 0.5, 0, 0, 0, 0)
    p = clamp_params(np.array([-1, 2, 0, 5, 0.5, -0.1, 0.3, 1.1]))
    assert np.array_equal(p, [0, 1, 0.01, 1, 0.5, 0, 0.3, 1])


# ------------------------------------------------------------ soft rasterizer

def test_flat_brush_full_cover():
    s = StrokeParams(0.5, 0.5, 1, 1, 0, 0.3, 0.3, 0.3)
    mask, _ = rasterize_soft(s, None, 32, 32, 20, brush=FLAT)
    assert np.allclose(mask[2:-2, 2:-2], 1.0)
    assert np.array_equal(rasterize_reference(s, None, 32, 32, brush=FLAT), np.ones((32, 32)))


def test_color_does_not_affect_geometry():
    rng = np.random.default_rng(0)
    p = rand_stroke(rng)
    m1, e1 = rasterize_soft(p, None, 40, 40)
    q = p.copy()
    q[5:8] = rng.random(3)
    m2, e2 = rasterize_soft(q, None, 40, 40)
    assert np.array_equal(m1, m2) and np.array_equal(e1, e2)


def test_ranges_and_outside_frame():
    rng = np.random.default_rng(1)
    for _ in range(20):
        m, e = rasterize_soft(rand_stroke(rng), None, 48, 48)
        assert m.min() >= 0 and m.max() <= 1 and e.min() >= 0 and e.max() <= 1
    off = np.array([0.5, 0.5, 0.1, 0.1, 0, 1, 1, 1])
    outer = AffineMap.scale_translate(1, 1, 500, 500)
    m, e = rasterize_soft(off, outer, 32, 32)
    assert not m.any() and not e.any()
    assert not rasterize_reference(off, outer, 32, 32).any()


def test_soft_converges_to_reference():
    maes = {}
    for k in (20, 50, 200):
        rng2 = np.random.default_rng(2)
        maes[k] = np.mean([np.mean(np.abs(rasterize_soft(p, None, 128, 128, k)[0]
                                          - rasterize_reference(p, None, 128, 128)))
                           for p in (rand_stroke(rng2) for _ in range(10))])
    assert maes[50] < 0.01
    assert maes[200] < maes[50] < maes[20]


def test_rotation_swaps_extents():
    s = np.array([0.5, 0.5, 0.6, 0.2, 0.0, 1, 1, 1])
    r = s.copy()
    r[4] = 0.5
    r[2], r[3] = 0.2, 0.6
    a = rasterize_reference(s, None, 64, 64)
    b = rasterize_reference(r, None, 64, 64)
    diff = a != b
    # disagreement is confined to the one-pixel boundary band
    inner = (rasterize_reference(np.r_[s[:2], s[2:4] - 2 / 64, s[4:]], None, 64, 64) > 0)
    assert not np.any(diff & inner)
    assert diff.sum() <= 0.05 * a.sum()


def test_translation_equivariance():
    p = np.array([0.4, 0.5, 0.3, 0.2, 0.15, 1, 1, 1])
    q = p.copy()
    q[0] += 5 / 128
    a, _ = rasterize_soft(p, None, 128, 128)
    b, _ = rasterize_soft(q, None, 128, 128)
    assert np.mean(np.abs(b[:, 5:] - a[:, :-5])) < 0.02
    # fractional shift: resample a by 2.5 px and compare
    q[0] = p[0] + 2.5 / 128
    b, _ = rasterize_soft(q, None, 128, 128)
    shifted = 0.5 * (a[:, 1:-2] + a[:, 0:-3])
    assert np.mean(np.abs(b[:, 3:] - shifted)) < 0.02


def test_stroke_image_examples():
    one = np.ones((3, 4))
    assert np.allclose(stroke_image(one, (0.2, 0.4, 0.6)), [0.2, 0.4, 0.6])
    assert not stroke_image(np.zeros((3, 4)), (1, 1, 1)).any()
    m = np.random.default_rng(3).random((3, 4))
    assert np.allclose(stroke_image(m, (0.4, 0.2, 0.1)), 2 * stroke_image(m, (0.2, 0.1, 0.05)))


# ------------------------------------------------------------ multi-stroke rendering

def test_render_strokes_examples():
    canvas = np.random.default_rng(4).random((16, 16, 3))
    assert np.array_equal(render_strokes([], None, canvas), canvas)
    full = np.array([0.5, 0.5, 1, 1, 0, 0.2, 0.4, 0.6])
    out = render_strokes([full], None, canvas, brush=FLAT)
    assert np.allclose(out[2:-2, 2:-2], [0.2, 0.4, 0.6])
    second = full.copy()
    second[5:8] = (0.9, 0.1, 0.1)
    out = render_strokes([full, second], None, canvas, brush=FLAT)
    assert np.allclose(out[2:-2, 2:-2], [0.9, 0.1, 0.1])


def test_render_is_order_sensitive():
    a = np.array([0.4, 0.5, 0.5, 0.5, 0, 1, 0, 0])
    b = np.array([0.6, 0.5, 0.5, 0.5, 0, 0, 0, 1])
    c = np.zeros((32, 32, 3))
    assert not np.array_equal(render_strokes([a, b], None, c), render_strokes([b, a], None, c))


def test_grad_zero_at_target():
    rng = np.random.default_rng(5)
    canvas = rng.random((32, 32, 3))
    s = rand_stroke(rng)[None]
    target = render_strokes(s, None, canvas)
    assert np.abs(grad_strokes(s, None, canvas, target)).max() < 1e-8


def test_color_gradient_closed_form():
    rng = np.random.default_rng(6)
    canvas, target = rng.random((32, 32, 3)), rng.random((32, 32, 3))
    p = rand_stroke(rng)
    g = grad_strokes(p[None], None, canvas, target)[0]
    mask, _ = rasterize_soft(p, None, 32, 32)
    out = render_strokes(p[None], None, canvas)
    # the stroke image is mask*color composited with mask, so visibility is mask^2
    want = 2 * np.einsum("ij,ijc->c", mask * mask, out - target)
    assert np.allclose(g[5:8], want, atol=1e-6)


def fd_grad(p, canvas, target, h, k=20.0, placement=None):
    out = np.zeros(8)
    for j in range(8):
        e = np.zeros(8)
        e[j] = h

        def loss(q):
            return np.sum((render_strokes(q[None], placement, canvas, k) - target) ** 2)

        out[j] = (loss(p + e) - loss(p - e)) / (2 * h)
    return out


def test_gradient_matches_fine_finite_differences():
    """At a step well below the mask's transition width the analytic gradient matches FD."""
    rng = np.random.default_rng(7)
    good = 0
    for _ in range(40):
        p = rand_stroke(rng)
        canvas, target = rng.random((64, 64, 3)), rng.random((64, 64, 3))
        g = grad_strokes(p[None], None, canvas, target)[0]
        fd = fd_grad(p, canvas, target, 1e-6)
        err = np.abs(g - fd)
        good += np.all((err < 1e-4) | (err < 1e-2 * np.maximum(np.abs(g), np.abs(fd))))
    assert good >= 38


def test_finite_difference_error_is_truncation():
    """FD error shrinks ~quadratically with the step, as expected for a correct gradient."""
    rng = np.random.default_rng(8)
    errs = {h: [] for h in (1e-3, 1e-4, 1e-5)}
    for _ in range(15):
        p = rand_stroke(rng)
        canvas, target = rng.random((64, 64, 3)), rng.random((64, 64, 3))
        g = grad_strokes(p[None], None, canvas, target)[0]
        for h in errs:
            fd = fd_grad(p, canvas, target, h)
            errs[h].append(np.median(np.abs(g - fd)[:5] / np.maximum(np.abs(g[:5]), 1e-12)))
    med = {h: np.median(v) for h, v in errs.items()}
    assert med[1e-4] < med[1e-3] / 10 and med[1e-5] < med[1e-4] / 10


def test_gradient_through_region_placement():
    rng = np.random.default_rng(9)
    region = (0.25, 0.125, 0.5, 0.625)
    W, H, P = 48, 40, 32
    pl = Placement(region_outer_map(region, W, H, P), (float(P), float(P)))
    p = rand_stroke(rng)
    canvas, target = rng.random((H, W, 3)), rng.random((H, W, 3))
    g = grad_strokes(p[None], pl.outer, canvas, target, frame=pl.frame)[0]

    def loss(q):
        return np.sum((render_strokes(q[None], pl.outer, canvas, frame=pl.frame) - target) ** 2)

    for j in range(8):
        e = np.zeros(8)
        e[j] = 1e-6
        fd = (loss(p + e) - loss(p - e)) / 2e-6
        assert g[j] == pytest.approx(fd, rel=1e-2, abs=1e-4)


def test_edge_map_max_and_gradient():
    rng = np.random.default_rng(10)
    P = np.stack([rand_stroke(rng) for _ in range(3)])
    E, tape = edge_forward(P, None, 40, 40, 20.0)
    singles = [rasterize_soft(p, None, 40, 40)[1] for p in P]
    assert np.allclose(E, np.max(singles, axis=0))
    w = rng.random((40, 40))
    g = edge_backward(tape, w)
    assert np.all(g[:, 5:] == 0)
    for i in range(3):
        for j in range(5):
            e = np.zeros_like(P)
            e[i, j] = 1e-7
            fd = (np.sum(w * edge_forward(P + e, None, 40, 40, 20.0, tape=False)[0])
                  - np.sum(w * edge_forward(P - e, None, 40, 40, 20.0, tape=False)[0])) / 2e-7
            assert g[i, j] == pytest.approx(fd, rel=2e-2, abs=1e-3)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 1), st.floats(0.01, 1), st.floats(0, 1))
def test_mask_in_unit_interval(x, y, w, h, t):
    m, e = rasterize_soft(np.array([x, y, w, h, t, 0.5, 0.5, 0.5]), None, 24, 24)
    assert m.min() >= 0 and m.max() <= 1 and e.min() >= 0 and e.max() <= 1
