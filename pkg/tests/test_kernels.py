import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from docanon import _pykernels, kernels

BACKENDS = kernels.backends()
images = arrays(np.uint8, st.tuples(st.integers(1, 30), st.integers(1, 30)))


def test_compiled_backend_is_built():
    assert "cython" in BACKENDS, "extension not built: pip install --no-build-isolation -e ."


def _pairs():
    mods = list(BACKENDS.values())
    return [(a, b) for a in mods for b in mods if a is not b][:1]


@pytest.mark.parametrize("pair", _pairs(), ids=lambda p: "cython-vs-python")
@given(px=images, kw=st.sampled_from([1, 3, 5, 9]), kh=st.sampled_from([1, 3, 7]))
def test_rank_filters_agree(pair, px, kw, kh):
    a, b = pair
    np.testing.assert_array_equal(a.min_filter(px, kw, kh), b.min_filter(px, kw, kh))
    np.testing.assert_array_equal(a.max_filter(px, kw, kh), b.max_filter(px, kw, kh))


@pytest.mark.parametrize("pair", _pairs(), ids=lambda p: "cython-vs-python")
@given(mask=arrays(np.uint8, st.tuples(st.integers(1, 30), st.integers(1, 30)), elements=st.sampled_from([0, 1])))
def test_labelling_agrees(pair, mask):
    a, b = pair
    np.testing.assert_array_equal(a.label_boxes(mask), b.label_boxes(mask))


@pytest.mark.parametrize("pair", _pairs(), ids=lambda p: "cython-vs-python")
@given(px=arrays(np.uint8, st.tuples(st.integers(7, 25), st.integers(7, 25))), t=st.integers(1, 60))
def test_fast_agrees(pair, px, t):
    a, b = pair
    np.testing.assert_array_equal(a.fast_score(px, t), b.fast_score(px, t))


@pytest.mark.parametrize("pair", _pairs(), ids=lambda p: "cython-vs-python")
@given(a=arrays(np.uint8, st.tuples(st.integers(0, 8), st.just(32))),
       b=arrays(np.uint8, st.tuples(st.integers(0, 8), st.just(32))))
def test_hamming_agrees(pair, a, b):
    m1, m2 = pair
    np.testing.assert_array_equal(m1.hamming_matrix(a, b), m2.hamming_matrix(a, b))


@pytest.mark.parametrize("mod", BACKENDS.values(), ids=BACKENDS.keys())
def test_hamming_against_bit_count(mod, rng):
    a = rng.integers(0, 256, (5, 32), dtype=np.uint8)
    b = rng.integers(0, 256, (4, 32), dtype=np.uint8)
    d = mod.hamming_matrix(a, b)
    for i in range(5):
        for j in range(4):
            assert d[i, j] == sum(bin(int(x) ^ int(y)).count("1") for x, y in zip(a[i], b[j]))


def _fast_oracle(g, t, arc=9):
    g = g.astype(int)
    h, w = g.shape
    out = np.zeros((h, w), dtype=int)
    circle = _pykernels.CIRCLE
    for r in range(3, h - 3):
        for c in range(3, w - 3):
            ring = [g[r + dy, c + dx] - g[r, c] for dx, dy in circle]
            corner = False
            for sign in (1, -1):
                flags = [sign * d > t for d in ring]
                for s in range(16):
                    if all(flags[(s + k) % 16] for k in range(arc)):
                        corner = True
            if corner:
                sb = sum(d - t for d in ring if d > t)
                sd = sum(-d - t for d in ring if d < -t)
                out[r, c] = max(sb, sd)
    return out


def test_circle_is_radius_three():
    assert len(set(_pykernels.CIRCLE)) == 16
    for dx, dy in _pykernels.CIRCLE:
        assert 2.5 <= (dx * dx + dy * dy) ** 0.5 <= 3.7


@pytest.mark.parametrize("mod", BACKENDS.values(), ids=BACKENDS.keys())
def test_fast_against_segment_test(mod, rng):
    px = rng.integers(0, 256, (14, 16)).astype(np.uint8)
    px[5:9, 5:9] = 255  # guarantee a bright block with corners
    px[:4, :4] = 0
    np.testing.assert_array_equal(mod.fast_score(px, 25), _fast_oracle(px, 25))


@pytest.mark.parametrize("mod", BACKENDS.values(), ids=BACKENDS.keys())
def test_fast_square_corner(mod):
    px = np.full((20, 20), 200, dtype=np.uint8)
    px[8:, 8:] = 20
    s = mod.fast_score(px, 20)
    assert s[8, 8] > 0  # dark corner pixel sees a bright ring over 10 positions
    assert s[3, 3] == 0 and s[15, 15] == 0


def test_backend_selection():
    assert kernels.BACKEND in ("cython", "python")
    assert kernels.min_filter is BACKENDS[kernels.BACKEND].min_filter


def test_env_forces_fallback():
    import os
    import subprocess
    import sys
    env = dict(os.environ, DOCANON_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import docanon.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
