import sys
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SMALL, interior
from dpsconf.imagery import RasterImage, write_pfm
from dpsconf.matcher import (
    DimensionMismatchError,
    ExternalMatcherSpec,
    ImageTooSmallError,
    MatcherConfig,
    MatcherTimeoutError,
    NonZeroExitError,
    MissingOutputError,
    aggregate_costs,
    census_transform,
    match,
    match_external,
    match_with_costs,
    matching_cost,
)
from dpsconf.synthetic import noise_texture, planted_pair


# --- oracles ---------------------------------------------------------------


def census_bruteforce(gray, w, h):
    H, W = gray.shape
    out = np.zeros((H, W), dtype=object)
    for y in range(H):
        for x in range(W):
            code = 0
            for dy in range(-(h // 2), h // 2 + 1):
                for dx in range(-(w // 2), w // 2 + 1):
                    if dx == 0 and dy == 0:
                        continue
                    yy = min(max(y + dy, 0), H - 1)
                    xx = min(max(x + dx, 0), W - 1)
                    code = (code << 1) | int(gray[yy, xx] < gray[y, x])
            out[y, x] = code
    return out


def sgm_bruteforce(cost, p1, p2, directions):
    """Direct recursion of the path-cost definition, one pixel at a time."""
    H, W, D = cost.shape
    total = np.zeros((H, W, D), dtype=np.int64)
    for dy, dx in directions:
        L = {}
        ys = range(H) if dy >= 0 else range(H - 1, -1, -1)
        xs = list(range(W)) if dx >= 0 else list(range(W - 1, -1, -1))
        for y in ys:
            for x in xs:
                py, px = y - dy, x - dx
                c = [int(v) for v in cost[y, x]]
                if not (0 <= py < H and 0 <= px < W):
                    L[y, x] = c
                else:
                    prev = L[py, px]
                    m = min(prev)
                    row = []
                    for d in range(D):
                        cands = [prev[d], m + p2]
                        if d > 0:
                            cands.append(prev[d - 1] + p1)
                        if d < D - 1:
                            cands.append(prev[d + 1] + p1)
                        row.append(c[d] + min(cands) - m)
                    L[y, x] = row
                total[y, x] += L[y, x]
    return total


DIRS8 = [(0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (1, -1), (-1, 1), (-1, -1)]


# --- building blocks -------------------------------------------------------


def test_census_matches_bruteforce(rng):
    gray = rng.integers(0, 6, size=(7, 9)).astype(float)  # many ties
    fast = census_transform(gray, (5, 3))
    slow = census_bruteforce(gray, 5, 3)
    assert all(int(fast[y, x]) == slow[y, x] for y in range(7) for x in range(9))


def test_matching_cost_out_of_bounds_is_maximal(rng):
    gray = rng.integers(0, 256, size=(6, 10)).astype(float)
    codes = census_transform(gray, (3, 3))
    cost = matching_cost(codes, codes, d_max=4, n_bits=8)
    assert cost.shape == (6, 10, 5)
    assert np.all(cost[:, :, 0] == 0)
    for d in range(1, 5):
        assert np.all(cost[:, :d, d] == 8)
    x, d = 7, 3
    expected = bin(int(codes[2, x]) ^ int(codes[2, x - d])).count("1")
    assert cost[2, x, d] == expected


@pytest.mark.parametrize("paths", [4, 8])
def test_aggregation_matches_bruteforce(rng, paths):
    cost = rng.integers(0, 30, size=(5, 6, 7)).astype(np.uint8)
    fast = aggregate_costs(cost, 3, 11, paths)
    slow = sgm_bruteforce(cost, 3, 11, DIRS8[:paths])
    assert np.array_equal(fast, slow)


def test_config_validation():
    with pytest.raises(ValueError):
        MatcherConfig(d_max=0)
    with pytest.raises(ValueError):
        MatcherConfig(d_max=2000)
    with pytest.raises(ValueError):
        MatcherConfig(p1=20, p2=10)
    with pytest.raises(ValueError):
        MatcherConfig(census_window=(8, 7))
    with pytest.raises(ValueError):
        MatcherConfig(census_window=(1, 3))
    with pytest.raises(ValueError):
        MatcherConfig(paths=6)


# --- match ---------------------------------------------------------------


def test_identical_images_give_zero(planted7):
    d = match(planted7.left, planted7.left, SMALL)
    m = d.valid & interior(d.shape, 5)
    assert m.sum() > 0.9 * interior(d.shape, 5).sum()
    assert np.all(np.abs(d.values[m]) <= 0.25)


def test_planted_shift_seven(planted7):
    d = match(planted7.left, planted7.right, SMALL)
    m = d.valid & interior(d.shape, 7 + 5)
    assert np.mean(np.abs(d.values[m] - 7) <= 0.5) >= 0.99


def test_too_small_for_window():
    img = RasterImage(np.zeros((8, 8), np.uint8))
    with pytest.raises(ImageTooSmallError):
        match(img, img)


def test_dimension_mismatch():
    a = RasterImage(np.zeros((10, 12), np.uint8))
    b = RasterImage(np.zeros((10, 13), np.uint8))
    with pytest.raises(DimensionMismatchError):
        match(a, b, SMALL)


def test_deterministic_and_in_range(planted7):
    a = match(planted7.left, planted7.right, SMALL)
    b = match(planted7.left, planted7.right, SMALL)
    assert a.values.tobytes() == b.values.tobytes()
    assert np.array_equal(a.valid, b.valid)
    v = a.values[a.valid]
    assert v.min() >= 0 and v.max() <= SMALL.d_max


def test_rgb_input_matches_gray_equivalent(planted7):
    rgb_l = RasterImage(np.repeat(np.asarray(planted7.left.data)[:, :, None], 3, axis=2))
    rgb_r = RasterImage(np.repeat(np.asarray(planted7.right.data)[:, :, None], 3, axis=2))
    a = match(rgb_l, rgb_r, SMALL)
    b = match(planted7.left, planted7.right, SMALL)
    assert np.array_equal(a.values, b.values)


def test_subpixel_off_gives_integers(planted7):
    cfg = MatcherConfig(d_max=32, subpixel=False)
    d = match(planted7.left, planted7.right, cfg)
    assert np.all(d.values == np.round(d.values))


def test_subpixel_recovers_fractional_shift():
    # smooth texture shifted by 7.5 px: integer matching alone is 0.5 off
    rng = np.random.default_rng(5)
    base = rng.normal(size=(40, 200))
    from scipy.ndimage import gaussian_filter, shift

    base = gaussian_filter(base, 1.5)
    base = (base - base.min()) / (base.max() - base.min()) * 255
    right = shift(base, (0, -7.5), order=3, mode="nearest")
    d = match(RasterImage(np.rint(base)), RasterImage(np.rint(right)), MatcherConfig(d_max=24))
    m = d.valid & interior(d.shape, 20, 10)
    assert np.median(np.abs(d.values[m] - 7.5)) < 0.35


def test_lr_check_invalidates_occluded_strip():
    scene = planted_pair(40, 120, 10, seed=1)
    on = match(scene.left, scene.right, MatcherConfig(d_max=24))
    off = match(scene.left, scene.right, MatcherConfig(d_max=24, lr_check=False))
    assert off.valid.all()
    # left columns x < 10 have no correspondence; most of them fail the check
    assert (~on.valid[:, :10]).mean() > 0.5
    assert on.valid[5:-5, 20:-10].mean() > 0.99


def test_winner_cost_exposed(planted7):
    r = match_with_costs(planted7.left, planted7.right, SMALL)
    assert r.winner_cost.shape == planted7.left.shape
    assert r.winner_cost.min() >= 0


def test_tie_break_smallest_disparity():
    flat = RasterImage(np.full((12, 40), 90, np.uint8))
    d = match(flat, flat, MatcherConfig(d_max=8, subpixel=False, lr_check=False))
    assert np.all(d.values == 0)


@settings(max_examples=8, deadline=None)
@given(st.integers(1, 20), st.integers(0, 10_000))
def test_planted_recovery_property(shift, seed):
    scene = planted_pair(32, 96, shift, seed=seed)
    d = match(scene.left, scene.right, MatcherConfig(d_max=32))
    m = d.valid & interior(d.shape, shift + 5)
    assert np.mean(np.abs(d.values[m] - shift) <= 0.5) >= 0.99


# --- external adapter ------------------------------------------------------

STUB_COPY = """
import shutil, sys
src, left, right, out = sys.argv[1:5]
shutil.copyfile(src, out)
"""

STUB_FAIL = """
import sys
sys.stderr.write("stub matcher: cannot converge\\n")
sys.exit(1)
"""

STUB_SLEEP = """
import time
time.sleep(10)
"""

STUB_NOTHING = "pass\n"

STUB_ECHO_SIZE = """
import sys
import numpy as np
from PIL import Image
left, right, out = sys.argv[1:4]
a = np.asarray(Image.open(left), dtype=np.float32)
b = np.asarray(Image.open(right), dtype=np.float32)
d = np.abs(a - b).astype('<f4')
with open(out, 'wb') as fh:
    fh.write(b'Pf\\n%d %d\\n-1.0\\n' % (d.shape[1], d.shape[0]))
    fh.write(np.flipud(d).tobytes())
"""


@pytest.fixture
def stub(tmp_path):
    def make(name, body):
        p = tmp_path / name
        p.write_text(body)
        return p

    return make


def _pair(h=6, w=5, seed=0):
    a = noise_texture(h, w, seed)
    return RasterImage(a), RasterImage(noise_texture(h, w, seed + 1))


def test_external_pass_through(tmp_path, stub):
    fixed = np.arange(30, dtype=np.float32).reshape(6, 5)
    write_pfm(tmp_path / "fixed.pfm", fixed)
    script = stub("copy.py", STUB_COPY)
    spec = ExternalMatcherSpec(f"{sys.executable} {script} {tmp_path / 'fixed.pfm'} {{left}} {{right}} {{out}}", tmp_path / "work")
    left, right = _pair()
    d = match_external(left, right, spec)
    assert np.array_equal(d.values, fixed)
    assert d.valid.all()
    assert list((tmp_path / "work").iterdir()) == []  # per-call files cleaned up


def test_external_nonzero_exit_carries_diagnostics(tmp_path, stub):
    script = stub("fail.py", STUB_FAIL)
    spec = ExternalMatcherSpec(f"{sys.executable} {script} {{left}} {{right}} {{out}}", tmp_path)
    with pytest.raises(NonZeroExitError) as info:
        match_external(*_pair(), spec)
    assert "cannot converge" in str(info.value)
    assert info.value.returncode == 1


def test_external_timeout(tmp_path, stub):
    script = stub("sleep.py", STUB_SLEEP)
    spec = ExternalMatcherSpec(f"{sys.executable} {script} {{left}} {{right}} {{out}}", tmp_path, timeout=0.5)
    with pytest.raises(MatcherTimeoutError):
        match_external(*_pair(), spec)


def test_external_missing_output(tmp_path, stub):
    script = stub("nothing.py", STUB_NOTHING)
    spec = ExternalMatcherSpec(f"{sys.executable} {script} {{left}} {{right}} {{out}}", tmp_path)
    with pytest.raises(MissingOutputError):
        match_external(*_pair(), spec)


def test_external_dimension_mismatch(tmp_path, stub):
    write_pfm(tmp_path / "fixed.pfm", np.zeros((3, 3), np.float32))
    script = stub("copy.py", STUB_COPY)
    spec = ExternalMatcherSpec(f"{sys.executable} {script} {tmp_path / 'fixed.pfm'} {{left}} {{right}} {{out}}", tmp_path)
    with pytest.raises(DimensionMismatchError):
        match_external(*_pair(), spec)


def test_external_concurrent_calls_are_independent(tmp_path, stub):
    script = stub("absdiff.py", STUB_ECHO_SIZE)
    spec = ExternalMatcherSpec(f"{sys.executable} {script} {{left}} {{right}} {{out}}", tmp_path / "work")
    pairs = [_pair(seed=0), _pair(seed=10)]
    results = [None, None]

    def run(i):
        results[i] = match_external(*pairs[i], spec)

    threads = [threading.Thread(target=run, args=(i,)) for i in range(2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for (left, right), d in zip(pairs, results):
        expected = np.abs(left.data.astype(np.float32) - right.data.astype(np.float32))
        assert np.array_equal(d.values, expected)


@pytest.mark.parametrize(
    "template",
    ["run {left} {right}", "run {left} {left} {right} {out}", "run {left} {right} {out} {out}"],
)
def test_template_placeholders_exactly_once(template):
    with pytest.raises(ValueError):
        ExternalMatcherSpec(template, ".")
