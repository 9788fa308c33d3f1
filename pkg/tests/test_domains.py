import numpy as np
import pytest

from latentplan import domains
from latentplan.domains import imageio
from latentplan.domains.base import bfs_distances, bfs_path_length, random_walk
from latentplan.ndcore import RngStream


@pytest.fixture(scope="module")
def puzzle():
    return domains.EightPuzzle()


def test_puzzle8_counts(puzzle):
    states = puzzle.all_states()
    assert len(states) == 362880
    assert sum(len(puzzle.successors(s)) for s in states) == 967680
    assert len(bfs_distances(puzzle, puzzle.goal_state())) == 181440


def test_lightsout4_counts():
    lo = domains.LightsOut(4)
    states = lo.all_states()
    assert len(states) == 65536
    assert len(states) * len(lo.successors(states[0])) == 1048576


def test_lightsout_press_footprint():
    lo = domains.LightsOut(4)
    zero = lo.goal_state()
    assert sum(lo.press(zero, 0)) == 3  # corner
    assert sum(lo.press(zero, 5)) == 5  # interior


def test_lightsout_press_is_involution():
    lo = domains.LightsOut(3)
    rng = np.random.default_rng(0)
    for _ in range(20):
        s = tuple(int(v) for v in rng.integers(0, 2, 9))
        for cell in range(9):
            assert lo.press(lo.press(s, cell), cell) == s


def test_hanoi_counts():
    h = domains.Hanoi(4)
    states = h.all_states()
    assert len(states) == 81
    assert sum(len(h.successors(s)) for s in states) == 240


@pytest.mark.parametrize("make", [lambda: domains.Hanoi(3), lambda: domains.LightsOut(3), lambda: domains.EightPuzzle()])
def test_successors_symmetric(make):
    d = make()
    states = d.all_states()[:2000]
    for s in states:
        for t in d.successors(s):
            assert s in d.successors(t)


def test_invalid_state_rejected(puzzle):
    with pytest.raises(domains.InvalidState):
        puzzle.gt_successors((1, 1, 2, 3, 4, 5, 6, 7, 8))
    with pytest.raises(domains.InvalidState):
        domains.LightsOut(3).gt_successors((2,) * 9)


# -- rendering --------------------------------------------------------------------

def test_image_sizes(puzzle):
    assert puzzle.render(puzzle.goal_state()).shape == (42, 42)
    assert domains.LightsOut(4).render((0,) * 16).shape == (36, 36)
    h = domains.Hanoi(4)
    assert h.render(h.goal_state()).shape == (16, 60)


def test_render_deterministic(puzzle):
    s = (3, 1, 2, 0, 4, 5, 6, 7, 8)
    np.testing.assert_array_equal(puzzle.render(s), puzzle.render(s))


def test_lightsout_cell_change_is_local():
    lo = domains.LightsOut(4)
    a = (0,) * 16
    b = tuple(1 if i == 6 else 0 for i in range(16))
    diff = np.argwhere(lo.render(a) != lo.render(b))
    r, c = divmod(6, 4)
    assert diff[:, 0].min() >= 9 * r and diff[:, 0].max() < 9 * (r + 1)
    assert diff[:, 1].min() >= 9 * c and diff[:, 1].max() < 9 * (c + 1)


def test_tiles_are_uniform():
    for tiles in (domains.TileSet.digits(),
                  domains.TileSet.from_photograph(domains.synthetic_photograph("mandrill"))):
        assert tiles.tiles.shape == (9, 14, 14)
        assert tiles.tiles.min() >= 0 and tiles.tiles.max() <= 1


def test_mnist_tiles_from_idx(tmp_path):
    import gzip
    import struct

    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, (20, 28, 28), dtype=np.uint8)
    labels = np.arange(20, dtype=np.uint8) % 10
    with gzip.open(tmp_path / "img.gz", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, 20, 28, 28) + images.tobytes())
    with gzip.open(tmp_path / "lbl.gz", "wb") as f:
        f.write(struct.pack(">II", 0x801, 20) + labels.tobytes())
    d = domains.make({"name": "puzzle8", "tiles": f"mnist:{tmp_path / 'img.gz'},{tmp_path / 'lbl.gz'}"})
    assert d.render(d.goal_state()).shape == (42, 42)


# -- swirl ------------------------------------------------------------------------

def test_swirl_zero_strength_is_identity():
    img = np.random.default_rng(0).random((27, 27)).astype(np.float32)
    np.testing.assert_allclose(imageio.swirl(img, strength=0.0), img, atol=1e-6)


def test_swirl_fixes_centre_and_is_deterministic():
    img = np.random.default_rng(1).random((27, 27)).astype(np.float32)
    out = imageio.swirl(img)
    assert out[13, 13] == pytest.approx(img[13, 13], abs=1e-5)
    assert out.tobytes() == imageio.swirl(img).tobytes()


# -- classification ---------------------------------------------------------------

@pytest.mark.parametrize("make", [lambda: domains.LightsOut(3), lambda: domains.TwistedLightsOut(3),
                                  lambda: domains.Hanoi(4)])
def test_classify_round_trip(make):
    d = make()
    for s in d.all_states():
        assert d.classify(d.render(s)) == s


def test_classify_puzzle_sample(puzzle):
    rng = RngStream(0)
    states = bfs_distances(puzzle, puzzle.goal_state())
    keys = list(states)
    for i in rng.integers(0, len(keys), 300):
        s = keys[int(i)]
        assert puzzle.classify(puzzle.render(s)) == s


def test_duplicate_tile_rejected(puzzle):
    img = puzzle.render(puzzle.goal_state())
    img[:14, 14:28] = img[14:28, :14]  # copy tile 3 over tile 1
    assert puzzle.classify(img) is None


def test_classify_rejects_noise_image():
    lo = domains.LightsOut(3)
    assert lo.classify(np.full(lo.image_shape, 0.5, np.float32)) is None


# -- instances and validation -------------------------------------------------------

def test_random_walk_is_self_avoiding():
    lo = domains.LightsOut(3)
    path = random_walk(lo, lo.goal_state(), 7, RngStream(3))
    assert len(path) == 8 and len(set(path)) == 8
    with pytest.raises(ValueError):
        random_walk(lo, lo.goal_state(), 0, RngStream(3))


def test_instances_bounded_by_walk_length(puzzle):
    for walk in (1, 7):
        for inst in domains.sample_instances(puzzle, 10, walk, RngStream(walk)):
            assert bfs_path_length(puzzle, inst.init, inst.goal) <= walk
            np.testing.assert_array_equal(inst.init_image, puzzle.render(inst.init))
            if walk == 1:
                assert inst.init in puzzle.successors(inst.goal)


def test_validate_plan(puzzle):
    g = puzzle.goal_state()
    assert domains.validate_plan(puzzle, g, g, [])
    bad = (1, 0, 2, 3, 4, 5, 6, 7, 8)
    far = (0, 1, 2, 3, 4, 5, 6, 8, 7)  # swaps two tiles away from the blank
    assert domains.validate_plan(puzzle, bad, g, [bad, g])
    assert not domains.validate_plan(puzzle, far, g, [far, g])
    assert not domains.validate_plan(puzzle, bad, g, [bad, None, g])


def test_hanoi_optimal_plan_validates():
    h = domains.Hanoi(4)
    init, goal = h.initial_state(), h.goal_state()
    # classic recursive solution
    moves = []

    def solve(n, src, dst, via):
        if n == 0:
            return
        solve(n - 1, src, via, dst)
        moves.append((n - 1, dst))
        solve(n - 1, via, dst, src)

    solve(4, 0, 2, 1)
    states, s = [init], list(init)
    for disk, peg in moves:
        s[disk] = peg
        states.append(tuple(s))
    assert len(moves) == 15
    assert domains.validate_plan(h, init, goal, states)


# -- image files -------------------------------------------------------------------

def test_pgm_round_trip(tmp_path):
    img = np.random.default_rng(0).random((9, 13)).astype(np.float32)
    imageio.write_pgm(tmp_path / "a.pgm", img)
    back = imageio.read_pgm(tmp_path / "a.pgm")
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-6


def test_corruptions():
    img = np.zeros((50, 50), np.float32)
    sp = imageio.saltpepper_corrupt(img, 0.06, RngStream(0))
    assert 0.01 < (sp == 1).mean() < 0.05
    g = imageio.gaussian_corrupt(img, 0.3, RngStream(0))
    assert 0.25 < g.std() < 0.35
