import numpy as np
import pytest

from mdme import motion as M


@pytest.fixture(scope="session")
def corpus():
    return M.synth_corpus()


@pytest.fixture(scope="session")
def corpus_pairs(corpus):
    warp = M.default_warp()
    return [M.synth_retarget(s, warp) for s in corpus]


@pytest.fixture()
def small_motion():
    return M.synth_motion(
        M.SynthSpec(name="small", duration=3.0, sine_count=2, noise=0.005, bump_count=1),
        __import__("mdme.rng", fromlist=["Rng"]).Rng(11),
    )


def make_layout_12():
    return {"joint": list(range(6)), "pose": [6, 7, 8], "twist": [9, 10, 11]}


@pytest.fixture()
def layout12():
    return make_layout_12()


def assert_allclose(a, b, tol):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    assert a.shape == b.shape, f"shape {a.shape} vs {b.shape}"
    err = np.abs(a - b).max() if a.size else 0.0
    assert err <= tol, f"max abs error {err} > {tol}"
