import math

import numpy as np
import pytest

from mdme import network as N
from mdme import tensor as T
from mdme import wavelet as W
from mdme.errors import ConfigError
from mdme.objectives import imitation_loss
from mdme.rng import Rng
from mdme.tensor import Tensor


def entropy_reference(values):
    """Independent oracle for the subband entropy definition."""
    w2 = np.asarray(values, dtype=float).ravel() ** 2
    total = w2.sum()
    if total == 0:
        return 0.0
    p = w2 / total
    p = np.maximum(p, 1e-12)
    return float(-(w2 / total * np.log2(p)).sum())


# ---------------------------------------------------------------------------
# subband entropy
# ---------------------------------------------------------------------------

def test_entropy_single_nonzero_is_zero():
    assert N.subband_entropy(np.array([[1.0, 0.0], [0.0, 0.0]])).item() == 0.0


def test_entropy_uniform_is_log2_count():
    assert abs(N.subband_entropy(np.ones((2, 2))).item() - 2.0) < 1e-12


def test_entropy_hand_case():
    # p = [9/25, 16/25]
    expected = -(0.36 * math.log2(0.36) + 0.64 * math.log2(0.64))
    got = N.subband_entropy(np.array([[3.0, 4.0]])).item()
    assert abs(got - expected) < 1e-12
    assert abs(got - 0.94268) < 5e-6


def test_entropy_zero_subband_convention():
    assert N.subband_entropy(np.zeros((3, 3))).item() == 0.0


def test_entropy_matches_reference_on_random_bands():
    rng = Rng(0)
    for _ in range(50):
        band = rng.normal(size=(5, 7))
        got = N.subband_entropy(band).item()
        assert abs(got - entropy_reference(band)) < 1e-10


def test_entropy_bounds_and_scale_invariance():
    rng = Rng(1)
    for _ in range(200):
        band = rng.normal(size=(4, 6))
        s = N.subband_entropy(band).item()
        assert 0.0 <= s <= math.log2(band.size) + 1e-12
        s2 = N.subband_entropy(3.7 * band).item()
        assert abs(s - s2) < 1e-9


def test_entropy_gradient_check():
    x = Tensor(Rng(2).normal(size=(8, 8)))

    def f(t):
        p = W.dwt2d_multilevel(t, 2)
        return T.tsum(N.pyramid_entropies(p))

    assert T.check_gradients(f, x) < 1e-4


# ---------------------------------------------------------------------------
# presets and widths
# ---------------------------------------------------------------------------

def test_preset_dimensionalities():
    quad = N.quadruped_preset()
    assert quad.entropy_count == 13
    assert quad.pyramid_count == 919
    human = N.humanoid_preset()
    assert human.entropy_count == 7
    assert human.pyramid_count == 180


def test_decoder_width_arithmetic():
    for cfg in (N.quadruped_preset(), N.humanoid_preset(), N.synth_preset()):
        expected = (cfg.entropy_count + cfg.latent_dim + cfg.goal_dim
                    + cfg.proprio_dim + cfg.action_dim)
        assert cfg.decoder_input_width() == expected


@pytest.mark.parametrize("base_name", ["quadruped", "humanoid"])
def test_ablation_width_law(base_name):
    base = N.MODEL_PRESETS[base_name]()
    w_full = base.decoder_input_width()
    deltas = {
        "full": 0,
        "no-entropy": base.pyramid_count - base.entropy_count,
        "no-history": 0,
        "no-latest-frame": -base.goal_dim,
        "wavelet-only": -base.latent_dim,
        "vae-only": -base.entropy_count,
        "fft-instead-of-dwt": base.spectrum_count - base.entropy_count,
    }
    for key, delta in deltas.items():
        cfg = N.build_ablation(key, base)
        if key == "no-history":
            assert cfg.history == 1
            # entropy count unchanged, so the width delta is zero
        assert cfg.decoder_input_width() == w_full + delta, key


def test_fft_feature_length():
    cfg = N.build_ablation("fft-instead-of-dwt", N.quadruped_preset())
    assert cfg.structured_width() == 25 * (25 // 2 + 1)
    tiny = N.build_ablation("fft-instead-of-dwt", N.tiny_preset())
    model = N.MdmeModel(tiny, init_rng=Rng(0))
    wins = Rng(1).normal(size=(2, tiny.history, tiny.goal_dim))
    feats = model.structured_features(wins)
    assert feats.shape == (2, tiny.phase_channels * (tiny.history // 2 + 1))


def test_unknown_ablation_lists_valid_keys():
    with pytest.raises(ConfigError) as exc:
        N.build_ablation("bogus", N.tiny_preset())
    for key in N.ABLATION_KEYS:
        assert key in str(exc.value)


def test_entropy_vector_validation():
    vec = N.EntropyVector(values=np.zeros(13), levels=4)
    assert vec.values.shape == (13,)
    with pytest.raises(Exception):
        N.EntropyVector(values=np.zeros(12), levels=4)


# ---------------------------------------------------------------------------
# structured encoder
# ---------------------------------------------------------------------------

def test_structured_output_lengths():
    for preset, n in ((N.quadruped_preset(), 13), (N.humanoid_preset(), 7)):
        model = N.MdmeModel(preset, init_rng=Rng(0))
        win = Rng(1).normal(size=(preset.history, preset.goal_dim))
        z = model.encode_structured(win)
        assert z.shape == (n,)
        assert np.isfinite(z.data).all()


def test_structured_encoder_deterministic():
    cfg = N.synth_preset()
    model = N.MdmeModel(cfg, init_rng=Rng(3))
    win = Rng(4).normal(size=(cfg.history, cfg.goal_dim))
    a = model.encode_structured(win).data
    b = model.encode_structured(win).data
    assert np.array_equal(a, b)


def test_structured_rejects_wrong_window_shape():
    model = N.MdmeModel(N.tiny_preset(), init_rng=Rng(0))
    with pytest.raises(ConfigError):
        model.encode_structured(np.zeros((3, 4)))


def test_entropy_values_bounded_for_many_windows():
    cfg = N.tiny_preset()
    model = N.MdmeModel(cfg, init_rng=Rng(5))
    wins = Rng(6).normal(size=(1000, cfg.history, cfg.goal_dim))
    ents = model.encode_structured(wins, train=False).data
    shapes = W.subband_shapes(cfg.phase_channels, cfg.history, cfg.levels)
    counts = [shapes[-1][0] * shapes[-1][1]]
    for r, c in shapes:
        counts.extend([r * c] * 3)
    assert ents.shape == (1000, cfg.entropy_count)
    assert (ents >= -1e-12).all()
    assert (ents <= np.log2(counts)[None, :] + 1e-9).all()


# ---------------------------------------------------------------------------
# stochastic encoder
# ---------------------------------------------------------------------------

def test_mean_mode_is_deterministic():
    cfg = N.tiny_preset()
    model = N.MdmeModel(cfg, init_rng=Rng(7))
    win = Rng(8).normal(size=(cfg.history, cfg.goal_dim))
    z1 = model.encode_unstructured(win, mode="mean").z.data
    z2 = model.encode_unstructured(win, mode="mean").z.data
    assert np.array_equal(z1, z2)


def test_sample_statistics_match_mu_sigma():
    cfg = N.tiny_preset()
    model = N.MdmeModel(cfg, init_rng=Rng(9))
    win = Rng(10).normal(size=(cfg.history, cfg.goal_dim))
    n = 10_000
    wins = np.repeat(win[None], n, axis=0)
    lat = model.encode_unstructured(wins, rng=Rng(11), mode="sample")
    mu = lat.mu.data[0]
    sigma = lat.sigma.data[0]
    z = lat.z.data
    se = sigma / math.sqrt(n)
    assert (np.abs(z.mean(axis=0) - mu) <= 4 * se).all()
    assert (np.abs(z.std(axis=0) - sigma) <= 0.05 * sigma).all()


def test_frozen_eps_gradient_of_znorm():
    cfg = N.tiny_preset()
    model = N.MdmeModel(cfg, init_rng=Rng(12))
    win = Rng(13).normal(size=(cfg.history, cfg.goal_dim))
    mu_w = model.params["enc_mu.w"]

    def f():
        lat = model.encode_unstructured(win, rng=Rng(99), mode="sample")  # fixed eps
        return T.tsum(T.square(lat.z))

    assert T.check_gradients_many(f, [mu_w]) < 1e-4


def test_sample_mode_requires_rng():
    model = N.MdmeModel(N.tiny_preset(), init_rng=Rng(0))
    win = np.zeros((5, 4))
    with pytest.raises(ConfigError):
        model.encode_unstructured(win, mode="sample")


# ---------------------------------------------------------------------------
# KL
# ---------------------------------------------------------------------------

def make_latent(mu, sigma):
    mu = Tensor(np.asarray(mu, dtype=float))
    sigma_arr = np.asarray(sigma, dtype=float)
    return N.StochasticLatent(mu=mu, sigma=Tensor(sigma_arr),
                              log_sigma=Tensor(np.log(sigma_arr)), z=mu)


def test_kl_matching_distributions_is_zero():
    assert N.kl_to_standard_normal(make_latent([0.0], [1.0])).item() == 0.0


def test_kl_closed_forms():
    assert abs(N.kl_to_standard_normal(make_latent([1.0], [1.0])).item() - 0.5) < 1e-12
    expected = 0.5 * (4.0 - 1.0 - math.log(4.0))
    got = N.kl_to_standard_normal(make_latent([0.0], [2.0])).item()
    assert abs(got - expected) < 1e-12
    assert abs(got - 0.80685) < 5e-6


def test_kl_nonnegative_random():
    rng = Rng(14)
    for _ in range(100):
        lat = make_latent(rng.normal(size=(6,)), np.exp(rng.normal(size=(6,))))
        assert N.kl_to_standard_normal(lat).item() >= -1e-12


# ---------------------------------------------------------------------------
# decoder and forward
# ---------------------------------------------------------------------------

def test_zero_init_decoder_emits_zero_action():
    cfg = N.quadruped_preset()
    model = N.MdmeModel(cfg, init_rng=Rng(15))
    win = np.zeros((cfg.history, cfg.goal_dim))
    action, _, _ = model.forward(win, mode="mean")
    assert action.shape == (12,)
    assert np.array_equal(action.data, np.zeros(12))


def test_decoder_gradient_wrt_structured_input():
    cfg = N.tiny_preset()
    model = N.MdmeModel(cfg, init_rng=Rng(16))
    rng = Rng(17)
    zw = Tensor(rng.uniform(0.0, 2.0, size=(1, cfg.entropy_count)))
    zv = Tensor(rng.normal(size=(1, cfg.latent_dim)))
    goal = rng.normal(size=(1, cfg.goal_dim))
    prop = rng.normal(size=(1, cfg.proprio_dim))
    act = rng.normal(size=(1, cfg.action_dim))
    # non-zero output head so the gradient is informative
    model.params["dec_out.w"].data = Rng(18).normal(size=model.params["dec_out.w"].shape) * 0.3

    def f():
        return T.tsum(T.square(model.decode(zw, zv, goal, prop, act)))

    assert T.check_gradients_many(f, [zw]) < 1e-4


def test_forward_mean_mode_deterministic_and_width():
    cfg = N.synth_preset()
    model = N.MdmeModel(cfg, init_rng=Rng(19))
    wins = Rng(20).normal(size=(3, cfg.history, cfg.goal_dim))
    a1, lat, zw = model.forward(wins, mode="mean")
    a2, _, _ = model.forward(wins, mode="mean")
    assert np.array_equal(a1.data, a2.data)
    assert zw.shape == (3, cfg.entropy_count)
    assert lat.z.shape == (3, cfg.latent_dim)
    assert model.params["dec1.w"].shape[0] == cfg.decoder_input_width()


def test_full_model_loss_gradient_check_tiny_config():
    cfg = N.tiny_preset()
    model = N.MdmeModel(cfg, init_rng=Rng(21))
    rng = Rng(22)
    wins = rng.normal(size=(2, cfg.history, cfg.goal_dim))
    targets = rng.normal(size=(2, cfg.action_dim))
    names = [n for n in model.params if not n.endswith(("run_mean", "run_var"))]
    tensors = [model.params[n] for n in names]

    def f():
        pred, lat, _ = model.forward(wins, rng=Rng(50), mode="sample", train=True)
        return imitation_loss(pred, targets, lat, beta=1e-3)

    assert T.check_gradients_many(f, tensors) < 1e-4


def test_forward_is_finite_for_large_bounded_inputs():
    cfg = N.tiny_preset()
    model = N.MdmeModel(cfg, init_rng=Rng(23))
    wins = Rng(24).uniform(-100.0, 100.0, size=(4, cfg.history, cfg.goal_dim))
    action, lat, zw = model.forward(wins, rng=Rng(25), mode="sample", train=True)
    for t in (action, lat.z, zw):
        assert np.isfinite(t.data).all()


def test_forward_rejects_nonfinite_windows():
    cfg = N.tiny_preset()
    model = N.MdmeModel(cfg, init_rng=Rng(26))
    wins = np.zeros((1, cfg.history, cfg.goal_dim))
    wins[0, 0, 0] = np.nan
    with pytest.raises(Exception):
        model.forward(wins, mode="mean")


def test_wavelet_only_and_vae_only_branch_errors():
    w_only = N.MdmeModel(N.build_ablation("wavelet-only", N.tiny_preset()), init_rng=Rng(0))
    with pytest.raises(ConfigError):
        w_only.encode_unstructured(np.zeros((5, 4)), mode="mean")
    v_only = N.MdmeModel(N.build_ablation("vae-only", N.tiny_preset()), init_rng=Rng(0))
    with pytest.raises(ConfigError):
        v_only.encode_structured(np.zeros((5, 4)))


def test_scale_invariance_on_raw_dwt_subbands():
    # bypasses conv/batchnorm: the invariance claim is about the raw pyramid
    rng = Rng(27)
    x = rng.normal(size=(8, 8))
    for scale in (0.5, 3.0, 41.0):
        p1 = W.dwt2d_multilevel(x, 2)
        p2 = W.dwt2d_multilevel(scale * x, 2)
        for (_, b1), (_, b2) in zip(p1.subbands(), p2.subbands()):
            s1 = N.subband_entropy(b1.data).item()
            s2 = N.subband_entropy(b2.data).item()
            assert abs(s1 - s2) < 1e-9
