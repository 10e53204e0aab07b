import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flagrank import adaen, dataio
from flagrank import numkernel as nk
from flagrank.errors import PreconditionError, ShapeError


def tiny_model(seed=0, d=5, hidden=4, latent=3, **kw):
    cfg = adaen.AdaenConfig(
        input_dim=d, hidden=hidden, latent=latent, seed=seed, **kw
    )
    return adaen.build(cfg)


def test_config_defaults_follow_input_dim():
    cfg = adaen.AdaenConfig(input_dim=100)
    assert cfg.hidden == 100  # min(128, d)
    assert cfg.latent == 25  # min(32, max(2, d//4))
    big = adaen.AdaenConfig(input_dim=1000)
    assert big.hidden == 128 and big.latent == 32
    small = adaen.AdaenConfig(input_dim=6)
    assert small.latent == 2


def test_config_validation():
    with pytest.raises(PreconditionError):
        adaen.AdaenConfig(input_dim=10, alpha=1.2)
    with pytest.raises(PreconditionError):
        adaen.AdaenConfig(input_dim=10, lam=-0.5)
    with pytest.raises(PreconditionError):
        adaen.AdaenConfig(input_dim=0)
    with pytest.raises(PreconditionError):
        adaen.AdaenConfig(input_dim=10, hidden=3, latent=5)


def test_build_is_deterministic():
    m1 = tiny_model(seed=9)
    m2 = tiny_model(seed=9)
    for (n1, t1), (n2, t2) in zip(m1.param_items(), m2.param_items()):
        assert n1 == n2
        assert np.array_equal(t1.data, t2.data)
    m3 = tiny_model(seed=10)
    assert any(
        not np.array_equal(t1.data, t3.data)
        for (_, t1), (_, t3) in zip(m1.param_items(), m3.param_items())
    )


def test_reconstruct_shapes_and_attention_rows():
    model = tiny_model(d=6, hidden=4, latent=3)
    X = np.random.default_rng(1).random((2, 6))
    rec = adaen.reconstruct(model, X)
    assert rec.x1.shape == (2, 6) and rec.x2.shape == (2, 6)
    assert rec.z1.shape == (2, 3) and rec.z2.shape == (2, 3)
    assert np.allclose(rec.attention.sum(axis=1), 1.0, atol=1e-12)
    assert np.all((rec.x1 > 0) & (rec.x1 < 1))
    with pytest.raises(ShapeError):
        adaen.reconstruct(model, np.zeros((2, 7)))


def test_zero_attention_is_exactly_neutral():
    model = tiny_model(d=6, hidden=5, latent=3, seed=4)
    model.att.W.data[:] = 0.0
    model.att.b.data[:] = 0.0
    X = np.random.default_rng(2).random((3, 6))
    rec = adaen.reconstruct(model, X)
    # same stack with the attention gate removed entirely
    h = nk.affine_sigmoid(X, model.enc1[0])
    z1 = nk.affine_sigmoid(h, model.enc1[1])
    out = nk.affine_sigmoid(nk.affine_sigmoid(z1, model.dec1[0]), model.dec1[1])
    assert np.array_equal(rec.x1, out)  # bitwise, not just approximately
    assert np.array_equal(rec.z1, z1)
    assert np.all(rec.attention == 1.0 / 3.0)


def test_reconstruction_losses_hand_example():
    x = np.array([[1.0, 0.0]])
    x1 = np.array([[0.5, 0.5]])
    l1, l2, blend = adaen.reconstruction_losses(x, x1, x, alpha=0.5)
    assert l1 == pytest.approx(0.5)
    assert l2 == 0.0
    assert blend == pytest.approx(0.25)
    # endpoint identities are exact
    l1b, _, blend1 = adaen.reconstruction_losses(x, x1, x, alpha=1.0)
    assert blend1 == l1b
    _, l2b, blend0 = adaen.reconstruction_losses(x, x1, x, alpha=0.0)
    assert blend0 == l2b


def test_adversarial_losses_at_indifferent_discriminator():
    model = tiny_model(d=4, hidden=3, latent=2)
    for layer in model.disc:
        layer.W.data[:] = 0.0
        layer.b.data[:] = 0.0  # sigmoid(0) = 0.5 at every stage
    x = np.random.default_rng(0).random((5, 4))
    l_d, l_adv = adaen.adversarial_losses(model, x, x, x)
    assert l_d == pytest.approx(3 * math.log(2), rel=1e-12)
    assert l_adv == pytest.approx(2 * math.log(2), rel=1e-12)


def test_adversarial_losses_bounded_under_clamp():
    model = tiny_model(d=4, hidden=3, latent=2)
    # saturate the discriminator toward D(x) ~ 1 via a huge bias
    model.disc[1].b.data[:] = 50.0
    x = np.random.default_rng(0).random((3, 4))
    l_d, l_adv = adaen.adversarial_losses(model, x, x, x)
    assert math.isfinite(l_d) and math.isfinite(l_adv)
    assert l_adv == pytest.approx(0.0, abs=1e-5)


def test_combined_loss():
    assert adaen.combined_loss(0.25, 2 * math.log(2), 0.0) == 0.25
    val = adaen.combined_loss(0.25, 2 * math.log(2), 0.1)
    assert val == pytest.approx(0.3886, abs=5e-5)
    with pytest.raises(PreconditionError):
        adaen.combined_loss(1.0, 1.0, -0.1)


def test_disc_loss_gradient_matches_finite_differences():
    model = tiny_model(d=5, hidden=4, latent=3, seed=7)
    rng = np.random.default_rng(3)
    x = rng.random((4, 5))
    rec = adaen.reconstruct(model, x)

    def loss_fn(tape, params):
        return adaen._taped_disc_loss(
            tape, model, nk.Tensor(x), nk.Tensor(rec.x1), nk.Tensor(rec.x2)
        )

    assert nk.finite_diff_check(loss_fn, model.disc_tensors()) < 1e-4


def test_full_objective_gradient_matches_finite_differences():
    model = tiny_model(d=5, hidden=4, latent=3, seed=11)
    rng = np.random.default_rng(5)
    x = rng.random((4, 5))
    cfg = model.config

    def loss_fn(tape, params):
        x_t = nk.Tensor(x)
        x1, x2, _, _, _ = adaen._forward(tape, model, x_t)
        l1 = nk.mean_row_sumsq(tape, nk.sub(tape, x1, x_t))
        l2 = nk.mean_row_sumsq(tape, nk.sub(tape, x2, x_t))
        blend = nk.add(
            tape,
            nk.scale(tape, l1, cfg.alpha),
            nk.scale(tape, l2, 1.0 - cfg.alpha),
        )
        d1 = nk.clip(
            tape, adaen._disc_out(tape, model, x1), adaen.CLAMP_LO, adaen.CLAMP_HI
        )
        d2 = nk.clip(
            tape, adaen._disc_out(tape, model, x2), adaen.CLAMP_LO, adaen.CLAMP_HI
        )
        adv = adaen._taped_adv_loss(tape, d1, d2)
        return nk.add(tape, blend, nk.scale(tape, adv, cfg.lam))

    assert nk.finite_diff_check(loss_fn, model.ae_tensors()) < 1e-4


def test_train_zero_epochs_is_identity():
    model = tiny_model(seed=1)
    before = [t.data.copy() for _, t in model.param_items()]
    trace = adaen.train(model, np.random.default_rng(0).random((6, 5)), epochs=0)
    assert trace == []
    for (_, t), old in zip(model.param_items(), before):
        assert np.array_equal(t.data, old)


def test_train_rejects_empty_and_misshaped_input():
    model = tiny_model()
    with pytest.raises(PreconditionError):
        adaen.train(model, np.zeros((0, 5)), epochs=1)
    with pytest.raises(ShapeError):
        adaen.train(model, np.zeros((4, 9)), epochs=1)


def test_single_ae_step_descends_on_fixed_batch():
    model = tiny_model(seed=3, lr=1e-4)
    batch = np.random.default_rng(8).random((8, 5))
    adam = nk.AdamState.for_params(model.ae_tensors())
    _, _, _, _, total_before = adaen.ae_training_step(model, batch, adam)
    rec = adaen.reconstruct(model, batch)
    _, _, blend_after = adaen.reconstruction_losses(
        batch, rec.x1, rec.x2, model.config.alpha
    )
    _, adv_after = adaen.adversarial_losses(model, batch, rec.x1, rec.x2)
    total_after = blend_after + model.config.lam * adv_after
    assert total_after < total_before


def test_training_is_bitwise_deterministic():
    def run():
        model = tiny_model(seed=21)
        X = (np.random.default_rng(77).random((30, 5)) < 0.4).astype(float)
        adaen.train(model, X, epochs=2)
        ds = dataio.BooleanDataset(
            num_attrs=5,
            rows=tuple((f"p{i}", (i % 5,)) for i in range(7)),
        )
        return adaen.anomaly_scores(model, ds), model
    scores_a, model_a = run()
    scores_b, model_b = run()
    assert scores_a == scores_b  # exact float equality
    for (_, ta), (_, tb) in zip(model_a.param_items(), model_b.param_items()):
        assert np.array_equal(ta.data, tb.data)


def test_training_reduces_losses_on_easy_data():
    model = tiny_model(seed=2, d=6, hidden=5, latent=3)
    rng = np.random.default_rng(4)
    X = (rng.random((60, 6)) < np.array([0.9, 0.1, 0.8, 0.2, 0.5, 0.05])).astype(
        float
    )
    trace = adaen.train(model, X, epochs=8)
    assert len(trace) == 8
    assert trace[-1].blend < trace[0].blend


def test_anomaly_scores_permutation_equivariant():
    model = tiny_model(d=6, hidden=4, latent=2, seed=5)
    rows = tuple((f"p{i}", tuple(sorted({i % 6, (2 * i) % 6}))) for i in range(9))
    ds = dataio.BooleanDataset(num_attrs=6, rows=rows)
    ds_rev = dataio.BooleanDataset(num_attrs=6, rows=tuple(reversed(rows)))
    fwd = {sp.process_id: sp.error for sp in adaen.anomaly_scores(model, ds)}
    rev = {sp.process_id: sp.error for sp in adaen.anomaly_scores(model, ds_rev)}
    assert fwd == rev
    with pytest.raises(ShapeError):
        adaen.anomaly_scores(tiny_model(d=4, hidden=3, latent=2), ds)


def test_row_errors_zero_for_perfect_reconstruction():
    x = np.random.default_rng(0).random((4, 3))
    assert np.array_equal(adaen.row_errors(x, x, x, 0.5), np.zeros(4))
    e = adaen.row_errors(
        np.array([[1.0, 0.0]]), np.array([[0.5, 0.5]]), np.array([[1.0, 0.0]]), 0.5
    )
    assert e[0] == pytest.approx(0.25)


def test_threshold_nearest_rank():
    scores = [float(v) for v in range(1, 11)]
    tau = adaen.calibrate_threshold(scores, 0.8)
    assert tau == 8.0
    assert sum(1 for s in scores if s > tau) == 2
    assert adaen.calibrate_threshold([3.3], 0.8) == 3.3
    assert adaen.calibrate_threshold([2.0, 2.0, 2.0], 0.8) == 2.0
    # ceil(0.8*35) is 28 even though 0.8*35 floats to 28.000000000000004
    tau35 = adaen.calibrate_threshold([float(v) for v in range(1, 36)], 0.8)
    assert tau35 == 28.0
    with pytest.raises(PreconditionError):
        adaen.calibrate_threshold([], 0.8)
    with pytest.raises(PreconditionError):
        adaen.calibrate_threshold([1.0], 1.0)


@given(
    st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=80),
    st.floats(0.01, 0.99),
)
@settings(max_examples=80, deadline=None)
def test_threshold_contract(scores, p):
    tau = adaen.calibrate_threshold(scores, p)
    assert tau in scores
    import math as _m

    k = _m.ceil(p * len(scores) - 1e-9)
    assert sum(1 for s in scores if s <= tau) >= k


def test_checkpoint_roundtrip_is_bitwise():
    model = tiny_model(seed=13)
    X = (np.random.default_rng(6).random((20, 5)) < 0.3).astype(float)
    adaen.train(model, X, epochs=2)
    buf = io.StringIO()
    adaen.save_model(model, buf)
    buf.seek(0)
    loaded = adaen.load_model(buf)
    for (na, ta), (nb, tb) in zip(model.param_items(), loaded.param_items()):
        assert na == nb and np.array_equal(ta.data, tb.data)
    assert loaded.config == model.config
    ds = dataio.BooleanDataset(
        num_attrs=5, rows=tuple((f"q{i}", (i % 5,)) for i in range(5))
    )
    assert adaen.anomaly_scores(model, ds) == adaen.anomaly_scores(loaded, ds)


def test_checkpoint_rejects_unknown_format():
    with pytest.raises(PreconditionError):
        adaen.load_model(io.StringIO('{"format": "other", "params": {}}'))
