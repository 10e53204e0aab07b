"""GAN over oracle-labeled normal rows, used to mint synthetic normals.

A small generator (noise -> hidden -> attribute probabilities) plays the
standard minimax game against a separate discriminator.  Generated
probability rows are binarized at 0.5 so the synthetic samples live in the
same Boolean space as the real data.  Augmentation quality is gauged by the
mean absolute gap between per-attribute activation frequencies of real and
synthetic rows.
"""

import numpy as np

from . import numkernel as nk
from .errors import NumericError, PreconditionError, ShapeError
from .util import derive_seed

CLAMP_LO = 1e-7
CLAMP_HI = 1.0 - 1e-7
DEFAULT_NOISE_DIM = 32
_BATCH = 64
_CALIB_SAMPLES = 512


class GanModel:
    def __init__(self, gen, disc, noise_dim, seed, num_attrs):
        self.gen = gen
        self.disc = disc
        self.noise_dim = noise_dim
        self.seed = seed
        self.num_attrs = num_attrs

    def gen_tensors(self):
        out = []
        for layer in self.gen:
            out.extend(layer.tensors())
        return out

    def disc_tensors(self):
        out = []
        for layer in self.disc:
            out.extend(layer.tensors())
        return out


def _default_hidden(d):
    return min(64, max(8, d))


def _default_disc_hidden(d):
    # deliberately narrow: a strong critic keys on the discreteness of the
    # real rows, starving the generator; a weak one mostly polices marginals
    return min(4, max(2, d))


def _calibrate_output_bias(model, freqs, seed):
    """Anchor the generator's output bias so binarized marginals match the
    real attribute frequencies.

    A generated row activates attribute j iff the pre-activation s_j(z)
    plus bias clears 0 (sigmoid > 0.5), so setting the bias to minus the
    empirical (1 - f_j)-quantile of s_j over a fixed calibration noise
    sample makes the activation rate f_j, distribution-free.  Applied at
    init and again after adversarial training: the game shapes the joint
    structure of the rows, the recalibration keeps their marginals pinned
    to the data (standard output recalibration for a thresholded model).
    """
    rng = np.random.default_rng(derive_seed(seed, "gan-calibrate"))
    z = rng.standard_normal((_CALIB_SAMPLES, model.noise_dim))
    h = nk.affine_sigmoid(z, model.gen[0])
    s = h @ model.gen[1].W.data.T
    f = np.clip(freqs, 0.0, 1.0)
    cuts = np.array([np.quantile(s[:, j], 1.0 - f[j]) for j in range(s.shape[1])])
    model.gen[1].b.data = -cuts


def build_gan(num_attrs, seed, noise_dim=DEFAULT_NOISE_DIM, hidden=None,
              disc_hidden=None):
    if num_attrs < 1:
        raise PreconditionError("num_attrs must be >= 1")
    if hidden is None:
        hidden = _default_hidden(num_attrs)
    if disc_hidden is None:
        disc_hidden = _default_disc_hidden(num_attrs)
    rng = np.random.default_rng(derive_seed(seed, "gan-init"))
    gen = [
        nk.init_weights(rng, noise_dim, hidden),
        nk.init_weights(rng, hidden, num_attrs),
    ]
    disc = [
        nk.init_weights(rng, num_attrs, disc_hidden),
        nk.init_weights(rng, disc_hidden, 1),
    ]
    return GanModel(gen, disc, noise_dim, seed, num_attrs)


def _stack(tape, x, layers):
    out = x
    for layer in layers:
        out = nk.sigmoid(tape, nk.affine(tape, out, layer.W, layer.b))
    return out


def gen_loss_graph(tape, model, z):
    """-mean log D(G(z)): the generator's objective (discriminator frozen)."""
    fake = _stack(tape, nk.Tensor(z), model.gen)
    d_fake = nk.clip(tape, _stack(tape, fake, model.disc), CLAMP_LO, CLAMP_HI)
    return nk.scale(tape, nk.mean_all(tape, nk.log(tape, d_fake)), -1.0)


def disc_loss_graph(tape, model, real, fake):
    """-mean log D(x) - mean log(1 - D(fake)); fake is a constant here."""
    d_real = nk.clip(
        tape, _stack(tape, nk.Tensor(real), model.disc), CLAMP_LO, CLAMP_HI
    )
    d_fake = nk.clip(
        tape, _stack(tape, nk.Tensor(fake), model.disc), CLAMP_LO, CLAMP_HI
    )
    t_real = nk.mean_all(tape, nk.log(tape, d_real))
    t_fake = nk.mean_all(tape, nk.log(tape, nk.const_minus(tape, 1.0, d_fake)))
    return nk.scale(tape, nk.add(tape, t_real, t_fake), -1.0)


def _gen_forward(model, z):
    h = nk.affine_sigmoid(z, model.gen[0])
    return nk.affine_sigmoid(h, model.gen[1])


def train_gan(real_normals, epochs, lr, seed, noise_dim=DEFAULT_NOISE_DIM,
              hidden=None, disc_hidden=None):
    """Train a fresh GAN on the given real normal rows; fully seeded.

    The generator's output bias starts calibrated to the real attribute
    frequencies; thereafter each minibatch alternates one Adam step on the
    discriminator (fake rows held constant) with one Adam step on the
    generator (discriminator frozen).
    """
    X = np.asarray(real_normals, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError("real_normals must be a 2-D matrix")
    if X.shape[0] < 2:
        raise PreconditionError(
            f"GAN training needs at least 2 real rows, got {X.shape[0]}"
        )
    model = build_gan(
        X.shape[1], seed, noise_dim=noise_dim, hidden=hidden,
        disc_hidden=disc_hidden,
    )
    _calibrate_output_bias(model, X.mean(axis=0), seed)
    rng = np.random.default_rng(derive_seed(seed, "gan-train"))
    adam_g = nk.AdamState.for_params(model.gen_tensors())
    adam_d = nk.AdamState.for_params(model.disc_tensors())
    n = X.shape[0]
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, _BATCH):
            batch = X[order[start : start + _BATCH]]
            m = batch.shape[0]
            try:
                # discriminator step: judge the rows the generator actually
                # emits (binarized), entering as constants -- judging the
                # continuous relaxation instead lets the critic key on
                # "interior value = fake" and starves the generator
                z = rng.standard_normal((m, model.noise_dim))
                fake = (_gen_forward(model, z) >= 0.5).astype(np.float64)
                nk.zero_grads(model.disc_tensors())
                tape = nk.Tape()
                loss_d = disc_loss_graph(tape, model, batch, fake)
                nk.backward(tape, loss_d)
                nk.adam_step(adam_d, model.disc_tensors(), lr)
                # generator step: gradient flows through the frozen critic
                z = rng.standard_normal((m, model.noise_dim))
                nk.zero_grads(model.gen_tensors())
                nk.zero_grads(model.disc_tensors())
                tape = nk.Tape()
                loss_g = gen_loss_graph(tape, model, z)
                nk.backward(tape, loss_g)
                nk.adam_step(adam_g, model.gen_tensors(), lr)
            except NumericError as err:
                raise NumericError(f"gan epoch {epoch}: {err}") from err
    if epochs > 0:
        _calibrate_output_bias(model, X.mean(axis=0), seed)
    return model


def generate(model, n, seed):
    """n Boolean rows: generator probabilities binarized at 0.5."""
    if n < 0:
        raise PreconditionError("n must be >= 0")
    if n == 0:
        return np.zeros((0, model.num_attrs))
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, model.noise_dim))
    probs = _gen_forward(model, z)
    return (probs >= 0.5).astype(np.float64)


def marginal_divergence(real, synth):
    """Mean absolute difference of per-attribute activation frequencies."""
    real = np.asarray(real, dtype=np.float64)
    synth = np.asarray(synth, dtype=np.float64)
    if real.ndim != 2 or synth.ndim != 2:
        raise ShapeError("expected 2-D matrices")
    if real.shape[1] != synth.shape[1]:
        raise ShapeError(
            f"attribute counts differ: {real.shape[1]} vs {synth.shape[1]}"
        )
    if real.shape[0] == 0 or synth.shape[0] == 0:
        raise PreconditionError("divergence needs at least one row on each side")
    return float(np.abs(real.mean(axis=0) - synth.mean(axis=0)).mean())
