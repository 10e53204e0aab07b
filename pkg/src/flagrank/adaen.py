"""Attention-equipped dual adversarial autoencoder: model, losses, training,
anomaly scoring, and threshold calibration.

Two independent autoencoders reconstruct each input row.  The first
("primary") carries an attention gate on its latent code and doubles as the
generator in an adversarial game against a separate discriminator network
that tries to tell real rows from either reconstruction.  A row's anomaly
score is its blended squared reconstruction error; the flagging threshold
is a nearest-rank percentile of the score distribution.
"""

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import numkernel as nk
from .errors import NumericError, PreconditionError, ShapeError
from .ranking import ScoredProcess
from .util import ceil_frac, derive_seed

CLAMP_LO = 1e-7
CLAMP_HI = 1.0 - 1e-7
_SCORE_BATCH = 2048


def default_hidden(d):
    return min(128, d)


def default_latent(d):
    return min(32, max(2, d // 4))


@dataclass
class AdaenConfig:
    input_dim: int
    hidden: int = None
    latent: int = None
    alpha: float = 0.5
    lam: float = 0.1
    lr: float = 1e-3
    batch: int = 64
    epochs_per_iteration: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1:
            raise PreconditionError("input_dim must be >= 1")
        if self.hidden is None:
            self.hidden = default_hidden(self.input_dim)
        if self.latent is None:
            self.latent = default_latent(self.input_dim)
        if not 0.0 <= self.alpha <= 1.0:
            raise PreconditionError(f"alpha must be in [0,1], got {self.alpha}")
        if self.lam < 0.0:
            raise PreconditionError(f"lambda must be >= 0, got {self.lam}")
        if self.lr <= 0.0:
            raise PreconditionError("lr must be positive")
        if self.batch < 1:
            raise PreconditionError("batch must be >= 1")
        if self.epochs_per_iteration < 0:
            raise PreconditionError("epochs_per_iteration must be >= 0")
        if self.hidden < 1 or self.latent < 1:
            raise PreconditionError("hidden and latent must be >= 1")
        if self.input_dim >= 2 and not (
            self.latent <= self.hidden <= self.input_dim
        ):
            raise PreconditionError(
                f"need latent <= hidden <= input_dim, got "
                f"{self.latent}/{self.hidden}/{self.input_dim}"
            )


class Reconstruction(NamedTuple):
    x1: np.ndarray
    x2: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    attention: np.ndarray  # softmax weights, rows sum to 1


@dataclass
class EpochLosses:
    recon1: float
    recon2: float
    blend: float
    adv: float
    disc: float
    total: float


class AdaenModel:
    """Parameter container; built via :func:`build`, trained in place."""

    def __init__(self, config, enc1, dec1, enc2, dec2, att, disc):
        self.config = config
        self.enc1 = enc1
        self.dec1 = dec1
        self.enc2 = enc2
        self.dec2 = dec2
        self.att = att
        self.disc = disc

    def ae_tensors(self):
        out = []
        for stack in (self.enc1, self.dec1, self.enc2, self.dec2, [self.att]):
            for layer in stack:
                out.extend(layer.tensors())
        return out

    def disc_tensors(self):
        out = []
        for layer in self.disc:
            out.extend(layer.tensors())
        return out

    def param_items(self):
        """(name, tensor) pairs in a fixed order, for checkpoints."""
        named = []
        groups = [
            ("enc1", self.enc1),
            ("dec1", self.dec1),
            ("enc2", self.enc2),
            ("dec2", self.dec2),
            ("att", [self.att]),
            ("disc", self.disc),
        ]
        for gname, stack in groups:
            for i, layer in enumerate(stack):
                named.append((f"{gname}.{i}.W", layer.W))
                named.append((f"{gname}.{i}.b", layer.b))
        return named


def build(config):
    """Seeded-deterministic model construction."""
    rng = np.random.default_rng(derive_seed(config.seed, "model-init"))
    d, h, z = config.input_dim, config.hidden, config.latent
    enc1 = [nk.init_weights(rng, d, h), nk.init_weights(rng, h, z)]
    dec1 = [nk.init_weights(rng, z, h), nk.init_weights(rng, h, d)]
    enc2 = [nk.init_weights(rng, d, h), nk.init_weights(rng, h, z)]
    dec2 = [nk.init_weights(rng, z, h), nk.init_weights(rng, h, d)]
    att = nk.init_weights(rng, z, z)
    disc = [nk.init_weights(rng, d, h), nk.init_weights(rng, h, 1)]
    return AdaenModel(config, enc1, dec1, enc2, dec2, att, disc)


def _stack(tape, x, layers):
    out = x
    for layer in layers:
        out = nk.sigmoid(tape, nk.affine(tape, out, layer.W, layer.b))
    return out


def _forward(tape, model, x):
    """Shared graph builder; returns the taped reconstruction tensors."""
    z1 = _stack(tape, x, model.enc1)
    logits = nk.affine(tape, z1, model.att.W, model.att.b)
    gate = nk.attention_gate(tape, logits)
    attended = nk.mul(tape, z1, gate)
    x1 = _stack(tape, attended, model.dec1)
    z2 = _stack(tape, x, model.enc2)
    x2 = _stack(tape, z2, model.dec2)
    return x1, x2, z1, z2, gate


def _disc_out(tape, model, x):
    return _stack(tape, x, model.disc)


def reconstruct(model, X):
    """Forward pass without gradients; returns arrays, not tensors.

    The attention weights are the per-row softmax (they sum to 1); the gate
    actually applied to the latent code is those weights rescaled by the
    latent width, so an indifferent (uniform) attention layer passes the
    code through exactly unchanged.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.config.input_dim:
        raise ShapeError(
            f"expected (n, {model.config.input_dim}) input, got {X.shape}"
        )
    tape = nk.Tape(grad=False)
    x1, x2, z1, z2, gate = _forward(tape, model, nk.Tensor(X))
    attention = gate.data / model.config.latent
    return Reconstruction(x1.data, x2.data, z1.data, z2.data, attention)


def reconstruction_losses(x, x1, x2, alpha):
    """(l1, l2, blend): batch-mean squared row errors and their alpha-blend."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != np.shape(x1) or x.shape != np.shape(x2):
        raise ShapeError("reconstruction shapes must match the input")
    l1 = float(((x - x1) ** 2).sum(axis=1).mean())
    l2 = float(((x - x2) ** 2).sum(axis=1).mean())
    if alpha == 1.0:
        blend = l1
    elif alpha == 0.0:
        blend = l2
    else:
        blend = alpha * l1 + (1.0 - alpha) * l2
    return l1, l2, blend


def adversarial_losses(model, x, x1, x2):
    """(L_D, L_adv) for the given batch and current discriminator.

    L_D   = -mean log D(x) - mean[log(1-D(x1)) + log(1-D(x2))]
    L_adv = -mean[log D(x1) + log D(x2)]
    Outputs are clamped to [1e-7, 1-1e-7] before the logarithms.
    """
    tape = nk.Tape(grad=False)
    outs = []
    for arr in (x, x1, x2):
        arr = np.asarray(arr, dtype=np.float64)
        d = _disc_out(tape, model, nk.Tensor(arr)).data
        if not np.all(np.isfinite(d)):
            raise NumericError("discriminator produced non-finite activations")
        outs.append(np.clip(d, CLAMP_LO, CLAMP_HI))
    dx, d1, d2 = outs
    l_d = float(
        -np.mean(np.log(dx)) - np.mean(np.log(1.0 - d1)) - np.mean(np.log(1.0 - d2))
    )
    l_adv = float(-np.mean(np.log(d1)) - np.mean(np.log(d2)))
    return l_d, l_adv


def combined_loss(blend, l_adv, lam):
    if lam < 0:
        raise PreconditionError("lambda must be >= 0")
    return blend + lam * l_adv


def _taped_disc_loss(tape, model, x_t, r1_t, r2_t):
    dx = nk.clip(tape, _disc_out(tape, model, x_t), CLAMP_LO, CLAMP_HI)
    d1 = nk.clip(tape, _disc_out(tape, model, r1_t), CLAMP_LO, CLAMP_HI)
    d2 = nk.clip(tape, _disc_out(tape, model, r2_t), CLAMP_LO, CLAMP_HI)
    term_real = nk.mean_all(tape, nk.log(tape, dx))
    term_f1 = nk.mean_all(tape, nk.log(tape, nk.const_minus(tape, 1.0, d1)))
    term_f2 = nk.mean_all(tape, nk.log(tape, nk.const_minus(tape, 1.0, d2)))
    s = nk.add(tape, term_real, nk.add(tape, term_f1, term_f2))
    return nk.scale(tape, s, -1.0)


def _taped_adv_loss(tape, d1, d2):
    t1 = nk.mean_all(tape, nk.log(tape, d1))
    t2 = nk.mean_all(tape, nk.log(tape, d2))
    return nk.scale(tape, nk.add(tape, t1, t2), -1.0)


def disc_training_step(model, batch, adam):
    """One Adam step on the discriminator; reconstructions held constant."""
    tape = nk.Tape(grad=False)
    x1, x2, _, _, _ = _forward(tape, model, nk.Tensor(batch))
    params = model.disc_tensors()
    nk.zero_grads(params)
    tape = nk.Tape()
    loss = _taped_disc_loss(
        tape, model, nk.Tensor(batch), nk.Tensor(x1.data), nk.Tensor(x2.data)
    )
    nk.backward(tape, loss)
    nk.adam_step(adam, params, model.config.lr)
    return float(loss.data)


def ae_training_step(model, batch, adam):
    """One Adam step on both autoencoders + attention, discriminator frozen.

    Returns (recon1, recon2, blend, adv, total) for the batch at the
    pre-step parameters.
    """
    cfg = model.config
    params = model.ae_tensors()
    nk.zero_grads(params)
    nk.zero_grads(model.disc_tensors())
    tape = nk.Tape()
    x_t = nk.Tensor(batch)
    x1, x2, _, _, _ = _forward(tape, model, x_t)
    diff1 = nk.sub(tape, x1, x_t)
    diff2 = nk.sub(tape, x2, x_t)
    l1 = nk.mean_row_sumsq(tape, diff1)
    l2 = nk.mean_row_sumsq(tape, diff2)
    blend = nk.add(
        tape, nk.scale(tape, l1, cfg.alpha), nk.scale(tape, l2, 1.0 - cfg.alpha)
    )
    d1 = nk.clip(tape, _disc_out(tape, model, x1), CLAMP_LO, CLAMP_HI)
    d2 = nk.clip(tape, _disc_out(tape, model, x2), CLAMP_LO, CLAMP_HI)
    adv = _taped_adv_loss(tape, d1, d2)
    total = nk.add(tape, blend, nk.scale(tape, adv, cfg.lam))
    nk.backward(tape, total)
    nk.adam_step(adam, params, cfg.lr)
    return (
        float(l1.data),
        float(l2.data),
        float(blend.data),
        float(adv.data),
        float(total.data),
    )


def train(model, X_train, epochs=None, seed=None):
    """Adversarial training loop, mutating the model in place.

    Per seeded-shuffled minibatch: one discriminator step (minimizing L_D
    with the autoencoders frozen), then one autoencoder step (minimizing
    blended reconstruction + lambda * adversarial loss with the
    discriminator frozen).  Returns per-epoch mean losses.
    """
    X = np.asarray(X_train, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.config.input_dim:
        raise ShapeError(
            f"expected (n, {model.config.input_dim}) training matrix, got {X.shape}"
        )
    if X.shape[0] == 0:
        raise PreconditionError("training set is empty")
    cfg = model.config
    if epochs is None:
        epochs = cfg.epochs_per_iteration
    if seed is None:
        seed = derive_seed(cfg.seed, "train")
    rng = np.random.default_rng(seed)
    adam_ae = nk.AdamState.for_params(model.ae_tensors())
    adam_d = nk.AdamState.for_params(model.disc_tensors())
    n = X.shape[0]
    trace = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        sums = np.zeros(6)
        batches = 0
        for start in range(0, n, cfg.batch):
            batch = X[order[start : start + cfg.batch]]
            try:
                l_d = disc_training_step(model, batch, adam_d)
                l1, l2, blend, adv, total = ae_training_step(model, batch, adam_ae)
            except NumericError as err:
                raise NumericError(
                    f"epoch {epoch} batch {batches}: {err}"
                ) from err
            sums += (l1, l2, blend, adv, l_d, total)
            batches += 1
        mean = sums / batches
        trace.append(
            EpochLosses(
                recon1=mean[0],
                recon2=mean[1],
                blend=mean[2],
                adv=mean[3],
                disc=mean[4],
                total=mean[5],
            )
        )
    return trace


def row_errors(x, x1, x2, alpha):
    """Per-row blended squared error: alpha*||x-x1||^2 + (1-alpha)*||x-x2||^2."""
    e1 = ((x - x1) ** 2).sum(axis=1)
    e2 = ((x - x2) ** 2).sum(axis=1)
    if alpha == 1.0:
        return e1
    if alpha == 0.0:
        return e2
    return alpha * e1 + (1.0 - alpha) * e2


def anomaly_scores(model, dataset):
    """Score every row of a BooleanDataset, preserving its row order."""
    if dataset.num_attrs != model.config.input_dim:
        raise ShapeError(
            f"dataset has {dataset.num_attrs} attributes, model expects "
            f"{model.config.input_dim}"
        )
    alpha = model.config.alpha
    out = []
    rows = dataset.rows
    for start in range(0, len(rows), _SCORE_BATCH):
        chunk = rows[start : start + _SCORE_BATCH]
        X = np.zeros((len(chunk), dataset.num_attrs))
        for i, (_, attrs) in enumerate(chunk):
            if attrs:
                X[i, list(attrs)] = 1.0
        rec = reconstruct(model, X)
        errs = row_errors(X, rec.x1, rec.x2, alpha)
        for (pid, _), e in zip(chunk, errs):
            out.append(ScoredProcess(pid, float(e)))
    return out


def calibrate_threshold(scores, percentile=0.8):
    """Nearest-rank percentile: the ceil(p*n)-th smallest score.

    A row is flagged anomalous iff its error is strictly greater than the
    returned threshold, so with p=0.8 at least 80% of rows are kept normal.
    """
    scores = [float(s) for s in scores]
    if not scores:
        raise PreconditionError("cannot calibrate a threshold on zero scores")
    if not 0.0 < percentile < 1.0:
        raise PreconditionError("percentile must be strictly between 0 and 1")
    k = ceil_frac(percentile, len(scores))
    return sorted(scores)[k - 1]


# ---------------------------------------------------------------------------
# checkpointing

_CKPT_FORMAT = "adaen-checkpoint-v1"


def model_to_payload(model):
    """Plain-JSON-serializable dict of config + parameters (exact floats)."""
    return {
        "format": _CKPT_FORMAT,
        "config": {
            "input_dim": model.config.input_dim,
            "hidden": model.config.hidden,
            "latent": model.config.latent,
            "alpha": model.config.alpha,
            "lam": model.config.lam,
            "lr": model.config.lr,
            "batch": model.config.batch,
            "epochs_per_iteration": model.config.epochs_per_iteration,
            "seed": model.config.seed,
        },
        "params": {name: t.data.tolist() for name, t in model.param_items()},
    }


def model_from_payload(payload):
    if payload.get("format") != _CKPT_FORMAT:
        raise PreconditionError(
            f"unrecognized checkpoint format: {payload.get('format')!r}"
        )
    config = AdaenConfig(**payload["config"])
    model = build(config)
    for name, tensor in model.param_items():
        arr = np.asarray(payload["params"][name], dtype=np.float64)
        if arr.shape != tensor.data.shape:
            raise ShapeError(
                f"checkpoint param {name} has shape {arr.shape}, "
                f"expected {tensor.data.shape}"
            )
        tensor.data = arr
    return model


def save_model(model, fileobj):
    """JSON checkpoint with full config and parameters; bitwise round-trip."""
    json.dump(model_to_payload(model), fileobj)


def load_model(fileobj):
    return model_from_payload(json.load(fileobj))
