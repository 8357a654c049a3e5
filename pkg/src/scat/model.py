"""Tied-weight autoencoder core.

A single hidden layer z = tanh(W x + b) feeds a competitive nonlinearity
(the second-chance layer, or the k-sparse / KATE-style baselines), and the
decoder reuses the transposed encoder weight: x_hat = sigmoid(W^T z_hat + c).
The loss is binary cross-entropy summed over vocabulary dimensions, and the
backward pass is derived by hand (no autodiff) so it can be checked against
finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

VARIANTS = ("scat", "ksparse", "kate", "none")

CE_EPS = 1e-7  # reconstruction clamp before logs

_EMPTY = np.empty(0, dtype=np.int64)


@dataclass
class ModelParams:
    """Autoencoder parameters and competition settings.

    W is the h x v encoder weight; its transpose is the decoder weight
    (weight tying). b is the encoder bias (h), c the decoder bias (v).
    k is the number of competition winners; alpha is used by the k-sparse
    baseline at inference (keep floor(k * alpha)) and by the KATE-style
    baseline as the energy amplifier.
    """

    W: np.ndarray
    b: np.ndarray
    c: np.ndarray
    variant: str = "scat"
    k: int = 1
    alpha: float = 1.0

    def __post_init__(self) -> None:
        self.W = np.asarray(self.W)
        self.b = np.asarray(self.b)
        self.c = np.asarray(self.c)
        if self.W.ndim != 2:
            raise ValueError("W must be 2-D (h x v)")
        h, v = self.W.shape
        if self.b.shape != (h,) or self.c.shape != (v,):
            raise ValueError("bias shapes do not match W")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant != "none" and not 1 <= self.k <= h:
            raise ValueError(f"k must satisfy 1 <= k <= h={h}, got {self.k}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")

    @property
    def h(self) -> int:
        return self.W.shape[0]

    @property
    def v(self) -> int:
        return self.W.shape[1]

    @property
    def dtype(self) -> np.dtype:
        return self.W.dtype

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.W.copy(), self.b.copy(), self.c.copy(), self.variant, self.k, self.alpha
        )

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(
            self.W.astype(dtype),
            self.b.astype(dtype),
            self.c.astype(dtype),
            self.variant,
            self.k,
            self.alpha,
        )


def init_params(
    v: int,
    h: int,
    variant: str = "scat",
    k: int | None = None,
    alpha: float = 1.0,
    seed: int = 0,
    dtype=np.float32,
) -> ModelParams:
    """Fan-based uniform init: W ~ U(-s, s) with s = sqrt(6 / (h + v)), zero biases."""
    rng = np.random.default_rng(seed)
    scale = math.sqrt(6.0 / (h + v))
    W = rng.uniform(-scale, scale, size=(h, v)).astype(dtype)
    b = np.zeros(h, dtype=dtype)
    c = np.zeros(v, dtype=dtype)
    if k is None:
        k = max(1, h // 2)
    return ModelParams(W, b, c, variant=variant, k=k, alpha=alpha)


@dataclass
class CompetitionOutcome:
    """Per-sample record of how the competitive layer rewired activations.

    winners_large / winners_small are the two winner pools (strongest and
    second-chance for the scat layer; positive and negative pools for the
    KATE-style layer; the k-sparse layer uses only winners_large).
    losers were zeroed; passthrough entries were copied unchanged (the
    negative activations for scat, exact zeros for KATE). The four index
    sets partition 0..h-1.

    energy is the total activation mass taken from the losers. gain_large /
    gain_small are the additive boosts applied to each member of the
    respective winner pool (both equal to energy for scat); the backward
    pass treats them as constants.
    """

    winners_large: np.ndarray
    winners_small: np.ndarray
    losers: np.ndarray
    passthrough: np.ndarray
    energy: float
    gain_large: float = 0.0
    gain_small: float = 0.0

    @property
    def winners(self) -> np.ndarray:
        return np.concatenate([self.winners_large, self.winners_small])


def _check_k(k: int, h: int) -> None:
    if not 1 <= k <= h:
        raise ValueError(f"k must satisfy 1 <= k <= h={h}, got {k}")


def scat_layer(k: int, z: np.ndarray) -> tuple[np.ndarray, CompetitionOutcome]:
    """Second-chance competition over one activation vector.

    Only strictly positive activations compete. The ceil(k/2) largest and,
    of the remainder, the floor(k/2) smallest positives win; every other
    positive is a loser. The losers' total E is added to each winner and
    the losers are zeroed; negative (and zero) activations pass through
    unchanged. Ties are broken toward the lower index. When there are at
    most k positives everybody wins and the layer is a no-op (E = 0).
    """
    z = np.asarray(z)
    _check_k(k, z.shape[0])
    pos = np.flatnonzero(z > 0)
    # stable sort on -z: descending by value, ties toward the lower index
    desc = pos[np.argsort(-z[pos], kind="stable")]
    n_large = min(-(-k // 2), len(pos))
    winners_large = desc[:n_large]
    rest = desc[n_large:]
    asc = rest[np.argsort(z[rest], kind="stable")]
    n_small = min(k // 2, len(asc))
    winners_small = asc[:n_small]
    losers = np.sort(asc[n_small:])
    energy = float(z[losers].sum()) if len(losers) else 0.0

    z_hat = z.copy()
    z_hat[losers] = 0
    z_hat[winners_large] += energy
    z_hat[winners_small] += energy
    outcome = CompetitionOutcome(
        winners_large=winners_large,
        winners_small=winners_small,
        losers=losers,
        passthrough=np.flatnonzero(z <= 0),
        energy=energy,
        gain_large=energy,
        gain_small=energy,
    )
    return z_hat, outcome


def ksparse_layer(
    k: int, z: np.ndarray, training: bool = True, alpha: float = 1.0
) -> tuple[np.ndarray, CompetitionOutcome]:
    """Keep the top activations by value, zero the rest (no energy transfer).

    Training keeps k entries, inference keeps floor(k * alpha). Selection is
    by signed value, not magnitude; ties go to the lower index.
    """
    z = np.asarray(z)
    h = z.shape[0]
    _check_k(k, h)
    keep = k if training else int(k * alpha)
    if not 1 <= keep <= h:
        raise ValueError(f"floor(k * alpha) must satisfy 1 <= . <= h={h}, got {keep}")
    order = np.argsort(-z, kind="stable")
    kept = np.sort(order[:keep])
    losers = np.sort(order[keep:])
    z_hat = np.zeros_like(z)
    z_hat[kept] = z[kept]
    outcome = CompetitionOutcome(
        winners_large=kept,
        winners_small=_EMPTY,
        losers=losers,
        passthrough=_EMPTY,
        energy=0.0,
    )
    return z_hat, outcome


def kate_layer(k: int, alpha: float, z: np.ndarray) -> tuple[np.ndarray, CompetitionOutcome]:
    """KATE-style competition: positive and negative pools compete separately.

    The ceil(k/2) largest positives each gain alpha * E+ (E+ = sum of losing
    positive activations); the floor(k/2) largest-magnitude negatives each
    gain -alpha * E- (E- = sum of absolute losing negatives). Losing entries
    of both pools are zeroed; exact zeros pass through. When one pool is
    smaller than its quota the spare slots go to the other pool, so k = h is
    an identity. Reconstructed from a published summary of KATE, hence
    "KATE-style".
    """
    z = np.asarray(z)
    h = z.shape[0]
    _check_k(k, h)
    pos = np.flatnonzero(z > 0)
    neg = np.flatnonzero(z < 0)
    quota_pos = -(-k // 2)
    quota_neg = k // 2
    n_pos = min(len(pos), quota_pos + max(0, quota_neg - len(neg)))
    n_neg = min(len(neg), quota_neg + max(0, quota_pos - len(pos)))

    pos_desc = pos[np.argsort(-z[pos], kind="stable")]
    winners_pos = pos_desc[:n_pos]
    losers_pos = np.sort(pos_desc[n_pos:])
    neg_desc = neg[np.argsort(z[neg], kind="stable")]  # most negative first
    winners_neg = neg_desc[:n_neg]
    losers_neg = np.sort(neg_desc[n_neg:])

    e_pos = float(z[losers_pos].sum()) if len(losers_pos) else 0.0
    e_neg = float(-z[losers_neg].sum()) if len(losers_neg) else 0.0

    z_hat = z.copy()
    z_hat[losers_pos] = 0
    z_hat[losers_neg] = 0
    z_hat[winners_pos] += alpha * e_pos
    z_hat[winners_neg] -= alpha * e_neg
    outcome = CompetitionOutcome(
        winners_large=winners_pos,
        winners_small=winners_neg,
        losers=np.sort(np.concatenate([losers_pos, losers_neg])),
        passthrough=np.flatnonzero(z == 0),
        energy=e_pos + e_neg,
        gain_large=alpha * e_pos,
        gain_small=-alpha * e_neg,
    )
    return z_hat, outcome


def compete(
    z: np.ndarray, params: ModelParams, training: bool = True
) -> tuple[np.ndarray, Optional[CompetitionOutcome]]:
    """Apply the parameterized competitive layer to one activation vector."""
    if params.variant == "none":
        return z, None
    if params.variant == "scat":
        return scat_layer(params.k, z)
    if params.variant == "ksparse":
        return ksparse_layer(params.k, z, training=training, alpha=params.alpha)
    return kate_layer(params.k, params.alpha, z)


def compete_backward(grad_z_hat: np.ndarray, outcome: Optional[CompetitionOutcome]) -> np.ndarray:
    """Route gradients back through the competition.

    Winners and passthrough entries carry their gradient unchanged; losers
    were inactivated, so their gradient is zero. The reallocated energy is
    treated as a constant (no gradient flows from winners into losers).
    """
    if outcome is None:
        return grad_z_hat
    grad_z = np.asarray(grad_z_hat).copy()
    grad_z[outcome.losers] = 0
    return grad_z


def encode_preact(x: np.ndarray, params: ModelParams) -> np.ndarray:
    """z = tanh(W x + b); entries lie in (-1, 1)."""
    x = np.asarray(x)
    if x.shape != (params.v,):
        raise ValueError(f"x has shape {x.shape}, expected ({params.v},)")
    return np.tanh(params.W @ x + params.b)


def decode(z_hat: np.ndarray, params: ModelParams) -> np.ndarray:
    """x_hat = sigmoid(W^T z_hat + c); entries lie in (0, 1)."""
    z_hat = np.asarray(z_hat)
    if z_hat.shape != (params.h,):
        raise ValueError(f"z_hat has shape {z_hat.shape}, expected ({params.h},)")
    return _sigmoid(params.W.T @ z_hat + params.c)


def _sigmoid(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    np.negative(np.abs(a), out=out)
    np.exp(out, out=out)
    # stable in both tails: sigma(a) = e^{-|a|} / (1 + e^{-|a|}) for a < 0
    return np.where(a >= 0, 1.0 / (1.0 + out), out / (1.0 + out))


def cross_entropy(x: np.ndarray, x_hat: np.ndarray) -> float:
    """Binary cross-entropy summed over vocabulary dimensions.

    x_hat is clamped to [CE_EPS, 1 - CE_EPS] before the logs so saturated
    sigmoid outputs cannot produce infinities.
    """
    x = np.asarray(x)
    x_hat = np.asarray(x_hat)
    if x.shape != x_hat.shape:
        raise ValueError("x and x_hat shapes differ")
    p = np.clip(x_hat, CE_EPS, 1.0 - CE_EPS)
    return float(-np.sum(x * np.log(p) + (1.0 - x) * np.log1p(-p)))


@dataclass
class ForwardTrace:
    """Every intermediate of one forward pass, kept for the backward pass."""

    x: np.ndarray
    z: np.ndarray
    z_hat: np.ndarray
    x_hat: np.ndarray
    outcome: Optional[CompetitionOutcome]


@dataclass
class Gradients:
    dW: np.ndarray
    db: np.ndarray
    dc: np.ndarray
    loss: float


def forward(
    x: np.ndarray,
    params: ModelParams,
    mode: str = "train",
    competition_at_inference: bool = False,
) -> ForwardTrace:
    """Full pass: encode, compete (by variant and mode), decode.

    In train mode the competitive layer always runs (unless variant is
    "none"); in infer mode it is skipped by default and opted back in with
    competition_at_inference. The k-sparse baseline widens its kept set to
    floor(k * alpha) at inference.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = np.asarray(x, dtype=params.dtype)
    z = encode_preact(x, params)
    if mode == "train" or competition_at_inference:
        z_hat, outcome = compete(z, params, training=mode == "train")
    else:
        z_hat, outcome = z, None
    x_hat = decode(z_hat, params)
    return ForwardTrace(x=x, z=z, z_hat=z_hat, x_hat=x_hat, outcome=outcome)


def backward(trace: ForwardTrace, params: ModelParams) -> Gradients:
    """Exact gradients of the summed binary cross-entropy.

    With delta_out = x_hat - x (the sigmoid + cross-entropy shortcut):
      dc       = delta_out
      grad_z^  = W delta_out            (decoder side, tied weight)
      grad_z   = competition backward   (losers blocked)
      delta_h  = grad_z * (1 - z^2)     (tanh derivative)
      db       = delta_h
      dW       = delta_h x^T + z_hat delta_out^T   (encoder + decoder roles)
    """
    x, z, z_hat, x_hat = trace.x, trace.z, trace.z_hat, trace.x_hat
    delta_out = x_hat - x
    grad_z_hat = params.W @ delta_out
    grad_z = compete_backward(grad_z_hat, trace.outcome)
    delta_hid = grad_z * (1.0 - z * z)
    dW = np.outer(delta_hid, x) + np.outer(z_hat, delta_out)
    return Gradients(dW=dW, db=delta_hid, dc=delta_out, loss=cross_entropy(x, x_hat))


def frozen_forward_loss(x: np.ndarray, params: ModelParams, outcome: CompetitionOutcome) -> float:
    """Loss of a surrogate forward with the competition structure pinned.

    The winner/loser partition and the energy gains are taken from
    `outcome` instead of being recomputed, which makes the surrogate
    differentiable everywhere and is exactly what the analytic backward
    pass assumes (energy detached, losers blocked). Used by the
    frozen-competition gradient check.
    """
    x = np.asarray(x, dtype=params.dtype)
    z = encode_preact(x, params)
    z_hat = z.copy()
    z_hat[outcome.losers] = 0
    z_hat[outcome.winners_large] += outcome.gain_large
    z_hat[outcome.winners_small] += outcome.gain_small
    return cross_entropy(x, decode(z_hat, params))


# ---------------------------------------------------------------------------
# Batched competition, used by the trainer. Each row competes independently;
# results match the per-sample layers exactly (tested).
# ---------------------------------------------------------------------------


def _rank_matrix(keys: np.ndarray) -> np.ndarray:
    """rank[i, j] = position of column j in the stable ascending order of keys[i]."""
    order = np.argsort(keys, axis=1, kind="stable")
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.arange(keys.shape[1])[None, :], axis=1)
    return rank


def compete_batch(
    Z: np.ndarray, params: ModelParams, training: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized competition over a batch of activation rows.

    Returns (Z_hat, grad_mask) where grad_mask is 1 where gradients flow
    (winners and passthrough) and 0 at losers.
    """
    if params.variant == "none":
        return Z, np.ones_like(Z)
    if params.variant == "scat":
        return _scat_batch(params.k, Z)
    if params.variant == "ksparse":
        keep = params.k if training else int(params.k * params.alpha)
        if not 1 <= keep <= Z.shape[1]:
            raise ValueError(f"floor(k * alpha) out of range: {keep}")
        return _ksparse_batch(keep, Z)
    return _kate_batch(params.k, params.alpha, Z)


def _scat_batch(k: int, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, h = Z.shape
    _check_k(k, h)
    inf = np.inf
    pos = Z > 0
    n_pos = pos.sum(axis=1)

    n_large = np.minimum(-(-k // 2), n_pos)[:, None]
    rank_desc = _rank_matrix(np.where(pos, -Z, inf))
    wl = pos & (rank_desc < n_large)

    rest = pos & ~wl
    n_small = np.minimum(k // 2, rest.sum(axis=1))[:, None]
    rank_asc = _rank_matrix(np.where(rest, Z, inf))
    ws = rest & (rank_asc < n_small)

    losers = rest & ~ws
    energy = np.where(losers, Z, 0).sum(axis=1, keepdims=True)
    Z_hat = np.where(losers, 0, Z) + np.where(wl | ws, energy, 0)
    return Z_hat.astype(Z.dtype, copy=False), (~losers).astype(Z.dtype)


def _ksparse_batch(keep: int, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rank_desc = _rank_matrix(-Z)
    kept = rank_desc < keep
    mask = kept.astype(Z.dtype)
    return Z * mask, mask


def _kate_batch(k: int, alpha: float, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, h = Z.shape
    _check_k(k, h)
    inf = np.inf
    pos = Z > 0
    neg = Z < 0
    npos = pos.sum(axis=1)
    nneg = neg.sum(axis=1)
    quota_pos = -(-k // 2)
    quota_neg = k // 2
    n_pos = np.minimum(npos, quota_pos + np.maximum(0, quota_neg - nneg))[:, None]
    n_neg = np.minimum(nneg, quota_neg + np.maximum(0, quota_pos - npos))[:, None]

    wp = pos & (_rank_matrix(np.where(pos, -Z, inf)) < n_pos)
    wn = neg & (_rank_matrix(np.where(neg, Z, inf)) < n_neg)
    losers_pos = pos & ~wp
    losers_neg = neg & ~wn
    e_pos = np.where(losers_pos, Z, 0).sum(axis=1, keepdims=True)
    e_neg = -np.where(losers_neg, Z, 0).sum(axis=1, keepdims=True)

    Z_hat = np.where(losers_pos | losers_neg, 0, Z)
    Z_hat = Z_hat + np.where(wp, alpha * e_pos, 0) - np.where(wn, alpha * e_neg, 0)
    grad_mask = (~(losers_pos | losers_neg)).astype(Z.dtype)
    return Z_hat.astype(Z.dtype, copy=False), grad_mask


def batch_forward_backward(
    X: np.ndarray, params: ModelParams
) -> tuple[Gradients, float]:
    """Mean gradients and mean per-document loss over a dense batch.

    Train-mode forward with per-row competition, then the tied-weight
    backward, everything averaged over the batch (so the learning rate is
    independent of batch size).
    """
    n = X.shape[0]
    Z = np.tanh(X @ params.W.T + params.b)
    Z_hat, grad_mask = compete_batch(Z, params, training=True)
    P = _sigmoid(Z_hat @ params.W + params.c)

    Pc = np.clip(P, CE_EPS, 1.0 - CE_EPS)
    losses = -np.sum(X * np.log(Pc) + (1.0 - X) * np.log1p(-Pc), axis=1)
    mean_loss = float(losses.mean())

    delta_out = (P - X) / n
    grad_z = (delta_out @ params.W.T) * grad_mask
    delta_hid = grad_z * (1.0 - Z * Z)
    dW = delta_hid.T @ X + Z_hat.T @ delta_out
    db = delta_hid.sum(axis=0)
    dc = delta_out.sum(axis=0)
    return Gradients(dW=dW, db=db, dc=dc, loss=mean_loss), mean_loss
