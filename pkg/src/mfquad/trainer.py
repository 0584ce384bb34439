"""Sparsifying mean-field variational trainer.

Fits a spike-and-slab mean field over model parameters from streamed
quadratic snapshots of per-case losses.  Each case contributes a loss,
gradient, and diagonal-curvature estimate obtained by antithetic
sign-vector quadrature; the trainer blends a completed pass of such
snapshots with the accumulating current pass, takes a damped diagonal
Newton step on the slab means, and converts curvatures into per-coordinate
zero-vs-keep logits.  A rank-based "sieve" rescales those logits so that a
scheduled fraction of coordinates becomes confidently zero while a held
fraction stays confidently nonzero, annealing toward the target sparsity
over the epochs.  The final epoch freezes the zero/nonzero decisions and
polishes the surviving slab means.

All per-coordinate state lives in flat arrays indexed like the model's
parameter vector.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields

import numpy as np

from .projection import quadratic_approx

__all__ = [
    "TrainConfig",
    "TrainState",
    "EpochStats",
    "hybrid_coeffs",
    "anneal_target",
    "sparsity_schedule",
    "zero_logits",
    "sieve_map",
    "init_state",
    "variational_update",
    "run_epoch",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_FORMAT = "mfvi-ckpt-1"


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the sparsifying trainer."""

    n_epochs: int = 10
    n_pairs_per_case: int = 2
    lr_init: float = 1e-5
    lr_max: float = 0.1
    slab_std_max: float = 0.3
    frac_zero_target: float = 0.97
    frac_held_target: float = 0.01
    p_sieve_zero: float = 0.001
    p_sieve_one: float = 0.999

    def __post_init__(self):
        if self.n_epochs < 1:
            raise ValueError(f"n_epochs must be >= 1, got {self.n_epochs}")
        if self.n_pairs_per_case < 1:
            raise ValueError(
                f"n_pairs_per_case must be >= 1, got {self.n_pairs_per_case}"
            )
        if not 0 < self.lr_init <= self.lr_max:
            raise ValueError("need 0 < lr_init <= lr_max")
        if self.slab_std_max <= 0:
            raise ValueError("slab_std_max must be positive")
        if not 0 <= self.frac_zero_target <= 1 or not 0 <= self.frac_held_target <= 1:
            raise ValueError("sparsity fractions must lie in [0, 1]")
        if self.frac_zero_target + self.frac_held_target > 1:
            raise ValueError("frac_zero_target + frac_held_target must be <= 1")
        if not 0 < self.p_sieve_zero < 0.5 < self.p_sieve_one < 1:
            raise ValueError("need 0 < p_sieve_zero < 0.5 < p_sieve_one < 1")

    @property
    def target_logit_zero(self) -> float:
        """Zero-logit pinned onto coordinates scheduled to vanish."""
        return math.log(1.0 / self.p_sieve_zero - 1.0)

    @property
    def target_logit_one(self) -> float:
        """Zero-logit pinned onto coordinates held confidently nonzero."""
        return math.log(1.0 / self.p_sieve_one - 1.0)


@dataclass
class TrainState:
    """Mutable per-coordinate posterior and accumulator state."""

    mu: np.ndarray            # mean of the marginal used for quadrature
    sigma: np.ndarray         # deviation of that marginal
    slab_mean: np.ndarray     # mean of the nonzero (slab) component
    slab_std: np.ndarray      # deviation of the slab component
    zero_logit: np.ndarray    # sieved log-odds that a coordinate is zero
    p_nonzero: np.ndarray     # probability a coordinate is nonzero
    realized_nonzero: np.ndarray  # frozen 0/1 decisions (final epoch)
    n_prev: int               # snapshots in the completed pass
    n_cur: int                # snapshots in the accumulating pass
    grad_prev: np.ndarray
    grad_cur: np.ndarray
    hess_prev: np.ndarray
    hess_cur: np.ndarray
    loss_prev: float
    loss_cur: float
    seq_index: int            # next sign-vector index to consume
    hess_min: float           # per-snapshot curvature floor scale

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    epoch_loss: float
    frac_zero_realizable: float  # coordinates currently rounding to zero
    frac_held: float             # coordinates pinned at the keep anchor


def hybrid_coeffs(n_prev: int, n_cur: int) -> tuple[float, float]:
    """Blend weights for completed-pass and current-pass accumulators.

    Chosen so that ``a0 * prev + a1 * cur`` has the mean and variance of a
    sum of ``max(n_prev, n_cur)`` i.i.d. snapshots whenever the two passes
    draw from the same distribution.
    """
    total = n_prev + n_cur
    if total <= 0:
        raise ValueError("hybrid_coeffs needs n_prev + n_cur >= 1")
    a0 = max(0.0, (n_prev - n_cur) / total)
    a1 = max(1.0, 2.0 * n_prev / total)
    return a0, a1


def anneal_target(epoch: int, n_epochs: int, n_cases: int) -> int:
    """Snapshot count per accumulator restart; doubles every epoch.

    Reaches the full dataset size in the last epoch.
    """
    return int(math.floor(n_cases * 2.0 ** (epoch - n_epochs)))


def sparsity_schedule(
    t: float, n_epochs: int, frac_zero_target: float, frac_held_target: float
) -> tuple[float, float]:
    """Scheduled (frac_zero, frac_held) at continuous epoch time ``t``.

    The zeroed fraction ramps from 0 at ``t = 1`` to the full target at
    ``t = n_epochs - 1`` with exponentially slowing growth; mass not yet
    scheduled to vanish is added to the held fraction, so the two always
    sum to ``frac_zero_target + frac_held_target``.
    """
    denom = 1.0 - 2.0 ** (2 - n_epochs)
    if denom <= 0.0:
        share = 1.0 if t >= n_epochs - 1 else 0.0
    else:
        share = (1.0 - 2.0 ** (1.0 - t)) / denom
        share = min(1.0, max(0.0, share))
    frac_zero = share * frac_zero_target
    frac_held = frac_held_target + frac_zero_target - frac_zero
    return frac_zero, frac_held


def zero_logits(hess, slab_mean, slab_std_max: float) -> np.ndarray:
    """Log-odds that a coordinate is zero, from curvature and slab mean.

    ``0.5 * (log(hess * slab_std_max**2) - hess * slab_mean**2)`` per
    coordinate: flat directions with large means are confidently nonzero,
    sharp directions with small means are confidently zero.  Requires
    strictly positive ``hess``.
    """
    hess = np.asarray(hess, dtype=np.float64)
    mean = np.asarray(slab_mean, dtype=np.float64)
    if np.any(hess <= 0):
        raise ValueError("zero_logits needs strictly positive curvature")
    return 0.5 * (np.log(hess * slab_std_max**2) - hess * mean**2)


def sieve_map(
    values,
    frac_zero: float,
    frac_held: float,
    target_zero: float = math.log(999.0),
    target_held: float = -math.log(999.0),
) -> np.ndarray:
    """Monotone piecewise-linear rescaling of zero-logits.

    Shifts the top ``ceil(frac_zero * d)`` values (by rank, ties resolved
    by index) to land at or above ``target_zero`` — the confident zeros —
    and the bottom ``ceil(frac_held * d)`` to land at or below
    ``target_held`` — the confident keeps — interpolating the middle ranks
    linearly between the two hinge values.  Both anchor segments keep unit
    slope, the output is nondecreasing along the sorted order, and the map
    is continuous whenever the hinges are distinct.  Degenerate cases:
    with one fraction zero the whole vector shifts uniformly onto the
    remaining anchor; with both zero the values pass through unchanged;
    ties straddling coincident hinges sit at the undecided midpoint.
    """
    values = np.asarray(values, dtype=np.float64)
    d = values.size
    if not 0 <= frac_zero <= 1 or not 0 <= frac_held <= 1:
        raise ValueError("sieve fractions must lie in [0, 1]")
    if target_held > target_zero:
        raise ValueError("target_held must not exceed target_zero")
    n_zero = math.ceil(frac_zero * d)
    n_held = min(math.ceil(frac_held * d), d - n_zero)

    if n_zero == 0 and n_held == 0:
        return values.copy()
    order = np.argsort(values, kind="stable")
    if n_zero == 0:
        return values - values[order[n_held - 1]] + target_held
    if n_held == 0:
        return values - values[order[d - n_zero]] + target_zero

    z0 = values[order[d - n_zero]]  # smallest value scheduled to zero
    z1 = values[order[n_held - 1]]  # largest value scheduled to hold
    out = np.empty_like(values)
    top, low, mid = order[d - n_zero :], order[:n_held], order[n_held : d - n_zero]
    out[top] = values[top] - z0 + target_zero
    out[low] = values[low] - z1 + target_held
    if z0 > z1:
        slope = (target_zero - target_held) / (z0 - z1)
        out[mid] = target_held + (values[mid] - z1) * slope
    else:
        out[mid] = 0.5 * (target_zero + target_held)
    return out


def init_state(model, n_cases: int, config: TrainConfig, rng) -> TrainState:
    """Fresh trainer state with a tight isotropic marginal around the init.

    The virtual completed pass is seeded with ``1/lr_init`` curvature so
    the first Newton steps have size ``lr_init``; its snapshot count is the
    first epoch's restart target.
    """
    d = model.n_params
    n_prev = int(math.floor(n_cases * 2.0 ** (1 - config.n_epochs)))
    if n_prev < 1:
        raise ValueError(
            f"{n_cases} cases over {config.n_epochs} epochs leaves the first "
            "epoch with an empty accumulator; reduce n_epochs or add cases"
        )
    mu = np.asarray(model.init_params(rng), dtype=np.float64)
    sigma = np.full(d, math.sqrt(config.lr_init))
    n_q = config.n_pairs_per_case
    seq_index = int(math.floor(rng.random() * d / n_q)) * n_q
    return TrainState(
        mu=mu,
        sigma=sigma,
        slab_mean=mu.copy(),
        slab_std=sigma.copy(),
        zero_logit=np.zeros(d),
        p_nonzero=np.ones(d),
        realized_nonzero=np.ones(d),
        n_prev=n_prev,
        n_cur=0,
        grad_prev=np.zeros(d),
        grad_cur=np.zeros(d),
        hess_prev=np.full(d, 1.0 / config.lr_init),
        hess_cur=np.zeros(d),
        loss_prev=0.0,
        loss_cur=0.0,
        seq_index=seq_index,
        hess_min=1.0 / (n_prev * config.lr_max),
    )


def variational_update(
    state: TrainState,
    config: TrainConfig,
    loss: float,
    grad: np.ndarray,
    hess: np.ndarray,
    t: float,
    final_epoch: bool = False,
) -> None:
    """Fold one quadratic snapshot into the state and refresh the marginal.

    Accumulates the snapshot, blends both passes, takes a damped diagonal
    Newton step on the slab means, re-derives slab deviations from the
    blended curvature, sieves the zero-logits per the sparsity schedule
    (or applies the frozen decisions in the final epoch), and re-centers
    the accumulated gradients and losses at the moved marginal mean.
    """
    st, cf = state, config
    st.n_cur += 1
    st.grad_cur = st.grad_cur + grad
    st.loss_cur += loss
    st.hess_cur = np.maximum(st.hess_cur + hess, cf.slab_std_max**-2)

    a0, a1 = hybrid_coeffs(st.n_prev, st.n_cur)
    grad_hat = a0 * st.grad_prev + a1 * st.grad_cur
    hess_hat = a0 * st.hess_prev + a1 * st.hess_cur

    step_floor = max(st.n_prev, st.n_cur) * st.hess_min
    slab_grad = grad_hat + hess_hat * (st.slab_mean - st.mu)
    st.slab_mean = st.slab_mean - slab_grad / np.maximum(hess_hat, step_floor)
    st.slab_std = hess_hat**-0.5

    if final_epoch:
        st.p_nonzero = st.realized_nonzero.copy()
    else:
        raw = zero_logits(hess_hat, st.slab_mean, cf.slab_std_max)
        frac_zero, frac_held = sparsity_schedule(
            t, cf.n_epochs, cf.frac_zero_target, cf.frac_held_target
        )
        st.zero_logit = sieve_map(
            raw, frac_zero, frac_held, cf.target_logit_zero, cf.target_logit_one
        )
        st.p_nonzero = np.exp(-np.logaddexp(0.0, st.zero_logit))

    p = st.p_nonzero
    mu_new = p * st.slab_mean
    delta = mu_new - st.mu
    st.sigma = np.sqrt(p * (1.0 - p) * st.slab_mean**2 + p * st.slab_std**2)
    st.mu = mu_new

    # Re-center the stored quadratic accumulators at the new mean so the
    # surrogates they represent are unchanged as functions.
    st.loss_prev += float(st.grad_prev @ delta + 0.5 * (st.hess_prev * delta) @ delta)
    st.loss_cur += float(st.grad_cur @ delta + 0.5 * (st.hess_cur * delta) @ delta)
    st.grad_prev = st.grad_prev + st.hess_prev * delta
    st.grad_cur = st.grad_cur + st.hess_cur * delta


def run_epoch(
    state: TrainState,
    model,
    n_cases: int,
    config: TrainConfig,
    epoch: int,
    rng,
) -> EpochStats:
    """One pass over a random permutation of the cases.

    The current accumulator restarts (promoting itself to the completed
    pass) every ``anneal_target(epoch, ...)`` snapshots.  In the final
    epoch the zero/nonzero decisions freeze to the rounded ``p_nonzero``
    before any case is visited.
    """
    st, cf = state, config
    st.n_cur = 0
    st.grad_cur = np.zeros(st.dim)
    st.hess_cur = np.zeros(st.dim)
    st.loss_cur = 0.0
    target = anneal_target(epoch, cf.n_epochs, n_cases)
    final = epoch == cf.n_epochs
    if final:
        st.realized_nonzero = (st.p_nonzero >= 0.5).astype(np.float64)

    epoch_loss = 0.0
    for i, case in enumerate(rng.permutation(n_cases)):
        snap = quadratic_approx(
            model, int(case), st.mu, st.sigma, st.seq_index, cf.n_pairs_per_case
        )
        st.seq_index += cf.n_pairs_per_case
        epoch_loss += snap.loss
        t = (epoch - 1) + i / n_cases
        variational_update(st, cf, snap.loss, snap.grad, snap.hess, t, final)
        if st.n_cur == target:
            st.n_prev = st.n_cur
            st.grad_prev = st.grad_cur.copy()
            st.hess_prev = st.hess_cur.copy()
            st.loss_prev = st.loss_cur
            st.n_cur = 0
            st.grad_cur = np.zeros(st.dim)
            st.hess_cur = np.zeros(st.dim)
            st.loss_cur = 0.0

    tol = 1e-12
    return EpochStats(
        epoch=epoch,
        epoch_loss=epoch_loss,
        frac_zero_realizable=float(np.mean(st.p_nonzero < 0.5)),
        frac_held=float(np.mean(st.zero_logit <= cf.target_logit_one + tol)),
    )


def train(
    model,
    n_cases: int,
    config: TrainConfig,
    seed: int = 0,
    callback=None,
) -> tuple[TrainState, list[EpochStats]]:
    """Run the full schedule; returns the final state and per-epoch stats.

    ``callback(state, stats)``, if given, runs after every epoch.  After
    the final epoch, coordinates decided zero have exactly ``mu = 0`` and
    ``sigma = 0``; survivors carry their polished slab mean and deviation.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    state = init_state(model, n_cases, config, rng)
    history = []
    for epoch in range(1, config.n_epochs + 1):
        stats = run_epoch(state, model, n_cases, config, epoch, rng)
        history.append(stats)
        if callback is not None:
            callback(state, stats)
    return state, history


# ------------------------------------------------------------ checkpoints

_ARRAY_FIELDS = (
    "mu",
    "sigma",
    "slab_mean",
    "slab_std",
    "zero_logit",
    "p_nonzero",
    "realized_nonzero",
    "grad_prev",
    "grad_cur",
    "hess_prev",
    "hess_cur",
)
_SCALAR_FIELDS = (
    "n_prev",
    "n_cur",
    "loss_prev",
    "loss_cur",
    "seq_index",
    "hess_min",
)


def save_checkpoint(path, state: TrainState, config: TrainConfig) -> None:
    """JSON checkpoint; floats at full round-trip precision."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": {f.name: getattr(config, f.name) for f in fields(config)},
        "state": {
            **{name: getattr(state, name).tolist() for name in _ARRAY_FIELDS},
            **{name: getattr(state, name) for name in _SCALAR_FIELDS},
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> tuple[TrainState, TrainConfig]:
    with open(path) as fh:
        payload = json.load(fh)
    tag = payload.get("format")
    if tag != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: unsupported checkpoint format {tag!r}")
    config = TrainConfig(**payload["config"])
    raw = payload["state"]
    kwargs = {name: np.asarray(raw[name], dtype=np.float64) for name in _ARRAY_FIELDS}
    for name in _SCALAR_FIELDS:
        kwargs[name] = raw[name]
    kwargs["n_prev"] = int(kwargs["n_prev"])
    kwargs["n_cur"] = int(kwargs["n_cur"])
    kwargs["seq_index"] = int(kwargs["seq_index"])
    return TrainState(**kwargs), config
