"""Conditional flow matching: straight-path training and ODE sampling.

Training regresses the network onto the constant velocity u = x1 - x0 of
the straight interpolation x_t = (1-t) x0 + t x1 between Gaussian noise
and data.  Sampling integrates the learned field from t=0 to t=1 with any
of the solvers in :mod:`fmsolve.ode`; the whole sample batch is packed
into one flat state so each solver stage costs exactly one network call,
which is what the NFE counter measures.

Data is standardized to zero mean and unit per-axis variance before
training (the Gaussian source and the data must share scale) and samples
are mapped back to original coordinates on the way out.  The trained
model bundle carries the standardization so sampling is self-contained.

Seed discipline: stream 0 of the training seed generates the dataset,
stream 1 initializes parameters, stream 2 drives the epoch shuffles and
batch draws.  Sampling uses whatever rng the caller passes.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .data import DatasetSpec, generate
from .numeric import Rng, gaussian_sample
from .ode import StepControlConfig, VectorField, integrate_dopri5, integrate_fixed

__all__ = [
    "TrainConfig",
    "CfmBatch",
    "SolverSpec",
    "TrainedModel",
    "TrainingError",
    "make_batch",
    "train",
    "sample",
    "velocity_field",
    "save_model",
    "load_model",
    "MODEL_FORMAT_VERSION",
]

MODEL_FORMAT_VERSION = 1

STREAM_DATASET = 0
STREAM_INIT = 1
STREAM_TRAIN = 2


class TrainingError(RuntimeError):
    """Training aborted (non-finite loss); carries epoch and step index."""

    def __init__(self, message, epoch=None, step=None):
        super().__init__(message)
        self.epoch = epoch
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    dataset: DatasetSpec
    mlp: nn.MlpConfig
    epochs: int = 300
    batch_size: int = 256
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.mlp.data_dim != self.dataset.data_dim:
            raise ValueError(
                f"mlp.data_dim={self.mlp.data_dim} does not match "
                f"dataset dimension {self.dataset.data_dim}"
            )

    @classmethod
    def default(cls, dataset, seed=0, **overrides):
        """Default hyperparameters (300 epochs, batch 256, lr 1e-3, 256x4 net)."""
        mlp_over = overrides.pop("mlp", {})
        mlp = nn.MlpConfig(data_dim=dataset.data_dim, **mlp_over)
        return cls(dataset=dataset, mlp=mlp, seed=seed, **overrides)

    def to_dict(self):
        """Dict without the seed (persisted separately in the model file)."""
        return {
            "dataset": self.dataset.to_dict(),
            "mlp": self.mlp.to_dict(),
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr": self.lr,
        }

    @classmethod
    def from_dict(cls, d, seed):
        return cls(
            dataset=DatasetSpec.from_dict(d["dataset"]),
            mlp=nn.MlpConfig.from_dict(d["mlp"]),
            epochs=d["epochs"],
            batch_size=d["batch_size"],
            lr=d["lr"],
            seed=seed,
        )


@dataclass(frozen=True)
class SolverSpec:
    """Which solver to sample with: fixed-step methods take n_steps, dopri5
    takes tolerances."""

    method: str
    n_steps: int | None = None
    atol: float = 1e-5
    rtol: float = 1e-5

    def __post_init__(self):
        if self.method not in ("euler", "midpoint", "rk4", "dopri5"):
            raise ValueError(f"unknown solver {self.method!r}")
        if self.method != "dopri5":
            if self.n_steps is None or self.n_steps < 1:
                raise ValueError(f"{self.method} needs n_steps >= 1")

    @property
    def steps_label(self):
        return "adaptive" if self.method == "dopri5" else str(self.n_steps)

    def to_dict(self):
        if self.method == "dopri5":
            return {"method": self.method, "atol": self.atol, "rtol": self.rtol}
        return {"method": self.method, "steps": self.n_steps}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        method = d.pop("method")
        steps = d.pop("steps", None)
        return cls(method=method, n_steps=steps, **d)


@dataclass
class CfmBatch:
    """One training batch; x_t and u_t satisfy the interpolation identities
    exactly (same float ops everywhere)."""

    x0: np.ndarray
    x1: np.ndarray
    t: np.ndarray
    x_t: np.ndarray
    u_t: np.ndarray


def _pairs(x1, rng):
    """Interpolation batch for given data rows: draw noise and times, build
    x_t = (1-t) x0 + t x1 and u_t = x1 - x0."""
    n, d = x1.shape
    x0 = gaussian_sample(rng, n, d)
    t = rng.uniform(size=n)
    tt = t[:, None]
    x_t = (1.0 - tt) * x0 + tt * x1
    u_t = x1 - x0
    return CfmBatch(x0=x0, x1=x1, t=t, x_t=x_t, u_t=u_t)


def make_batch(data, rng, batch_size):
    """CFM batch with x1 drawn uniformly (with replacement) from the rows of
    ``data``, an already standardized point array.  Pairing is independent:
    no minibatch coupling between x0 and x1."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    data = np.asarray(data, dtype=float)
    idx = rng.integers(0, data.shape[0], size=batch_size)
    return _pairs(data[idx], rng)


@dataclass
class TrainedModel:
    """Parameters plus everything sampling needs: the training config and
    the standardization of the data space."""

    params: nn.MlpParams
    config: TrainConfig
    data_mean: np.ndarray
    data_std: np.ndarray
    loss_curve: list = field(default_factory=list)

    @property
    def data_dim(self):
        return self.params.config.data_dim

    @property
    def final_loss(self):
        return self.loss_curve[-1] if self.loss_curve else float("nan")


def train(config):
    """Train the velocity network; returns a :class:`TrainedModel` whose
    ``loss_curve`` holds the per-epoch mean loss.

    One epoch is a full pass over the fixed pre-generated dataset,
    reshuffled each epoch.  Deterministic for a fixed config and seed.
    Raises :class:`TrainingError` if the loss goes non-finite.
    """
    root = Rng(config.seed)
    raw = generate(config.dataset, root.stream_rng(STREAM_DATASET))
    mean = raw.mean(axis=0)
    std = raw.std(axis=0)
    std = np.where(std > 0, std, 1.0)  # guard degenerate axes
    data = (raw - mean) / std

    params = nn.init_params(config.mlp, root.stream_rng(STREAM_INIT))
    state = nn.AdamState.for_params(params)
    loop_rng = root.stream_rng(STREAM_TRAIN)

    n = data.shape[0]
    loss_curve = []
    for epoch in range(config.epochs):
        perm = loop_rng.permutation(n)
        total = 0.0
        for step, lo in enumerate(range(0, n, config.batch_size)):
            batch = _pairs(data[perm[lo : lo + config.batch_size]], loop_rng)
            loss, grads = nn.loss_and_grad(params, batch.x_t, batch.t, batch.u_t)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, step {step}", epoch=epoch, step=step
                )
            nn.adam_update(params, grads, state, config.lr)
            total += loss * batch.x1.shape[0]
        loss_curve.append(total / n)
    return TrainedModel(
        params=params,
        config=config,
        data_mean=mean,
        data_std=std,
        loss_curve=loss_curve,
    )


def velocity_field(params, n, d):
    """The learned field as a batched :class:`VectorField`: the flat state
    packs n trajectories, one network call evaluates all of them."""

    def f(t, y):
        return nn.forward(params, y.reshape(n, d), t).ravel()

    return VectorField(f)


def sample(model, solver, n, rng):
    """Integrate n Gaussian starts through the learned flow.

    Returns ``(points, trace)`` with points already mapped back to original
    data coordinates.  The trace covers the whole batch; its NFE counts
    network calls, i.e. solver stages.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    d = model.data_dim
    z0 = gaussian_sample(rng, n, d).ravel()
    f = velocity_field(model.params, n, d)
    if solver.method == "dopri5":
        cfg = StepControlConfig(atol=solver.atol, rtol=solver.rtol)
        z1, trace = integrate_dopri5(f, z0, 0.0, 1.0, cfg)
    else:
        z1, trace = integrate_fixed(f, z0, 0.0, 1.0, solver.n_steps, solver.method)
    points = z1.reshape(n, d) * model.data_std + model.data_mean
    return points, trace


# ---------------------------------------------------------------------------
# persistence

def save_model(model, path):
    """Write the model bundle as JSON.

    Layout: {format_version, config, seed, params, training_meta}; floats are
    serialized with repr round-tripping, so reloading is bit-exact.
    """
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "config": model.config.to_dict(),
        "seed": model.config.seed,
        "params": nn.params_to_arrays(model.params),
        "training_meta": {
            "epochs": model.config.epochs,
            "final_loss": model.final_loss,
            "loss_curve": list(model.loss_curve),
            "data_mean": model.data_mean.tolist(),
            "data_std": model.data_std.tolist(),
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_model(path):
    """Inverse of :func:`save_model`."""
    with open(path) as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version {version!r}")
    config = TrainConfig.from_dict(doc["config"], seed=doc["seed"])
    params = nn.params_from_arrays(config.mlp, doc["params"])
    meta = doc["training_meta"]
    return TrainedModel(
        params=params,
        config=config,
        data_mean=np.asarray(meta["data_mean"], dtype=float),
        data_std=np.asarray(meta["data_std"], dtype=float),
        loss_curve=list(meta["loss_curve"]),
    )
