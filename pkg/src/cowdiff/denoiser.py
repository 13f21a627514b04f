"""Noise predictors.

Two desk-scale implementations of the noise-prediction interface
ε(x, t, condition):

* :class:`AnalyticDenoiser` — the closed-form optimal predictor for
  Gaussian-mixture data under the forward kernel
  x_t = sqrt(ᾱ_t)·x₀ + sqrt(1 − ᾱ_t)·ε. Exact, so it serves as a
  verification oracle for every sampling routine.
* :class:`TinyDenoiser` — a small fully-connected network trained with
  the standard noise-prediction objective, with condition dropout so
  classifier-free guidance is well defined.

Mixture components use isotropic covariances s²·I, which keeps the
posterior mean a scalar-weighted expression:

    ε̂(x, t) = sqrt(1 − ᾱ_t) · Σ_k r_k(x) · (x − sqrt(ᾱ_t)·μ_k) / c_k,
    c_k = ᾱ_t·s_k² + (1 − ᾱ_t),

where r_k are the component responsibilities of x under the step-t
marginal, computed with log-sum-exp stabilization. This is algebraically
identical to (x − sqrt(ᾱ_t)·E[x₀|x_t]) / sqrt(1 − ᾱ_t) but stays finite
at ᾱ_t = 1, where ε̂ → 0.
"""

from __future__ import annotations

import abc
import math
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .schedule import NoiseSchedule

__all__ = [
    "Condition",
    "UNCONDITIONAL",
    "Denoiser",
    "MixtureComponent",
    "GaussianMixtureModel",
    "AnalyticDenoiser",
    "analytic_epsilon",
    "cfg_epsilon",
    "render_pattern",
    "parse_mixture_spec",
    "load_mixture_spec",
    "TinyDenoiser",
    "TrainingConfig",
    "train_tiny_denoiser",
    "save_denoiser",
    "load_denoiser",
]


@dataclass(frozen=True)
class Condition:
    """Sampling condition: unconditional, or a categorical label.

    The label stands in for a text prompt and selects the subset of
    mixture components (or the class input of the trained denoiser)
    consistent with it.
    """

    label: str | None = None

    @property
    def is_conditional(self) -> bool:
        return self.label is not None


UNCONDITIONAL = Condition()


class Denoiser(abc.ABC):
    """Interface: predict the noise in x at step t, optionally conditioned.

    Implementations are immutable after construction, return an array of
    the input's shape, and are deterministic: identical (x, t, condition)
    gives identical output.
    """

    labels: frozenset[str] = frozenset()

    @abc.abstractmethod
    def epsilon(self, x: np.ndarray, t: int, condition: Condition = UNCONDITIONAL) -> np.ndarray:
        raise NotImplementedError

    def check_condition(self, condition: Condition) -> None:
        if condition.is_conditional and condition.label not in self.labels:
            raise ValueError(f"unknown condition label {condition.label!r}; "
                             f"known: {sorted(self.labels)}")


# ---------------------------------------------------------------------------
# mean patterns

def render_pattern(spec: str, shape: tuple[int, ...]) -> np.ndarray:
    """Render a named primitive pattern at the given canvas shape.

    Supported: ``constant:V``, ``xgrad:LO,HI`` (varies along width),
    ``ygrad:LO,HI`` (varies along height), ``checker:A,B,PERIOD``, and
    sums of those joined with ``+``. 3-D shapes broadcast the pattern
    across channels.
    """
    if len(shape) < 2:
        raise ValueError("canvas shape must have at least 2 dimensions")
    if "+" in spec:
        parts = [render_pattern(part, shape) for part in spec.split("+")]
        return np.sum(parts, axis=0)
    kind, _, argtext = spec.partition(":")
    args = [float(v) for v in argtext.split(",")] if argtext else []
    h, w = shape[0], shape[1]
    if kind == "constant":
        (value,) = args
        plane = np.full((h, w), value, dtype=np.float64)
    elif kind == "xgrad":
        lo, hi = args
        col = np.linspace(lo, hi, w) if w > 1 else np.array([lo])
        plane = np.broadcast_to(col, (h, w)).copy()
    elif kind == "ygrad":
        lo, hi = args
        row = np.linspace(lo, hi, h) if h > 1 else np.array([lo])
        plane = np.broadcast_to(row[:, None], (h, w)).copy()
    elif kind == "checker":
        a, b, period = args
        period = max(1, int(period))
        rr, cc = np.indices((h, w))
        plane = np.where((rr // period + cc // period) % 2 == 0, a, b).astype(np.float64)
    else:
        raise ValueError(f"unknown mean pattern {kind!r}")
    if len(shape) == 2:
        return plane
    return np.broadcast_to(plane[..., None], shape).copy()


@dataclass(frozen=True)
class MixtureComponent:
    """One isotropic Gaussian component: weight · N(mean, variance·I).

    ``mean`` is either a concrete canvas array (fixes the shape) or a
    pattern spec string renderable at any shape.
    """

    weight: float
    mean: np.ndarray | str
    variance: float
    label: str | None = None

    def mean_for_shape(self, shape: tuple[int, ...]) -> np.ndarray:
        if isinstance(self.mean, str):
            return render_pattern(self.mean, shape)
        if self.mean.shape != tuple(shape):
            raise ValueError(f"component mean has shape {self.mean.shape}, "
                             f"cannot evaluate at {tuple(shape)}")
        return self.mean


@dataclass(frozen=True)
class GaussianMixtureModel:
    """Isotropic Gaussian mixture over canvases, with optional labels."""

    components: tuple[MixtureComponent, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "_mean_cache", {})
        if not comps:
            raise ValueError("mixture needs at least one component")
        w = self.weights
        if np.any(w <= 0.0):
            raise ValueError("component weights must be positive")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1 (got {w.sum()!r})")
        if np.any(self.variances <= 0.0):
            raise ValueError("component variances must be positive")
        for c in comps:
            if isinstance(c.mean, np.ndarray) and not np.all(np.isfinite(c.mean)):
                raise ValueError("component means must be finite")

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components], dtype=np.float64)

    @property
    def variances(self) -> np.ndarray:
        return np.array([c.variance for c in self.components], dtype=np.float64)

    @property
    def labels(self) -> frozenset[str]:
        return frozenset(c.label for c in self.components if c.label is not None)

    def means_for_shape(self, shape: tuple[int, ...]) -> np.ndarray:
        """All component means rendered at ``shape``, flattened to (K, D)."""
        shape = tuple(shape)
        cache = self._mean_cache
        if shape not in cache:
            cache[shape] = np.stack(
                [c.mean_for_shape(shape).reshape(-1) for c in self.components]
            )
        return cache[shape]

    def component_selection(self, condition: Condition) -> np.ndarray:
        """Indices of the components consistent with the condition."""
        if not condition.is_conditional:
            return np.arange(len(self.components))
        idx = np.array([i for i, c in enumerate(self.components) if c.label == condition.label])
        if idx.size == 0:
            raise ValueError(f"unknown condition label {condition.label!r}; "
                             f"known: {sorted(self.labels)}")
        return idx

    def responsibilities(self, x: np.ndarray, alpha_bar: float,
                         condition: Condition = UNCONDITIONAL) -> tuple[np.ndarray, np.ndarray]:
        """Posterior component probabilities of x under the step marginal.

        The marginal of component k at signal level ᾱ is
        N(sqrt(ᾱ)·μ_k, c_k·I) with c_k = ᾱ·s_k² + (1 − ᾱ). ᾱ = 1 gives
        responsibilities of clean data under the mixture itself.

        Returns (selected component indices, renormalized probabilities).
        """
        idx = self.component_selection(condition)
        flat = np.asarray(x, dtype=np.float64).reshape(-1)
        d = flat.size
        means = self.means_for_shape(np.asarray(x).shape)[idx]
        w = self.weights[idx]
        c = alpha_bar * self.variances[idx] + (1.0 - alpha_bar)
        diffs = flat[None, :] - math.sqrt(alpha_bar) * means
        sq = np.einsum("kd,kd->k", diffs, diffs)
        logits = np.log(w) - 0.5 * d * np.log(c) - 0.5 * sq / c
        logits -= logits.max()
        r = np.exp(logits)
        r /= r.sum()
        return idx, r

    def posterior_x0_mean(self, x: np.ndarray, alpha_bar: float,
                          condition: Condition = UNCONDITIONAL) -> np.ndarray:
        """E[x₀ | x_t] under the forward kernel, restricted to the condition."""
        idx, r = self.responsibilities(x, alpha_bar, condition)
        flat = np.asarray(x, dtype=np.float64).reshape(-1)
        means = self.means_for_shape(np.asarray(x).shape)[idx]
        c = alpha_bar * self.variances[idx] + (1.0 - alpha_bar)
        gain = math.sqrt(alpha_bar) * self.variances[idx] / c
        per_comp = means + gain[:, None] * (flat[None, :] - math.sqrt(alpha_bar) * means)
        return (r[:, None] * per_comp).sum(axis=0).reshape(np.asarray(x).shape)

    def label_posterior(self, x0: np.ndarray, label: str) -> float:
        """P(component label | clean sample x₀), the condition-response metric."""
        if label not in self.labels:
            raise ValueError(f"unknown label {label!r}")
        idx, r = self.responsibilities(x0, 1.0, UNCONDITIONAL)
        mask = np.array([self.components[i].label == label for i in idx])
        return float(r[mask].sum())

    def sample(self, shape: tuple[int, ...], rng: np.random.Generator,
               condition: Condition = UNCONDITIONAL) -> np.ndarray:
        """Draw one clean canvas from the (condition-restricted) mixture."""
        idx = self.component_selection(condition)
        w = self.weights[idx]
        k = int(idx[rng.choice(idx.size, p=w / w.sum())])
        comp = self.components[k]
        mean = comp.mean_for_shape(tuple(shape))
        return mean + math.sqrt(comp.variance) * rng.standard_normal(tuple(shape))


def analytic_epsilon(model: GaussianMixtureModel, x: np.ndarray, t: int,
                     schedule: NoiseSchedule, condition: Condition = UNCONDITIONAL) -> np.ndarray:
    """Exact minimizer of the ε-prediction objective for mixture data.

    Equals (x − sqrt(ᾱ_t)·E[x₀|x_t]) / sqrt(1 − ᾱ_t), evaluated in the
    score form so ᾱ_t = 1 is well defined (ε̂ = 0 there).
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("input canvas must be finite")
    ab = schedule.alpha_bar(t)
    idx, r = model.responsibilities(x, ab, condition)
    means = model.means_for_shape(x.shape)[idx]
    c = ab * model.variances[idx] + (1.0 - ab)
    flat = x.reshape(-1)
    diffs = flat[None, :] - math.sqrt(ab) * means
    eps = math.sqrt(1.0 - ab) * ((r / c)[:, None] * diffs).sum(axis=0)
    return eps.reshape(x.shape)


class AnalyticDenoiser(Denoiser):
    """Denoiser adapter around the exact mixture predictor."""

    def __init__(self, model: GaussianMixtureModel, schedule: NoiseSchedule):
        self.model = model
        self.schedule = schedule
        self.labels = model.labels

    def epsilon(self, x: np.ndarray, t: int, condition: Condition = UNCONDITIONAL) -> np.ndarray:
        return analytic_epsilon(self.model, x, t, self.schedule, condition)


def cfg_epsilon(denoiser: Denoiser, x: np.ndarray, t: int,
                condition: Condition, scale: float) -> np.ndarray:
    """Classifier-free guidance: ε_u + scale·(ε_c − ε_u).

    scale 0 and 1 return the unconditional / conditional branch directly,
    so the degenerate cases are bit-exact and cost a single evaluation.
    """
    if not condition.is_conditional:
        raise ValueError("cfg_epsilon requires a categorical condition")
    if scale == 0.0:
        return denoiser.epsilon(x, t, UNCONDITIONAL)
    if scale == 1.0:
        return denoiser.epsilon(x, t, condition)
    eps_u = denoiser.epsilon(x, t, UNCONDITIONAL)
    eps_c = denoiser.epsilon(x, t, condition)
    return eps_u + scale * (eps_c - eps_u)


# ---------------------------------------------------------------------------
# mixture spec files
#
#   # two well separated classes
#   component weight=0.5 variance=0.01 label=bright mean=constant:0.6
#   component weight=0.5 variance=0.01 label=dark mean=values:-0.6,-0.5,... shape=2x2

def parse_mixture_spec(text: str) -> GaussianMixtureModel:
    """Parse the plain-text mixture format (weights normalized to sum 1)."""
    comps = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] != "component":
            raise ValueError(f"line {lineno}: expected 'component', got {tokens[0]!r}")
        kv = {}
        for tok in tokens[1:]:
            if "=" not in tok:
                raise ValueError(f"line {lineno}: malformed token {tok!r}")
            key, val = tok.split("=", 1)
            kv[key] = val
        missing = {"weight", "variance", "mean"} - kv.keys()
        if missing:
            raise ValueError(f"line {lineno}: missing {sorted(missing)}")
        mean_spec = kv.pop("mean")
        mean: np.ndarray | str
        if mean_spec.startswith("values:"):
            if "shape" not in kv:
                raise ValueError(f"line {lineno}: mean=values:... needs shape=HxW[xC]")
            dims = tuple(int(d) for d in kv.pop("shape").split("x"))
            vals = np.array([float(v) for v in mean_spec[len("values:"):].split(",")])
            if vals.size != int(np.prod(dims)):
                raise ValueError(f"line {lineno}: {vals.size} values for shape {dims}")
            mean = vals.reshape(dims)
        else:
            mean = mean_spec
        comp = MixtureComponent(
            weight=float(kv.pop("weight")),
            mean=mean,
            variance=float(kv.pop("variance")),
            label=kv.pop("label", None),
        )
        if kv:
            raise ValueError(f"line {lineno}: unknown keys {sorted(kv)}")
        comps.append(comp)
    if not comps:
        raise ValueError("mixture spec defines no components")
    total = sum(c.weight for c in comps)
    comps = [MixtureComponent(c.weight / total, c.mean, c.variance, c.label) for c in comps]
    return GaussianMixtureModel(tuple(comps))


def load_mixture_spec(path) -> GaussianMixtureModel:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_mixture_spec(fh.read())


# ---------------------------------------------------------------------------
# tiny trainable denoiser

_TINY_MAGIC = b"CDTD"
_TINY_VERSION = 1


def _time_features(t: np.ndarray, total_steps: int, n_freqs: int) -> np.ndarray:
    """Sinusoidal features of t/T at frequencies 1, 2, 4, ... (2·n_freqs dims)."""
    tau = np.asarray(t, dtype=np.float64) / total_steps
    freqs = 2.0 ** np.arange(n_freqs)
    ang = 2.0 * np.pi * tau[..., None] * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)


class TinyDenoiser(Denoiser):
    """Two-hidden-layer fully connected ε-predictor for a fixed canvas shape.

    Input is the flattened canvas, sinusoidal time features, and a one-hot
    condition vector with a dedicated null slot for unconditional use. The
    output is preconditioned with an input skip, ε̂ = sqrt(1 − ᾱ_t)·x +
    net(x, t, c): the skip alone is already optimal for unit-Gaussian
    data, so the network only has to learn the data-specific correction.
    """

    def __init__(self, canvas_shape: tuple[int, ...], total_steps: int,
                 class_labels: Sequence[str], hidden: int, n_freqs: int,
                 params: dict[str, np.ndarray], alpha_bars: np.ndarray,
                 loss_history: tuple[float, ...] = ()):
        self.canvas_shape = tuple(canvas_shape)
        self.total_steps = int(total_steps)
        self.class_labels = tuple(class_labels)
        self.hidden = int(hidden)
        self.n_freqs = int(n_freqs)
        self.params = params
        self.alpha_bars = np.asarray(alpha_bars, dtype=np.float64)
        if self.alpha_bars.shape != (self.total_steps + 1,):
            raise ValueError("alpha_bars table must have length total_steps + 1")
        self.loss_history = tuple(loss_history)
        self.labels = frozenset(self.class_labels)

    @property
    def data_dim(self) -> int:
        return int(np.prod(self.canvas_shape))

    @property
    def input_dim(self) -> int:
        return self.data_dim + 2 * self.n_freqs + len(self.class_labels) + 1

    def _cond_onehot(self, cond_idx: np.ndarray) -> np.ndarray:
        onehot = np.zeros((cond_idx.size, len(self.class_labels) + 1))
        onehot[np.arange(cond_idx.size), cond_idx] = 1.0
        return onehot

    def _forward(self, x_flat: np.ndarray, t: np.ndarray, cond_idx: np.ndarray,
                 keep_hidden: bool = False):
        inp = np.concatenate(
            [x_flat, _time_features(t, self.total_steps, self.n_freqs),
             self._cond_onehot(cond_idx)], axis=1)
        p = self.params
        h1 = np.tanh(inp @ p["W1"] + p["b1"])
        h2 = np.tanh(h1 @ p["W2"] + p["b2"])
        skip = np.sqrt(1.0 - self.alpha_bars[np.asarray(t)])[:, None] * x_flat
        out = skip + h2 @ p["W3"] + p["b3"]
        if keep_hidden:
            return out, (inp, h1, h2)
        return out

    def epsilon(self, x: np.ndarray, t: int, condition: Condition = UNCONDITIONAL) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.canvas_shape:
            raise ValueError(f"expected canvas shape {self.canvas_shape}, got {x.shape}")
        if not 0 <= t <= self.total_steps:
            raise ValueError(f"step {t} outside [0, {self.total_steps}]")
        self.check_condition(condition)
        if condition.is_conditional:
            cond = np.array([self.class_labels.index(condition.label)])
        else:
            cond = np.array([len(self.class_labels)])
        out = self._forward(x.reshape(1, -1), np.array([t]), cond)
        return out.reshape(self.canvas_shape)


@dataclass(frozen=True)
class TrainingConfig:
    """Budget and hyperparameters for the tiny denoiser."""

    epochs: int = 200
    batch_size: int = 32
    hidden: int = 128
    learning_rate: float = 1e-3
    cond_dropout: float = 0.15
    n_freqs: int = 4
    seed: int = 0


def _init_params(rng: np.random.Generator, dims: tuple[int, int, int, int]) -> dict[str, np.ndarray]:
    d_in, h1, h2, d_out = dims
    def layer(fan_in, fan_out):
        return rng.standard_normal((fan_in, fan_out)) * math.sqrt(1.0 / fan_in)
    return {
        "W1": layer(d_in, h1), "b1": np.zeros(h1),
        "W2": layer(h1, h2), "b2": np.zeros(h2),
        "W3": layer(h2, d_out), "b3": np.zeros(d_out),
    }


def train_tiny_denoiser(dataset: Sequence[tuple[np.ndarray, str | None]],
                        schedule: NoiseSchedule,
                        config: TrainingConfig = TrainingConfig()) -> TinyDenoiser:
    """Train a TinyDenoiser with the standard noise-prediction objective.

    A ``cond_dropout`` fraction of samples per batch is trained with the
    null condition so both guidance branches exist. Deterministic given
    ``config.seed``; ``epochs = 0`` returns the untrained initialization.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    images = [np.asarray(img, dtype=np.float64) for img, _ in dataset]
    shape = images[0].shape
    if any(img.shape != shape for img in images):
        raise ValueError("all dataset canvases must share one shape")
    labels_present = sorted({lab for _, lab in dataset if lab is not None})
    label_index = {lab: i for i, lab in enumerate(labels_present)}
    null_idx = len(labels_present)
    x0 = np.stack([img.reshape(-1) for img in images])
    cond_base = np.array([label_index.get(lab, null_idx) for _, lab in dataset])

    rng = np.random.default_rng(config.seed)
    d = x0.shape[1]
    d_in = d + 2 * config.n_freqs + len(labels_present) + 1
    params = _init_params(rng, (d_in, config.hidden, config.hidden, d))
    model = TinyDenoiser(shape, schedule.total_steps, labels_present,
                         config.hidden, config.n_freqs, params, schedule.alpha_bars)

    adam_m = {k: np.zeros_like(v) for k, v in params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in params.items()}
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    step = 0
    ab = schedule.alpha_bars
    n = x0.shape[0]
    batch = min(config.batch_size, n)
    losses = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, batch):
            sel = order[start:start + batch]
            b = sel.size
            t = rng.integers(1, schedule.total_steps + 1, size=b)
            eps = rng.standard_normal((b, d))
            coef_sig = np.sqrt(ab[t])[:, None]
            coef_noise = np.sqrt(1.0 - ab[t])[:, None]
            x_t = coef_sig * x0[sel] + coef_noise * eps
            cond = cond_base[sel].copy()
            drop = rng.random(b) < config.cond_dropout
            cond[drop] = null_idx

            pred, (inp, h1, h2) = model._forward(x_t, t, cond, keep_hidden=True)
            diff = pred - eps
            loss = float(np.mean(diff * diff))
            epoch_losses.append(loss)

            # backprop through the two tanh layers
            dout = 2.0 * diff / diff.size
            g = {}
            g["W3"] = h2.T @ dout
            g["b3"] = dout.sum(axis=0)
            dh2 = (dout @ params["W3"].T) * (1.0 - h2 * h2)
            g["W2"] = h1.T @ dh2
            g["b2"] = dh2.sum(axis=0)
            dh1 = (dh2 @ params["W2"].T) * (1.0 - h1 * h1)
            g["W1"] = inp.T @ dh1
            g["b1"] = dh1.sum(axis=0)

            step += 1
            for k in params:
                adam_m[k] = beta1 * adam_m[k] + (1.0 - beta1) * g[k]
                adam_v[k] = beta2 * adam_v[k] + (1.0 - beta2) * g[k] * g[k]
                m_hat = adam_m[k] / (1.0 - beta1 ** step)
                v_hat = adam_v[k] / (1.0 - beta2 ** step)
                params[k] -= config.learning_rate * m_hat / (np.sqrt(v_hat) + adam_eps)
        losses.append(float(np.mean(epoch_losses)))
    model.loss_history = tuple(losses)
    return model


def save_denoiser(model: TinyDenoiser, path) -> None:
    """Write the versioned binary model file (little-endian float32 weights)."""
    parts = [_TINY_MAGIC, struct.pack("<II", _TINY_VERSION, model.total_steps)]
    parts.append(struct.pack("<I", len(model.canvas_shape)))
    parts.append(struct.pack(f"<{len(model.canvas_shape)}I", *model.canvas_shape))
    parts.append(struct.pack("<III", model.hidden, model.n_freqs, len(model.class_labels)))
    for lab in model.class_labels:
        raw = lab.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
    parts.append(model.alpha_bars.astype("<f4").tobytes())
    for key in ("W1", "b1", "W2", "b2", "W3", "b3"):
        parts.append(model.params[key].astype("<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_denoiser(path) -> TinyDenoiser:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _TINY_MAGIC:
        raise ValueError(f"{path}: not a tiny-denoiser model file")
    version, total_steps = struct.unpack_from("<II", blob, 4)
    if version != _TINY_VERSION:
        raise ValueError(f"{path}: unsupported model version {version}")
    off = 12
    (ndim,) = struct.unpack_from("<I", blob, off); off += 4
    shape = struct.unpack_from(f"<{ndim}I", blob, off); off += 4 * ndim
    hidden, n_freqs, n_labels = struct.unpack_from("<III", blob, off); off += 12
    labels = []
    for _ in range(n_labels):
        (ln,) = struct.unpack_from("<I", blob, off); off += 4
        labels.append(blob[off:off + ln].decode("utf-8")); off += ln
    alpha_bars = np.frombuffer(blob, dtype="<f4", count=total_steps + 1,
                               offset=off).astype(np.float64)
    off += 4 * (total_steps + 1)
    d = int(np.prod(shape))
    d_in = d + 2 * n_freqs + n_labels + 1
    shapes = {"W1": (d_in, hidden), "b1": (hidden,), "W2": (hidden, hidden),
              "b2": (hidden,), "W3": (hidden, d), "b3": (d,)}
    params = {}
    for key in ("W1", "b1", "W2", "b2", "W3", "b3"):
        count = int(np.prod(shapes[key]))
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
        params[key] = arr.astype(np.float64).reshape(shapes[key])
        off += 4 * count
    if off != len(blob):
        raise ValueError(f"{path}: trailing bytes in model file")
    return TinyDenoiser(tuple(shape), total_steps, labels, hidden, n_freqs, params,
                        alpha_bars)
