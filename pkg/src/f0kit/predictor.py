"""Frame-level log-F0 regressor trained with an L1 loss.

Inputs are phone one-hots upsampled to the frame rate, a within-phone
position scalar and a one-hot speaker flag. The network is

    input projection (linear) -> conv1d(k=5, tanh) -> conv1d(k=5, tanh) -> linear head

implemented directly in numpy with hand-written backpropagation and an
Adam optimizer. Training runs a joint phase over every speaker followed by
a fine-tuning phase on target-speaker pairs only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Utterance
from .errors import (
    CoverageGap,
    DimensionMismatch,
    InvalidTrainConfig,
    LengthMismatch,
    NonFiniteLoss,
    OverlappingIntervals,
    SchemaVersionMismatch,
    UnknownPhoneme,
)
from .trajectory import LOG_MAX, LOG_MIN, LogF0Track

MODEL_SCHEMA_VERSION = 1
PARAM_NAMES = ("w_in", "b_in", "k1", "b1", "k2", "b2", "w_out", "b_out")

# time comparisons against phone boundaries
_TIME_EPS = 1e-9
# allowed slack when checking that phones tile the utterance
_TILE_EPS = 1e-6


@dataclass(frozen=True)
class FrameFeatures:
    """Per-frame input rows laid out as ``[phone one-hot | position | speaker one-hot]``."""

    matrix: np.ndarray
    n_phonemes: int
    n_speakers: int
    hop_s: float

    @property
    def n_frames(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    joint_steps: int = 2000
    finetune_steps: int = 2000
    batch_size: int = 8
    learning_rate: float = 1e-3
    seed: int = 42

    def validate(self) -> None:
        for name in ("joint_steps", "finetune_steps", "batch_size"):
            if getattr(self, name) <= 0:
                raise InvalidTrainConfig(f"{name} must be positive", field=name)
        if not self.learning_rate > 0:
            raise InvalidTrainConfig("learning_rate must be positive", field="learning_rate")


@dataclass
class TrainingPair:
    features: FrameFeatures
    oracle: LogF0Track
    target: bool = True
    id: str = ""


@dataclass
class PredictorModel:
    params: dict
    input_dim: int
    hidden: int = 64
    kernel: int = 5
    seed: int = 0
    config: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    @classmethod
    def init(
        cls,
        input_dim: int,
        hidden: int = 64,
        kernel: int = 5,
        seed: int = 0,
        output_bias: float = 0.0,
        zeros: bool = False,
        zero_head: bool = True,
    ) -> "PredictorModel":
        """Uniform ``+-sqrt(1/fan_in)`` initialization, or all zeros.

        With ``zero_head`` the output weights start at zero so the initial
        prediction is the constant ``output_bias``. ``output_bias`` sets the
        head bias in every mode.
        """
        rng = np.random.default_rng(seed)
        shapes = _param_shapes(input_dim, hidden, kernel)
        fan_in = {
            "w_in": input_dim, "b_in": input_dim,
            "k1": kernel * hidden, "b1": kernel * hidden,
            "k2": kernel * hidden, "b2": kernel * hidden,
            "w_out": hidden, "b_out": hidden,
        }
        params = {}
        for name in PARAM_NAMES:
            if zeros:
                params[name] = np.zeros(shapes[name])
            else:
                bound = math.sqrt(1.0 / fan_in[name])
                params[name] = rng.uniform(-bound, bound, size=shapes[name])
        if zero_head:
            params["w_out"] = np.zeros(shapes["w_out"])
        params["b_out"] = np.array([float(output_bias)])
        return cls(params, input_dim, hidden, kernel, seed)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.params[n].ravel() for n in PARAM_NAMES])

    def set_flat(self, vec: np.ndarray) -> None:
        pos = 0
        for name in PARAM_NAMES:
            size = self.params[name].size
            self.params[name] = vec[pos : pos + size].reshape(self.params[name].shape).copy()
            pos += size

    def copy(self) -> "PredictorModel":
        return PredictorModel(
            {k: v.copy() for k, v in self.params.items()},
            self.input_dim,
            self.hidden,
            self.kernel,
            self.seed,
            dict(self.config),
            json.loads(json.dumps(self.metadata)),
            list(self.history),
        )


def _param_shapes(input_dim: int, hidden: int, kernel: int) -> dict:
    return {
        "w_in": (input_dim, hidden),
        "b_in": (hidden,),
        "k1": (kernel * hidden, hidden),
        "b1": (hidden,),
        "k2": (kernel * hidden, hidden),
        "b2": (hidden,),
        "w_out": (hidden,),
        "b_out": (1,),
    }


# ---------------------------------------------------------------------------
# featurization


def featurize(
    utterance: Utterance,
    hop_s: float,
    phoneme_inventory: Sequence[str],
    speaker_index: int,
    n_speakers: int = 1,
    n_frames: int | None = None,
    offset_s: float = 0.0,
) -> FrameFeatures:
    """Upsample an utterance's phone sequence to frame-level feature rows.

    Frame ``i`` sits at time ``offset_s + i * hop_s`` and takes the phone
    whose half-open interval ``[start, end)`` contains it. Its position is
    its rank among that phone's frames divided by (count - 1), 0 for a
    single-frame phone. Frames up to one hop past the last phone's end are
    assigned to the last phone.

    Args:
        n_frames: number of frames to emit. Defaults to every frame whose
            time falls before the end of the last phone.
        offset_s: time of frame 0, e.g. half the analysis window when the
            frames must line up with extracted F0 frames.
    """
    phones = utterance.phones
    if not phones:
        raise CoverageGap("utterance has no phones", utterance=utterance.id, field="phones")
    if not 0 <= speaker_index < n_speakers:
        raise DimensionMismatch(
            "speaker_index out of range", speaker_index=speaker_index, n_speakers=n_speakers
        )
    lookup = {sym: i for i, sym in enumerate(phoneme_inventory)}
    starts = np.array([p.start_s for p in phones])
    ends = np.array([p.end_s for p in phones])
    for i, p in enumerate(phones):
        if p.symbol not in lookup:
            raise UnknownPhoneme(
                f"phone {p.symbol!r} not in inventory", utterance=utterance.id, index=i
            )
        if i and p.start_s < ends[i - 1] - _TILE_EPS:
            raise OverlappingIntervals(
                f"interval {i} starts before the previous one ends",
                utterance=utterance.id,
                index=i,
            )
        if (i == 0 and p.start_s > _TILE_EPS) or (i and p.start_s > ends[i - 1] + _TILE_EPS):
            raise CoverageGap(
                f"gap before interval {i}", utterance=utterance.id, index=i
            )

    duration = float(ends[-1])
    if n_frames is None:
        n_frames = max(0, math.ceil((duration - offset_s) / hop_s - _TIME_EPS))
    times = offset_s + np.arange(n_frames) * hop_s
    if n_frames and times[-1] >= duration + hop_s - _TIME_EPS:
        raise CoverageGap(
            "frames extend more than one hop past the last phone",
            utterance=utterance.id,
            last_frame_s=float(times[-1]),
            end_s=duration,
        )
    owner = np.searchsorted(starts, times + _TIME_EPS, side="right") - 1
    owner = np.clip(owner, 0, len(phones) - 1)

    n_ph = len(phoneme_inventory)
    dim = n_ph + 1 + n_speakers
    mat = np.zeros((n_frames, dim))
    mat[np.arange(n_frames), [lookup[phones[j].symbol] for j in owner]] = 1.0
    for j in np.unique(owner):
        rows = np.flatnonzero(owner == j)
        if rows.size > 1:
            mat[rows, n_ph] = np.arange(rows.size) / (rows.size - 1)
    mat[:, n_ph + 1 + speaker_index] = 1.0
    return FrameFeatures(mat, n_ph, n_speakers, hop_s)


# ---------------------------------------------------------------------------
# network


def _im2col(x: np.ndarray, kernel: int) -> np.ndarray:
    """(T, C) -> (T, kernel * C) with zero 'same' padding."""
    pad = kernel // 2
    t, c = x.shape
    padded = np.zeros((t + 2 * pad, c))
    padded[pad : pad + t] = x
    return np.concatenate([padded[k : k + t] for k in range(kernel)], axis=1)


def _col2im(cols: np.ndarray, kernel: int, channels: int) -> np.ndarray:
    """Adjoint of :func:`_im2col`."""
    pad = kernel // 2
    t = cols.shape[0]
    padded = np.zeros((t + 2 * pad, channels))
    for k in range(kernel):
        padded[k : k + t] += cols[:, k * channels : (k + 1) * channels]
    return padded[pad : pad + t]


def _forward(params: dict, x: np.ndarray, kernel: int):
    h0 = x @ params["w_in"] + params["b_in"]
    c1 = _im2col(h0, kernel)
    a1 = np.tanh(c1 @ params["k1"] + params["b1"])
    c2 = _im2col(a1, kernel)
    a2 = np.tanh(c2 @ params["k2"] + params["b2"])
    y = a2 @ params["w_out"] + params["b_out"][0]
    return y, (x, c1, a1, c2, a2)


def _backward(params: dict, dy: np.ndarray, cache, kernel: int) -> dict:
    x, c1, a1, c2, a2 = cache
    hidden = params["b1"].size
    grads = {
        "w_out": a2.T @ dy,
        "b_out": np.array([dy.sum()]),
    }
    dz2 = np.outer(dy, params["w_out"]) * (1.0 - a2 ** 2)
    grads["k2"] = c2.T @ dz2
    grads["b2"] = dz2.sum(axis=0)
    da1 = _col2im(dz2 @ params["k2"].T, kernel, hidden)
    dz1 = da1 * (1.0 - a1 ** 2)
    grads["k1"] = c1.T @ dz1
    grads["b1"] = dz1.sum(axis=0)
    dh0 = _col2im(dz1 @ params["k1"].T, kernel, hidden)
    grads["w_in"] = x.T @ dh0
    grads["b_in"] = dh0.sum(axis=0)
    return grads


def _check_dim(model: PredictorModel, features: FrameFeatures) -> None:
    if features.dim != model.input_dim:
        raise DimensionMismatch(
            "feature dimension does not match the model",
            feature_dim=features.dim,
            model_dim=model.input_dim,
        )


def raw_output(model: PredictorModel, features: FrameFeatures) -> np.ndarray:
    """Unclamped network output, one log-Hz value per frame."""
    _check_dim(model, features)
    y, _ = _forward(model.params, features.matrix, model.kernel)
    return y


def predict(model: PredictorModel, features: FrameFeatures) -> LogF0Track:
    y = np.clip(raw_output(model, features), LOG_MIN, LOG_MAX)
    return LogF0Track(features.hop_s, y)


def l1_loss(pred: LogF0Track, oracle: LogF0Track) -> float:
    """Mean absolute log-F0 difference."""
    if len(pred) != len(oracle):
        raise LengthMismatch("tracks differ in length", len_a=len(pred), len_b=len(oracle))
    return float(np.mean(np.abs(pred.values_log - oracle.values_log)))


def loss_and_grads(model: PredictorModel, batch: Sequence[TrainingPair]):
    """Pooled per-frame L1 loss over ``batch`` and its (sub)gradient.

    The subgradient of ``|r|`` at ``r == 0`` is taken as 0.
    """
    total = sum(p.features.n_frames for p in batch)
    grads = {n: np.zeros_like(model.params[n]) for n in PARAM_NAMES}
    loss = 0.0
    for pair in batch:
        _check_dim(model, pair.features)
        if pair.features.n_frames != len(pair.oracle):
            raise LengthMismatch(
                "features and oracle differ in length",
                utterance=pair.id,
                n_features=pair.features.n_frames,
                n_oracle=len(pair.oracle),
            )
        y, cache = _forward(model.params, pair.features.matrix, model.kernel)
        resid = y - pair.oracle.values_log
        loss += float(np.abs(resid).sum())
        g = _backward(model.params, np.sign(resid) / total, cache, model.kernel)
        for n in PARAM_NAMES:
            grads[n] += g[n]
    return loss / total, grads


# ---------------------------------------------------------------------------
# training


class Adam:
    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k in params:
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] -= lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def _lr_schedule(base: float, step: int, total: int, warmup: float = 0.05,
                 floor: float = 0.05) -> float:
    """Linear warm-up over the first ``warmup`` fraction of ``total`` steps,
    then cosine decay to ``floor * base``."""
    n_warm = max(1, int(round(warmup * total)))
    if step <= n_warm:
        return base * step / n_warm
    progress = (step - n_warm) / max(total - n_warm, 1)
    return base * (floor + (1.0 - floor) * 0.5 * (1.0 + math.cos(math.pi * progress)))


class _BatchSampler:
    """Cycles through reshuffled epochs, handing out fixed-size batches."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self.n = n
        self.size = min(batch_size, n)
        self.rng = rng
        self.order: list[int] = []

    def next(self) -> list[int]:
        out = []
        while len(out) < self.size:
            if not self.order:
                self.order = list(self.rng.permutation(self.n))
            idx = self.order.pop()
            if idx not in out:
                out.append(idx)
        return out


def train(
    pairs: Sequence[TrainingPair],
    cfg: TrainConfig | None = None,
    hidden: int = 64,
    kernel: int = 5,
    log_every: int = 0,
    logger=None,
    on_phase_end=None,
) -> PredictorModel:
    """Joint phase on every pair, then fine-tuning on target pairs.

    The head bias starts at the mean oracle log-F0 of the joint data and the
    head weights at zero; the remaining weights use the seeded uniform
    initialization. Adam state carries over from the joint phase into
    fine-tuning; the step size follows a short linear warm-up and a cosine
    decay, restarted at the start of each phase.

    The per-step mini-batch losses are stored in ``model.history`` as
    ``(step, phase, loss)`` tuples. ``on_phase_end(phase, model)`` is called
    after each phase with the live model; copy it to keep a snapshot.

    Raises:
        DimensionMismatch: pairs disagree on feature width.
        NonFiniteLoss: the loss became NaN or infinite.
    """
    cfg = cfg or TrainConfig()
    cfg.validate()
    pairs = list(pairs)
    if not pairs:
        raise InvalidTrainConfig("no training pairs")
    targets = [p for p in pairs if p.target]
    if not targets:
        raise InvalidTrainConfig("no target-speaker pairs for fine-tuning")
    dim = pairs[0].features.dim
    for p in pairs:
        if p.features.dim != dim:
            raise DimensionMismatch(
                "inconsistent feature dimensions", utterance=p.id, dim=p.features.dim, expected=dim
            )

    init_seq, shuffle_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    bias = float(np.mean(np.concatenate([p.oracle.values_log for p in pairs])))
    init_seed = int(init_seq.generate_state(1)[0])
    model = PredictorModel.init(dim, hidden, kernel, seed=init_seed, output_bias=bias)
    model.seed = cfg.seed
    model.config = {
        "joint_steps": cfg.joint_steps,
        "finetune_steps": cfg.finetune_steps,
        "batch_size": cfg.batch_size,
        "learning_rate": cfg.learning_rate,
        "seed": cfg.seed,
    }
    opt = Adam(model.params, cfg.learning_rate)
    rng = np.random.default_rng(shuffle_seq)

    step = 0
    for phase, data, n_steps in (
        ("joint", pairs, cfg.joint_steps),
        ("finetune", targets, cfg.finetune_steps),
    ):
        sampler = _BatchSampler(len(data), cfg.batch_size, rng)
        for phase_step in range(1, n_steps + 1):
            step += 1
            batch = [data[i] for i in sampler.next()]
            loss, grads = loss_and_grads(model, batch)
            if not math.isfinite(loss):
                raise NonFiniteLoss(
                    "training loss is not finite", step=step, phase=phase, loss=str(loss)
                )
            opt.step(model.params, grads, _lr_schedule(cfg.learning_rate, phase_step, n_steps))
            model.history.append((step, phase, loss))
            if logger is not None and log_every and step % log_every == 0:
                logger.info("step %d (%s) loss %.5f", step, phase, loss)
        if on_phase_end is not None:
            on_phase_end(phase, model)
    return model


def dataset_loss(model: PredictorModel, pairs: Sequence[TrainingPair]) -> float:
    """Frame-pooled L1 loss of the unclamped output over ``pairs``."""
    total = 0.0
    frames = 0
    for p in pairs:
        total += float(np.abs(raw_output(model, p.features) - p.oracle.values_log).sum())
        frames += p.features.n_frames
    return total / frames


# ---------------------------------------------------------------------------
# gradient check


def grad_check_details(
    model: PredictorModel,
    pair: TrainingPair,
    epsilon: float = 1e-5,
    n_samples: int = 128,
    seed: int = 0,
    floor: float = 1e-7,
) -> tuple[float, int]:
    """Return ``(max relative error, number of weights checked)``.

    Weights are sampled without replacement. A weight is skipped when the
    +/- epsilon perturbation flips the sign of any residual, since the
    finite difference then straddles an L1 kink. Relative error is
    ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon must lie in [1e-7, 1e-3], got {epsilon}")
    _, grads = loss_and_grads(model, [pair])
    analytic = np.concatenate([grads[n].ravel() for n in PARAM_NAMES])
    base = model.flat()
    probe = model.copy()
    x = pair.features.matrix
    oracle = pair.oracle.values_log

    def evaluate(vec):
        probe.set_flat(vec)
        y, _ = _forward(probe.params, x, probe.kernel)
        resid = y - oracle
        return float(np.mean(np.abs(resid))), np.sign(resid)

    _, base_sign = evaluate(base)
    order = np.random.default_rng(seed).permutation(base.size)
    worst = 0.0
    checked = 0
    for idx in order:
        if checked >= n_samples:
            break
        vec = base.copy()
        vec[idx] += epsilon
        f_plus, s_plus = evaluate(vec)
        vec[idx] -= 2 * epsilon
        f_minus, s_minus = evaluate(vec)
        if np.any(base_sign == 0) or np.any(s_plus != base_sign) or np.any(s_minus != base_sign):
            continue
        numeric = (f_plus - f_minus) / (2 * epsilon)
        denom = max(abs(analytic[idx]), abs(numeric), floor)
        worst = max(worst, abs(analytic[idx] - numeric) / denom)
        checked += 1
    return worst, checked


def grad_check(model: PredictorModel, pair: TrainingPair, epsilon: float = 1e-5) -> float:
    return grad_check_details(model, pair, epsilon)[0]


# ---------------------------------------------------------------------------
# persistence


def model_to_dict(model: PredictorModel) -> dict:
    return {
        "schema_version": MODEL_SCHEMA_VERSION,
        "input_dim": model.input_dim,
        "hidden": model.hidden,
        "kernel": model.kernel,
        "seed": model.seed,
        "config": model.config,
        "metadata": model.metadata,
        "params": {
            n: {"shape": list(model.params[n].shape), "values": model.params[n].ravel().tolist()}
            for n in PARAM_NAMES
        },
    }


def model_from_dict(obj: dict) -> PredictorModel:
    if obj.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"unsupported model schema_version {obj.get('schema_version')!r}",
            field="schema_version",
        )
    params = {
        n: np.array(obj["params"][n]["values"], dtype=np.float64).reshape(
            obj["params"][n]["shape"]
        )
        for n in PARAM_NAMES
    }
    expected = _param_shapes(obj["input_dim"], obj["hidden"], obj["kernel"])
    for n in PARAM_NAMES:
        if params[n].shape != tuple(expected[n]):
            raise DimensionMismatch(f"parameter {n} has shape {params[n].shape}", field=n)
        if not np.all(np.isfinite(params[n])):
            raise NonFiniteLoss(f"parameter {n} holds non-finite values", field=n)
    return PredictorModel(
        params,
        int(obj["input_dim"]),
        int(obj["hidden"]),
        int(obj["kernel"]),
        int(obj["seed"]),
        dict(obj.get("config", {})),
        dict(obj.get("metadata", {})),
    )


def save_model(path, model: PredictorModel) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)) + "\n")


def load_model(path) -> PredictorModel:
    return model_from_dict(json.loads(Path(path).read_text()))
