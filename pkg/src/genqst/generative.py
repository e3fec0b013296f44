"""Autoregressive recurrent model over measurement-outcome strings.

The model factorizes P(a_1..a_N) = prod_m p(a_m | a_<m). A gated recurrent
cell consumes the previous outcome (a dedicated start token K at the first
site) and the previous hidden state; a softmax readout of the new hidden
state gives the conditional at that site. Gradients are computed by
hand-written backpropagation through time and fed to Adam.
"""
from dataclasses import asdict, dataclass, field, replace
import hashlib
import io
import json
import time

import numpy as np

from .errors import SizeError, TrainingError, ValidationError
from .povm import OutcomeDataset, ProbDist

PARAM_NAMES = ("w_in", "w_hh", "b_h", "w_out", "b_out")
CHECKPOINT_VERSION = 1
MAX_ENUMERATION = 10**7


@dataclass
class RnnParams:
    """Trainable weights.

    w_in  (K+1, 3H)  input embedding for the update, reset and candidate gates
    w_hh  (H, 3H)    recurrent weights, same gate order
    b_h   (3H,)      gate biases
    w_out (H, K)     readout
    b_out (K,)
    """

    hidden_size: int
    K: int
    w_in: np.ndarray
    w_hh: np.ndarray
    b_h: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    def __post_init__(self):
        h, k = self.hidden_size, self.K
        expected = {
            "w_in": (k + 1, 3 * h),
            "w_hh": (h, 3 * h),
            "b_h": (3 * h,),
            "w_out": (h, k),
            "b_out": (k,),
        }
        for name, shape in expected.items():
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ValidationError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} contains non-finite values")
            setattr(self, name, arr)

    def arrays(self):
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self):
        return RnnParams(self.hidden_size, self.K, **{k: v.copy() for k, v in self.arrays().items()})

    @classmethod
    def zeros(cls, hidden_size, K):
        h = hidden_size
        return cls(h, K, np.zeros((K + 1, 3 * h)), np.zeros((h, 3 * h)), np.zeros(3 * h), np.zeros((h, K)), np.zeros(K))

    @classmethod
    def random(cls, hidden_size, K, rng, scale=None):
        """Uniform(-s, s) weights with s = 1/sqrt(H) by default; zero biases."""
        h = hidden_size
        s = 1.0 / np.sqrt(h) if scale is None else scale
        return cls(
            h,
            K,
            rng.uniform(-s, s, size=(K + 1, 3 * h)),
            rng.uniform(-s, s, size=(h, 3 * h)),
            np.zeros(3 * h),
            rng.uniform(-s, s, size=(h, K)),
            np.zeros(K),
        )


@dataclass
class TrainingConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 100
    loss_threshold: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    hidden_size: int = 32
    # Keep running epochs until this many optimizer steps were taken (small datasets).
    min_steps: int = 0
    # Fraction of shots held out to pick the returned parameters; 0 uses training loss.
    validation_fraction: float = 0.0
    # Stop after this many epochs without improvement of the selection loss (None: never).
    patience: int = None
    # One exact step per epoch over the distinct sequences, weighted by their counts.
    full_batch: bool = False
    # After early stopping, retrain on all shots for the selected number of epochs.
    refit: bool = False

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValidationError("Adam betas must lie in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1 or self.hidden_size < 1:
            raise ValidationError("batch_size, max_epochs and hidden_size must be >= 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValidationError("validation_fraction must lie in [0, 1)")


@dataclass
class TrainingTrace:
    epochs: list = field(default_factory=list)
    best_epoch: int = -1
    stopped: str = ""
    steps: int = 0
    wall_time: float = 0.0
    optimizer: dict = field(default_factory=dict)
    refit_epochs: int = 0


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _cell(params, h, tokens):
    """One recurrent step for a batch. Returns new hidden state and the cache for backprop."""
    H = params.hidden_size
    gx = params.w_in[tokens] + params.b_h
    gh = h @ params.w_hh
    z = _sigmoid(gx[:, :H] + gh[:, :H])
    r = _sigmoid(gx[:, H : 2 * H] + gh[:, H : 2 * H])
    n = np.tanh(gx[:, 2 * H :] + r * gh[:, 2 * H :])
    h_new = (1.0 - z) * n + z * h
    return h_new, (h, tokens, z, r, n, gh)


def _check_sequences(params, seqs):
    seqs = np.asarray(seqs, dtype=np.int64)
    if seqs.ndim == 1:
        seqs = seqs[None, :]
    if seqs.size and (seqs.min() < 0 or seqs.max() >= params.K):
        raise ValidationError(f"outcome symbol outside [0, {params.K})")
    return seqs


def _input_tokens(params, seqs):
    start = np.full((seqs.shape[0], 1), params.K, dtype=np.int64)
    return np.concatenate([start, seqs[:, :-1]], axis=1)


def site_distributions(params, seqs):
    """Conditional distributions p(. | a_<m) for every site of every sequence, shape (B, N, K)."""
    seqs = _check_sequences(params, seqs)
    B, N = seqs.shape
    tokens = _input_tokens(params, seqs)
    h = np.zeros((B, params.hidden_size))
    out = np.empty((B, N, params.K))
    for m in range(N):
        h, _ = _cell(params, h, tokens[:, m])
        out[:, m] = _softmax(h @ params.w_out + params.b_out)
    return out


def forward(params, sequence):
    """Site distributions and negative log-likelihood of one sequence."""
    seq = _check_sequences(params, sequence)
    if seq.shape[0] != 1:
        raise ValidationError("forward takes a single sequence; use sequence_nll for batches")
    probs = site_distributions(params, seq)[0]
    nll = -np.sum(np.log(probs[np.arange(seq.shape[1]), seq[0]]))
    return probs, float(nll)


def sequence_nll(params, seqs):
    """Per-sequence negative log-likelihood, shape (B,)."""
    seqs = _check_sequences(params, seqs)
    probs = site_distributions(params, seqs)
    picked = np.take_along_axis(probs, seqs[:, :, None], axis=2)[:, :, 0]
    return -np.log(picked).sum(axis=1)


def loss_and_gradient(params, seqs, weights=None):
    """Weighted mean NLL over ``seqs`` and its exact gradient.

    ``weights`` default to uniform 1/B; passing count-proportional weights over
    unique sequences gives the same loss as the expanded batch.
    """
    seqs = _check_sequences(params, seqs)
    B, N = seqs.shape
    if B == 0:
        raise ValidationError("empty batch")
    w = np.full(B, 1.0 / B) if weights is None else np.asarray(weights, dtype=float)
    H = params.hidden_size
    tokens = _input_tokens(params, seqs)

    h = np.zeros((B, H))
    caches, hiddens, probs = [], [], []
    for m in range(N):
        h, cache = _cell(params, h, tokens[:, m])
        caches.append(cache)
        hiddens.append(h)
        probs.append(_softmax(h @ params.w_out + params.b_out))

    rows = np.arange(B)
    loss = 0.0
    for m in range(N):
        loss -= np.dot(w, np.log(probs[m][rows, seqs[:, m]]))

    g = {name: np.zeros_like(arr) for name, arr in params.arrays().items()}
    dh_next = np.zeros((B, H))
    wcol = w[:, None]
    for m in range(N - 1, -1, -1):
        dlogits = probs[m].copy()
        dlogits[rows, seqs[:, m]] -= 1.0
        dlogits *= wcol
        h_m = hiddens[m]
        g["w_out"] += h_m.T @ dlogits
        g["b_out"] += dlogits.sum(axis=0)
        dh = dh_next + dlogits @ params.w_out.T

        h_prev, tok, z, r, n, gh = caches[m]
        dn = dh * (1.0 - z)
        dz = dh * (h_prev - n)
        dh_prev = dh * z
        da_n = dn * (1.0 - n * n)
        dr = da_n * gh[:, 2 * H :]
        da_z = dz * z * (1.0 - z)
        da_r = dr * r * (1.0 - r)
        dgx = np.concatenate([da_z, da_r, da_n], axis=1)
        dgh = np.concatenate([da_z, da_r, da_n * r], axis=1)
        g["w_hh"] += h_prev.T @ dgh
        dh_prev += dgh @ params.w_hh.T
        g["b_h"] += dgx.sum(axis=0)
        np.add.at(g["w_in"], tok, dgx)
        dh_next = dh_prev
    return float(loss), g


def gradient(params, batch):
    """Gradient of the mean NLL of ``batch`` with respect to every weight array."""
    return loss_and_gradient(params, batch)[1]


def mean_nll(params, data):
    """Mean NLL over a dataset, evaluated once per distinct sequence."""
    shots = data.shots if isinstance(data, OutcomeDataset) else np.asarray(data)
    uniq, counts = np.unique(shots, axis=0, return_counts=True)
    return float(np.dot(counts, sequence_nll(params, uniq)) / counts.sum())


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            self.m[k] *= self.beta1
            self.m[k] += (1.0 - self.beta1) * g
            self.v[k] *= self.beta2
            self.v[k] += (1.0 - self.beta2) * (g * g)
            p = params[k]
            p -= (self.lr / bc1) * self.m[k] / (np.sqrt(self.v[k] / bc2) + self.eps)


def train(data, cfg=None, callback=None, init=None):
    """Fit the model to ``data`` with mini-batch Adam.

    Each epoch shuffles the shots with the seeded generator and visits them
    in batches of ``cfg.batch_size``. After every epoch the selection loss
    (held-out NLL if ``validation_fraction`` > 0, otherwise training NLL) is
    evaluated; the parameters with the lowest selection loss are returned.
    ``callback(epoch, params)`` may return a dict of extra per-epoch values
    (e.g. fidelities) that is merged into the trace.
    """
    cfg = cfg or TrainingConfig()
    if len(data) == 0:
        raise ValidationError("cannot train on an empty dataset")
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    params0 = init.copy() if init is not None else RnnParams.random(cfg.hidden_size, data.K, rng)
    shots = data.shots
    val = None
    if cfg.validation_fraction > 0 and len(data) >= 2:
        perm = rng.permutation(len(data))
        n_val = max(1, int(round(cfg.validation_fraction * len(data))))
        val, shots = shots[perm[:n_val]], shots[perm[n_val:]]

    trace = TrainingTrace(
        optimizer={"name": "adam", "lr": cfg.learning_rate, "betas": [cfg.beta1, cfg.beta2], "eps": cfg.adam_eps}
    )
    best = _fit(params0, shots, val, cfg, rng, trace, callback, cfg.max_epochs, cfg.patience)
    if cfg.refit and val is not None:
        # Same initialization, all shots, exactly as many epochs as the held-out loss picked.
        n_epochs = trace.best_epoch + 1
        refit_trace = TrainingTrace()
        best = _fit(params0, data.shots, None, replace(cfg, min_steps=0), rng, refit_trace, None, n_epochs, None, keep_last=True)
        trace.refit_epochs = n_epochs
        trace.steps += refit_trace.steps
    trace.wall_time = time.perf_counter() - t0
    return best, trace


def _fit(params0, shots, val, cfg, rng, trace, callback, max_epochs, patience, keep_last=False):
    """Adam loop shared by the selection run and the refit run; returns the selected parameters."""
    params = params0.copy()
    opt = Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    weights = params.arrays()
    best, best_sel, since_best = params.copy(), np.inf, 0
    n = shots.shape[0]
    if cfg.full_batch:
        uniq, counts = np.unique(shots, axis=0, return_counts=True)
        freq = counts / counts.sum()
    epoch = 0
    while True:
        if cfg.full_batch:
            _, grads = loss_and_gradient(params, uniq, freq)
            opt.step(weights, grads)
            trace.steps += 1
        else:
            perm = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                batch = shots[perm[start : start + cfg.batch_size]]
                _, grads = loss_and_gradient(params, batch)
                opt.step(weights, grads)
                trace.steps += 1
        loss = mean_nll(params, shots)
        if not np.isfinite(loss):
            raise TrainingError(f"loss diverged at epoch {epoch}", epoch=epoch)
        record = {"epoch": epoch, "loss": loss}
        sel = loss
        if val is not None:
            sel = record["val_loss"] = mean_nll(params, val)
        if callback is not None:
            record.update(callback(epoch, params) or {})
        trace.epochs.append(record)
        if keep_last or sel < best_sel:
            best, best_sel, since_best = params.copy(), sel, 0
            trace.best_epoch = epoch
        else:
            since_best += 1
        epoch += 1
        if loss <= cfg.loss_threshold:
            trace.stopped = "threshold"
            break
        if patience is not None and since_best >= patience and trace.steps >= cfg.min_steps:
            trace.stopped = "patience"
            break
        if epoch >= max_epochs and trace.steps >= cfg.min_steps:
            trace.stopped = "max_epochs"
            break
    return best


def exact_distribution(params, n_qubits, block=4096):
    """Probability of every outcome string, prefixes enumerated depth first.

    Prefix hidden states are shared: a block of prefixes is extended by one
    site at a time, and blocks larger than ``block`` are split and finished
    one after another so memory stays bounded.
    """
    K = params.K
    total = K**n_qubits
    if total > MAX_ENUMERATION:
        raise SizeError(f"{K}^{n_qubits} = {total} outcomes exceeds enumeration limit {MAX_ENUMERATION}")
    out = np.empty(total)

    def expand(h, tokens, logp, offset, depth):
        # h, tokens, logp describe consecutive prefixes starting at flat index offset * K**(N-depth).
        h_new, _ = _cell(params, h, tokens)
        p = _softmax(h_new @ params.w_out + params.b_out)
        child_logp = (logp[:, None] + np.log(p)).reshape(-1)
        if depth + 1 == n_qubits:
            out[offset * K : offset * K + child_logp.size] = np.exp(child_logp)
            return
        child_h = np.repeat(h_new, K, axis=0)
        child_tok = np.tile(np.arange(K), h.shape[0])
        for s in range(0, child_logp.size, block):
            sl = slice(s, s + block)
            expand(child_h[sl], child_tok[sl], child_logp[sl], offset * K + s, depth + 1)

    expand(np.zeros((1, params.hidden_size)), np.array([K]), np.zeros(1), 0, 0)
    return ProbDist(n_qubits, K, out)


def sample_sequences(params, n, n_qubits, seed=0, povm="pauli4"):
    """Ancestral sampling of ``n`` outcome strings."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    K = params.K
    h = np.zeros((n, params.hidden_size))
    tokens = np.full(n, K, dtype=np.int64)
    shots = np.empty((n, n_qubits), dtype=np.int64)
    for m in range(n_qubits):
        h, _ = _cell(params, h, tokens)
        p = _softmax(h @ params.w_out + params.b_out)
        u = rng.random(n)
        cdf = np.cumsum(p, axis=1)
        tokens = np.minimum((u[:, None] > cdf).sum(axis=1), K - 1)
        shots[:, m] = tokens
    return OutcomeDataset(n_qubits, K, shots, povm, seed)


def dataset_hash(data):
    h = hashlib.sha256()
    h.update(f"{data.povm}:{data.n_qubits}:{data.K}:".encode())
    h.update(np.ascontiguousarray(data.shots, dtype=np.int64).tobytes())
    return h.hexdigest()


def save_checkpoint(params, path, provenance=None):
    """Write an .npz blob: version, shapes, weight arrays in declared order, provenance JSON."""
    meta = {"version": CHECKPOINT_VERSION, "hidden_size": params.hidden_size, "K": params.K, "order": list(PARAM_NAMES)}
    meta["provenance"] = provenance or {}
    buf = io.BytesIO()
    np.savez(buf, meta=np.array(json.dumps(meta, sort_keys=True, default=_json_default)), **params.arrays())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path):
    """Return (params, provenance)."""
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValidationError(f"unsupported checkpoint version {meta.get('version')}")
        arrays = {name: z[name].copy() for name in meta["order"]}
    return RnnParams(meta["hidden_size"], meta["K"], **arrays), meta["provenance"]


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "__dataclass_fields__"):
        return asdict(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")
