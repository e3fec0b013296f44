"""Experiment orchestration: end-to-end tomography runs and sample-scaling sweeps.

Every random stream is derived from the master seed plus a fixed tuple of
integers naming its role, so any single record can be regenerated alone.
"""
from dataclasses import asdict, dataclass, field, replace
import time

import numpy as np

from . import __version__
from .errors import StageError, ValidationError
from .generative import TrainingConfig, exact_distribution, train
from .metrics import (
    all_correlations,
    classical_fidelity,
    quantum_fidelity,
)
from .mle import mle_project
from .povm import (
    ALPHABET,
    OutcomeDataset,
    basis_histograms,
    bayes_correct,
    coarse_grain_p6_to_p4,
    empirical_distribution,
    histograms_to_povm,
    make_povm,
    povm_distribution,
    sample_measurements,
    _bits_to_outcomes,
)
from .quantum_sim import (
    READOUT_TABLE,
    NoiseModel,
    build_ghz,
    calibrate_depolarizing,
    densify,
    projector,
    random_state,
    zero_state,
)

REPORT_VERSION = 1
DEFAULT_GRID = (250, 500, 1000, 2000, 4000, 8000, 16000, 32000)
# GHZ fidelities measured on the device for N = 2..5; used to calibrate depolarizing noise.
DEVICE_GHZ_FIDELITY = {2: 0.980, 3: 0.979, 4: 0.933, 5: 0.894}
MAX_DENSE_FQ = 5
STATES = ("ghz", "random", "zero")

# Stream tags for seed derivation.
_STATE, _SAMPLE, _RESAMPLE, _SUBSET, _TRAIN = range(5)


def scaling_training_config(**overrides):
    """Training defaults for sweeps: exact full-batch Adam with held-out early stopping."""
    base = dict(learning_rate=1e-2, full_batch=True, max_epochs=5000, validation_fraction=0.2, patience=100)
    base.update(overrides)
    return TrainingConfig(**base)


@dataclass
class ExperimentSpec:
    state: str = "ghz"
    qubits: tuple = (2, 3, 4, 5)
    povm: str = "pauli4"
    # Per-qubit depolarizing probability, or "device" to match DEVICE_GHZ_FIDELITY per N.
    depolarizing: object = 0.0
    readout: tuple = None  # per-qubit (F_g, F_e) pairs, None = perfect readout
    bayes: bool = False
    experimental_variant: bool = False
    random_depth: int = 8
    shots: int = 100_000  # size of the master dataset per N
    grid: tuple = DEFAULT_GRID
    repeats: int = 10
    threshold: float = 0.99
    training: TrainingConfig = field(default_factory=scaling_training_config)
    seed: int = 0
    mle: bool = True
    # Stop training the RNN at larger grid points once N_s* has been found.
    stop_at_threshold: bool = True

    def __post_init__(self):
        if isinstance(self.qubits, int):
            self.qubits = (self.qubits,)
        self.qubits = tuple(int(q) for q in self.qubits)
        self.grid = tuple(int(g) for g in self.grid)
        if self.state not in STATES:
            raise ValidationError(f"state must be one of {STATES}, got {self.state!r}")
        if self.povm not in ALPHABET:
            raise ValidationError(f"unknown POVM {self.povm!r}")
        if self.repeats < 1:
            raise ValidationError("repeats must be >= 1")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])) or not self.grid:
            raise ValidationError("shot grid must be non-empty and strictly increasing")
        if self.grid[-1] > self.shots:
            raise ValidationError(f"largest grid point {self.grid[-1]} exceeds master dataset size {self.shots}")
        if self.depolarizing != "device":
            p = float(self.depolarizing)
            if not 0.0 <= p <= 1.0:
                raise ValidationError("depolarizing probability must lie in [0, 1]")
            self.depolarizing = p

    def to_dict(self):
        d = asdict(self)
        d["qubits"] = list(self.qubits)
        d["grid"] = list(self.grid)
        return d


def _seed(spec, *tags):
    return np.random.SeedSequence([spec.seed, *tags])


def _staged(stage, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - relabel with the failing stage
        raise StageError(stage, exc) from exc


def noise_for(spec, n):
    if spec.depolarizing == "device":
        if n not in DEVICE_GHZ_FIDELITY:
            raise ValidationError(f"no device fidelity for N={n}; give an explicit depolarizing probability")
        p = calibrate_depolarizing(n, DEVICE_GHZ_FIDELITY[n], spec.experimental_variant)
    else:
        p = spec.depolarizing
    return NoiseModel(depolarizing_p=p, readout=spec.readout)


def prepare(spec, n):
    """Ideal state vector and noisy density matrix for ``n`` qubits."""
    if spec.state == "ghz":
        psi = build_ghz(n, spec.experimental_variant)
    elif spec.state == "zero":
        psi = zero_state(n)
    else:
        seed = int(_seed(spec, _STATE, n).generate_state(1)[0])
        psi = random_state(n, spec.random_depth, seed)
    noise = noise_for(spec, n)
    return psi, noise, densify(psi, noise)


@dataclass
class MasterData:
    n_qubits: int
    psi: np.ndarray
    rho: np.ndarray
    noise: NoiseModel
    dataset: OutcomeDataset  # shots used for training (Bayes-resampled if requested)
    target: object  # ProbDist the classical fidelity is measured against
    exact: object  # exact POVM distribution of rho


def master_data(spec, n):
    psi, noise, rho = _staged("prepare", prepare, spec, n)
    povm = make_povm(spec.povm)
    seed = _seed(spec, _SAMPLE, n)
    bases, bits = _staged("sample", sample_measurements, rho, spec.shots, noise, seed)
    flags = {"depolarizing_p": noise.depolarizing_p, "readout": noise.readout is not None, "bayes": spec.bayes}
    seed_int = int(seed.generate_state(1)[0])
    shots = _bits_to_outcomes(bases, bits, spec.povm)
    data = OutcomeDataset(n, povm.K, shots, spec.povm, seed_int, flags)
    if spec.bayes and noise.readout is not None:
        data = _staged("bayes", _bayes_resample, spec, n, bases, bits, noise)
    target = empirical_distribution(data)
    return MasterData(n, psi, rho, noise, data, target, povm_distribution(rho, povm))


def _bayes_resample(spec, n, bases, bits, noise):
    """Correct readout errors per basis setting and redraw a training set of the same size."""
    corrected = bayes_correct(basis_histograms(bases, bits), noise.confusion(n))
    dist = histograms_to_povm(corrected, spec.povm, n)
    rng = np.random.default_rng(_seed(spec, _RESAMPLE, n))
    idx = rng.choice(dist.values.size, size=bases.shape[0], p=dist.values)
    shots = np.array(np.unravel_index(idx, (dist.K,) * n)).T
    seed_int = int(_seed(spec, _RESAMPLE, n).generate_state(1)[0])
    return OutcomeDataset(n, dist.K, shots, spec.povm, seed_int, {"bayes": True})


def _pauli4(dist):
    return coarse_grain_p6_to_p4(dist) if dist.K == 6 else dist


def run_tomography(spec, n=None, callback_every=0):
    """Prepare, sample, train, enumerate, reconstruct and score one state.

    Returns a flat record. Classical fidelity is measured against the
    empirical distribution of the full dataset; the exact distribution is
    reported alongside for diagnostics.
    """
    n = spec.qubits[0] if n is None else n
    t0 = time.perf_counter()
    md = master_data(spec, n)
    return _tomography_record(spec, md, callback_every, t0)


def _tomography_record(spec, md, callback_every, t0):
    n = md.n_qubits
    p4 = make_povm("pauli4")
    cfg = replace(spec.training, seed=int(_seed(spec, _TRAIN, n).generate_state(1)[0]))

    callback = None
    if callback_every:
        def callback(epoch, params):
            if epoch % callback_every:
                return {}
            q = exact_distribution(params, n)
            return {"fc": classical_fidelity(q, md.target)}

    params, trace = _staged("train", train, md.dataset, cfg, callback)
    p_model = _staged("enumerate", exact_distribution, params, n)

    rec = {
        "n_qubits": n,
        "state": spec.state,
        "povm": spec.povm,
        "shots": len(md.dataset),
        "seed": spec.seed,
        "depolarizing_p": md.noise.depolarizing_p,
        "fc": classical_fidelity(p_model, md.target),
        "fc_exact": classical_fidelity(p_model, md.exact),
        "fc_empirical_vs_exact": classical_fidelity(md.target, md.exact),
        "epochs": len(trace.epochs),
        "best_epoch": trace.best_epoch,
        "steps": trace.steps,
        "loss_curve": [e["loss"] for e in trace.epochs],
        "fc_curve": [[e["epoch"], e["fc"]] for e in trace.epochs if "fc" in e],
    }

    model4 = _pauli4(p_model)
    emp4 = _pauli4(md.target)
    ideal = projector(md.psi)
    rec["correlations_true"] = _corr_dict(all_correlations(md.rho))
    rec["correlations_model_dist"] = _corr_dict(all_correlations(model4))
    if spec.mle and n <= MAX_DENSE_FQ:
        fit_model = _staged("mle", mle_project, model4, p4)
        fit_li = _staged("mle", mle_project, emp4, p4)
        rec.update(
            {
                "fq_model_vs_ideal": quantum_fidelity(fit_model.rho, ideal),
                "fq_model_vs_true": quantum_fidelity(fit_model.rho, md.rho),
                "fq_li_vs_ideal": quantum_fidelity(fit_li.rho, ideal),
                "fq_li_vs_true": quantum_fidelity(fit_li.rho, md.rho),
                "fq_model_vs_li": quantum_fidelity(fit_model.rho, fit_li.rho),
                "fq_true_vs_ideal": quantum_fidelity(md.rho, ideal),
                "mle_objective_model": fit_model.objective,
                "mle_iterations_model": fit_model.iterations,
                "correlations_model_mle": _corr_dict(all_correlations(fit_model.rho)),
                "correlations_li_mle": _corr_dict(all_correlations(fit_li.rho)),
            }
        )
    rec["wall_time"] = time.perf_counter() - t0
    return rec


def _corr_dict(corr):
    return {f"{ax}{j}{k}": v for (ax, j, k), v in corr.items()}


def _threshold_crossing(grid, means, threshold):
    for g, m in zip(grid, means):
        if m is not None and m >= threshold:
            return g, False
    return None, True


def _cell_records(spec, md, method):
    """F_C for every (grid point, repeat) using either the RNN or the raw subsample."""
    n = md.n_qubits
    M = len(md.dataset)
    records, means = [], []
    found = False
    for gi, ns in enumerate(spec.grid):
        if found and spec.stop_at_threshold and method == "rnn":
            means.append(None)
            continue
        fcs = []
        for r in range(spec.repeats):
            t0 = time.perf_counter()
            rng = np.random.default_rng(_seed(spec, _SUBSET, n, gi, r))
            sub = md.dataset.subset(rng.choice(M, size=ns, replace=False))
            rec = {"n_qubits": n, "ns": ns, "repeat": r, "method": method}
            if method == "rnn":
                cfg = replace(spec.training, seed=int(_seed(spec, _TRAIN, n, gi, r).generate_state(1)[0]))
                params, trace = _staged("train", train, sub, cfg)
                dist = exact_distribution(params, n)
                rec["epochs"] = len(trace.epochs)
                rec["steps"] = trace.steps
            else:
                dist = empirical_distribution(sub)
            rec["fc"] = classical_fidelity(dist, md.target)
            rec["fc_exact"] = classical_fidelity(dist, md.exact)
            rec["wall_time"] = time.perf_counter() - t0
            fcs.append(rec["fc"])
            records.append(rec)
        mean = float(np.mean(fcs))
        means.append(mean)
        if mean >= spec.threshold:
            found = True
    return records, means


def _summarize(spec, n, records, means, method):
    star, censored = _threshold_crossing(spec.grid, means, spec.threshold)
    curve = []
    for ns, m in zip(spec.grid, means):
        if m is None:
            continue
        fcs = [r["fc"] for r in records if r["ns"] == ns]
        curve.append(
            {"ns": ns, "mean_fc": m, "std_fc": float(np.std(fcs, ddof=1)) if len(fcs) > 1 else 0.0, "n_repeats": len(fcs)}
        )
    return {"n_qubits": n, "method": method, "ns_star": star, "censored": censored, "curve": curve}


def find_ns_star(spec, masters=None, method="rnn"):
    """N_s* per qubit count: smallest grid value whose mean F_C over repeats reaches the threshold.

    Returns (summaries, records). Censored entries (threshold never reached)
    have ``ns_star`` None and ``censored`` True.
    """
    summaries, records = [], []
    for n in spec.qubits:
        md = masters[n] if masters else master_data(spec, n)
        recs, means = _cell_records(spec, md, method)
        records.extend(recs)
        summaries.append(_summarize(spec, n, recs, means, method))
    return summaries, records


def baseline_ns_star(spec, masters=None):
    """Same sweep with the empirical subsample distribution in place of the RNN."""
    return find_ns_star(spec, masters, method="empirical")


def linear_fit(xs, ys):
    """Least-squares line with R^2; None when fewer than two points are available."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 2:
        return None
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * xs + intercept
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2, "x_min": float(xs.min()), "x_max": float(xs.max())}


def _fit_summaries(summaries):
    pts = [(s["n_qubits"], s["ns_star"]) for s in summaries if not s["censored"]]
    if not pts:
        return None
    xs, ys = zip(*pts)
    return linear_fit(xs, ys)


def run_scaling(spec, include_baseline=True):
    """Full sweep: RNN and baseline N_s* per N, linear fits, all per-cell records."""
    t0 = time.perf_counter()
    masters = {n: master_data(spec, n) for n in spec.qubits}
    rnn, rnn_records = find_ns_star(spec, masters)
    report = {
        "report_version": REPORT_VERSION,
        "package_version": __version__,
        "kind": "scaling",
        "spec": spec.to_dict(),
        "master": {
            str(n): {
                "depolarizing_p": md.noise.depolarizing_p,
                "fq_true_vs_ideal": quantum_fidelity(md.rho, projector(md.psi)),
                "fc_empirical_vs_exact": classical_fidelity(md.target, md.exact),
            }
            for n, md in masters.items()
        },
        "rnn": {"summary": rnn, "fit": _fit_summaries(rnn)},
        "records": rnn_records,
    }
    if include_baseline:
        base, base_records = baseline_ns_star(spec, masters)
        log_pts = [(s["n_qubits"], np.log(s["ns_star"])) for s in base if not s["censored"]]
        report["baseline"] = {
            "summary": base,
            "fit": _fit_summaries(base),
            "log_fit": linear_fit(*zip(*log_pts)) if len(log_pts) >= 2 else None,
        }
        report["records"] = rnn_records + base_records
    report["wall_time"] = time.perf_counter() - t0
    return report


def ns_star_ratio(summaries, hi, lo):
    """N_s*(hi) / N_s*(lo); censored values are not interpolated (returns None)."""
    by_n = {s["n_qubits"]: s for s in summaries}
    a, b = by_n.get(hi), by_n.get(lo)
    if a is None or b is None or a["censored"] or b["censored"]:
        return None
    return a["ns_star"] / b["ns_star"]


def device_readout():
    return READOUT_TABLE
