"""Monte-Carlo experiment engine: end-to-end trials, SNR sweeps, BER/CER
estimation with early stopping, SE-vs-decoder comparison, CSV emission.

Every number an experiment emits is reproducible from the master seed in
the config: codes, matrices, payload bits, and noise all draw from
dedicated (seed, stream, ...) substreams.  Early stopping processes
trials in index order and keeps every completed trial, so the estimates
are unbiased and independent of the thread count.
"""

import json
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict

import numpy as np

from .amp import DecoderParams, decode, tau2_floor_for
from .codec import (
    DesignMatrix, snr_to_sigma2, index_codeword, transmit, awgn,
    rng_stream, STREAM_MATRIX, STREAM_LABELS, STREAM_NOISE, STREAM_BITS,
)
from .denoiser import Schedule
from .gf import GF2m
from .ldpc import build_code, bits_to_symbols
from .state_evolution import approximate_se, tune_rate

RESULTS_HEADER = ("ebno_db,trials,bit_errors,ber,codeword_errors,cer,"
                  "mean_amp_iters,mean_tau2_final,wall_s")

MATRIX_POLICIES = ("fixed", "per_trial")


class ConfigError(ValueError):
    pass


@dataclass
class SimConfig:
    """Experiment description; desk-scale defaults mirror the reference
    configuration's ratios at roughly 1/100 the matrix size."""

    m: int = 4
    L: int = 128
    P: int = 8
    dv: int = 3
    B: int = 480
    n: int = 600
    ebno_db: tuple = (3.0, 3.5, 4.0, 4.25, 4.5, 4.75)
    amp_iters: int = 25
    schedule: str = "bpn"
    final_bp_iters: int = 100
    seed: int = 1
    trials: int = 2000
    target_errors: int = 50
    matrix_policy: str = "fixed"

    def __post_init__(self):
        if self.B != (self.L - self.P) * self.m:
            raise ConfigError(
                f"B={self.B} must equal (L-P)*m={(self.L - self.P) * self.m}"
            )
        for name in ("m", "L", "dv", "B", "n", "amp_iters", "trials",
                     "target_errors"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.P < 0:
            raise ConfigError("P must be nonnegative")
        if self.final_bp_iters < 0:
            raise ConfigError("final_bp_iters must be nonnegative")
        if self.matrix_policy not in MATRIX_POLICIES:
            raise ConfigError(f"matrix_policy must be one of {MATRIX_POLICIES}")
        try:
            Schedule(self.schedule)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not self.ebno_db:
            raise ConfigError("need at least one ebno_db point")

    @property
    def rate_overall(self):
        return self.B / self.n

    def field(self):
        return GF2m(self.m)

    def label_seed(self):
        seq = np.random.SeedSequence(entropy=self.seed,
                                     spawn_key=(STREAM_LABELS,))
        return int(seq.generate_state(1)[0])


_CONFIG_TYPES = {
    "m": int, "L": int, "P": int, "dv": int, "B": int, "n": int,
    "amp_iters": int, "final_bp_iters": int, "seed": int, "trials": int,
    "target_errors": int, "schedule": str, "matrix_policy": str,
    "ebno_db": "float_list",
}


def load_config(path):
    """Parse a flat key=value config file; unknown keys are errors."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in _CONFIG_TYPES:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            kind = _CONFIG_TYPES[key]
            try:
                if kind == "float_list":
                    values[key] = tuple(
                        float(x) for x in val.split(",") if x.strip()
                    )
                else:
                    values[key] = kind(val)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: "
                                  f"{exc}") from exc
    try:
        return SimConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def save_config(cfg, path):
    with open(path, "w") as fh:
        for key in _CONFIG_TYPES:
            val = getattr(cfg, key)
            if key == "ebno_db":
                val = ",".join(f"{x:g}" for x in val)
            fh.write(f"{key}={val}\n")


@dataclass
class PointResult:
    ebno_db: float
    trials: int
    bit_errors: int
    ber: float
    codeword_errors: int
    cer: float
    mean_amp_iters: float
    mean_tau2_final: float
    wall_s: float
    aborts: int = 0    # decoder aborts, tallied but not part of the CSV schema

    def csv_row(self):
        return (f"{self.ebno_db:g},{self.trials},{self.bit_errors},"
                f"{self.ber:.6e},{self.codeword_errors},{self.cer:.6e},"
                f"{self.mean_amp_iters:.4f},{self.mean_tau2_final:.6e},"
                f"{self.wall_s:.3f}")


def build_experiment(cfg):
    """Code, encoder, and (for the fixed policy) per-SNR design matrices."""
    field = cfg.field()
    code, encoder = build_code(field, cfg.L, cfg.P, cfg.dv, cfg.label_seed())
    return field, code, encoder


def _matrix_for(cfg, snr_index, trial=None):
    if cfg.matrix_policy == "fixed":
        key = (STREAM_MATRIX, snr_index)
    else:
        key = (STREAM_MATRIX, snr_index, trial)
    seq = np.random.SeedSequence(entropy=cfg.seed, spawn_key=key)
    return int(seq.generate_state(1)[0])


def run_trial(cfg, code, encoder, A, sigma2, params, snr_index, trial):
    """One end-to-end trial; returns per-trial tallies."""
    field = code.field
    bits = rng_stream(cfg.seed, STREAM_BITS, snr_index, trial).integers(
        0, 2, size=cfg.B
    )
    v = encoder.encode(bits_to_symbols(bits, field.m))
    if A is None:
        A = DesignMatrix(cfg.n, field.q * cfg.L,
                         _matrix_for(cfg, snr_index, trial))
    x = transmit(index_codeword(v, field.q), A)
    y = awgn(x, sigma2, rng=rng_stream(cfg.seed, STREAM_NOISE,
                                       snr_index, trial))
    res = decode(y, A, code, encoder, params)
    bit_errors = int(np.sum(res.bits != bits))
    aborted = res.termination_reason == "non_finite"
    cw_error = bool(np.any(res.symbols != v)) or aborted
    tau2_final = float(res.tau2_trace[-1]) if len(res.tau2_trace) else 0.0
    return bit_errors, cw_error, res.iterations_used, tau2_final, aborted


def run_point(cfg, ebno_db, snr_index=0, threads=1, prebuilt=None):
    """Monte-Carlo at one SNR: trials until target_errors codeword errors
    are collected or cfg.trials is exhausted."""
    if prebuilt is None:
        _, code, encoder = build_experiment(cfg)
    else:
        _, code, encoder = prebuilt
    sigma2 = snr_to_sigma2(ebno_db, cfg.B, cfg.L)
    params = DecoderParams(
        amp_iters=cfg.amp_iters,
        final_bp_iters=cfg.final_bp_iters,
        schedule=Schedule(cfg.schedule),
        tau2_floor=tau2_floor_for(sigma2),
    )
    A = None
    if cfg.matrix_policy == "fixed":
        A = DesignMatrix(cfg.n, code.field.q * cfg.L,
                         _matrix_for(cfg, snr_index))

    t0 = time.perf_counter()
    bit_errors = 0
    cw_errors = 0
    iters_sum = 0
    tau2_sum = 0.0
    trials_run = 0
    aborts = 0

    def work(trial):
        return run_trial(cfg, code, encoder, A, sigma2, params,
                         snr_index, trial)

    if threads > 1:
        executor = ThreadPoolExecutor(max_workers=threads)
    else:
        executor = None
    try:
        trial = 0
        while trial < cfg.trials:
            chunk = range(trial, min(trial + max(1, 2 * threads), cfg.trials))
            if executor is None:
                results = map(work, chunk)
            else:
                results = executor.map(work, chunk)
            done = False
            for be, cw, iters, tau2, aborted in results:
                trials_run += 1
                bit_errors += be
                cw_errors += int(cw)
                iters_sum += iters
                tau2_sum += tau2
                aborts += int(aborted)
                if cw_errors >= cfg.target_errors:
                    done = True
                    break
            if done:
                break
            trial = chunk.stop
    finally:
        if executor is not None:
            executor.shutdown(wait=False, cancel_futures=True)

    return PointResult(
        ebno_db=ebno_db,
        trials=trials_run,
        bit_errors=bit_errors,
        ber=bit_errors / (trials_run * cfg.B),
        codeword_errors=cw_errors,
        cer=cw_errors / trials_run,
        mean_amp_iters=iters_sum / trials_run,
        mean_tau2_final=tau2_sum / trials_run,
        wall_s=time.perf_counter() - t0,
        aborts=aborts,
    )


def sweep(cfg, out_csv=None, threads=1):
    """All SNR points in order; optionally emit CSV, metadata, and a plot
    description file next to it."""
    prebuilt = build_experiment(cfg)
    rows = [
        run_point(cfg, ebno, snr_index=i, threads=threads, prebuilt=prebuilt)
        for i, ebno in enumerate(cfg.ebno_db)
    ]
    if out_csv is not None:
        write_results_csv(rows, out_csv)
        _write_metadata(cfg, prebuilt[1], out_csv)
        _write_plot_spec(cfg, rows, out_csv)
    return rows


def write_results_csv(rows, path):
    with open(path, "w") as fh:
        fh.write(RESULTS_HEADER + "\n")
        for row in rows:
            fh.write(row.csv_row() + "\n")


def _git_describe():
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=10,
        )
        return out.stdout.strip() or "unknown"
    except OSError:
        return "unknown"


def _write_metadata(cfg, code, out_csv):
    meta = {
        "config": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in asdict(cfg).items()},
        "master_seed": cfg.seed,
        "label_seed": cfg.label_seed(),
        "primitive_polynomial": f"0x{code.field.poly:X}",
        "matrix_policy": cfg.matrix_policy,
        "code_girth": (0 if code.girth == float("inf") else int(code.girth)),
        "rate_overall": cfg.rate_overall,
        "git_describe": _git_describe(),
    }
    with open(str(out_csv) + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2)


def _write_plot_spec(cfg, rows, out_csv):
    spec = {
        "title": f"SR-LDPC sweep (q={1 << cfg.m}, L={cfg.L}, n={cfg.n}, "
                 f"schedule={cfg.schedule})",
        "xlabel": "Eb/N0 (dB)",
        "ylabel": "error rate",
        "yscale": "log",
        "series": [
            {"label": "BER", "x": [r.ebno_db for r in rows],
             "y": [r.ber for r in rows]},
            {"label": "CER", "x": [r.ebno_db for r in rows],
             "y": [r.cer for r in rows]},
        ],
    }
    with open(str(out_csv) + ".plot.json", "w") as fh:
        json.dump(spec, fh, indent=2)


def se_predict(cfg, ebno_db, T=None, psi=None):
    """Approximate-SE trajectory for the configured code at one SNR."""
    _, code, _ = build_experiment(cfg)
    sigma2 = snr_to_sigma2(ebno_db, cfg.B, cfg.L)
    T = cfg.amp_iters if T is None else T
    return approximate_se(code, cfg.n, sigma2, T, Schedule(cfg.schedule),
                          psi=psi)


def write_se_csv(trace, path):
    with open(path, "w") as fh:
        fh.write("t,tau2_predicted\n")
        for t, tau2 in enumerate(trace.tau2):
            fh.write(f"{t},{tau2:.8e}\n")


def se_vs_truth(cfg, ebno_db, trials, threads=1, psi=None):
    """Mean measured residual-energy trajectory versus the SE prediction.

    Decodes run the full AMP schedule (no early termination, no final BP)
    for one extra iteration so the measured ||z_t||^2 / n exists for
    every SE index t = 0..T.  Returns (t, tau2_mc, tau2_se, rel_err) rows.
    """
    if trials < 20:
        raise ValueError("need at least 20 trials")
    T = cfg.amp_iters
    field, code, encoder = build_experiment(cfg)
    sigma2 = snr_to_sigma2(ebno_db, cfg.B, cfg.L)
    params = DecoderParams(
        amp_iters=T + 1,
        final_bp_iters=0,
        schedule=Schedule(cfg.schedule),
        tau2_floor=tau2_floor_for(sigma2),
        early_stop=False,
    )
    A = DesignMatrix(cfg.n, field.q * cfg.L, _matrix_for(cfg, 0))

    def work(trial):
        bits = rng_stream(cfg.seed, STREAM_BITS, 0, trial).integers(
            0, 2, size=cfg.B)
        v = encoder.encode(bits_to_symbols(bits, field.m))
        x = transmit(index_codeword(v, field.q), A)
        y = awgn(x, sigma2, rng=rng_stream(cfg.seed, STREAM_NOISE, 0, trial))
        return decode(y, A, code, encoder, params).tau2_trace

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            traces = list(pool.map(work, range(trials)))
    else:
        traces = [work(trial) for trial in range(trials)]
    tau2_mc = np.mean(np.stack(traces), axis=0)

    se_trace = approximate_se(code, cfg.n, sigma2, T, Schedule(cfg.schedule),
                              psi=psi)
    rows = []
    for t in range(T + 1):
        mc = float(tau2_mc[t])
        se = float(se_trace.tau2[t])
        rows.append((t, mc, se, abs(se - mc) / mc))
    return rows


def write_se_vs_truth_csv(rows, path):
    with open(path, "w") as fh:
        fh.write("t,tau2_mc,tau2_se,rel_err\n")
        for t, mc, se, rel in rows:
            fh.write(f"{t},{mc:.8e},{se:.8e},{rel:.6e}\n")


def rate_sweep(cfg, rates, T=20, psi=None):
    """Outer-rate candidates for tune_rate at fixed B and n.

    Rates map to (L, P) pairs through the fixed message-symbol count
    k = B / m; infeasible pairs are skipped by tune_rate.
    """
    field = cfg.field()
    k = cfg.B // field.m
    pairs = []
    for r in rates:
        if not 0 < r <= 1:
            raise ConfigError(f"rate {r} outside (0, 1]")
        L = int(round(k / r))
        pairs.append((L, L - k))
    pairs = sorted(set(pairs))
    ebno = cfg.ebno_db[0]
    return tune_rate(field, pairs, cfg.B, cfg.n, cfg.dv, ebno, T=T,
                     schedule=Schedule(cfg.schedule), seed=cfg.label_seed(),
                     psi=psi)


def write_rate_csv(rows, path):
    with open(path, "w") as fh:
        fh.write("R_ldpc,L,P,tau2_final_minus_sigma2\n")
        for row in rows:
            fh.write(f"{row.rate:.6f},{row.L},{row.P},{row.residual:.8e}\n")
