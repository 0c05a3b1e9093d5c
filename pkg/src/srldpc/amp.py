"""AMP outer loop: residual with Onsager correction, effective
observation, BP denoising, residual-based tau^2 tracking, early
termination on valid codewords, and a final standalone BP phase.

The recursion is

    z <- y - A s + z_prev * (||s||_1 - ||s||_2^2) / (n tau_prev^2)
    r <- A^T z + s
    s <- denoise(r, tau^2)

initialized with s = 0 and z = y, where tau^2 is re-estimated from each
new residual as ||z||^2 / n (floored away from zero).  The Onsager
coefficient is the closed form of the denoiser divergence, valid while
BP computation trees stay cycle-free; it vanishes exactly when the
denoiser output is one-hot.
"""

from dataclasses import dataclass, field

import numpy as np

from .codec import hard_decision
from .denoiser import BpDenoiser, Schedule, divergence_terms
from .ldpc import symbols_to_bits, syndrome_check


def estimate_tau2(z, n, floor=1e-12):
    """Residual-based effective-noise estimate max(||z||^2 / n, floor)."""
    z = np.asarray(z)
    return max(float(z @ z) / n, floor)


def tau2_floor_for(sigma2):
    """Keeps tau^2 usable after the residual collapses post-convergence."""
    return max(1e-12, 1e-6 * sigma2)


def onsager(z_prev, l1, l2sq, tau2, n):
    """Onsager correction z_prev * (||s||_1 - ||s||_2^2) / (n tau^2)."""
    if tau2 <= 0 or n <= 0:
        raise ValueError("tau2 and n must be positive")
    return np.asarray(z_prev) * ((l1 - l2sq) / (n * tau2))


@dataclass
class DecoderParams:
    amp_iters: int = 25
    final_bp_iters: int = 100
    schedule: Schedule = field(default_factory=lambda: Schedule("bpn"))
    tau2_floor: float = 1e-12
    early_stop: bool = True


@dataclass
class AmpState:
    """Working set of the AMP recursion between iterations."""

    z: np.ndarray
    r: np.ndarray
    s_hat: np.ndarray
    tau2: float
    t: int
    carry_l1: float
    carry_l2sq: float


def initial_state(y, n_cols):
    """State before iteration 0: s = r = 0, residual defined as y."""
    y = np.asarray(y, dtype=np.float64)
    zero = np.zeros(n_cols)
    # tau2 placeholder is never used at t=0 because the carry is zero.
    return AmpState(
        z=np.zeros_like(y), r=zero.copy(), s_hat=zero, tau2=1.0,
        t=0, carry_l1=0.0, carry_l2sq=0.0,
    )


def amp_step(state, y, A, den, tau2_floor=1e-12):
    """Advance the recursion by one iteration using denoiser den."""
    z = y - A.matvec(state.s_hat) + onsager(
        state.z, state.carry_l1, state.carry_l2sq, state.tau2, A.n
    )
    tau2 = estimate_tau2(z, A.n, tau2_floor)
    r = A.rmatvec(z) + state.s_hat
    s_hat = den.denoise(r, tau2, state.t)
    l1, l2sq = divergence_terms(s_hat)
    return AmpState(
        z=z, r=r, s_hat=s_hat, tau2=tau2, t=state.t + 1,
        carry_l1=l1, carry_l2sq=l2sq,
    )


@dataclass
class DecodeResult:
    bits: np.ndarray
    symbols: np.ndarray
    success: bool
    iterations_used: int
    final_bp_rounds: int
    tau2_trace: np.ndarray
    termination_reason: str
    denoiser_metadata: dict


def decode(y, A, code, encoder, params):
    """Full decode: AMP iterations, then standalone BP on the last
    posteriors, with syndrome-based early termination in both phases."""
    q = code.field.q
    y = np.asarray(y, dtype=np.float64)
    den = BpDenoiser(code, params.schedule)
    state = initial_state(y, A.n_cols)

    tau2_trace = []
    symbols = np.zeros(code.L, dtype=np.int64)
    success = False
    reason = "exhausted"
    iterations = 0
    bp_rounds = 0

    for _ in range(params.amp_iters):
        state = amp_step(state, y, A, den, params.tau2_floor)
        iterations = state.t
        tau2_trace.append(state.tau2)
        if not (np.all(np.isfinite(state.z)) and np.all(np.isfinite(state.s_hat))):
            return _failure(code, encoder, tau2_trace, iterations, den,
                            "non_finite")
        symbols = hard_decision(state.s_hat, q)
        if params.early_stop and syndrome_check(code, symbols):
            success = True
            reason = "amp_syndrome"
            break

    if not success and params.final_bp_iters > 0 and den.alpha is not None:
        den.reset_messages()
        for j in range(params.final_bp_iters):
            den.bp_round()
            bp_rounds = j + 1
            est = den.estimate()
            symbols = hard_decision(est, q)
            if params.early_stop and syndrome_check(code, symbols):
                success = True
                reason = "final_bp_syndrome"
                break

    if not success:
        success = syndrome_check(code, symbols)
        if success:
            reason = "exhausted_valid"

    msg_symbols = symbols[encoder.message_positions]
    bits = symbols_to_bits(msg_symbols, code.field.m)
    return DecodeResult(
        bits=bits,
        symbols=symbols,
        success=success,
        iterations_used=iterations,
        final_bp_rounds=bp_rounds,
        tau2_trace=np.asarray(tau2_trace),
        termination_reason=reason,
        denoiser_metadata=den.metadata(),
    )


def _failure(code, encoder, tau2_trace, iterations, den, reason):
    symbols = np.zeros(code.L, dtype=np.int64)
    bits = symbols_to_bits(symbols[encoder.message_positions], code.field.m)
    return DecodeResult(
        bits=bits, symbols=symbols, success=False,
        iterations_used=iterations, final_bp_rounds=0,
        tau2_trace=np.asarray(tau2_trace), termination_reason=reason,
        denoiser_metadata=den.metadata(),
    )
