"""Renewal statistics of the detected emissions.

With only the fluorescent channel monitored, every detection resets the
emitter to its ground state, so the record is fully described by the
waiting-time density ``W(tau)`` and the no-detection probability ``P0(tau)``.
Both are exponential sums over the spectrum of the no-jump generator, which
is what makes sampling, likelihoods and information integrals cheap: the
spectral form is diagonalized once and evaluated analytically at any tau.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (EmptyRecords, InvalidEfficiency, NegativeDensity,
                     TruncationFailure)
from .generators import nojump_superop, steady_state, lindblad_superop, \
    trace_functional, vectorize
from .model import E, G, ModelParams, build_model
from .numerics import SpectralForm

# Relative coefficient size below which a spectral mode is dropped from the
# exponential sums (conjugate partners share the same magnitude).
_COEF_FLOOR = 1e-16

# Survival probability that tau_max must reach before the table is accepted.
_P0_TARGET = 1e-6

_NEGATIVE_FLOOR = 1e-10


class ExpSum:
    """Real part of sum_j c_j exp(lam_j tau) with conjugate pairs folded.

    Modes with Im(lam) < 0 are dropped and their partners doubled, turning
    the complex sum into decaying cosines; evaluation walks the few modes
    with flat per-mode vector operations.
    """

    def __init__(self, eigenvalues: np.ndarray, coef: np.ndarray):
        real = np.abs(eigenvalues.imag) < 1e-14
        upper = eigenvalues.imag >= 1e-14
        self._real_decay = eigenvalues.real[real]
        self._real_coef = coef.real[real]
        self._pair_decay = eigenvalues.real[upper]
        self._pair_freq = eigenvalues.imag[upper]
        self._pair_cos = 2.0 * coef.real[upper]
        self._pair_sin = 2.0 * coef.imag[upper]

    def __call__(self, taus) -> np.ndarray:
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        out = np.zeros(taus.shape)
        for a, c in zip(self._real_decay, self._real_coef):
            out += c * np.exp(a * taus)
        for a, b, cr, ci in zip(self._pair_decay, self._pair_freq,
                                self._pair_cos, self._pair_sin):
            phase = b * taus
            out += np.exp(a * taus) * (cr * np.cos(phase) - ci * np.sin(phase))
        return out


def _exp_sum(taus, eigenvalues, coef) -> np.ndarray:
    """Real part of sum_j coef_j * exp(eigenvalues_j * tau), vectorized in tau."""
    return ExpSum(eigenvalues, coef)(taus)


try:
    import warnings as _warnings

    import numba as _numba
    # harmless threading-layer fallback notice, but it pollutes CLI output
    _warnings.filterwarnings("ignore", message=".*TBB.*",
                             category=_numba.NumbaWarning)

    @_numba.njit(parallel=True, cache=True)
    def _invert_kernel(u, hi0, p_rd, p_rc, p_pd, p_pf, p_pc, p_ps,
                       w_rd, w_rc, w_pd, w_pf, w_pc, w_ps):  # pragma: no cover
        out = np.empty(u.size)
        for i in _numba.prange(u.size):
            ui = u[i]
            lo, hi = 0.0, hi0
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                s = 0.0
                for k in range(p_rd.size):
                    s += p_rc[k] * np.exp(p_rd[k] * mid)
                for k in range(p_pd.size):
                    ph = p_pf[k] * mid
                    s += np.exp(p_pd[k] * mid) * (p_pc[k] * np.cos(ph)
                                                  - p_ps[k] * np.sin(ph))
                if s > ui:
                    lo = mid
                else:
                    hi = mid
            tau = 0.5 * (lo + hi)
            w = 0.0
            for k in range(w_rd.size):
                w += w_rc[k] * np.exp(w_rd[k] * tau)
            for k in range(w_pd.size):
                ph = w_pf[k] * tau
                w += np.exp(w_pd[k] * tau) * (w_pc[k] * np.cos(ph)
                                              - w_ps[k] * np.sin(ph))
            if w > 0.0:
                p0 = 0.0
                for k in range(p_rd.size):
                    p0 += p_rc[k] * np.exp(p_rd[k] * tau)
                for k in range(p_pd.size):
                    ph = p_pf[k] * tau
                    p0 += np.exp(p_pd[k] * tau) * (p_pc[k] * np.cos(ph)
                                                   - p_ps[k] * np.sin(ph))
                tau = min(max(tau + (p0 - ui) / w, lo), hi)
            out[i] = tau
        return out
except ImportError:  # pragma: no cover
    _invert_kernel = None


@dataclass(frozen=True)
class EmissionRecord:
    """Ordered waiting times of one observation window plus the silent tail."""

    waits: np.ndarray
    tail: float
    window: float
    seed: int | None = None

    def __post_init__(self):
        waits = np.asarray(self.waits, dtype=float)
        object.__setattr__(self, "waits", waits)
        if waits.size and waits.min() <= 0:
            raise ValueError("waiting times must be positive")
        if self.tail < 0:
            raise ValueError("tail must be nonnegative")
        closure = waits.sum() + self.tail
        if not np.isclose(closure, self.window, rtol=1e-12, atol=0):
            raise ValueError(
                f"waits + tail = {closure!r} does not close the window "
                f"{self.window!r}")

    @property
    def n_detections(self) -> int:
        return int(self.waits.size)


@dataclass(frozen=True)
class WtdTable:
    """Waiting-time density and survival probability of one parameter set.

    ``tau_grid``/``w_values``/``p0_values`` tabulate the distribution for
    inspection and quadrature; all point evaluations go through the exact
    spectral sums instead of interpolation.
    """

    params: ModelParams
    tau_grid: np.ndarray
    w_values: np.ndarray
    p0_values: np.ndarray
    spectral: SpectralForm
    total_mass: float
    tau_max: float
    # pruned exponential-sum data
    w_eigenvalues: np.ndarray
    w_coef: np.ndarray
    p0_eigenvalues: np.ndarray
    p0_coef: np.ndarray
    _w_sum: ExpSum
    _p0_sum: ExpSum

    def w_eval(self, taus) -> np.ndarray:
        """W(tau) from the spectral sum; roundoff negatives are clipped to 0,
        anything more negative raises NegativeDensity."""
        raw = self._w_sum(taus)
        floor = -_NEGATIVE_FLOOR * max(1.0, float(np.max(self.w_values, initial=0.0)))
        if raw.min(initial=0.0) < floor:
            raise NegativeDensity(
                f"spectral W = {raw.min():.3e} below the roundoff floor")
        return np.maximum(raw, 0.0)

    def p0_eval(self, taus) -> np.ndarray:
        """No-detection probability P0(tau), exact spectral evaluation."""
        return np.clip(self._p0_sum(taus), 0.0, 1.0)

    def mean_wait(self) -> float:
        """E[tau] = integral of tau W(tau), evaluated mode by mode."""
        return float(np.sum(self.w_coef / self.w_eigenvalues**2).real)

    def slowest_mode(self) -> tuple[complex, complex]:
        """(eigenvalue, coefficient) of the slowest-decaying mode of W."""
        j = int(np.argmax(self.w_eigenvalues.real))
        return complex(self.w_eigenvalues[j]), complex(self.w_coef[j])


def _prune(eigenvalues: np.ndarray, coef: np.ndarray):
    keep = np.abs(coef) > _COEF_FLOOR * max(np.abs(coef).max(), 1e-300)
    lam, c = eigenvalues[keep], coef[keep]
    if lam.size == 0:
        raise TruncationFailure("all spectral coefficients vanish")
    if np.max(lam.real) > -1e-14:
        raise TruncationFailure(
            "a non-decaying no-jump mode carries weight; the monitored "
            "process does not relax (population trapping?)")
    return lam, c


def _composite_grid(lam: np.ndarray, tau_min: float, tau_max: float,
                    points: int) -> np.ndarray:
    """Log grid densified with linear sections resolving oscillatory modes.

    Densification only happens for quadrature-grade tables (points >= 256);
    small tables keep the bare log grid, since their grid is informational
    and all point evaluations are spectral anyway.
    """
    grids = [np.geomspace(tau_min, tau_max, points)]
    if points >= 256:
        for ev in lam:
            if abs(ev.imag) < 1e-12:
                continue
            period = 2 * np.pi / abs(ev.imag)
            end = min(tau_max, 40.0 / max(abs(ev.real), 1e-300))
            step = period / 10.0
            n = int(end / step)
            if 2 <= n <= 200_000:
                grids.append(np.arange(1, n + 1) * step)
    grid = np.unique(np.concatenate(grids))
    return grid[(grid >= tau_min) & (grid <= tau_max)]


def build_wtd(p: ModelParams, tau_max: float | None = None,
              points: int = 400) -> WtdTable:
    """Diagonalize the no-jump generator and tabulate W and P0.

    The u channel is unmonitored here (a detection always projects onto the
    ground state, which is what makes the process renewal).  ``tau_max`` is
    extended until P0(tau_max) drops below 1e-6.
    """
    if p.eta_g <= 0:
        raise InvalidEfficiency("renewal statistics require eta_g > 0")
    ops = build_model(p)
    L0 = nojump_superop(ops, p.eta_g, 0.0)
    S = L0.spectral()

    d = p.level_count
    rho_g = np.zeros((d, d), dtype=complex)
    rho_g[G, G] = 1.0
    c = S.coefficients(vectorize(rho_g))

    ee_index = E * d + E  # column-stacking index of the (e, e) entry
    a = p.eta_g * p.gamma_g * S.right[ee_index, :] * c
    b = (trace_functional(d) @ S.right) * c
    lam_w, a = _prune(S.eigenvalues, a)
    lam_p, b = _prune(S.eigenvalues, b)

    total_mass = float(np.sum(-a / lam_w).real)
    if abs(total_mass - 1.0) > 1e-4:
        raise TruncationFailure(
            f"waiting-time mass {total_mass:.6f} deviates from 1 by more "
            "than 1e-4; the detection process is not ergodic at these "
            "parameters")

    def p0_scalar(tau: float) -> float:
        return float(_exp_sum(tau, lam_p, b)[0])

    slowest = np.max(lam_p.real)
    if tau_max is None:
        tau_max = np.log(max(np.abs(b).sum(), 1.0) / _P0_TARGET) / (-slowest)
    extensions = 0
    while p0_scalar(tau_max) >= _P0_TARGET:
        tau_max *= 4.0
        extensions += 1
        if extensions > 40:
            raise TruncationFailure(
                "could not extend tau_max far enough to exhaust the "
                "waiting-time mass")

    tau_min = min(1e-3, tau_max * 1e-9)
    grid = _composite_grid(lam_w, tau_min, tau_max, points)
    w_vals = np.maximum(_exp_sum(grid, lam_w, a), 0.0)
    p0_vals = np.clip(_exp_sum(grid, lam_p, b), 0.0, 1.0)

    return WtdTable(params=p, tau_grid=grid, w_values=w_vals,
                    p0_values=p0_vals, spectral=S, total_mass=total_mass,
                    tau_max=float(tau_max),
                    w_eigenvalues=lam_w, w_coef=a,
                    p0_eigenvalues=lam_p, p0_coef=b,
                    _w_sum=ExpSum(lam_w, a), _p0_sum=ExpSum(lam_p, b))


def p0_eval(tbl: WtdTable, tau) -> np.ndarray | float:
    """No-detection probability at ``tau`` (scalar or array)."""
    out = tbl.p0_eval(tau)
    return float(out[0]) if np.isscalar(tau) else out


def detection_rate(p: ModelParams) -> float:
    """Long-time average detection rate eta_g * gamma_g * rho_ss^(ee)."""
    L = lindblad_superop(build_model(p))
    return steady_state(L, eta_g=p.eta_g, gamma_g=p.gamma_g).detection_rate


def record_stream(master_seed: int, record_index: int) -> np.random.Generator:
    """Independent per-record RNG stream.

    Streams are split counter-style from (master seed, record index) through
    a Philox generator keyed by the spawn hierarchy, so concurrent sampling
    over disjoint indices reproduces sequential results exactly.
    """
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(record_index,))
    return np.random.Generator(np.random.Philox(seq))


def _invert_survival(tbl: WtdTable, u: np.ndarray) -> np.ndarray:
    """Solve P0(tau) = u for each uniform draw.

    Bisection on the analytic survival function (60 iterations) followed by
    one Newton step; no grid interpolation is involved, so the multi-decade
    tails are sampled faithfully.  A compiled kernel does the per-draw loop
    when numba is importable; the vectorized fallback implements the same
    iteration (single code path per installation, so batched and sequential
    sampling agree exactly).
    """
    hi_scalar = tbl.tau_max
    guard = 0
    while float(tbl.p0_eval(hi_scalar)[0]) >= u.min():
        hi_scalar *= 2.0
        guard += 1
        if guard > 200:
            raise TruncationFailure("survival function does not reach the "
                                    "smallest uniform draw")
    if _invert_kernel is not None:
        psum, wsum = tbl._p0_sum, tbl._w_sum
        return _invert_kernel(
            u, hi_scalar,
            psum._real_decay, psum._real_coef, psum._pair_decay,
            psum._pair_freq, psum._pair_cos, psum._pair_sin,
            wsum._real_decay, wsum._real_coef, wsum._pair_decay,
            wsum._pair_freq, wsum._pair_cos, wsum._pair_sin)

    lo = np.zeros(u.shape)
    hi = np.full(u.shape, hi_scalar)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        above = tbl.p0_eval(mid) > u
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    tau = 0.5 * (lo + hi)
    w = tbl.w_eval(tau)
    p_err = tbl.p0_eval(tau) - u
    safe_w = np.where(w > 0, w, 1.0)
    return np.clip(tau + np.where(w > 0, p_err / safe_w, 0.0), lo, hi)


def sample_waits(tbl: WtdTable, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n waiting times by inverting the analytic survival function."""
    return _invert_survival(tbl, rng.random(n))


def _batch_sizes(tbl: WtdTable, t: float) -> tuple[int, int]:
    expected = t / tbl.mean_wait()
    first = max(16, int(np.ceil(1.05 * expected + 10.0 * np.sqrt(expected) + 16)))
    return first, max(16, first // 8)


def sample_records(p: ModelParams, t: float, n: int, master_seed: int,
                   tbl: WtdTable | None = None,
                   index_offset: int = 0) -> list[EmissionRecord]:
    """Sample ``n`` records of window ``t`` on independent per-record streams.

    Record ``i`` uses the stream split from (master_seed, index_offset + i);
    draws are made per stream but the survival inversions are batched across
    records, which changes nothing in the results (the inversion is
    elementwise) while keeping the bisection vectorized.
    """
    if t <= 0:
        raise ValueError("observation window must be positive")
    if tbl is None:
        tbl = build_wtd(p)
    first, topup = _batch_sizes(tbl, t)
    streams = [record_stream(master_seed, index_offset + i) for i in range(n)]
    waits: list[np.ndarray] = [np.empty(0)] * n
    pending = list(range(n))
    sizes = {i: first for i in pending}
    while pending:
        draws = [streams[i].random(sizes[i]) for i in pending]
        taus = _invert_survival(tbl, np.concatenate(draws))
        split = np.split(taus, np.cumsum([d.size for d in draws])[:-1])
        still = []
        for i, new in zip(pending, split):
            waits[i] = np.concatenate([waits[i], new])
            if waits[i].sum() <= t:
                still.append(i)
                sizes[i] = topup
        pending = still
    records = []
    for i in range(n):
        total = np.cumsum(waits[i])
        n_det = int(np.searchsorted(total, t, side="right"))
        kept = waits[i][:n_det]
        records.append(EmissionRecord(waits=kept, tail=float(t - kept.sum()),
                                      window=float(t)))
    return records


def sample_record(p: ModelParams, t: float, seed, tbl: WtdTable | None = None) -> EmissionRecord:
    """Sample one emission record of window ``t``.

    ``seed`` may be an integer or a numpy Generator (as produced by
    ``record_stream``); results are deterministic given the seed.
    """
    if t <= 0:
        raise ValueError("observation window must be positive")
    if tbl is None:
        tbl = build_wtd(p)
    if isinstance(seed, np.random.Generator):
        rng, seed_label = seed, None
    else:
        rng, seed_label = record_stream(int(seed), 0), int(seed)

    first, topup = _batch_sizes(tbl, t)
    waits = sample_waits(tbl, first, rng)
    while waits.sum() <= t:
        waits = np.concatenate([waits, sample_waits(tbl, topup, rng)])
    total = np.cumsum(waits)
    n_det = int(np.searchsorted(total, t, side="right"))
    kept = waits[:n_det]
    tail = t - kept.sum()
    return EmissionRecord(waits=kept, tail=float(tail), window=float(t),
                          seed=seed_label)


def log_likelihood(rec: EmissionRecord, p_candidate: ModelParams,
                   tbl: WtdTable | None = None) -> float:
    """log P0(tail) + sum_k log W(tau_k) under the candidate parameters."""
    if tbl is None:
        tbl = build_wtd(p_candidate)
    with np.errstate(divide="ignore"):
        ll = float(np.log(tbl.p0_eval(rec.tail))[0])
        if rec.n_detections:
            ll += float(np.sum(np.log(tbl.w_eval(rec.waits))))
    return ll


def batch_log_likelihood(records: list[EmissionRecord],
                         tbl: WtdTable) -> np.ndarray:
    """Per-record log-likelihoods with one spectral evaluation for all waits.

    Segment sums use a prefix-sum split, so zero-detection records fall out
    naturally with just their tail term.
    """
    if not records:
        raise EmptyRecords("no records to score")
    tails = np.array([r.tail for r in records])
    with np.errstate(divide="ignore"):
        lls = np.log(tbl.p0_eval(tails))
        lens = np.array([r.n_detections for r in records])
        if lens.sum():
            allw = np.concatenate([r.waits for r in records])
            logw = np.log(tbl.w_eval(allw))
            prefix = np.concatenate([[0.0], np.cumsum(logw)])
            bounds = np.concatenate([[0], np.cumsum(lens)])
            lls += prefix[bounds[1:]] - prefix[bounds[:-1]]
    return lls


class WtdCache:
    """Waiting-time tables keyed by the estimation parameter value.

    One spectral decomposition per candidate theta, reused across every
    record (and repeated experiment) scored against it; ``hits``/``misses``
    expose the reuse.  Least-recently-used entries are evicted beyond
    ``max_entries`` (refinement probes are transient; scan-grid candidates
    stay hot).
    """

    def __init__(self, base: ModelParams, tau_max: float | None = None,
                 points: int = 200, max_entries: int = 512):
        self.base = base
        self.tau_max = tau_max
        self.points = points
        self.max_entries = max_entries
        self._tables: dict[float, WtdTable] = {}
        self.hits = 0
        self.misses = 0

    def get(self, theta: float) -> WtdTable:
        key = float(theta)
        tbl = self._tables.pop(key, None)
        if tbl is None:
            self.misses += 1
            tbl = build_wtd(self.base.with_omega_d(key), tau_max=self.tau_max,
                            points=self.points)
        else:
            self.hits += 1
        self._tables[key] = tbl  # reinsert as most recent
        while len(self._tables) > self.max_entries:
            self._tables.pop(next(iter(self._tables)))
        return tbl


def save_records(records, path) -> None:
    """Write records as plain-text blocks.

    Each block is a header ``window=<t> seed=<s> n=<N>``, one waiting time
    per line in full (shortest round-trip) double precision, and a final
    ``tail=`` line.
    """
    if not records:
        raise EmptyRecords("nothing to save")
    with open(path, "w") as fh:
        for rec in records:
            seed = "none" if rec.seed is None else rec.seed
            fh.write(f"window={rec.window!r} seed={seed} n={rec.n_detections}\n")
            for tau in rec.waits:
                fh.write(f"{float(tau)!r}\n")
            fh.write(f"tail={rec.tail!r}\n")


def load_records(path) -> list[EmissionRecord]:
    records = []
    with open(path) as fh:
        line = fh.readline()
        while line:
            head = dict(item.split("=") for item in line.split())
            n = int(head["n"])
            waits = np.array([float(fh.readline()) for _ in range(n)])
            tail_line = fh.readline().strip()
            if not tail_line.startswith("tail="):
                raise ValueError(f"malformed record block near {line.strip()!r}")
            seed = None if head["seed"] == "none" else int(head["seed"])
            records.append(EmissionRecord(
                waits=waits, tail=float(tail_line[5:]),
                window=float(head["window"]), seed=seed))
            line = fh.readline()
    if not records:
        raise EmptyRecords(f"no records found in {path}")
    return records
