"""Experiment harness: Monte Carlo sweeps, metrics, CSV emission.

Three built-in evaluations mirror the headline experiments:

* beam registration gain versus sensing-unit size (kind "fig5"),
* cooperative active sensing RMSE versus SNR (kind "fig7"),
* cooperative active-and-passive NMSE versus passive SNR (kind "fig6").

All randomness flows through derive_rng_stream(master_seed, trial,
purpose), so a trial's payload, noise, and geometry realizations are
shared across sweep points (common random numbers) and results are
byte-reproducible for a fixed seed at any worker count.

The Monte Carlo engines synthesize each link's noise-free echo and a
unit-variance noise grid once per trial, then form every sweep point by
linear combination; peak extraction runs on the unpadded periodogram
followed by an exact zoomed evaluation of the padded grid around the
coarse peak, which is value-identical to the full padded map for the
single-target scenes simulated here.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .beams import (ArrayGeometry, SensingArea, beam_efficiency, pattern,
                    required_width, synth_baba, synth_conventional)
from .channel import bistatic_delay, bistatic_doppler, synthesize_echo
from .data_fusion import (build_confidence_interval, build_confidence_region,
                          multilaterate, weighted_average)
from .cscc import (OffsetEstimate, PassiveResampler, compensate,
                   correlation_offsets, fuse_active_passive, polish_peak_1d)
from .frame import generate_frame
from .rdmap import (ChannelMatrix, RangeDopplerMap, range_doppler_map,
                    to_range_velocity, _parabolic_offset)
from .scenario import (SPEED_OF_LIGHT, ScenarioConfig, Target, config_hash,
                       derive_rng_stream, load_scenario, serialize_scenario)
from .signal_fusion import (LinkScoreEvaluator, RefineParams, iterative_refine,
                            link_delay_doppler)


@dataclass(frozen=True)
class SweepResult:
    """One row per sweep value, fixed column schema, full provenance."""

    sweep_name: str
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    trials: int
    seed: int
    config_digest: str

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        for row in self.rows:
            cells = []
            for v in row:
                if isinstance(v, str):
                    cells.append(v)
                elif isinstance(v, (int, np.integer)):
                    cells.append(str(int(v)))
                else:
                    cells.append(format(float(v), ".10g"))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv())

    def column(self, name: str) -> np.ndarray:
        idx = self.columns.index(name)
        return np.asarray([row[idx] for row in self.rows], dtype=float)


def rmse(errors) -> float:
    e = np.asarray(errors, dtype=float)
    return float(np.sqrt(np.mean(e ** 2)))


def rmse_standard_error(errors) -> float:
    """Delta-method standard error of the RMSE estimate."""
    e = np.asarray(errors, dtype=float)
    n = e.size
    r = rmse(e)
    if n < 2 or r == 0:
        return 0.0
    var_sq = np.var(e ** 2, ddof=1)
    return float(np.sqrt(var_sq / n) / (2.0 * r))


def _param(config: ScenarioConfig, key: str, default):
    value = config.experiment_params.get(key, default)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, int) and not isinstance(default, bool):
        return int(value)
    return value


def _sweep_values(start: float, stop: float, step: float) -> np.ndarray:
    if step <= 0 or stop < start:
        raise ValueError(f"invalid sweep bounds [{start}, {stop}] step {step}")
    count = int(round((stop - start) / step)) + 1
    return start + step * np.arange(count)


# ---------------------------------------------------------------------------
# Shared Monte Carlo plumbing: coarse map + exact zoomed padded-grid peak.
# ---------------------------------------------------------------------------

def _coarse_spectrum(values: np.ndarray) -> np.ndarray:
    """Unpadded complex periodogram (ifft * N along axis 0, fft along 1)."""
    spec = sfft.ifft(values, axis=0) * values.shape[0]
    return sfft.fft(spec, axis=1)


@dataclass
class _LinkTrialData:
    """Per-(trial, link) precomputations reused across sweep points."""

    g_signal: np.ndarray          # noise-free channel matrix
    g_noise: np.ndarray           # unit-variance noise / tx quotient
    abs2_s: np.ndarray            # |S|^2 of the coarse spectra (float32)
    cross: np.ndarray             # Re(S conj(W)) (float32)
    abs2_w: np.ndarray            # |W|^2 (float32)
    zoom_cache: dict

    @classmethod
    def build(cls, g_signal: np.ndarray, g_noise: np.ndarray):
        s = _coarse_spectrum(g_signal)
        w = _coarse_spectrum(g_noise)
        return cls(
            g_signal=g_signal,
            g_noise=g_noise,
            abs2_s=(s.real ** 2 + s.imag ** 2).astype(np.float32),
            cross=(s.real * w.real + s.imag * w.imag).astype(np.float32),
            abs2_w=(w.real ** 2 + w.imag ** 2).astype(np.float32),
            zoom_cache={},
        )

    def peak(self, noise_scale: float, numerology, zr: int, zd: int,
             half: int = 8):
        """(delay_s, doppler_hz, score): equals the padded-map estimate."""
        power = self.abs2_s + (2.0 * noise_scale) * self.cross \
            + (noise_scale * noise_scale) * self.abs2_w
        n, m = power.shape
        ci, cj = np.unravel_index(int(np.argmax(power)), (n, m))
        key = (ci, cj, zr, zd)
        if key not in self.zoom_cache:
            n_pad, m_pad = zr * n, zd * m
            half_i = max(half, 2 * zr)
            half_j = max(half, 2 * zd)
            rows = (ci * zr + np.arange(-half_i, half_i + 1)) % n_pad
            cols = (cj * zd + np.arange(-half_j, half_j + 1)) % m_pad
            ns = np.arange(n)[None, :]
            ms = np.arange(m)[:, None]
            left = np.exp(2j * np.pi * rows[:, None] * ns / n_pad)
            right = np.exp(-2j * np.pi * ms * cols[None, :] / m_pad)
            z_s = left @ self.g_signal @ right
            z_w = left @ self.g_noise @ right
            self.zoom_cache[key] = (rows, cols, z_s, z_w)
        rows, cols, z_s, z_w = self.zoom_cache[key]
        patch = np.abs(z_s + noise_scale * z_w)
        pi, pj = np.unravel_index(int(np.argmax(patch)), patch.shape)
        pi = int(np.clip(pi, 1, patch.shape[0] - 2))
        pj = int(np.clip(pj, 1, patch.shape[1] - 2))
        di = _parabolic_offset(patch[pi - 1, pj], patch[pi, pj], patch[pi + 1, pj])
        dj = _parabolic_offset(patch[pi, pj - 1], patch[pi, pj], patch[pi, pj + 1])
        n_pad, m_pad = zr * n, zd * m
        delay_bin = (float(rows[pi]) + di) % n_pad
        doppler_bin = (float(cols[pj]) + dj) % m_pad
        if doppler_bin >= m_pad / 2:
            doppler_bin -= m_pad
        delay = delay_bin / (n_pad * numerology.subcarrier_spacing_hz)
        doppler = doppler_bin / (m_pad * numerology.symbol_duration_s)
        return float(delay), float(doppler), float(patch[pi, pj])


def _noise_scale(snr_db: float) -> float:
    """Per-component scale for a unit-variance complex noise grid."""
    sigma2 = 10.0 ** (-snr_db / 10.0)
    return math.sqrt(sigma2 / 2.0)


def _unit_noise(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# ---------------------------------------------------------------------------
# fig7: cooperative active sensing, RMSE vs per-link SNR.
# ---------------------------------------------------------------------------

_FIG7_COLUMNS = (
    "snr_db",
    "rmse_range_single_m", "rmse_range_data_m", "rmse_range_signal_m",
    "se_range_single_m", "se_range_data_m", "se_range_signal_m",
    "rmse_velocity_single_mps", "rmse_velocity_data_mps", "rmse_velocity_signal_mps",
    "trials", "seed", "config_hash",
)

_CONFIG_CACHE: dict = {}
_RESAMPLER_CACHE: dict = {}


def _cached_resampler(config_text, num, tx_pos, rx_pos, solver, zr):
    key = (hashlib.sha256(config_text.encode()).hexdigest(), zr)
    if key not in _RESAMPLER_CACHE:
        _RESAMPLER_CACHE[key] = PassiveResampler(num, tx_pos, rx_pos, solver, zr)
    return _RESAMPLER_CACHE[key]


def _cached_config(text: str) -> ScenarioConfig:
    key = hashlib.sha256(text.encode()).hexdigest()
    if key not in _CONFIG_CACHE:
        _CONFIG_CACHE[key] = load_scenario(text)
    return _CONFIG_CACHE[key]


def _fig7_trial(args):
    """Per-trial worker: returns (n_points, 6) error rows."""
    try:
        return _fig7_trial_body(args)
    except Exception as exc:
        raise RuntimeError(f"fig7 trial {args[1]}: {exc}") from exc


def _fig7_trial_body(args):
    config_text, trial, seed, snrs = args
    config = _cached_config(config_text)
    num = config.numerology
    sites = {s.id: s for s in config.sites}
    links = config.links
    p = config.experiment_params

    jitter_m = float(p.get("jitter_m", 0.5))
    zr = int(p.get("zero_pad_range", 4))
    zd = int(p.get("zero_pad_doppler", 2))
    region_rmse = float(p.get("region_rmse_m", 0.0125 * num.range_resolution_m))
    vel_rmse = float(p.get("velocity_rmse_mps",
                           0.0125 * num.velocity_resolution_mps))
    kappa = float(p.get("kappa", 2.0))
    refine = RefineParams(
        grid_size=int(p.get("refine_grid", 8)),
        max_iterations=int(p.get("refine_max_iterations", 8)),
        tol_position_m=float(p.get("refine_tol_m", 3e-5)),
        tol_velocity_mps=float(p.get("refine_tol_mps", 3e-5)),
    )

    rng_payload = derive_rng_stream(seed, trial, "payload")
    rng_noise = derive_rng_stream(seed, trial, "noise")
    rng_geom = derive_rng_stream(seed, trial, "geometry_jitter")

    nominal = config.targets[0]
    jitter = rng_geom.uniform(-jitter_m, jitter_m, size=2)
    true_pos = np.array([nominal.position_m[0] + jitter[0],
                         nominal.position_m[1] + jitter[1],
                         nominal.position_m[2]])
    target = Target(position_m=tuple(true_pos), velocity_mps=nominal.velocity_mps,
                    amplitude=nominal.amplitude)
    heading = nominal.velocity / np.linalg.norm(nominal.velocity)
    true_speed = float(np.linalg.norm(nominal.velocity))

    shape = (num.num_subcarriers, num.num_symbols)
    link_data = []
    frames = []
    for link in links:
        frames.append(generate_frame(num, rng_payload))
    for link, frame in zip(links, frames):
        noiseless = dataclasses.replace(link, snr_db=np.inf)
        rx0 = synthesize_echo(frame, noiseless, sites, [target], None)
        g_sig = rx0.symbols / frame.symbols
        g_noi = _unit_noise(rng_noise, shape) / frame.symbols
        link_data.append(_LinkTrialData.build(g_sig, g_noi))

    channels = [ChannelMatrix(values=ld.g_signal, numerology=num, link=link)
                for ld, link in zip(link_data, links)]
    bs_pos = [sites[link.rx_site_id].position for link in links]
    bs0 = bs_pos[0]

    eval_templates = None
    out = np.empty((len(snrs), 6))
    for j, snr in enumerate(snrs):
        scale = _noise_scale(float(snr))
        ests = []
        for ld, link in zip(link_data, links):
            delay, doppler, score = ld.peak(scale, num, zr, zd)
            ests.append(to_range_velocity(delay, doppler, link, 0.0, num,
                                          score=score, snr_db=float(snr)))
        true_r0 = float(np.linalg.norm(true_pos - bs0))

        # Per-BS radial speeds to ground speed along the known heading.
        pos_fix = multilaterate(list(zip(bs_pos, [e.range_m for e in ests])))
        speeds = []
        for est, bs in zip(ests, bs_pos):
            u = bs[:2] - pos_fix
            u = u / np.linalg.norm(u)
            speeds.append(dataclasses.replace(
                est, velocity_mps=est.velocity_mps / float(heading[:2] @ u)))
        fused_speed = weighted_average(speeds).velocity_mps

        region = build_confidence_region(pos_fix, region_rmse, kappa)
        interval = build_confidence_interval(fused_speed, vel_rmse, kappa)

        def build_templates():
            templates = []
            for ld, link in zip(link_data, links):
                tau0, f0 = link_delay_doppler(link, sites, region.center_m,
                                              interval.center_mps, heading, num)
                corners = [(region.center_m[0] + sx * region.half_widths_m[0],
                            region.center_m[1] + sy * region.half_widths_m[1])
                           for sx in (-1, 1) for sy in (-1, 1)]
                extremes = (interval.center_mps - interval.half_width_mps,
                            interval.center_mps + interval.half_width_mps)
                dtau = max(abs(link_delay_doppler(link, sites, c,
                                                  interval.center_mps, heading,
                                                  num)[0] - tau0)
                           for c in corners)
                df = max(abs(link_delay_doppler(link, sites, c, s, heading,
                                                num)[1] - f0)
                         for c in corners for s in extremes)
                ev_s = LinkScoreEvaluator(ld.g_signal, num, tau0, f0,
                                          3.0 * max(dtau, 1e-15),
                                          3.0 * max(df, 1e-12))
                ev_w = LinkScoreEvaluator(ld.g_noise, num, tau0, f0,
                                          ev_s.dtau_max, ev_s.df_max)
                templates.append((ev_s, ev_w))
            return templates

        if eval_templates is None:
            eval_templates = build_templates()
        try:
            evaluators = [LinkScoreEvaluator.from_moments(
                ev_s, ev_s.moments + scale * ev_w.moments)
                for ev_s, ev_w in eval_templates]
            result = iterative_refine(channels, sites, region, interval,
                                      heading, refine, evaluators=evaluators)
        except ValueError:
            # The shared expansion center drifted out of its validity
            # radius for this point's region: rebuild around it.
            eval_templates = build_templates()
            evaluators = [LinkScoreEvaluator.from_moments(
                ev_s, ev_s.moments + scale * ev_w.moments)
                for ev_s, ev_w in eval_templates]
            result = iterative_refine(channels, sites, region, interval,
                                      heading, refine, evaluators=evaluators)

        sig_r = float(np.linalg.norm(np.array([*result.position_m, 0.0]) - bs0))
        data_r = float(np.linalg.norm(np.append(pos_fix, 0.0) - bs0))
        out[j] = (
            ests[0].range_m - true_r0,
            data_r - true_r0,
            sig_r - true_r0,
            speeds[0].velocity_mps - true_speed,
            fused_speed - true_speed,
            result.velocity_mps - true_speed,
        )
    return out


def exp_fig7(config: ScenarioConfig, trials: int | None = None,
             seed: int | None = None, workers: int = 1) -> SweepResult:
    """RMSE of single-BS, data-level, and signal-level estimates vs SNR."""
    trials = config.trials if trials is None else trials
    seed = config.master_seed if seed is None else seed
    p = config.experiment_params
    snrs = _sweep_values(float(p.get("snr_start_db", -10.0)),
                         float(p.get("snr_stop_db", 10.0)),
                         float(p.get("snr_step_db", 2.0)))
    text = serialize_scenario(config)
    args = [(text, t, seed, tuple(float(s) for s in snrs)) for t in range(trials)]
    per_trial = _run_trials(_fig7_trial, args, workers)
    errors = np.stack(per_trial)  # (trials, points, 6)

    digest = config_hash(config)
    rows = []
    for j, snr in enumerate(snrs):
        e = errors[:, j, :]
        rows.append((
            float(snr),
            rmse(e[:, 0]), rmse(e[:, 1]), rmse(e[:, 2]),
            rmse_standard_error(e[:, 0]), rmse_standard_error(e[:, 1]),
            rmse_standard_error(e[:, 2]),
            rmse(e[:, 3]), rmse(e[:, 4]), rmse(e[:, 5]),
            trials, seed, digest,
        ))
    return SweepResult(sweep_name="snr_db", columns=_FIG7_COLUMNS,
                       rows=tuple(rows), trials=trials, seed=seed,
                       config_digest=digest)


# ---------------------------------------------------------------------------
# fig6: cooperative active and passive sensing, NMSE vs passive SNR.
# ---------------------------------------------------------------------------

_FIG6_COLUMNS = (
    "passive_snr_db",
    "nmse_active", "nmse_passive", "nmse_coop", "nmse_genie",
    "se_nmse_active", "se_nmse_passive", "se_nmse_coop",
    "trials", "seed", "config_hash",
)


def _profile_peak_delay(profile: np.ndarray, spacing_s: float) -> float:
    """Parabolic peak of a 1-D delay profile, in seconds."""
    n = profile.shape[0]
    i = int(np.argmax(profile))
    di = _parabolic_offset(profile[(i - 1) % n], profile[i], profile[(i + 1) % n])
    return ((i + di) % n) * spacing_s


def _bearing_range_solver(rx_pos, bearing):
    """Map ranges from the receive site to positions along a known bearing."""
    rx = np.asarray(rx_pos, dtype=float)
    d = np.asarray(bearing, dtype=float)
    d = d / np.linalg.norm(d)

    def solver(ranges):
        r = np.atleast_1d(np.asarray(ranges, dtype=float))
        return rx[None, :] + r[:, None] * d[None, :]

    return solver


def _fig6_trial(args):
    """Per-trial worker: returns (n_points, 4) squared relative errors."""
    try:
        return _fig6_trial_body(args)
    except Exception as exc:
        raise RuntimeError(f"fig6 trial {args[1]}: {exc}") from exc


def _fig6_trial_body(args):
    """Per-trial worker: returns (n_points, 4) squared relative errors.

    Both echoes arrive at the same receiving BS in the same resource, so
    one joint grid carries the active echo, the passive echo, and one
    receiver noise realization. Sweeping the passive SNR scales the
    passive echo amplitude; dividing the joint grid by either payload
    leaves the other link's echo as payload-randomized cross interference,
    which is what degrades active sensing when the passive echo is strong
    (and vice versa).
    """
    config_text, trial, seed, snrs = args
    config = _cached_config(config_text)
    num = config.numerology
    sites = {s.id: s for s in config.sites}
    active_link, passive_link = config.links
    p = config.experiment_params

    jitter_m = float(p.get("jitter_m", 3.0))
    to_max = float(p.get("timing_offset_max_s", 1e-6))
    cfo_max = float(p.get("cfo_max_hz", 200.0))
    zr = int(p.get("zero_pad_range", 1))
    zd = int(p.get("zero_pad_doppler", 1))

    rng_payload = derive_rng_stream(seed, trial, "payload")
    rng_noise = derive_rng_stream(seed, trial, "noise")
    rng_geom = derive_rng_stream(seed, trial, "geometry_jitter")

    bs0 = sites[active_link.rx_site_id].position
    bs1 = sites[passive_link.tx_site_id].position
    nominal = config.targets[0]
    bearing = nominal.position - bs0
    nominal_range = float(np.linalg.norm(bearing))
    bearing = bearing / nominal_range

    delta = float(rng_geom.uniform(-jitter_m, jitter_m))
    to_true = float(rng_geom.uniform(-to_max, to_max))
    cfo_true = float(rng_geom.uniform(-cfo_max, cfo_max))
    r_true = nominal_range + delta
    true_pos = bs0 + r_true * bearing
    target = Target(position_m=tuple(true_pos), velocity_mps=nominal.velocity_mps,
                    amplitude=nominal.amplitude)
    heading = nominal.velocity / np.linalg.norm(nominal.velocity)

    shape = (num.num_subcarriers, num.num_symbols)
    frame_a = generate_frame(num, rng_payload)
    frame_p = generate_frame(num, rng_payload)
    noise = _unit_noise(rng_noise, shape)

    # Sync burst: the passive link's TO/CFO are persistent clock
    # parameters, so they are estimated by averaging the cross-correlation
    # over a burst of short sync frames (fresh payloads and noise, same
    # geometry and offsets).
    n_sync = int(p.get("sync_frames", 128))
    m_sync = int(p.get("sync_symbols", 16))
    num_sync = dataclasses.replace(num, num_symbols=m_sync)

    passive_synced = dataclasses.replace(
        passive_link,
        sync_error=dataclasses.replace(passive_link.sync_error,
                                       timing_offset_s=to_true, cfo_hz=cfo_true))
    echo_a = synthesize_echo(frame_a, dataclasses.replace(active_link, snr_db=np.inf),
                             sites, [target], None).symbols
    echo_p = synthesize_echo(frame_p, dataclasses.replace(passive_synced, snr_db=np.inf),
                             sites, [target], None).symbols

    # Receiver noise level set by the active link's per-element SNR; the
    # passive echo amplitude realizes the swept passive per-element SNR.
    snr_a = 10.0 ** (active_link.snr_db / 10.0)
    sigma_w = math.sqrt(1.0 / snr_a)
    noise_scaled = math.sqrt(0.5) * sigma_w * noise

    # Channel responses and quotients split into fixed and
    # passive-amplitude-proportional parts.
    h_a = echo_a / frame_a.symbols
    h_p = echo_p / frame_p.symbols
    base_a = (echo_a + noise_scaled) / frame_a.symbols   # active tone + noise
    cross_a = echo_p / frame_a.symbols                   # passive interference
    base_p = (echo_a + noise_scaled) / frame_p.symbols   # active interference
    tone_p = echo_p / frame_p.symbols                    # passive tone

    active_data = _LinkTrialData.build(base_a, cross_a)
    n_pad, m_pad = zr * num.num_subcarriers, zd * num.num_symbols

    def padded_spectrum(values):
        return sfft.fft(sfft.ifft(values, n=n_pad, axis=0) * n_pad, n=m_pad, axis=1)

    spec_a_base = padded_spectrum(base_a)
    spec_a_cross = padded_spectrum(cross_a)

    genie_offsets = OffsetEstimate(timing_offset_s=to_true, cfo_hz=cfo_true,
                                   correlation_score=0.0)
    genie_base = compensate(ChannelMatrix(values=base_p, numerology=num,
                                          link=passive_synced), genie_offsets)
    genie_tone = compensate(ChannelMatrix(values=tone_p, numerology=num,
                                          link=passive_synced), genie_offsets)
    spec_p_base = padded_spectrum(genie_base.values)
    spec_p_tone = padded_spectrum(genie_tone.values)

    solver = _bearing_range_solver(bs0, bearing)
    resampler = _cached_resampler(config_text, num, bs1, bs0, solver, zr)
    range_step = 1.0 / (n_pad * num.subcarrier_spacing_hz) * SPEED_OF_LIGHT / 2.0
    n_idx = np.arange(num.num_subcarriers)
    m_idx = np.arange(num.num_symbols)

    # The burst-averaged correlation matrix is quadratic in the passive
    # amplitude. With unit-modulus payloads the per-frame correlation is
    # C_k = |u_k + amp v_k|^2 R_k, R_k = frame_a conj(frame_p), so the
    # three coefficient matrices accumulate over the burst in chunks.
    from .frame import QPSK_POINTS
    sigma_c = math.sqrt(0.5) * sigma_w
    h_a16 = h_a[:, :m_sync]
    h_p16 = h_p[:, :m_sync]
    shape_sync = (num.num_subcarriers, m_sync)
    corr_q = [np.zeros(shape_sync, dtype=complex) for _ in range(3)]
    chunk = 24
    for start in range(0, n_sync, chunk):
        k = min(chunk, n_sync - start)
        fr_a_c = QPSK_POINTS[rng_payload.integers(0, 4, size=(k,) + shape_sync)]
        fr_p_c = QPSK_POINTS[rng_payload.integers(0, 4, size=(k,) + shape_sync)]
        w_c = (rng_noise.standard_normal((k,) + shape_sync)
               + 1j * rng_noise.standard_normal((k,) + shape_sync))
        u = fr_a_c * h_a16[None] + sigma_c * w_c
        v = fr_p_c * h_p16[None]
        r = fr_a_c * np.conj(fr_p_c)
        corr_q[0] += ((u.real ** 2 + u.imag ** 2) * r).sum(axis=0)
        corr_q[1] += (2.0 * (u * np.conj(v)).real * r).sum(axis=0)
        corr_q[2] += ((v.real ** 2 + v.imag ** 2) * r).sum(axis=0)
    corr_q = [q / n_sync for q in corr_q]

    out = np.empty((len(snrs), 4))
    for j, snr in enumerate(snrs):
        amp_p = math.sqrt(10.0 ** (float(snr) / 10.0) / snr_a)
        g_a = base_a + amp_p * cross_a
        g_p = base_p + amp_p * tone_p
        ga_cm = ChannelMatrix(values=g_a, numerology=num, link=active_link)
        gp_cm = ChannelMatrix(values=g_p, numerology=num, link=passive_synced)

        # Active estimate: zoomed 2-D peak for Doppler, exact-profile
        # polish for range.
        tau_c, f_a, _ = active_data.peak(amp_p, num, zr, zd)
        j_a = int(round(f_a * m_pad * num.symbol_duration_s)) % m_pad
        y_a = g_a @ np.exp(-2j * np.pi * m_idx * j_a / m_pad)

        def active_profile(ranges):
            ramp = np.exp(2j * np.pi * num.subcarrier_spacing_hz * np.outer(
                2.0 * np.atleast_1d(ranges) / SPEED_OF_LIGHT, n_idx))
            return np.abs(ramp @ y_a)

        r_hat_a = polish_peak_1d(active_profile,
                                 SPEED_OF_LIGHT * tau_c / 2.0, range_step)
        tau_a = 2.0 * r_hat_a / SPEED_OF_LIGHT
        v_hat_a = f_a * SPEED_OF_LIGHT / (2.0 * num.carrier_freq_hz)

        # Geometry predictions from the active estimate.
        p_hat = bs0 + r_hat_a * bearing
        u0 = (bs0 - p_hat) / np.linalg.norm(bs0 - p_hat)
        v_vec = (v_hat_a / float(heading @ u0)) * heading
        est_target = Target(position_m=tuple(p_hat), velocity_mps=tuple(v_vec))
        pred_dd = bistatic_delay(bs1, p_hat, bs0) - tau_a
        pred_fd = bistatic_doppler(est_target, bs1, bs0, num.carrier_freq_hz) - f_a

        rd_a = RangeDopplerMap(
            magnitudes=np.abs(spec_a_base + amp_p * spec_a_cross),
            numerology=num, zero_pad_range=zr, zero_pad_doppler=zd)

        # The offsets persist over the burst, so the per-frame correlation
        # matrices share one tone and average coherently (noise down by
        # sqrt of the burst length).
        corr = ChannelMatrix(
            values=corr_q[0] + amp_p * corr_q[1] + amp_p * amp_p * corr_q[2],
            numerology=num_sync)
        offsets = correlation_offsets(corr, pred_dd, pred_fd, zero_pad=(1, 1))
        comp = compensate(gp_cm, offsets)
        fused = fuse_active_passive(ga_cm, comp, bs1, bs0, solver,
                                    zero_pad=(zr, zd), rd_active=rd_a,
                                    resampler=resampler)

        rd_genie = RangeDopplerMap(
            magnitudes=np.abs(spec_p_base + amp_p * spec_p_tone),
            numerology=num, zero_pad_range=zr, zero_pad_doppler=zd)
        genie_cm = ChannelMatrix(
            values=genie_base.values + amp_p * genie_tone.values,
            numerology=num, link=passive_synced)
        fused_genie = fuse_active_passive(ga_cm, genie_cm, bs1, bs0, solver,
                                          zero_pad=(zr, zd), rd_active=rd_a,
                                          rd_passive=rd_genie,
                                          resampler=resampler)

        # Passive-only baseline: genie-compensated link through the same
        # resampled-profile estimator (fusion with zero active weight).
        j_p = int(np.argmax(rd_genie.magnitudes.max(axis=0)))
        y_p = resampler.doppler_column(genie_cm.values, j_p, m_pad)
        prof_p = np.zeros(rd_genie.magnitudes.shape[0])
        prof_p[resampler.inside] = np.abs(resampler._ramp @ y_p)
        r_coarse = _profile_peak_delay(prof_p, rd_genie.delay_spacing_s) \
            * SPEED_OF_LIGHT / 2.0
        r_passive = polish_peak_1d(lambda r: resampler.profile_at(y_p, r),
                                   r_coarse, range_step)

        out[j] = (
            ((r_hat_a - r_true) / r_true) ** 2,
            ((r_passive - r_true) / r_true) ** 2,
            ((fused.range_m - r_true) / r_true) ** 2,
            ((fused_genie.range_m - r_true) / r_true) ** 2,
        )
    return out


def exp_fig6(config: ScenarioConfig, trials: int | None = None,
             seed: int | None = None, workers: int = 1) -> SweepResult:
    """Ranging NMSE of active-only, passive-only, and CSCC fusion."""
    trials = config.trials if trials is None else trials
    seed = config.master_seed if seed is None else seed
    p = config.experiment_params
    snrs = _sweep_values(float(p.get("passive_snr_start_db", -20.0)),
                         float(p.get("passive_snr_stop_db", 20.0)),
                         float(p.get("passive_snr_step_db", 2.0)))
    text = serialize_scenario(config)
    args = [(text, t, seed, tuple(float(s) for s in snrs)) for t in range(trials)]
    per_trial = _run_trials(_fig6_trial, args, workers)
    sq = np.stack(per_trial)  # (trials, points, 4)

    digest = config_hash(config)
    rows = []
    for j, snr in enumerate(snrs):
        e = sq[:, j, :]
        ses = [float(np.std(e[:, k], ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
               for k in range(3)]
        rows.append((
            float(snr),
            float(e[:, 0].mean()), float(e[:, 1].mean()),
            float(e[:, 2].mean()), float(e[:, 3].mean()),
            *ses,
            trials, seed, digest,
        ))
    return SweepResult(sweep_name="passive_snr_db", columns=_FIG6_COLUMNS,
                       rows=tuple(rows), trials=trials, seed=seed,
                       config_digest=digest)


# ---------------------------------------------------------------------------
# fig5: beam-registration gain vs sensing-unit size (deterministic).
# ---------------------------------------------------------------------------

_FIG5_COLUMNS = (
    "side_m", "gain_perfect", "gain_baba", "gain_conventional",
    "trials", "seed", "config_hash",
)


def exp_fig5(config: ScenarioConfig, trials: int | None = None,
             seed: int | None = None, workers: int = 1) -> SweepResult:
    """Fused echo power gain for perfect / BABA / conventional beams."""
    seed = config.master_seed if seed is None else seed
    p = config.experiment_params
    sides = _sweep_values(float(p.get("side_start_m", 1.0)),
                          float(p.get("side_stop_m", 10.0)),
                          float(p.get("side_step_m", 0.5)))
    center = np.asarray(p.get("area_center_m", [0.0, 0.0, 0.0]), dtype=float)
    n_bs = len(config.sites)
    if n_bs == 0:
        raise ValueError("fig5 requires at least one site")
    geometry = ArrayGeometry(rows=config.sites[0].array_rows,
                             cols=config.sites[0].array_cols,
                             spacing_wl=config.sites[0].element_spacing_wavelengths)

    digest = config_hash(config)
    rows = []
    eff_cache: dict = {}
    for side in sides:
        area = SensingArea(center_m=tuple(center), side_m=float(side))
        total_baba = 0.0
        total_conv = 0.0
        for site in config.sites:
            width = required_width(area, site.position)
            key = round(width, 12)
            if key not in eff_cache:
                baba_bw, _ = synth_baba(geometry, 0.0, 0.0, width)
                conv_bw = synth_conventional(geometry, 0.0, 0.0)
                eff_cache[key] = (beam_efficiency(baba_bw, width),
                                  beam_efficiency(conv_bw, width))
            a_baba, a_conv = eff_cache[key]
            total_baba += a_baba
            total_conv += a_conv
        rows.append((
            float(side),
            float(n_bs),
            total_baba ** 2 / n_bs,
            total_conv ** 2 / n_bs,
            1, seed, digest,
        ))
    return SweepResult(sweep_name="side_m", columns=_FIG5_COLUMNS,
                       rows=tuple(rows), trials=1, seed=seed,
                       config_digest=digest)


# ---------------------------------------------------------------------------
# Dispatch and parallel execution.
# ---------------------------------------------------------------------------

_KINDS = {"fig5": exp_fig5, "fig6": exp_fig6, "fig7": exp_fig7}


def _limit_worker_threads():
    # Worker processes each pin their BLAS pools to one thread; the
    # parallelism comes from the process pool itself.
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(1)
    except ImportError:
        pass


def _run_trials(fn, args, workers: int):
    """Run per-trial workers; output order is fixed by trial index."""
    if workers <= 1:
        return [fn(a) for a in args]
    chunk = max(1, len(args) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers,
                             initializer=_limit_worker_threads) as pool:
        return list(pool.map(fn, args, chunksize=chunk))


def run_scenario(config: ScenarioConfig, trials: int | None = None,
                 seed: int | None = None, workers: int = 1) -> SweepResult:
    """Execute the experiment described by the config's [experiment] table."""
    kind = config.experiment_params.get("kind")
    if kind not in _KINDS:
        raise ValueError(
            f"experiment.kind must be one of {sorted(_KINDS)}, got {kind!r}")
    return _KINDS[kind](config, trials=trials, seed=seed, workers=workers)


# ---------------------------------------------------------------------------
# Debug dumps.
# ---------------------------------------------------------------------------

def dump_rdmap(config: ScenarioConfig, path, seed: int | None = None) -> None:
    """Write the first trial's first-link padded map with axis headers."""
    seed = config.master_seed if seed is None else seed
    num = config.numerology
    sites = {s.id: s for s in config.sites}
    link = config.links[0]
    frame = generate_frame(num, derive_rng_stream(seed, 0, "payload"))
    rx = synthesize_echo(frame, link, sites, list(config.targets),
                         derive_rng_stream(seed, 0, "noise"))
    from .rdmap import channel_quotient
    rd = range_doppler_map(channel_quotient(rx, frame))
    path = str(path)
    if path.endswith(".npy"):
        np.save(path, rd.magnitudes)
        return
    n_pad, m_pad = rd.magnitudes.shape
    doppler_axis = [rd.doppler_of_bin(j) for j in range(m_pad)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("delay_s\\doppler_hz," + ",".join(
            format(d, ".6g") for d in doppler_axis) + "\n")
        for i in range(n_pad):
            fh.write(format(rd.delay_of_bin(i), ".9g") + ","
                     + ",".join(format(v, ".6g") for v in rd.magnitudes[i]) + "\n")


def dump_pattern(config: ScenarioConfig, path, side_m: float | None = None) -> None:
    """Write an azimuth pattern cut (angle_deg, amplitude) for the BABA beam."""
    p = config.experiment_params
    side = float(side_m if side_m is not None else p.get("side_stop_m", 10.0))
    center = np.asarray(p.get("area_center_m", [0.0, 0.0, 0.0]), dtype=float)
    site = config.sites[0]
    geometry = ArrayGeometry(rows=site.array_rows, cols=site.array_cols,
                             spacing_wl=site.element_spacing_wavelengths)
    width = required_width(SensingArea(center_m=tuple(center), side_m=side),
                           site.position)
    bw, _ = synth_baba(geometry, 0.0, 0.0, width)
    scan = np.linspace(-np.pi / 3, np.pi / 3, 2001)
    amps = pattern(bw, scan, np.zeros_like(scan))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("angle_deg,amplitude\n")
        for angle, amp in zip(np.degrees(scan), amps):
            fh.write(f"{format(angle, '.6g')},{format(amp, '.9g')}\n")
