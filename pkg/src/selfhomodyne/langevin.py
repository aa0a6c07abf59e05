"""Stochastic time-domain simulation of the trapped particle's radial motion
and of the interferometric detector watching it.

The two radial degrees of freedom obey

    m x_i'' = -m w_i^2 x_i - m gamma x_i' + F_th,i + F_ba,i + F_fb,i + F_drv,i

with independent white thermal and back-action forces of the configured
one-sided PSDs.  The feedback force acts along the detection axis
q = (x + y)/sqrt(2) (or the orthogonal axis p for the forward channel) and
contains a viscous term -m*gamma_fb*dq_meas/dt and a spring term
-2 m alpha^2 q_meas; the factor 2 makes the per-axis spring coupling
-m alpha^2 (x + y), i.e. exactly the potential matrix diagonalized by
``modes.radial_modes``.  q_meas is the detector-derived position including
imprecision noise and, optionally, the sinusoidal fringe response.

Integrator: per step, external forces (feedback, back-action, drive) enter
as an impulse, then a half-step of exact damping+thermal Ornstein-Uhlenbeck,
an exact harmonic rotation, and a second OU half-step.  In the noiseless
undriven limit the map is the exact oscillator propagator; with the bath on,
the discrete stationary position and velocity variances of the thermal
oscillator are exact for any dt (fixed point of the O/2-R-O/2 map), so
equipartition holds without dt extrapolation.

Runs are deterministic: (config, seed) -> bit-identical Trajectory.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .constants import K_B
from .optics import OpticalSetup

__all__ = [
    "Bath",
    "FeedbackConfig",
    "DetectorModel",
    "Trajectory",
    "CalibrationResult",
    "gas_damping_rate",
    "thermal_force_psd",
    "white_force_samples",
    "simulate",
    "synthesize_detector",
    "run_calibration",
]

_INVSQ2 = 1.0 / math.sqrt(2.0)
_BLOCK = 1 << 16

# default forward-channel noise floor sits 38 dB above the self-homodyne one
_FORWARD_DB = 38.0


@dataclass(frozen=True)
class Bath:
    """Background gas: pressure, temperature, and the measured damping anchor
    through which gamma(p) = gamma_ref * p / p_ref scales linearly."""

    pressure: float = 2e-8          # [mbar]
    temperature: float = 300.0      # [K]
    damping_anchor: tuple = (1e-2, 2.0 * math.pi * 4.3)  # (mbar, rad/s)

    def __post_init__(self):
        if self.pressure < 0.0:
            raise ValueError("pressure must be >= 0")
        if self.temperature < 0.0:
            raise ValueError("temperature must be >= 0")
        p_ref, g_ref = self.damping_anchor
        if p_ref <= 0.0 or g_ref <= 0.0:
            raise ValueError("damping anchor must be positive")


@dataclass(frozen=True)
class FeedbackConfig:
    """Feedback loop: viscous gain, spring gain, loop delay, filter band, and
    which detector channel drives the loop."""

    cooling_rate: float = 0.0       # [rad/s], gain of the dq/dt term
    spring_gain: float = 0.0        # [rad/s], alpha of the spring term
    loop_delay: float = 0.0         # [s]
    filter_band: tuple = (300.0, 6400.0)  # [Hz]
    source_channel: str = "self-homodyne"

    def __post_init__(self):
        if self.cooling_rate < 0.0 or self.spring_gain < 0.0:
            raise ValueError("feedback gains must be >= 0")
        if self.loop_delay < 0.0:
            raise ValueError("loop delay must be >= 0")
        lo, hi = self.filter_band
        if not 0.0 <= lo < hi:
            raise ValueError("filter band must satisfy 0 <= f_lo < f_hi")
        if self.source_channel not in ("self-homodyne", "forward"):
            raise ValueError("source_channel must be 'self-homodyne' or 'forward'")

    @property
    def engaged(self) -> bool:
        return self.cooling_rate > 0.0 or self.spring_gain > 0.0


@dataclass(frozen=True)
class DetectorModel:
    """Detector channels and mirror servo mode.

    ``imprecision_self``/``imprecision_forward`` are position-referred noise
    floors [m^2/Hz] (0 = ideal detector; the forward default sits 38 dB above
    the self-homodyne floor).  In locked mode the mirror holds a mid-fringe
    point with R_s = (lambda/8)(2n+1), n = ``lock_setpoint_index``; in ramp
    mode it advances at ``ramp_rate``.
    """

    imprecision_self: float = 3.0e-24
    imprecision_forward: float | None = None
    fringe_nonlinearity: bool = False
    mirror_mode: str = "locked"
    ramp_rate: float = 0.0
    lock_setpoint_index: int = 0
    gain: float = 1.0

    def __post_init__(self):
        if self.imprecision_self < 0.0:
            raise ValueError("imprecision must be >= 0")
        if self.mirror_mode not in ("locked", "ramp"):
            raise ValueError("mirror_mode must be 'locked' or 'ramp'")
        if self.imprecision_forward is None:
            object.__setattr__(
                self, "imprecision_forward", self.imprecision_self * 10 ** (_FORWARD_DB / 10.0)
            )
        elif self.imprecision_forward < 0.0:
            raise ValueError("imprecision must be >= 0")


@dataclass
class Trajectory:
    """Uniformly sampled simulation record.  All series share one grid;
    sample k sits at t = k*dt."""

    dt: float
    x: np.ndarray
    y: np.ndarray
    q: np.ndarray
    volts_self: np.ndarray
    volts_fwd: np.ndarray
    mirror_d: np.ndarray
    rng_seed: int
    lock_lost: bool = False

    @property
    def time(self) -> np.ndarray:
        return np.arange(self.x.size) * self.dt

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.dt

    def to_csv(self, path) -> None:
        cols = (self.x, self.y, self.q, self.volts_self, self.volts_fwd, self.mirror_d)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "x", "y", "q", "volts_self", "volts_fwd", "mirror_d"])
            for k in range(self.x.size):
                row = [f"{k * self.dt:.17g}"] + [f"{c[k]:.17g}" for c in cols]
                writer.writerow(row)


@dataclass(frozen=True)
class CalibrationResult:
    """Fringe-scan calibration output."""

    volts_per_meter: float
    fringe_amplitude_volts: float
    fringe_frequency_hz: float
    fringes_covered: float
    offset_volts: float = 0.0

    @property
    def visibility(self) -> float:
        """Fringe contrast, amplitude over DC level."""
        if self.offset_volts == 0.0:
            return 0.0
        return self.fringe_amplitude_volts / self.offset_volts


def gas_damping_rate(bath: Bath) -> float:
    """Gas damping rate, linear in pressure through the measured anchor."""
    p_ref, g_ref = bath.damping_anchor
    if bath.pressure < 0.0:
        raise ValueError("pressure must be >= 0")
    return g_ref * bath.pressure / p_ref


def thermal_force_psd(bath: Bath, mass: float) -> float:
    """One-sided thermal force PSD, S = 4 kB T gamma m  [N^2/Hz]."""
    return 4.0 * K_B * bath.temperature * gas_damping_rate(bath) * mass


def white_force_samples(psd_level: float, dt: float, size: int, rng) -> np.ndarray:
    """Discrete white force samples whose one-sided PSD is ``psd_level``:
    each sample is N(0, psd/(2 dt))."""
    if psd_level < 0.0 or dt <= 0.0:
        raise ValueError("psd_level must be >= 0 and dt > 0")
    return rng.standard_normal(size) * math.sqrt(psd_level / (2.0 * dt))


def _effective_visibility(setup: OpticalSetup) -> float:
    """Fringe contrast of the detected signal: ideal two-field contrast
    2 rho/(1+rho^2) times the measured visibility."""
    rho = setup.mirror_reflectivity
    return setup.visibility * 2.0 * rho / (1.0 + rho * rho)


def _effective_wavenumber(setup: OpticalSetup) -> float:
    """Phase-per-displacement of the locked fringe,
    k_eff = (4 pi / lambda)(1 - theta_D^2/4)."""
    return (4.0 * math.pi / setup.wavelength) * (1.0 - setup.half_aperture**2 / 4.0)


def _locked_mirror_distance(setup: OpticalSetup, lock_index: int) -> tuple[float, int]:
    """Mirror offset closest to the configured distance that puts the one-way
    path on a mid-fringe point R_s = (lambda/8)(2m+1) with m matching the
    parity of ``lock_index`` (the parity selects the slope sign)."""
    lam = setup.wavelength
    m_float = ((setup.focal_length + setup.mirror_distance) * 8.0 / lam - 1.0) / 2.0
    m = int(round(m_float))
    if (m - lock_index) % 2 != 0:
        m += 1 if m_float > m else -1
    m = max(m, 0)
    d = (lam / 8.0) * (2 * m + 1) - setup.focal_length
    return d, m


def simulate(
    trap,
    bath: Bath,
    feedback: FeedbackConfig,
    detector: DetectorModel,
    setup: OpticalSetup,
    duration: float,
    dt: float,
    seed: int,
    initial_state: tuple | None = None,
    drive_force: float = 0.0,
    backaction_force_psd: float = 0.0,
) -> Trajectory:
    """Integrate the radial motion and synthesize both detector channels.

    ``trap`` is a modes.TrapConfig.  When ``initial_state`` (x, y, vx, vy) is
    None, positions and velocities are drawn from the thermal state at the
    bath temperature.  ``drive_force`` adds a deterministic tone at the trap
    drive frequency along the detection axis (micromotion stand-in, off by
    default).  ``backaction_force_psd`` is the one-sided radiation-pressure
    force PSD applied independently on each axis (use
    optics.backaction_psd(P, lambda)).  Deterministic for a given
    (arguments, seed).
    """
    from .modes import radial_modes  # local import, avoids cycle at module load

    if duration <= 0.0 or dt <= 0.0:
        raise ValueError("duration and dt must be positive")
    if backaction_force_psd < 0.0:
        raise ValueError("backaction_force_psd must be >= 0")
    n_steps = int(round(duration / dt))
    if n_steps < 2:
        raise ValueError("duration too short for the chosen dt")

    mode_sol = radial_modes(trap.secular_freq_x, trap.secular_freq_y, feedback.spring_gain)
    f_limit = mode_sol.freq_high / (2.0 * math.pi)
    if feedback.engaged:
        f_limit = max(f_limit, feedback.filter_band[1])
        if detector.mirror_mode != "locked":
            raise ValueError("feedback requires the locked mirror mode")
    if dt > 1.0 / (20.0 * f_limit):
        raise ValueError(
            f"dt = {dt:.3g} s too coarse: need dt <= {1.0 / (20.0 * f_limit):.3g} s "
            "(20 samples per fastest period/filter corner)"
        )

    gamma = gas_damping_rate(bath)
    rng = np.random.default_rng(seed)

    # thermal / damping half-step factors (exact OU)
    a_half = math.exp(-gamma * dt / 2.0)
    if gamma > 0.0 and bath.temperature > 0.0:
        sigma_v = math.sqrt(K_B * bath.temperature / trap.mass)
        ou_std = sigma_v * math.sqrt(-math.expm1(-gamma * dt))
    else:
        ou_std = 0.0

    return _integrate(
        trap, feedback, detector, setup, n_steps, dt, rng, seed,
        a_half, ou_std, initial_state, drive_force, backaction_force_psd,
        bath.temperature,
    )


def _integrate(
    trap, feedback, detector, setup, n_steps, dt, rng, seed,
    a_half, ou_std, initial_state, drive_force, s_ba, init_temperature,
):
    mass = trap.mass
    wx, wy = trap.secular_freq_x, trap.secular_freq_y
    lam = setup.wavelength

    # rotation constants (exact harmonic propagator)
    cx, sx = math.cos(wx * dt), math.sin(wx * dt)
    cy, sy = math.cos(wy * dt), math.sin(wy * dt)

    # detector fringe model
    v_eff = _effective_visibility(setup)
    k_eff = _effective_wavenumber(setup)
    gain = detector.gain
    amp_volts = gain * v_eff                       # fringe amplitude [detector units]
    slope = amp_volts * k_eff                      # mid-fringe slope [units/m]
    sigma_self = math.sqrt(detector.imprecision_self / (2.0 * dt))
    sigma_fwd = math.sqrt(detector.imprecision_forward / (2.0 * dt))

    locked = detector.mirror_mode == "locked"
    if locked:
        d_lock, m_lock = _locked_mirror_distance(setup, detector.lock_setpoint_index)
        lock_sign = 1.0 if m_lock % 2 == 0 else -1.0
    else:
        d_lock, lock_sign = setup.mirror_distance, 1.0
    ramp_rate = detector.ramp_rate

    # feedback constants
    fb_on = feedback.engaged
    gfb = feedback.cooling_rate
    spring = 2.0 * mass * feedback.spring_gain**2
    f_lo, f_hi = feedback.filter_band
    r_hp = math.exp(-2.0 * math.pi * f_lo * dt)
    a_lp = math.exp(-2.0 * math.pi * f_hi * dt)
    b_lp = 1.0 - a_lp
    n_delay = int(round(feedback.loop_delay / dt))
    forward_loop = feedback.source_channel == "forward"
    nonlin = detector.fringe_nonlinearity

    drive_w = 2.0 * math.pi * trap.drive_freq

    # initial conditions
    if initial_state is not None:
        x, y, vx, vy = (float(v) for v in initial_state)
    else:
        t0 = init_temperature
        x = rng.standard_normal() * math.sqrt(K_B * t0 / mass) / wx
        y = rng.standard_normal() * math.sqrt(K_B * t0 / mass) / wy
        vx = rng.standard_normal() * math.sqrt(K_B * t0 / mass)
        vy = rng.standard_normal() * math.sqrt(K_B * t0 / mass)

    # outputs
    out_x = np.empty(n_steps)
    out_y = np.empty(n_steps)
    out_q = np.empty(n_steps)
    out_vs = np.empty(n_steps)
    out_vf = np.empty(n_steps)
    out_d = np.empty(n_steps)

    # filter / delay state
    delay_line = [0.0] * n_delay  # circular buffer; read-then-write gives an n_delay-step lag
    delay_idx = 0
    prev_delayed = 0.0
    hp = 0.0
    hp_prev = 0.0
    vf = 0.0

    lock_lost = False
    lam_quarter = lam / 4.0
    dt_over_m = dt / mass
    inv_wx, inv_wy = 1.0 / wx, 1.0 / wy
    sin = math.sin
    cos = math.cos

    i0 = 0
    while i0 < n_steps:
        nblk = min(_BLOCK, n_steps - i0)
        normals = rng.standard_normal((nblk, 8))
        g1x = normals[:, 0].tolist()
        g2x = normals[:, 1].tolist()
        g1y = normals[:, 2].tolist()
        g2y = normals[:, 3].tolist()
        gbx = (normals[:, 4] * math.sqrt(s_ba / (2.0 * dt))).tolist()
        gby = (normals[:, 5] * math.sqrt(s_ba / (2.0 * dt))).tolist()
        nus = (normals[:, 6] * sigma_self).tolist()
        nuf = (normals[:, 7] * sigma_fwd).tolist()

        bx = [0.0] * nblk
        by = [0.0] * nblk
        bq = [0.0] * nblk
        bvs = [0.0] * nblk
        bvf = [0.0] * nblk
        bd = [0.0] * nblk

        for k in range(nblk):
            n = i0 + k
            t = n * dt
            q = (x + y) * _INVSQ2
            p = (x - y) * _INVSQ2
            nu_s = nus[k]
            nu_f = nuf[k]

            # detector outputs at this sample
            if locked:
                if nonlin:
                    meas_self = sin(k_eff * q) / k_eff + nu_s
                else:
                    meas_self = q + nu_s
                volts_self = lock_sign * slope * meas_self
                d_now = d_lock
                if abs(q) > lam_quarter:
                    lock_lost = True
            else:
                d_now = setup.mirror_distance + ramp_rate * t
                phase = 4.0 * math.pi * (setup.focal_length + d_now) / lam + k_eff * q
                volts_self = gain * (1.0 - v_eff * cos(phase)) + slope * nu_s
                meas_self = q + nu_s
            meas_fwd = p + nu_f
            volts_fwd = gain * meas_fwd

            bx[k] = x
            by[k] = y
            bq[k] = q
            bvs[k] = volts_self
            bvf[k] = volts_fwd
            bd[k] = d_now

            # feedback force along the loop's actuation axis; the damping
            # path uses the band-limited differentiator, the spring path the
            # raw delayed measurement (a low-pass lag on a spring force
            # anti-damps the modes at rate ~2 alpha^2/w_corner and would blow
            # up any weakly damped run)
            if fb_on:
                src = meas_fwd if forward_loop else meas_self
                if n_delay:
                    delayed = delay_line[delay_idx]
                    delay_line[delay_idx] = src
                    delay_idx = (delay_idx + 1) % n_delay
                else:
                    delayed = src
                hp = r_hp * (hp + delayed - prev_delayed)
                prev_delayed = delayed
                vf = a_lp * vf + b_lp * (hp - hp_prev) / dt
                hp_prev = hp
                u = -(mass * gfb * vf + spring * delayed)
            else:
                u = 0.0

            # drive always pushes along the detection axis; the feedback
            # pushes along its own loop axis (q for self, p for forward)
            drv = drive_force * cos(drive_w * t) * _INVSQ2 if drive_force != 0.0 else 0.0
            uax = u * _INVSQ2
            if forward_loop:
                fx = gbx[k] + drv + uax
                fy = gby[k] + drv - uax
            else:
                fx = gbx[k] + drv + uax
                fy = gby[k] + drv + uax

            # kick
            vx += dt_over_m * fx
            vy += dt_over_m * fy
            # OU half, exact rotation, OU half
            vx = a_half * vx + ou_std * g1x[k]
            vy = a_half * vy + ou_std * g1y[k]
            x, vx = x * cx + vx * inv_wx * sx, -x * wx * sx + vx * cx
            y, vy = y * cy + vy * inv_wy * sy, -y * wy * sy + vy * cy
            vx = a_half * vx + ou_std * g2x[k]
            vy = a_half * vy + ou_std * g2y[k]

        out_x[i0 : i0 + nblk] = bx
        out_y[i0 : i0 + nblk] = by
        out_q[i0 : i0 + nblk] = bq
        out_vs[i0 : i0 + nblk] = bvs
        out_vf[i0 : i0 + nblk] = bvf
        out_d[i0 : i0 + nblk] = bd
        i0 += nblk

    return Trajectory(
        dt=dt,
        x=out_x,
        y=out_y,
        q=out_q,
        volts_self=out_vs,
        volts_fwd=out_vf,
        mirror_d=out_d,
        rng_seed=seed,
        lock_lost=lock_lost,
    )


def synthesize_detector(
    q, setup: OpticalSetup, detector: DetectorModel, dt: float, rng=None
) -> np.ndarray:
    """Detector output for a given displacement series.

    Locked mode: AC-coupled mid-fringe signal proportional to
    sin(k_eff * q) plus noise equivalent to the configured imprecision
    referred to position.  Ramp mode: the raw fringe intensity as the mirror
    advances, 1 - V_eff * cos(4 pi (f + d(t))/lambda + k_eff q).
    """
    q = np.asarray(q, dtype=float)
    v_eff = _effective_visibility(setup)
    k_eff = _effective_wavenumber(setup)
    gain = detector.gain
    slope = gain * v_eff * k_eff
    if rng is None:
        noise = np.zeros_like(q)
    else:
        noise = rng.standard_normal(q.size) * math.sqrt(detector.imprecision_self / (2.0 * dt))
    if detector.mirror_mode == "locked":
        _, m_lock = _locked_mirror_distance(setup, detector.lock_setpoint_index)
        sign = 1.0 if m_lock % 2 == 0 else -1.0
        return sign * (gain * v_eff * np.sin(k_eff * q) + slope * noise)
    t = np.arange(q.size) * dt
    d_now = setup.mirror_distance + detector.ramp_rate * t
    phase = 4.0 * math.pi * (setup.focal_length + d_now) / setup.wavelength + k_eff * q
    return gain * (1.0 - v_eff * np.cos(phase)) + slope * noise


def run_calibration(trajectory: Trajectory, wavelength: float) -> CalibrationResult:
    """Extract the volts-per-meter scale from a mirror-ramp trajectory.

    Fits volts_self(t) = C0 + C1 cos(2 pi f t) + C2 sin(2 pi f t) with the
    fringe frequency refined from the FFT peak, and returns
    S = 4 pi A_volts / lambda for A_volts = sqrt(C1^2 + C2^2).
    """
    from scipy import optimize

    v = np.asarray(trajectory.volts_self, dtype=float)
    n = v.size
    if n < 16:
        raise ValueError("trajectory too short for calibration")
    dt = trajectory.dt
    duration = n * dt

    vc = v - v.mean()
    spec = np.abs(np.fft.rfft(vc))
    spec[0] = 0.0
    k_peak = int(np.argmax(spec))
    f0 = k_peak / duration

    tgrid = np.arange(n) * dt

    def residual(freq):
        w = 2.0 * math.pi * freq
        design = np.column_stack([np.ones(n), np.cos(w * tgrid), np.sin(w * tgrid)])
        coef, *_ = np.linalg.lstsq(design, v, rcond=None)
        r = v - design @ coef
        return float(r @ r)

    df = 1.0 / duration
    res = optimize.minimize_scalar(
        residual,
        bounds=(max(f0 - 1.5 * df, 0.1 * df), f0 + 1.5 * df),
        method="bounded",
        options={"xatol": df * 1e-12},
    )
    f_fit = float(res.x)
    # parabolic polish: the residual is locally quadratic in f, so the
    # three-point vertex lands on the minimum to float precision
    for h in (1e-4 * df, 1e-7 * df):
        r_m, r_0, r_p = residual(f_fit - h), residual(f_fit), residual(f_fit + h)
        denom = r_m - 2.0 * r_0 + r_p
        if denom > 0.0:
            shift = 0.5 * h * (r_m - r_p) / denom
            if abs(shift) < 2.0 * h:
                f_fit += shift
    w = 2.0 * math.pi * f_fit
    design = np.column_stack([np.ones(n), np.cos(w * tgrid), np.sin(w * tgrid)])
    coef, *_ = np.linalg.lstsq(design, v, rcond=None)
    amp = math.hypot(float(coef[1]), float(coef[2]))
    fringes = f_fit * duration
    if fringes < 1.0:
        raise ValueError(
            f"insufficient ramp travel: {fringes:.2f} fringes covered, need >= 1 "
            "(>= 2 recommended)"
        )
    return CalibrationResult(
        volts_per_meter=4.0 * math.pi * amp / wavelength,
        fringe_amplitude_volts=amp,
        fringe_frequency_hz=f_fit,
        fringes_covered=fringes,
        offset_volts=float(coef[0]),
    )
