//! Breathing-rate estimation from non-uniformly sampled CSI amplitudes:
//! low-pass filter, interpolate onto a uniform grid, FFT every subcarrier,
//! then let the subcarriers vote with weight exp(PAR).

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::csi::{CsiTrace, SUBCARRIERS};
use crate::error::{Error, Result};

pub const NO_BREATHING: f64 = -1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub window_s: f64,
    pub stride_s: f64,
    pub lowpass_cutoff_hz: f64,
    /// Breathing band `[lo, hi]` in Hz; DC is always excluded.
    pub band: (f64, f64),
    /// Share of the total vote weight the winning rate needs.
    pub majority: f64,
    /// FFT length is the next power of two of the grid length times this.
    pub zero_pad: usize,
    /// Lower bound on the interpolation grid spacing, seconds. Packets that
    /// arrive microseconds apart would otherwise blow up the FFT size.
    pub min_grid_s: f64,
    /// Subcarriers whose PAR falls below this vote for "nothing detected".
    pub par_floor: f64,
    /// Vote weight is `par_base ^ PAR`.
    pub par_base: f64,
    /// Votes this close together count for the same rate.
    pub vote_tolerance_bpm: f64,
    /// A rate needs at least this many subcarriers above `par_floor`. One
    /// noise subcarrier with a lucky PAR would otherwise carry the vote.
    pub min_voters: usize,
    /// Share a further rate needs in `detect_multiple`.
    pub secondary_share: f64,
    /// Half-width suppressed around a reported peak in `detect_multiple`,
    /// in units of the window's native resolution `1 / T`.
    pub suppress_bins: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            window_s: 30.0,
            stride_s: 1.0,
            lowpass_cutoff_hz: 1.0,
            band: (0.1, 1.0),
            majority: 0.5,
            zero_pad: 4,
            min_grid_s: 0.01,
            par_floor: 9.0,
            par_base: std::f64::consts::E,
            vote_tolerance_bpm: 0.5,
            min_voters: 2,
            secondary_share: 0.3,
            suppress_bins: 2.5,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.stride_s > 0.0 && self.window_s >= self.stride_s) {
            return bad(format!(
                "need window >= stride > 0, got window {} s, stride {} s",
                self.window_s, self.stride_s
            ));
        }
        let (lo, hi) = self.band;
        if !(lo >= 0.0 && lo < hi && hi <= self.lowpass_cutoff_hz) {
            return bad(format!(
                "need 0 <= lo < hi <= cutoff, got band [{lo}, {hi}] with cutoff {}",
                self.lowpass_cutoff_hz
            ));
        }
        if !(self.majority > 0.0 && self.majority <= 1.0) {
            return bad(format!("majority must be in (0, 1], got {}", self.majority));
        }
        if self.zero_pad == 0 {
            return bad("zero_pad must be >= 1".into());
        }
        if !(self.min_grid_s >= 0.0 && self.par_base > 1.0 && self.vote_tolerance_bpm >= 0.0) {
            return bad("min_grid_s >= 0, par_base > 1 and vote_tolerance_bpm >= 0 are required".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Spectrum {
    /// Hz, `k / (n_fft * d)`.
    pub freqs: Vec<f64>,
    pub mags: Vec<f64>,
    /// `1 / T` for the unpadded grid, the width of one unpadded bin.
    pub resolution_hz: f64,
}

impl Spectrum {
    pub fn bin_hz(&self) -> f64 {
        self.freqs.get(1).copied().unwrap_or(0.0)
    }

    /// Index of the largest magnitude in `[lo, hi]`, DC excluded.
    pub fn band_argmax(&self, lo: f64, hi: f64) -> Option<usize> {
        (1..self.freqs.len())
            .filter(|&k| self.freqs[k] >= lo && self.freqs[k] <= hi)
            .max_by(|&a, &b| self.mags[a].total_cmp(&self.mags[b]).then(b.cmp(&a)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubcarrierPeak {
    pub freq_hz: f64,
    pub par: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BreathEstimate {
    pub window_start_s: f64,
    pub window_end_s: f64,
    /// Breaths per minute, or -1 when nothing is detected.
    pub rate_bpm: f64,
    /// Share of the total vote weight behind the best rate.
    pub weight: f64,
    #[serde(skip)]
    pub peaks: Vec<SubcarrierPeak>,
}

impl BreathEstimate {
    pub fn detected(&self) -> bool {
        self.rate_bpm != NO_BREATHING
    }
}

fn check_series(t: &[f64], x: &[f64]) -> Result<()> {
    if t.len() != x.len() {
        return Err(Error::Signal(format!("{} timestamps but {} values", t.len(), x.len())));
    }
    if t.len() < 2 {
        return Err(Error::Signal(format!("need at least 2 samples, got {}", t.len())));
    }
    if let Some(i) = (1..t.len()).find(|&i| !(t[i] > t[i - 1])) {
        return Err(Error::Signal(format!(
            "timestamps must strictly increase ({} then {})",
            t[i - 1],
            t[i]
        )));
    }
    Ok(())
}

/// Gaussian kernel smoother evaluated at the original timestamps. The
/// kernel width puts the -3 dB point at `cutoff_hz`; 0.3 Hz passes at 0.97
/// and 5 Hz is cut to about 2e-4 when the cutoff is 1 Hz.
pub fn lowpass(t: &[f64], x: &[f64], cutoff_hz: f64) -> Result<Vec<f64>> {
    check_series(t, x)?;
    if !(cutoff_hz > 0.0) {
        return Err(Error::Signal(format!("cutoff must be > 0, got {cutoff_hz}")));
    }
    // exp(-2 pi^2 s^2 f^2) = 1/sqrt(2) at f = cutoff
    let sigma = (std::f64::consts::LN_2 / 4.0).sqrt() / (std::f64::consts::PI * cutoff_hz);
    let reach = 4.0 * sigma;
    let inv = -0.5 / (sigma * sigma);
    let mut out = Vec::with_capacity(x.len());
    let mut lo = 0;
    for &ti in t {
        while t[lo] < ti - reach {
            lo += 1;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for j in lo..t.len() {
            let dt = t[j] - ti;
            if dt > reach {
                break;
            }
            let w = (dt * dt * inv).exp();
            num += w * x[j];
            den += w;
        }
        out.push(num / den);
    }
    Ok(out)
}

/// The gap-filling step as written: with `d` the smallest gap, every larger
/// gap gets `ceil(gap / d) - 1` evenly spaced, linearly interpolated points.
/// Original samples are kept as they are.
pub fn interpolate_uniform(t: &[f64], x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_series(t, x)?;
    let d = min_gap(t);
    let mut to = vec![t[0]];
    let mut xo = vec![x[0]];
    for i in 1..t.len() {
        let gap = t[i] - t[i - 1];
        if gap > d {
            let count = ((gap / d) - 1e-9).ceil() as usize - 1;
            for j in 1..=count {
                let frac = j as f64 / (count + 1) as f64;
                to.push(t[i - 1] + frac * gap);
                xo.push(x[i - 1] + frac * (x[i] - x[i - 1]));
            }
        }
        to.push(t[i]);
        xo.push(x[i]);
    }
    Ok((to, xo))
}

fn min_gap(t: &[f64]) -> f64 {
    t.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

/// Linear interpolation onto `t0 + m d`, spanning the samples.
fn resample(t: &[f64], x: &[f64], d: f64) -> Vec<f64> {
    let n = ((t[t.len() - 1] - t[0]) / d + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for m in 0..n {
        let tm = t[0] + m as f64 * d;
        while j + 2 < t.len() && t[j + 1] <= tm {
            j += 1;
        }
        let (t0, t1) = (t[j], t[j + 1]);
        let frac = ((tm - t0) / (t1 - t0)).clamp(0.0, 1.0);
        out.push(x[j] + frac * (x[j + 1] - x[j]));
    }
    out
}

/// Reusable FFT state for repeated transforms of similar sizes.
pub struct SpectrumEngine {
    planner: FftPlanner<f64>,
    buf: Vec<Complex<f64>>,
}

impl Default for SpectrumEngine {
    fn default() -> Self {
        Self::new()
    }
}

impl SpectrumEngine {
    pub fn new() -> Self {
        SpectrumEngine {
            planner: FftPlanner::new(),
            buf: Vec::new(),
        }
    }

    /// Non-uniform spectrum: the samples are linearly interpolated onto a
    /// uniform grid of spacing `d` (the smallest gap, floored at
    /// `min_grid_s`), the mean is removed, and the zero-padded series goes
    /// through a standard FFT. One-sided magnitudes, `freqs[k] = k / (N d)`.
    pub fn nufft(&mut self, t: &[f64], x: &[f64], cfg: &PipelineConfig) -> Result<Spectrum> {
        check_series(t, x)?;
        let d = min_gap(t).max(cfg.min_grid_s);
        let grid = resample(t, x, d);
        let mean = grid.iter().sum::<f64>() / grid.len() as f64;
        let n_fft = grid.len().next_power_of_two() * cfg.zero_pad.max(1);
        self.buf.clear();
        self.buf.extend(grid.iter().map(|v| Complex::new(v - mean, 0.0)));
        self.buf.resize(n_fft, Complex::new(0.0, 0.0));
        self.planner.plan_fft_forward(n_fft).process(&mut self.buf);
        let half = n_fft / 2 + 1;
        let scale = 1.0 / (n_fft as f64 * d);
        Ok(Spectrum {
            freqs: (0..half).map(|k| k as f64 * scale).collect(),
            mags: self.buf[..half].iter().map(|c| c.norm()).collect(),
            resolution_hz: 1.0 / (grid.len() as f64 * d),
        })
    }

    /// Low-passed spectra of every subcarrier over the samples in
    /// `[start_s, end_s)`. `None` if the window holds fewer than 2 samples.
    pub fn window_spectra(
        &mut self,
        trace: &CsiTrace,
        start_s: f64,
        end_s: f64,
        cfg: &PipelineConfig,
    ) -> Result<Option<Vec<Spectrum>>> {
        let lo = trace.samples.partition_point(|s| s.t < start_s);
        let hi = trace.samples.partition_point(|s| s.t < end_s);
        if hi - lo < 2 {
            return Ok(None);
        }
        let window = &trace.samples[lo..hi];
        let t: Vec<f64> = window.iter().map(|s| s.t).collect();
        let mut spectra = Vec::with_capacity(SUBCARRIERS);
        let mut x = Vec::with_capacity(window.len());
        for k in 0..SUBCARRIERS {
            x.clear();
            x.extend(window.iter().map(|s| s.amp[k]));
            let filtered = lowpass(&t, &x, cfg.lowpass_cutoff_hz)?;
            spectra.push(self.nufft(&t, &filtered, cfg)?);
        }
        Ok(Some(spectra))
    }
}

pub fn nufft(t: &[f64], x: &[f64], cfg: &PipelineConfig) -> Result<Spectrum> {
    SpectrumEngine::new().nufft(t, x, cfg)
}

struct Vote {
    freq_hz: f64,
    /// ln of the vote weight.
    log_w: f64,
}

fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn band_bins(spectrum: &Spectrum, cfg: &PipelineConfig) -> Vec<usize> {
    (1..spectrum.freqs.len())
        .filter(|&k| spectrum.freqs[k] >= cfg.band.0 && spectrum.freqs[k] <= cfg.band.1)
        .collect()
}

fn check_grid(spectra: &[Spectrum]) -> Result<()> {
    let first = spectra
        .first()
        .ok_or_else(|| Error::Signal("no spectra to vote on".into()))?;
    if spectra
        .iter()
        .any(|s| s.freqs.len() != first.freqs.len() || s.bin_hz() != first.bin_hz())
    {
        return Err(Error::Signal("spectra do not share a frequency grid".into()));
    }
    Ok(())
}

/// Peak frequency and PAR of one subcarrier over the unmasked band bins.
fn peak(spectrum: &Spectrum, bins: &[usize]) -> SubcarrierPeak {
    let power = |k: usize| spectrum.mags[k] * spectrum.mags[k];
    let &kmax = bins
        .iter()
        .max_by(|&&a, &&b| power(a).total_cmp(&power(b)).then(b.cmp(&a)))
        .expect("non-empty band");
    let p_peak = power(kmax);
    let rest = bins.len() - 1;
    let p_ave = if rest == 0 {
        0.0
    } else {
        (bins.iter().map(|&k| power(k)).sum::<f64>() - p_peak).max(0.0) / rest as f64
    };
    let par = if p_ave > 0.0 {
        p_peak / p_ave
    } else if p_peak > 0.0 {
        f64::MAX
    } else {
        0.0
    };
    SubcarrierPeak {
        freq_hz: spectrum.freqs[kmax],
        par,
    }
}

struct Tally {
    /// Frequency of the strongest vote in the best cluster.
    freq_hz: f64,
    share: f64,
    peaks: Vec<SubcarrierPeak>,
}

/// Weighted vote over per-subcarrier peaks restricted to `masks[k]` bins.
fn tally(spectra: &[Spectrum], masks: &[Vec<usize>], cfg: &PipelineConfig) -> Result<Option<Tally>> {
    let ln_base = cfg.par_base.ln();
    let mut peaks = Vec::with_capacity(spectra.len());
    let mut votes = Vec::new();
    let mut abstain = Vec::new();
    for (s, bins) in spectra.iter().zip(masks) {
        if bins.is_empty() {
            continue;
        }
        let p = peak(s, bins);
        // PAR can be astronomically large for a noiseless tone; keep the
        // exponent finite.
        let log_w = p.par.min(1e300 / ln_base) * ln_base;
        if p.par >= cfg.par_floor {
            votes.push(Vote {
                freq_hz: p.freq_hz,
                log_w,
            });
        } else {
            abstain.push(log_w);
        }
        peaks.push(p);
    }
    if peaks.is_empty() {
        return Ok(None);
    }
    let total = log_sum_exp(votes.iter().map(|v| v.log_w).chain(abstain.iter().copied()));
    let tol_hz = cfg.vote_tolerance_bpm / 60.0;
    let mut best: Option<(f64, usize)> = None;
    for (i, v) in votes.iter().enumerate() {
        let cluster: Vec<f64> = votes
            .iter()
            .filter(|u| (u.freq_hz - v.freq_hz).abs() <= tol_hz + 1e-12)
            .map(|u| u.log_w)
            .collect();
        if cluster.len() < cfg.min_voters {
            continue;
        }
        let support = log_sum_exp(cluster.into_iter());
        let better = match best {
            None => true,
            Some((s, j)) => support > s || (support == s && votes[i].log_w > votes[j].log_w),
        };
        if better {
            best = Some((support, i));
        }
    }
    let (freq_hz, share) = match best {
        Some((support, i)) => {
            let centre = votes[i].freq_hz;
            let strongest = votes
                .iter()
                .filter(|u| (u.freq_hz - centre).abs() <= tol_hz + 1e-12)
                .max_by(|a, b| a.log_w.total_cmp(&b.log_w))
                .expect("contains itself");
            (strongest.freq_hz, (support - total).exp())
        }
        None => (0.0, 0.0),
    };
    Ok(Some(Tally { freq_hz, share, peaks }))
}

/// Soft vote across subcarriers. Each subcarrier votes for its in-band peak
/// with weight `par_base ^ PAR`, PAR being peak power over the mean power of
/// the other band bins. The best-supported rate is reported if it carries at
/// least `majority` of the total weight, otherwise -1.
pub fn subcarrier_vote(spectra: &[Spectrum], cfg: &PipelineConfig) -> Result<BreathEstimate> {
    check_grid(spectra)?;
    let bins = band_bins(&spectra[0], cfg);
    if bins.len() < 2 {
        return Err(Error::Signal(format!(
            "band [{}, {}] Hz holds {} bins of {:.4} Hz; at least 2 are needed",
            cfg.band.0,
            cfg.band.1,
            bins.len(),
            spectra[0].bin_hz()
        )));
    }
    let masks = vec![bins; spectra.len()];
    let t = tally(spectra, &masks, cfg)?.expect("band is non-empty");
    let rate_bpm = if t.share >= cfg.majority && t.share > 0.0 {
        60.0 * t.freq_hz
    } else {
        NO_BREATHING
    };
    Ok(BreathEstimate {
        window_start_s: 0.0,
        window_end_s: 0.0,
        rate_bpm,
        weight: t.share,
        peaks: t.peaks,
    })
}

/// Repeated voting for several people: report the winning rate, remove its
/// main lobe from every subcarrier, vote again. Stops after `max_k` rates or
/// when the best rate carries less than `secondary_share` of the weight.
pub fn detect_multiple(spectra: &[Spectrum], cfg: &PipelineConfig, max_k: usize) -> Result<Vec<(f64, f64)>> {
    check_grid(spectra)?;
    let bins = band_bins(&spectra[0], cfg);
    let half_width = cfg.suppress_bins * spectra[0].resolution_hz;
    let mut masks = vec![bins; spectra.len()];
    let mut found = Vec::new();
    while found.len() < max_k {
        let Some(t) = tally(spectra, &masks, cfg)? else {
            break;
        };
        if t.share < cfg.secondary_share || t.share == 0.0 {
            break;
        }
        found.push((60.0 * t.freq_hz, t.share));
        for (mask, s) in masks.iter_mut().zip(spectra) {
            mask.retain(|&k| (s.freqs[k] - t.freq_hz).abs() > half_width);
        }
    }
    Ok(found)
}

/// `floor((duration - window) / stride) + 1`, for `duration >= window`.
pub fn window_count(duration_s: f64, window_s: f64, stride_s: f64) -> usize {
    if duration_s + 1e-9 < window_s {
        return 0;
    }
    (((duration_s - window_s) / stride_s + 1e-9).floor() as usize) + 1
}

/// Start of the first window: the first sample time rounded down to the
/// stride.
fn origin(trace: &CsiTrace, cfg: &PipelineConfig) -> f64 {
    (trace.samples[0].t / cfg.stride_s).floor() * cfg.stride_s
}

/// Window start times for a trace.
pub fn window_starts(trace: &CsiTrace, cfg: &PipelineConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if trace.samples.len() < 2 {
        return Err(Error::TraceTooShort {
            duration_s: 0.0,
            min_s: cfg.window_s,
        });
    }
    let o = origin(trace, cfg);
    let duration = trace.samples[trace.len() - 1].t - o;
    let n = window_count(duration, cfg.window_s, cfg.stride_s);
    if n == 0 {
        return Err(Error::TraceTooShort {
            duration_s: duration,
            min_s: cfg.window_s,
        });
    }
    Ok((0..n).map(|i| o + i as f64 * cfg.stride_s).collect())
}

/// One estimate per stride; the first covers `[origin, origin + window)`.
pub fn sliding_estimate(trace: &CsiTrace, cfg: &PipelineConfig) -> Result<Vec<BreathEstimate>> {
    let starts = window_starts(trace, cfg)?;
    let mut engine = SpectrumEngine::new();
    starts
        .into_iter()
        .map(|start| {
            let end = start + cfg.window_s;
            let est = match engine.window_spectra(trace, start, end, cfg)? {
                Some(spectra) => subcarrier_vote(&spectra, cfg)?,
                None => BreathEstimate {
                    window_start_s: 0.0,
                    window_end_s: 0.0,
                    rate_bpm: NO_BREATHING,
                    weight: 0.0,
                    peaks: Vec::new(),
                },
            };
            Ok(BreathEstimate {
                window_start_s: start,
                window_end_s: end,
                ..est
            })
        })
        .collect()
}

/// Agreement between estimates and a known rate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AccuracySummary {
    pub truth_bpm: f64,
    pub windows: usize,
    pub detected: usize,
    /// Windows within 1 bpm of the truth, over all windows.
    pub within_1bpm: f64,
    /// Mean of `1 - |est - truth| / truth`, floored at 0; a -1 window scores 0.
    pub mean_accuracy: f64,
    /// Mean of `est / truth` over detected windows.
    pub mean_ratio: f64,
    pub mean_abs_error_bpm: f64,
}

pub fn accuracy(estimates: &[BreathEstimate], truth_bpm: f64) -> AccuracySummary {
    let n = estimates.len().max(1) as f64;
    let detected: Vec<f64> = estimates.iter().filter(|e| e.detected()).map(|e| e.rate_bpm).collect();
    let within = detected.iter().filter(|r| (*r - truth_bpm).abs() <= 1.0).count();
    let acc: f64 = detected
        .iter()
        .map(|r| (1.0 - (r - truth_bpm).abs() / truth_bpm).max(0.0))
        .fold(0.0, |a, b| a + b);
    let nd = detected.len().max(1) as f64;
    AccuracySummary {
        truth_bpm,
        windows: estimates.len(),
        detected: detected.len(),
        within_1bpm: within as f64 / n,
        mean_accuracy: acc / n,
        mean_ratio: detected.iter().map(|r| r / truth_bpm).sum::<f64>() / nd,
        mean_abs_error_bpm: detected.iter().map(|r| (r - truth_bpm).abs()).sum::<f64>() / nd,
    }
}
