//! Time-domain photocurrent synthesis and a spectrum-analyser emulation.
//!
//! The trace is built one analysis segment (1/B seconds, `N = fs/B` samples)
//! at a time, each from its own generator stream, so long runs can be
//! streamed without holding the trace in memory and results do not depend on
//! how segments are distributed over threads.
//!
//! Per sample, with ζ a band-limited classical relative-amplitude noise:
//!
//! ```text
//! i[n] = i0·(1 + δ_m·cos(2πΩn/fs))·(1 + 2ζ[n]) + shot[n] + elec[n]
//! ```
//!
//! Shot noise is white with one-sided PSD 2q·i0·Φ, i.e. per-sample variance
//! q·i0·Φ·fs. Electronic noise is white with per-sample variance
//! 2q²·var_n·fs/B, so a bin of width B carries 2q²·var_n of it. ζ is periodic
//! over a segment: its mean has variance var_h and every harmonic up to the
//! cutoff has E|c_k|² = var_h.

use std::io::{self, Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::freqsim::{SpectralAverage, SpectrumTriplet};
use crate::params::{Scenario, CODATA};
use crate::rng::{derive_seed, stream, SimRng};

#[derive(Debug, Error)]
pub enum TimeSimError {
    #[error("sample rate {sample_rate} Hz must exceed 2·(Ω + B) = {limit} Hz")]
    Aliasing { sample_rate: f64, limit: f64 },
    #[error("classical-noise cutoff {cutoff} Hz must lie below Ω − B = {limit} Hz")]
    CutoffTooHigh { cutoff: f64, limit: f64 },
    #[error("sample rate {sample_rate} Hz is not an integer multiple of the RBW {rbw} Hz")]
    NonIntegerSegment { sample_rate: f64, rbw: f64 },
    #[error("requested trace is empty")]
    EmptyTrace,
    #[error("duration {duration} s is shorter than one RBW segment ({segment} s)")]
    TooShort { duration: f64, segment: f64 },
    #[error("need {needed} samples for the requested averaging, trace has {have}")]
    InsufficientSamples { needed: usize, have: usize },
    #[error("floor offset {offset} Hz must exceed the RBW {rbw} Hz")]
    Overlap { offset: f64, rbw: f64 },
    #[error("frequency {freq} Hz is outside the analysed spectrum")]
    OutOfSpan { freq: f64 },
    #[error("invalid setting: {0}")]
    Invalid(String),
    #[error("malformed trace file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeTrace {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

impl TimeTrace {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Flat little-endian binary: sample rate (f64), count (u64), samples (f64).
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&self.sample_rate.to_le_bytes())?;
        w.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        for x in &self.samples {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, TimeSimError> {
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let sample_rate = f64::from_le_bytes(word);
        r.read_exact(&mut word)?;
        let count = u64::from_le_bytes(word);
        if !(sample_rate > 0.0) {
            return Err(TimeSimError::Format(format!("sample rate {sample_rate}")));
        }
        let count = usize::try_from(count)
            .map_err(|_| TimeSimError::Format(format!("sample count {count}")))?;
        let mut samples = Vec::with_capacity(count.min(1 << 24));
        for _ in 0..count {
            r.read_exact(&mut word).map_err(|e| match e.kind() {
                io::ErrorKind::UnexpectedEof => {
                    TimeSimError::Format(format!("truncated payload, expected {count} samples"))
                }
                _ => TimeSimError::Io(e),
            })?;
            samples.push(f64::from_le_bytes(word));
        }
        if r.read(&mut word)? != 0 {
            return Err(TimeSimError::Format("trailing bytes after payload".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["time_s", "current_a"])?;
        for (n, x) in self.samples.iter().enumerate() {
            out.write_record([(n as f64 / self.sample_rate).to_string(), x.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Power per RBW bin.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpectrum {
    pub freqs: Vec<f64>,
    pub powers: Vec<f64>,
    pub rbw: f64,
    pub m_avg: f64,
}

impl NoiseSpectrum {
    /// Index of the bin containing `freq`.
    pub fn bin_index(&self, freq: f64) -> Result<usize, TimeSimError> {
        let first = match self.freqs.first() {
            Some(f) => *f,
            None => return Err(TimeSimError::OutOfSpan { freq }),
        };
        let k = ((freq - first) / self.rbw).round();
        if k < 0.0 || k as usize >= self.freqs.len() {
            return Err(TimeSimError::OutOfSpan { freq });
        }
        Ok(k as usize)
    }

    pub fn power_at(&self, freq: f64) -> Result<f64, TimeSimError> {
        Ok(self.powers[self.bin_index(freq)?])
    }

    /// Subtracts a dark-trace spectrum bin by bin.
    pub fn subtract_electronic(&self, dark: &NoiseSpectrum) -> Result<Self, TimeSimError> {
        if dark.freqs != self.freqs {
            return Err(TimeSimError::Invalid(
                "dark spectrum covers different bins".into(),
            ));
        }
        Ok(Self {
            powers: self
                .powers
                .iter()
                .zip(&dark.powers)
                .map(|(p, e)| p - e)
                .collect(),
            ..self.clone()
        })
    }

    /// Moves the trace from one shot-noise level to another by subtracting
    /// their difference from every bin.
    pub fn correct_shot_level(&self, measured_shot: f64, reference_shot: f64) -> Self {
        let shift = measured_shot - reference_shot;
        Self {
            powers: self.powers.iter().map(|p| p - shift).collect(),
            ..self.clone()
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["freq_hz", "power_w"])?;
        for (f, p) in self.freqs.iter().zip(&self.powers) {
            out.write_record([f.to_string(), p.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Sampling and classical-noise settings for synthesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    pub sample_rate: f64,
    pub cutoff: f64,
}

pub const DEFAULT_CLASSICAL_CUTOFF_HZ: f64 = 2e6;

impl TraceOptions {
    /// A sample rate that is a multiple of 256·B and leaves room above Ω for
    /// a floor bin at Ω + 2.5 MHz at the reference settings.
    pub fn auto(s: &Scenario) -> Self {
        let b = s.rbw();
        let target = 2.5 * (s.modulation.omega_mod() + b) / b;
        let n = (target / 256.0).ceil() * 256.0;
        Self {
            sample_rate: n * b,
            cutoff: DEFAULT_CLASSICAL_CUTOFF_HZ,
        }
    }

    pub fn with_sample_rate(self, sample_rate: f64) -> Self {
        Self {
            sample_rate,
            ..self
        }
    }

    pub fn with_cutoff(self, cutoff: f64) -> Self {
        Self { cutoff, ..self }
    }
}

fn segment_len(sample_rate: f64, rbw: f64) -> Result<usize, TimeSimError> {
    let n = sample_rate / rbw;
    if !(n >= 2.0) || (n - n.round()).abs() > 1e-6 * n {
        return Err(TimeSimError::NonIntegerSegment { sample_rate, rbw });
    }
    Ok(n.round() as usize)
}

fn gauss(rng: &mut SimRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Generates analysis segments of one trace on demand.
pub struct TraceSource {
    n: usize,
    i0: f64,
    carrier: Vec<f64>,
    noise_sigma: f64,
    h_sigma: f64,
    harmonics: usize,
    ifft: Option<Arc<dyn Fft<f64>>>,
    seed: u64,
    sample_rate: f64,
}

impl TraceSource {
    /// Source for the illuminated detector, or for the dark detector
    /// (electronic noise only) when `dark` is set.
    pub fn new(
        s: &Scenario,
        opts: &TraceOptions,
        dark: bool,
        seed: u64,
    ) -> Result<Self, TimeSimError> {
        let omega = s.modulation.omega_mod();
        let b = s.rbw();
        let fs = opts.sample_rate;
        let limit = 2.0 * (omega + b);
        if !(fs > limit) {
            return Err(TimeSimError::Aliasing {
                sample_rate: fs,
                limit,
            });
        }
        if !(opts.cutoff >= 0.0) || opts.cutoff >= omega - b {
            return Err(TimeSimError::CutoffTooHigh {
                cutoff: opts.cutoff,
                limit: omega - b,
            });
        }
        let n = segment_len(fs, b)?;
        let i0 = if dark { 0.0 } else { s.i0() };
        let delta = s.delta_m();
        let carrier = (0..n)
            .map(|k| {
                let t = k as f64 / fs;
                i0 * (1.0 + delta * (2.0 * std::f64::consts::PI * omega * t).cos())
            })
            .collect();
        let q = CODATA.q;
        let shot = q * i0 * s.phi() * fs;
        let elec = 2.0 * q * q * s.detection.var_n() * fs / b;
        let h_sigma = if dark {
            0.0
        } else {
            s.detection.var_h().sqrt()
        };
        let harmonics = ((opts.cutoff / b).floor() as usize).min((n - 1) / 2);
        let ifft = (h_sigma > 0.0 && harmonics > 0).then(|| FftPlanner::new().plan_fft_inverse(n));
        Ok(Self {
            n,
            i0,
            carrier,
            noise_sigma: (shot + elec).sqrt(),
            h_sigma,
            harmonics,
            ifft,
            seed,
            sample_rate: fs,
        })
    }

    pub fn segment_len(&self) -> usize {
        self.n
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Writes segment `index` into `out` (length `segment_len`). `scratch` is
    /// reused between calls.
    pub fn fill(&self, index: u64, out: &mut [f64], scratch: &mut Vec<Complex64>) {
        debug_assert_eq!(out.len(), self.n);
        let mut rng = stream(self.seed, index);
        let zeta_mean = if self.h_sigma > 0.0 {
            self.h_sigma * gauss(&mut rng)
        } else {
            0.0
        };
        let with_harmonics = match &self.ifft {
            Some(fft) => {
                scratch.clear();
                scratch.resize(self.n, Complex64::new(0.0, 0.0));
                scratch[0] = Complex64::new(zeta_mean, 0.0);
                let half = self.h_sigma * std::f64::consts::FRAC_1_SQRT_2;
                for k in 1..=self.harmonics {
                    let c = Complex64::new(half * gauss(&mut rng), half * gauss(&mut rng));
                    scratch[k] = c;
                    scratch[self.n - k] = c.conj();
                }
                fft.process(scratch);
                true
            }
            None => false,
        };
        let normal = StandardNormal;
        for (k, x) in out.iter_mut().enumerate() {
            let zeta = if with_harmonics {
                scratch[k].re
            } else {
                zeta_mean
            };
            let noise: f64 = normal.sample(&mut rng);
            *x = self.carrier[k] * (1.0 + 2.0 * zeta) + self.noise_sigma * noise;
        }
    }

    pub fn mean_current(&self) -> f64 {
        self.i0
    }
}

/// Synthesises `duration` seconds of photocurrent.
pub fn synthesize(
    s: &Scenario,
    opts: &TraceOptions,
    duration: f64,
    seed: u64,
) -> Result<TimeTrace, TimeSimError> {
    synthesize_source(s, opts, duration, false, seed)
}

/// Synthesises the dark (electronic-noise only) detector output.
pub fn synthesize_dark(
    s: &Scenario,
    opts: &TraceOptions,
    duration: f64,
    seed: u64,
) -> Result<TimeTrace, TimeSimError> {
    synthesize_source(s, opts, duration, true, seed)
}

fn synthesize_source(
    s: &Scenario,
    opts: &TraceOptions,
    duration: f64,
    dark: bool,
    seed: u64,
) -> Result<TimeTrace, TimeSimError> {
    if !(duration > 0.0) {
        return Err(TimeSimError::EmptyTrace);
    }
    let segment = 1.0 / s.rbw();
    if duration < segment * (1.0 - 1e-9) {
        return Err(TimeSimError::TooShort { duration, segment });
    }
    let src = TraceSource::new(s, opts, dark, seed)?;
    let total = (duration * opts.sample_rate).round() as usize;
    let n = src.segment_len();
    let mut samples = vec![0.0; total.div_ceil(n) * n];
    samples
        .par_chunks_mut(n)
        .enumerate()
        .for_each_init(Vec::new, |scratch, (i, chunk)| {
            src.fill(i as u64, chunk, scratch)
        });
    samples.truncate(total);
    Ok(TimeTrace {
        samples,
        sample_rate: opts.sample_rate,
    })
}

/// DFT coefficients of a few fixed bins, with precomputed twiddles.
pub struct BinProbe {
    bins: Vec<usize>,
    twiddles: Vec<Vec<Complex64>>,
    n: usize,
}

impl BinProbe {
    pub fn new(n: usize, bins: &[usize]) -> Self {
        let twiddles = bins
            .iter()
            .map(|&k| {
                (0..n)
                    .map(|j| {
                        let phase = -2.0 * std::f64::consts::PI * ((k * j) % n) as f64 / n as f64;
                        Complex64::from_polar(1.0, phase)
                    })
                    .collect()
            })
            .collect();
        Self {
            bins: bins.to_vec(),
            twiddles,
            n,
        }
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    /// Bin amplitudes X_k/N of one segment.
    pub fn amplitudes(&self, segment: &[f64]) -> Vec<Complex64> {
        self.twiddles
            .iter()
            .map(|tw| {
                let (mut re, mut im) = (0.0, 0.0);
                for (x, w) in segment.iter().zip(tw) {
                    re += x * w.re;
                    im += x * w.im;
                }
                Complex64::new(re, im) / self.n as f64
            })
            .collect()
    }
}

/// Spectrum-analyser emulation: rectangular segments of 1/B, bin amplitude
/// i_k = X_k/N, power p = 2R|i_k|², video averaging over M segments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Analyzer {
    pub rbw: f64,
    pub m_avg: f64,
    pub load_r: f64,
}

impl Analyzer {
    pub fn new(rbw: f64, m_avg: f64, load_r: f64) -> Result<Self, TimeSimError> {
        if !(rbw > 0.0) || !(m_avg >= 1.0) || !(load_r > 0.0) {
            return Err(TimeSimError::Invalid(format!(
                "analyser needs rbw > 0, m_avg ≥ 1, load > 0 (got {rbw}, {m_avg}, {load_r})"
            )));
        }
        Ok(Self { rbw, m_avg, load_r })
    }

    pub fn for_scenario(s: &Scenario) -> Self {
        Self {
            rbw: s.rbw(),
            m_avg: s.detection.m_avg(),
            load_r: s.detection.load_r(),
        }
    }

    fn bin_range(&self, n: usize, center: f64, span: f64) -> Result<(usize, usize), TimeSimError> {
        let nyquist = n / 2;
        if !(span >= 0.0) || !(center >= 0.0) {
            return Err(TimeSimError::Invalid(format!(
                "center {center} Hz and span {span} Hz must be non-negative"
            )));
        }
        let lo = ((center - span / 2.0) / self.rbw).ceil().max(0.0) as usize;
        let hi = ((center + span / 2.0) / self.rbw).floor() as usize;
        let (lo, hi) = if span == 0.0 || hi < lo {
            let k = (center / self.rbw).round() as usize;
            (k, k)
        } else {
            (lo, hi)
        };
        if hi > nyquist {
            return Err(TimeSimError::OutOfSpan {
                freq: hi as f64 * self.rbw,
            });
        }
        Ok((lo, hi))
    }

    /// One averaged spectrum over center ± span/2 from the start of the trace.
    pub fn analyze(
        &self,
        trace: &TimeTrace,
        center: f64,
        span: f64,
    ) -> Result<NoiseSpectrum, TimeSimError> {
        self.analyze_groups(trace, center, span, Some(1))
            .map(|mut v| v.remove(0))
    }

    /// Consecutive averaged spectra over the whole trace.
    pub fn analyze_all(
        &self,
        trace: &TimeTrace,
        center: f64,
        span: f64,
    ) -> Result<Vec<NoiseSpectrum>, TimeSimError> {
        self.analyze_groups(trace, center, span, None)
    }

    fn analyze_groups(
        &self,
        trace: &TimeTrace,
        center: f64,
        span: f64,
        limit: Option<usize>,
    ) -> Result<Vec<NoiseSpectrum>, TimeSimError> {
        if trace.samples.is_empty() {
            return Err(TimeSimError::EmptyTrace);
        }
        let n = segment_len(trace.sample_rate, self.rbw)?;
        let (lo, hi) = self.bin_range(n, center, span)?;
        let avg = SpectralAverage::new(self.m_avg);
        let per_group = avg.draws();
        let available = trace.samples.len() / (n * per_group);
        let groups = limit.map_or(available, |l| l.min(available));
        if groups == 0 {
            return Err(TimeSimError::InsufficientSamples {
                needed: n * per_group,
                have: trace.samples.len(),
            });
        }
        let nbins = hi - lo + 1;
        let segment_powers: Vec<Vec<f64>> = if nbins > 16 {
            let fft = FftPlanner::new().plan_fft_forward(n);
            trace
                .samples
                .par_chunks_exact(n)
                .take(groups * per_group)
                .map_init(Vec::new, |buf, seg| {
                    buf.clear();
                    buf.extend(seg.iter().map(|&x| Complex64::new(x, 0.0)));
                    fft.process(buf);
                    buf[lo..=hi]
                        .iter()
                        .map(|c| 2.0 * self.load_r * (c / n as f64).norm_sqr())
                        .collect()
                })
                .collect()
        } else {
            let bins: Vec<usize> = (lo..=hi).collect();
            let probe = BinProbe::new(n, &bins);
            trace
                .samples
                .par_chunks_exact(n)
                .take(groups * per_group)
                .map(|seg| {
                    probe
                        .amplitudes(seg)
                        .iter()
                        .map(|c| 2.0 * self.load_r * c.norm_sqr())
                        .collect()
                })
                .collect()
        };
        let freqs: Vec<f64> = (lo..=hi).map(|k| k as f64 * self.rbw).collect();
        Ok(segment_powers
            .chunks_exact(per_group)
            .map(|group| {
                let powers = (0..nbins)
                    .map(|b| {
                        let mut it = group.iter().map(|seg| seg[b]);
                        avg.average(|| it.next().unwrap_or(0.0))
                    })
                    .collect();
                NoiseSpectrum {
                    freqs: freqs.clone(),
                    powers,
                    rbw: self.rbw,
                    m_avg: self.m_avg,
                }
            })
            .collect())
    }
}

fn check_offset(offset: f64, rbw: f64) -> Result<(), TimeSimError> {
    if !(offset.abs() > rbw) {
        return Err(TimeSimError::Overlap { offset, rbw });
    }
    Ok(())
}

/// Reads (p_Ω, p_N, p_E): the Ω bin and the Ω + offset bin of the
/// illuminated spectrum, and the Ω + offset bin of the dark spectrum.
pub fn triplet_from_trace(
    spectrum: &NoiseSpectrum,
    dark: &NoiseSpectrum,
    omega_mod: f64,
    offset: f64,
) -> Result<SpectrumTriplet, TimeSimError> {
    check_offset(offset, spectrum.rbw)?;
    Ok(SpectrumTriplet {
        p_omega: spectrum.power_at(omega_mod)?,
        p_floor: spectrum.power_at(omega_mod + offset)?,
        p_elec: dark.power_at(omega_mod + offset)?,
    })
}

/// Streams `count` triplets without materialising the traces. Triplet `j`
/// uses segments `j·⌈M⌉ ..` of an illuminated and a dark trace.
pub fn simulate_triplets(
    s: &Scenario,
    opts: &TraceOptions,
    offset: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<SpectrumTriplet>, TimeSimError> {
    check_offset(offset, s.rbw())?;
    let lit = TraceSource::new(s, opts, false, derive_seed(seed, 1))?;
    let dark = TraceSource::new(s, opts, true, derive_seed(seed, 2))?;
    let n = lit.segment_len();
    let analyzer = Analyzer::for_scenario(s);
    let k_tone = (s.modulation.omega_mod() / s.rbw()).round() as usize;
    let k_floor = ((s.modulation.omega_mod() + offset) / s.rbw()).round();
    if k_floor < 0.0 || k_floor as usize > n / 2 {
        return Err(TimeSimError::OutOfSpan {
            freq: s.modulation.omega_mod() + offset,
        });
    }
    let k_floor = k_floor as usize;
    let lit_probe = BinProbe::new(n, &[k_tone, k_floor]);
    let dark_probe = BinProbe::new(n, &[k_floor]);
    let avg = SpectralAverage::new(analyzer.m_avg);
    let per = avg.draws();
    let power = |c: Complex64| 2.0 * analyzer.load_r * c.norm_sqr();

    Ok((0..count)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], Vec::new()),
            |(buf, scratch), j| {
                let mut lit_p = Vec::with_capacity(per);
                let mut dark_p = Vec::with_capacity(per);
                for m in 0..per {
                    let index = (j * per + m) as u64;
                    lit.fill(index, buf, scratch);
                    let a = lit_probe.amplitudes(buf);
                    dark.fill(index, buf, scratch);
                    let e = dark_probe.amplitudes(buf);
                    lit_p.push((power(a[0]), power(a[1])));
                    dark_p.push(power(e[0]));
                }
                let mut it = lit_p.iter();
                let p_omega = avg.average(|| it.next().map_or(0.0, |p| p.0));
                let mut it = lit_p.iter();
                let p_floor = avg.average(|| it.next().map_or(0.0, |p| p.1));
                let mut it = dark_p.iter();
                let p_elec = avg.average(|| it.next().copied().unwrap_or(0.0));
                SpectrumTriplet {
                    p_omega,
                    p_floor,
                    p_elec,
                }
            },
        )
        .collect())
}
