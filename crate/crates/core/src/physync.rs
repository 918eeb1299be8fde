//! CP-OFDM frame synthesis and SSB synchronization.
//!
//! Frames carry a length-127 BPSK PSS on the central subcarriers of the
//! first SSB symbol. Receivers recover the carrier-frequency offset by a
//! blind grid search against the time-domain PSS replica, and the time
//! offset with the Schmidl & Cox half-symbol correlation metric
//! M(t) = |P(t)|^2 / R(t)^2.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error)]
pub enum PhyError {
    #[error("nid2 must be 0, 1 or 2, got {0}")]
    InvalidNid2(u32),
    #[error("invalid OFDM parameters: {0}")]
    BadParams(String),
    #[error("buffer of {len} samples too short: {need}")]
    BufferTooShort { len: usize, need: String },
    #[error("invalid IQ buffer: {0}")]
    BadBuffer(String),
    #[error("CFO grid must not be empty")]
    EmptyGrid,
    #[error("{path}: parse error at line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, PhyError>;

/// Complex baseband sample stream.
#[derive(Debug, Clone)]
pub struct IqBuffer {
    pub samples: Vec<Complex64>,
    pub sample_rate_hz: f64,
}

impl IqBuffer {
    pub fn new(samples: Vec<Complex64>, sample_rate_hz: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(PhyError::BadBuffer("no samples".into()));
        }
        if !(sample_rate_hz > 0.0) {
            return Err(PhyError::BadBuffer(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(PhyError::BadBuffer("non-finite sample".into()));
        }
        Ok(IqBuffer {
            samples,
            sample_rate_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }
}

/// Default sample rate (Hz).
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 15.36e6;
/// PSS length in subcarriers.
pub const PSS_LEN: usize = 127;

/// Frame layout: FFT size, cyclic prefix, symbol count and SSB placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OfdmParams {
    pub fft_size: usize,
    pub cp_len: usize,
    pub num_symbols: usize,
    pub ssb_symbol_index: usize,
    pub ssb_num_symbols: usize,
    pub ssb_num_subcarriers: usize,
}

impl Default for OfdmParams {
    fn default() -> Self {
        OfdmParams {
            fft_size: 256,
            cp_len: 18,
            num_symbols: 8,
            ssb_symbol_index: 1,
            ssb_num_symbols: 4,
            ssb_num_subcarriers: 240,
        }
    }
}

impl OfdmParams {
    pub fn validate(&self) -> Result<()> {
        if self.fft_size == 0 || self.cp_len == 0 || self.num_symbols == 0 {
            return Err(PhyError::BadParams("sizes must be positive".into()));
        }
        if self.cp_len >= self.fft_size {
            return Err(PhyError::BadParams(format!(
                "cp_len {} must be < fft_size {}",
                self.cp_len, self.fft_size
            )));
        }
        if self.ssb_symbol_index + self.ssb_num_symbols > self.num_symbols {
            return Err(PhyError::BadParams(format!(
                "SSB span {}+{} exceeds {} symbols",
                self.ssb_symbol_index, self.ssb_num_symbols, self.num_symbols
            )));
        }
        if self.ssb_num_subcarriers > self.fft_size {
            return Err(PhyError::BadParams(format!(
                "SSB width {} exceeds FFT size {}",
                self.ssb_num_subcarriers, self.fft_size
            )));
        }
        if self.ssb_num_subcarriers < PSS_LEN {
            return Err(PhyError::BadParams(format!(
                "SSB width {} cannot carry the {PSS_LEN}-subcarrier PSS",
                self.ssb_num_subcarriers
            )));
        }
        Ok(())
    }

    pub fn symbol_len(&self) -> usize {
        self.fft_size + self.cp_len
    }

    pub fn frame_len(&self) -> usize {
        self.num_symbols * self.symbol_len()
    }

    /// Number of SSB resource elements (the feature dimension Q).
    pub fn ssb_len(&self) -> usize {
        self.ssb_num_symbols * self.ssb_num_subcarriers
    }
}

/// Length-127 BPSK primary synchronization sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PssSequence {
    pub nid2: u32,
    chips: Vec<i8>,
}

impl PssSequence {
    pub fn chips(&self) -> &[i8] {
        &self.chips
    }
}

/// Generate the PSS for a cell identity `nid2` in {0,1,2}: m-sequence with
/// polynomial x^7 + x^4 + 1, initial state 1110110, BPSK-mapped 1-2c and
/// cyclically shifted by 43*nid2.
pub fn gen_pss(nid2: u32) -> Result<PssSequence> {
    if nid2 > 2 {
        return Err(PhyError::InvalidNid2(nid2));
    }
    let mut x = vec![0u8, 1, 1, 0, 1, 1, 1];
    for i in 0..PSS_LEN - 7 {
        x.push((x[i + 4] + x[i]) % 2);
    }
    let chips = (0..PSS_LEN)
        .map(|n| 1 - 2 * x[(n + 43 * nid2 as usize) % PSS_LEN] as i8)
        .collect();
    Ok(PssSequence { nid2, chips })
}

/// Centered FFT bin (DC-relative index wrapped into [0, fft)) for SSB
/// subcarrier `k` of `n_sc`.
fn ssb_bin(k: usize, n_sc: usize, fft: usize) -> usize {
    let centered = k as isize - (n_sc / 2) as isize;
    centered.rem_euclid(fft as isize) as usize
}

/// First SSB subcarrier carrying the PSS: the central 127 of the band.
fn pss_offset(n_sc: usize) -> usize {
    (n_sc - PSS_LEN).div_ceil(2)
}

fn unit_qpsk(rng: &mut ChaCha8Rng) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re = if rng.gen::<bool>() { s } else { -s };
    let im = if rng.gen::<bool>() { s } else { -s };
    Complex64::new(re, im)
}

/// Build the per-symbol frequency grids of a frame: every subcarrier holds
/// seeded unit QPSK, the PSS overwrites the central 127 subcarriers of the
/// first SSB symbol.
fn frame_grid(params: &OfdmParams, pss: &PssSequence, payload_seed: u64) -> Vec<Vec<Complex64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(payload_seed, "physync.payload"));
    let n = params.fft_size;
    let mut grid: Vec<Vec<Complex64>> = (0..params.num_symbols)
        .map(|_| (0..n).map(|_| unit_qpsk(&mut rng)).collect())
        .collect();
    let off = pss_offset(params.ssb_num_subcarriers);
    for (i, &chip) in pss.chips().iter().enumerate() {
        let bin = ssb_bin(off + i, params.ssb_num_subcarriers, n);
        grid[params.ssb_symbol_index][bin] = Complex64::new(chip as f64, 0.0);
    }
    grid
}

/// Synthesize a CP-OFDM frame and also return the post-normalization SSB
/// grid values (symbol-major), the reference for round-trip checks.
pub fn synth_frame_with_grid(
    params: &OfdmParams,
    pss: &PssSequence,
    payload_seed: u64,
) -> Result<(IqBuffer, Vec<Complex64>)> {
    params.validate()?;
    let n = params.fft_size;
    let grid = frame_grid(params, pss, payload_seed);
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(n);
    let scale = 1.0 / (n as f64).sqrt();
    let mut samples = Vec::with_capacity(params.frame_len());
    for sym in &grid {
        let mut buf = sym.clone();
        ifft.process(&mut buf);
        for v in buf.iter_mut() {
            *v *= scale;
        }
        samples.extend_from_slice(&buf[n - params.cp_len..]);
        samples.extend_from_slice(&buf);
    }
    let power = samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64;
    let gain = 1.0 / power.sqrt();
    for s in samples.iter_mut() {
        *s *= gain;
    }
    let mut ssb = Vec::with_capacity(params.ssb_len());
    for sym in 0..params.ssb_num_symbols {
        let row = &grid[params.ssb_symbol_index + sym];
        for k in 0..params.ssb_num_subcarriers {
            ssb.push(row[ssb_bin(k, params.ssb_num_subcarriers, n)] * gain);
        }
    }
    Ok((
        IqBuffer::new(samples, DEFAULT_SAMPLE_RATE_HZ)?,
        ssb,
    ))
}

/// Synthesize a CP-OFDM frame: IFFT per symbol, cyclic prefix prepended,
/// mean power normalized to 1.
pub fn synth_frame(params: &OfdmParams, pss: &PssSequence, payload_seed: u64) -> Result<IqBuffer> {
    synth_frame_with_grid(params, pss, payload_seed).map(|(buf, _)| buf)
}

/// Rotate sample n by exp(j 2 pi cfo_hz n / f_s).
pub fn apply_cfo(buf: &IqBuffer, cfo_hz: f64) -> IqBuffer {
    let w = 2.0 * std::f64::consts::PI * cfo_hz / buf.sample_rate_hz;
    let samples = buf
        .samples
        .iter()
        .enumerate()
        .map(|(n, s)| s * Complex64::from_polar(1.0, w * n as f64))
        .collect();
    IqBuffer {
        samples,
        sample_rate_hz: buf.sample_rate_hz,
    }
}

/// Time-domain PSS replica: the body of an OFDM symbol carrying only the
/// PSS on its central bins.
pub fn pss_replica(pss: &PssSequence, fft_size: usize) -> Vec<Complex64> {
    let mut grid = vec![Complex64::new(0.0, 0.0); fft_size];
    for (i, &chip) in pss.chips().iter().enumerate() {
        let bin = ssb_bin(i, PSS_LEN, fft_size);
        grid[bin] = Complex64::new(chip as f64, 0.0);
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(fft_size).process(&mut grid);
    let scale = 1.0 / (fft_size as f64).sqrt();
    for v in grid.iter_mut() {
        *v *= scale;
    }
    grid
}

/// Peak |cross-correlation| of `replica` against `data` over all lags,
/// via FFT of the next power of two.
fn peak_correlation(data: &[Complex64], replica: &[Complex64]) -> f64 {
    let n = (data.len() + replica.len()).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut a = vec![Complex64::new(0.0, 0.0); n];
    a[..data.len()].copy_from_slice(data);
    let mut b = vec![Complex64::new(0.0, 0.0); n];
    b[..replica.len()].copy_from_slice(replica);
    fft.process(&mut a);
    fft.process(&mut b);
    for (av, bv) in a.iter_mut().zip(&b) {
        *av *= bv.conj();
    }
    ifft.process(&mut a);
    a.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max).sqrt() / n as f64
}

/// Blind CFO search: for each candidate frequency, derotate the buffer and
/// correlate against the time-domain PSS replica over every lag; return the
/// grid frequency with the largest peak. Ties go to the smallest |f|.
pub fn estimate_cfo(buf: &IqBuffer, pss: &PssSequence, fft_size: usize, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(PhyError::EmptyGrid);
    }
    let replica = pss_replica(pss, fft_size);
    if buf.len() <= replica.len() {
        return Err(PhyError::BufferTooShort {
            len: buf.len(),
            need: format!("more than the {}-sample PSS replica", replica.len()),
        });
    }
    let mut best_f = grid[0];
    let mut best_peak = f64::NEG_INFINITY;
    for &f in grid {
        let w = -2.0 * std::f64::consts::PI * f / buf.sample_rate_hz;
        let derotated: Vec<Complex64> = buf
            .samples
            .iter()
            .enumerate()
            .map(|(n, s)| s * Complex64::from_polar(1.0, w * n as f64))
            .collect();
        let peak = peak_correlation(&derotated, &replica);
        if peak > best_peak || (peak == best_peak && f.abs() < best_f.abs()) {
            best_peak = peak;
            best_f = f;
        }
    }
    Ok(best_f)
}

/// Timing and CFO estimates plus the full metric curve.
#[derive(Debug, Clone)]
pub struct SyncResult {
    pub t_off: usize,
    pub cfo_hz: f64,
    pub metric_curve: Vec<f64>,
    pub cfo_grid: Vec<f64>,
}

/// Schmidl & Cox timing metric over a window of `half_len` samples:
/// P(t) = sum y*(t+n) y(t+n+L), R(t) = sum |y(t+n+L)|^2, M = |P|^2/R^2
/// with M(t) = 0 wherever R(t) = 0. Returns the argmax and the curve.
pub fn schmidl_cox(buf: &IqBuffer, half_len: usize) -> Result<SyncResult> {
    let l = half_len;
    if l == 0 {
        return Err(PhyError::BadParams("half_len must be >= 1".into()));
    }
    if buf.len() < 2 * l + 1 {
        return Err(PhyError::BufferTooShort {
            len: buf.len(),
            need: format!("at least {} samples for half_len {}", 2 * l + 1, l),
        });
    }
    let y = &buf.samples;
    let t_max = buf.len() - 2 * l;
    let mut curve = Vec::with_capacity(t_max + 1);
    let mut best_t = 0usize;
    let mut best_m = f64::NEG_INFINITY;
    for t in 0..=t_max {
        let mut p = Complex64::new(0.0, 0.0);
        let mut r = 0.0;
        for n in 0..l {
            p += y[t + n].conj() * y[t + n + l];
            r += y[t + n + l].norm_sqr();
        }
        let m = if r == 0.0 { 0.0 } else { p.norm_sqr() / (r * r) };
        if m > best_m {
            best_m = m;
            best_t = t;
        }
        curve.push(m);
    }
    Ok(SyncResult {
        t_off: best_t,
        cfo_hz: 0.0,
        metric_curve: curve,
        cfo_grid: vec![0.0],
    })
}

/// Full synchronization: CFO grid search plus Schmidl & Cox timing.
pub fn synchronize(
    buf: &IqBuffer,
    pss: &PssSequence,
    fft_size: usize,
    grid: &[f64],
    half_len: usize,
) -> Result<SyncResult> {
    let cfo = estimate_cfo(buf, pss, fft_size, grid)?;
    let timing = schmidl_cox(buf, half_len)?;
    Ok(SyncResult {
        t_off: timing.t_off,
        cfo_hz: cfo,
        metric_curve: timing.metric_curve,
        cfo_grid: grid.to_vec(),
    })
}

/// Default blind-search grid: +/- 3 kHz in 100 Hz steps.
pub fn default_cfo_grid() -> Vec<f64> {
    (-30..=30).map(|k| k as f64 * 100.0).collect()
}

/// Gather the SSB resource elements from a frame: CP removed, per-symbol
/// FFT, SSB band collected in symbol-major order.
pub fn extract_ssb(buf: &IqBuffer, sync: &SyncResult, params: &OfdmParams) -> Result<Vec<Complex64>> {
    params.validate()?;
    let n = params.fft_size;
    let sym_len = params.symbol_len();
    let start = sync.t_off + params.ssb_symbol_index * sym_len;
    let need = start + params.ssb_num_symbols * sym_len;
    if need > buf.len() {
        return Err(PhyError::BufferTooShort {
            len: buf.len(),
            need: format!("{need} samples to cover the SSB span at t_off {}", sync.t_off),
        });
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let scale = 1.0 / (n as f64).sqrt();
    let mut out = Vec::with_capacity(params.ssb_len());
    for sym in 0..params.ssb_num_symbols {
        let body = start + sym * sym_len + params.cp_len;
        let mut x: Vec<Complex64> = buf.samples[body..body + n].to_vec();
        fft.process(&mut x);
        for k in 0..params.ssb_num_subcarriers {
            out.push(x[ssb_bin(k, params.ssb_num_subcarriers, n)] * scale);
        }
    }
    Ok(out)
}

// --- I/Q file format -------------------------------------------------------

/// Sidecar metadata stored next to an I/Q CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct IqMeta {
    pub sample_rate_hz: f64,
    pub fft_size: usize,
    pub cp_len: usize,
}

fn meta_path(path: &std::path::Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".meta");
    std::path::PathBuf::from(os)
}

fn io_err(path: &std::path::Path, source: std::io::Error) -> PhyError {
    PhyError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write `i,q` CSV rows (17 significant digits) plus the sidecar metadata.
pub fn write_iq_csv(path: &std::path::Path, buf: &IqBuffer, meta: &IqMeta) -> Result<()> {
    let mut out = String::from("i,q\n");
    for s in &buf.samples {
        out.push_str(&format!("{:.16e},{:.16e}\n", s.re, s.im));
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))?;
    let side = format!(
        "sample_rate_hz={:.16e}\nfft_size={}\ncp_len={}\n",
        meta.sample_rate_hz, meta.fft_size, meta.cp_len
    );
    std::fs::write(meta_path(path), side).map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Read an I/Q CSV and its sidecar. Bit-identical round-trip with
/// [`write_iq_csv`].
pub fn read_iq_csv(path: &std::path::Path) -> Result<(IqBuffer, IqMeta)> {
    let parse = |line: usize, msg: String| PhyError::Parse {
        path: path.display().to_string(),
        line,
        msg,
    };
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "i,q")) => {}
        other => {
            return Err(parse(
                1,
                format!("expected header 'i,q', got {:?}", other.map(|(_, l)| l)),
            ))
        }
    }
    let mut samples = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let re: f64 = parts
            .next()
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| parse(idx + 1, format!("bad i value in '{line}'")))?;
        let im: f64 = parts
            .next()
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| parse(idx + 1, format!("bad q value in '{line}'")))?;
        if parts.next().is_some() {
            return Err(parse(idx + 1, "expected exactly two fields".into()));
        }
        samples.push(Complex64::new(re, im));
    }
    let mpath = meta_path(path);
    let mtext = std::fs::read_to_string(&mpath).map_err(|e| io_err(&mpath, e))?;
    let mut sample_rate_hz = None;
    let mut fft_size = None;
    let mut cp_len = None;
    for (idx, line) in mtext.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| PhyError::Parse {
            path: mpath.display().to_string(),
            line: idx + 1,
            msg: format!("expected key=value, got '{line}'"),
        })?;
        match k {
            "sample_rate_hz" => sample_rate_hz = v.parse().ok(),
            "fft_size" => fft_size = v.parse().ok(),
            "cp_len" => cp_len = v.parse().ok(),
            _ => {}
        }
    }
    let meta = IqMeta {
        sample_rate_hz: sample_rate_hz.ok_or_else(|| PhyError::Parse {
            path: mpath.display().to_string(),
            line: 0,
            msg: "missing sample_rate_hz".into(),
        })?,
        fft_size: fft_size.unwrap_or_default(),
        cp_len: cp_len.unwrap_or_default(),
    };
    let mut buf = IqBuffer::new(samples, meta.sample_rate_hz)?;
    buf.sample_rate_hz = meta.sample_rate_hz;
    Ok((buf, meta))
}
