//! Labeled SSB feature datasets: featurization, AWGN jamming injection,
//! the twelve non-IID capture profiles, normalization, splits and CSV I/O.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::physync::{self, OfdmParams, SyncResult};
use crate::seed;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid observation: {0}")]
    BadObservation(String),
    #[error("unknown dataset profile id {0} (valid: 1..=12)")]
    UnknownProfile(u32),
    #[error("AWGN injection needs non-zero signal power")]
    ZeroPowerSignal,
    #[error("dataset is already normalized")]
    AlreadyNormalized,
    #[error("dataset is not normalized")]
    NotNormalized,
    #[error("invalid split fraction {0}; need 0 < train_frac < 1")]
    BadSplitFraction(f64),
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
    #[error(transparent)]
    Phy(#[from] physync::PhyError),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Whether a row came from a capture or from the oversampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Real,
    Synthetic,
}

/// One feature row: non-negative |I/Q| values plus the jamming label
/// (1 = jammed, 0 = non-jammed).
#[derive(Debug, Clone)]
pub struct SsbObservation {
    pub features: Vec<f64>,
    pub label: u8,
    pub origin: Origin,
}

impl SsbObservation {
    pub fn new(features: Vec<f64>, label: u8) -> Result<Self> {
        if features.is_empty() {
            return Err(DataError::BadObservation("empty feature vector".into()));
        }
        if label > 1 {
            return Err(DataError::BadObservation(format!("label {label} not in {{0,1}}")));
        }
        if features.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(DataError::BadObservation(
                "features must be finite and non-negative".into(),
            ));
        }
        Ok(SsbObservation {
            features,
            label,
            origin: Origin::Real,
        })
    }
}

/// Capture-site profile: observation counts with class imbalance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetProfile {
    pub id: u32,
    pub name: &'static str,
    pub total: usize,
    pub jammed: usize,
    pub non_jammed: usize,
}

/// The twelve capture profiles (site, jammed count, non-jammed count).
/// Totals are the sum of the class counts.
pub const PROFILES: [(u32, &str, usize, usize); 12] = [
    (1, "Banchory", 793, 33),
    (2, "Legget", 518, 26),
    (3, "Indoor_2", 933, 32),
    (4, "Indoor_3", 998, 40),
    (5, "Indoor_4", 839, 38),
    (6, "Indoor_5", 945, 44),
    (7, "Neighbor_2", 771, 34),
    (8, "Neighbor_3", 886, 37),
    (9, "Neighbor_1", 719, 30),
    (10, "Park Shirley", 799, 34),
    (11, "Shirin Market", 638, 27),
    (12, "Stop Sign", 937, 41),
];

/// Look up one of the twelve profiles by id.
pub fn profile(id: u32) -> Result<DatasetProfile> {
    PROFILES
        .iter()
        .find(|(pid, ..)| *pid == id)
        .map(|&(id, name, jammed, non_jammed)| DatasetProfile {
            id,
            name,
            total: jammed + non_jammed,
            jammed,
            non_jammed,
        })
        .ok_or(DataError::UnknownProfile(id))
}

/// Per-feature (min, max) statistics recorded by normalization.
pub type NormStats = Vec<(f64, f64)>;

/// A P-by-Q feature matrix with labels and provenance.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub observations: Vec<SsbObservation>,
    pub profile: Option<DatasetProfile>,
    pub normalized: bool,
    pub norm_stats: Option<NormStats>,
}

impl Dataset {
    pub fn new(observations: Vec<SsbObservation>) -> Result<Self> {
        if observations.is_empty() {
            return Err(DataError::BadObservation("dataset has no rows".into()));
        }
        let q = observations[0].features.len();
        if observations.iter().any(|o| o.features.len() != q) {
            return Err(DataError::BadObservation(
                "rows have differing feature dimensions".into(),
            ));
        }
        Ok(Dataset {
            observations,
            profile: None,
            normalized: false,
            norm_stats: None,
        })
    }

    /// Feature dimension Q.
    pub fn q(&self) -> usize {
        self.observations[0].features.len()
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn count_label(&self, label: u8) -> usize {
        self.observations.iter().filter(|o| o.label == label).count()
    }

    pub fn count_origin(&self, origin: Origin) -> usize {
        self.observations.iter().filter(|o| o.origin == origin).count()
    }
}

/// Element-wise modulus of complex I/Q samples; phase is dropped.
pub fn featurize(ssb: &[Complex64]) -> Vec<f64> {
    ssb.iter().map(|s| s.norm()).collect()
}

/// Add circular complex white Gaussian noise at the requested SNR. The
/// per-sample noise variance is signal_power / 10^(snr_db/10); seeded and
/// reproducible.
pub fn inject_awgn(obs: &[Complex64], snr_db: f64, seed: u64) -> Result<Vec<Complex64>> {
    let n = obs.len();
    if n == 0 {
        return Err(DataError::ZeroPowerSignal);
    }
    let signal_power = obs.iter().map(|s| s.norm_sqr()).sum::<f64>() / n as f64;
    if signal_power <= 0.0 {
        return Err(DataError::ZeroPowerSignal);
    }
    let noise_power = signal_power / 10f64.powf(snr_db / 10.0);
    let sigma = (noise_power / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, 1.0).expect("unit normal");
    Ok(obs
        .iter()
        .map(|s| {
            let re: f64 = dist.sample(&mut rng);
            let im: f64 = dist.sample(&mut rng);
            s + Complex64::new(sigma * re, sigma * im)
        })
        .collect())
}

/// Synthesis knobs for building a profile dataset.
#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    /// Receiver noise floor applied to every observation (SNR in dB);
    /// keeps non-jammed rows from collapsing to a constant vector.
    pub noise_floor_snr_db: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            noise_floor_snr_db: 30.0,
        }
    }
}

/// Synthesize a labeled dataset for one profile: every observation is an
/// SSB extracted from a fresh seeded frame over the receiver noise floor;
/// `jammed` of them additionally pass through [`inject_awgn`] with an SNR
/// drawn uniformly from `snr_range_db` before featurization.
pub fn build_profile(
    profile: &DatasetProfile,
    gen_params: &OfdmParams,
    snr_range_db: (f64, f64),
    run_seed: u64,
    opts: &BuildOptions,
) -> Result<Dataset> {
    gen_params.validate()?;
    if !(snr_range_db.0 <= snr_range_db.1) {
        return Err(DataError::BadObservation(format!(
            "SNR range {snr_range_db:?} is not well-ordered"
        )));
    }
    let pss = physync::gen_pss((profile.id - 1) % 3)?;
    let base = seed::derive_n(run_seed, "dataset.profile", profile.id as u64);
    let mut snr_rng = ChaCha8Rng::seed_from_u64(seed::derive(base, "dataset.snr"));
    let sync = SyncResult {
        t_off: 0,
        cfo_hz: 0.0,
        metric_curve: vec![],
        cfo_grid: vec![0.0],
    };
    let mut observations = Vec::with_capacity(profile.total);
    for i in 0..profile.total {
        let jam = i < profile.jammed;
        let frame = physync::synth_frame(gen_params, &pss, seed::derive_n(base, "dataset.obs", i as u64))?;
        let mut ssb = physync::extract_ssb(&frame, &sync, gen_params)?;
        ssb = inject_awgn(
            &ssb,
            opts.noise_floor_snr_db,
            seed::derive_n(base, "dataset.floor", i as u64),
        )?;
        let snr = snr_rng.gen_range(snr_range_db.0..=snr_range_db.1);
        if jam {
            ssb = inject_awgn(&ssb, snr, seed::derive_n(base, "dataset.jam", i as u64))?;
        }
        let mut obs = SsbObservation::new(featurize(&ssb), u8::from(jam))?;
        obs.origin = Origin::Real;
        observations.push(obs);
    }
    let mut ds = Dataset::new(observations)?;
    ds.profile = Some(profile.clone());
    Ok(ds)
}

/// Per-feature min-max scaling to [0,1]; constant features map to 0.
/// The statistics are stored for the inverse mapping.
pub fn normalize(ds: &Dataset) -> Result<Dataset> {
    if ds.normalized {
        return Err(DataError::AlreadyNormalized);
    }
    let q = ds.q();
    let mut stats: NormStats = vec![(f64::INFINITY, f64::NEG_INFINITY); q];
    for obs in &ds.observations {
        for (j, &v) in obs.features.iter().enumerate() {
            stats[j].0 = stats[j].0.min(v);
            stats[j].1 = stats[j].1.max(v);
        }
    }
    let observations = ds
        .observations
        .iter()
        .map(|obs| {
            let features = obs
                .features
                .iter()
                .enumerate()
                .map(|(j, &v)| {
                    let (lo, hi) = stats[j];
                    if hi > lo {
                        (v - lo) / (hi - lo)
                    } else {
                        0.0
                    }
                })
                .collect();
            SsbObservation {
                features,
                label: obs.label,
                origin: obs.origin,
            }
        })
        .collect();
    Ok(Dataset {
        observations,
        profile: ds.profile.clone(),
        normalized: true,
        norm_stats: Some(stats),
    })
}

/// Invert [`normalize`] using the stored statistics. Constant columns stay
/// at their recorded minimum.
pub fn denormalize(ds: &Dataset) -> Result<Dataset> {
    if !ds.normalized {
        return Err(DataError::NotNormalized);
    }
    let stats = ds.norm_stats.as_ref().ok_or(DataError::NotNormalized)?;
    let observations = ds
        .observations
        .iter()
        .map(|obs| {
            let features = obs
                .features
                .iter()
                .enumerate()
                .map(|(j, &v)| {
                    let (lo, hi) = stats[j];
                    if hi > lo {
                        lo + v * (hi - lo)
                    } else {
                        lo
                    }
                })
                .collect();
            SsbObservation {
                features,
                label: obs.label,
                origin: obs.origin,
            }
        })
        .collect();
    Ok(Dataset {
        observations,
        profile: ds.profile.clone(),
        normalized: false,
        norm_stats: None,
    })
}

/// Stratified, seeded train/test split. Per class the test side receives
/// round(count * (1 - train_frac)) rows, while classes with fewer than two
/// rows keep at least one row in train.
pub fn split_train_test(ds: &Dataset, train_frac: f64, split_seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(DataError::BadSplitFraction(train_frac));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(split_seed, "dataset.split"));
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in [0u8, 1u8] {
        let mut idx: Vec<usize> = (0..ds.len())
            .filter(|&i| ds.observations[i].label == label)
            .collect();
        if idx.is_empty() {
            continue;
        }
        // Fisher-Yates with the per-split stream
        for i in (1..idx.len()).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        let count = idx.len();
        let mut n_test = ((count as f64) * (1.0 - train_frac)).round() as usize;
        if n_test >= count {
            n_test = count - 1;
        }
        for (k, &i) in idx.iter().enumerate() {
            if k < n_test {
                test.push(ds.observations[i].clone());
            } else {
                train.push(ds.observations[i].clone());
            }
        }
    }
    let pack = |observations: Vec<SsbObservation>| Dataset {
        observations,
        profile: ds.profile.clone(),
        normalized: ds.normalized,
        norm_stats: ds.norm_stats.clone(),
    };
    Ok((pack(train), pack(test)))
}

/// Synthetic two-class benchmark: per-class Gaussian features with means
/// 0.5 -/+ `delta` (class 0 low, class 1 high), standard deviation `sigma`,
/// clamped to [0,1]. Arrives normalized with identity statistics.
pub fn two_gaussian_dataset(q: usize, per_class: usize, delta: f64, sigma: f64, gen_seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(gen_seed, "dataset.gaussian"));
    let dist = Normal::new(0.0, sigma).expect("sigma > 0");
    let mut observations = Vec::with_capacity(2 * per_class);
    for label in [0u8, 1u8] {
        let mean = if label == 0 { 0.5 - delta } else { 0.5 + delta };
        for _ in 0..per_class {
            let features = (0..q)
                .map(|_| {
                    let v: f64 = dist.sample(&mut rng);
                    (mean + v).clamp(0.0, 1.0)
                })
                .collect();
            observations.push(SsbObservation {
                features,
                label,
                origin: Origin::Real,
            });
        }
    }
    Dataset {
        observations,
        profile: None,
        normalized: true,
        norm_stats: Some(vec![(0.0, 1.0); q]),
    }
}

// --- CSV and manifest ------------------------------------------------------

fn io_err(path: &std::path::Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write `f0..f{Q-1},label` rows with 17-significant-digit reals.
pub fn save_csv(ds: &Dataset, path: &std::path::Path) -> Result<()> {
    let q = ds.q();
    let mut out = String::new();
    for j in 0..q {
        out.push_str(&format!("f{j},"));
    }
    out.push_str("label\n");
    for obs in &ds.observations {
        for v in &obs.features {
            out.push_str(&format!("{v:.16e},"));
        }
        out.push_str(&format!("{}\n", obs.label));
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Read a dataset written by [`save_csv`]. Malformed rows name their line.
pub fn load_csv(path: &std::path::Path) -> Result<Dataset> {
    let parse = |line: usize, msg: String| DataError::Parse {
        path: path.display().to_string(),
        line,
        msg,
    };
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let q = cols.len().saturating_sub(1);
    if q == 0 || cols[q] != "label" || (0..q).any(|j| cols[j] != format!("f{j}")) {
        return Err(parse(1, format!("bad header '{header}'")));
    }
    let mut observations = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != q + 1 {
            return Err(parse(
                idx + 1,
                format!("expected {} fields, got {}", q + 1, fields.len()),
            ));
        }
        let mut features = Vec::with_capacity(q);
        for f in &fields[..q] {
            features.push(
                f.parse::<f64>()
                    .map_err(|_| parse(idx + 1, format!("bad feature value '{f}'")))?,
            );
        }
        let label: u8 = match fields[q] {
            "0" => 0,
            "1" => 1,
            other => return Err(parse(idx + 1, format!("label '{other}' not in {{0,1}}"))),
        };
        observations.push(
            SsbObservation::new(features, label)
                .map_err(|e| parse(idx + 1, e.to_string()))?,
        );
    }
    Dataset::new(observations)
}

/// Dataset manifest: key=value sidecar describing how the set was built.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub profile_id: u32,
    pub seed: u64,
    pub snr_lo_db: f64,
    pub snr_hi_db: f64,
    pub q: usize,
    pub normalized: bool,
}

pub fn save_manifest(m: &Manifest, path: &std::path::Path) -> Result<()> {
    let text = format!(
        "profile_id={}\nseed={}\nsnr_lo_db={:.16e}\nsnr_hi_db={:.16e}\nq={}\nnormalized={}\n# order: inject AWGN on complex SSB, then featurize, then normalize\n",
        m.profile_id, m.seed, m.snr_lo_db, m.snr_hi_db, m.q, m.normalized
    );
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn load_manifest(path: &std::path::Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut m = Manifest {
        profile_id: 0,
        seed: 0,
        snr_lo_db: 0.0,
        snr_hi_db: 0.0,
        q: 0,
        normalized: false,
    };
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| DataError::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            msg: format!("expected key=value, got '{line}'"),
        })?;
        match k {
            "profile_id" => m.profile_id = v.parse().unwrap_or_default(),
            "seed" => m.seed = v.parse().unwrap_or_default(),
            "snr_lo_db" => m.snr_lo_db = v.parse().unwrap_or_default(),
            "snr_hi_db" => m.snr_hi_db = v.parse().unwrap_or_default(),
            "q" => m.q = v.parse().unwrap_or_default(),
            "normalized" => m.normalized = v == "true",
            _ => {}
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk_params() -> OfdmParams {
        OfdmParams {
            fft_size: 128,
            cp_len: 9,
            num_symbols: 6,
            ssb_symbol_index: 1,
            ssb_num_symbols: 4,
            ssb_num_subcarriers: 127,
        }
    }

    fn toy_dataset() -> Dataset {
        let rows = vec![
            SsbObservation::new(vec![2.0, 5.0], 0).unwrap(),
            SsbObservation::new(vec![4.0, 5.0], 1).unwrap(),
            SsbObservation::new(vec![6.0, 5.0], 1).unwrap(),
        ];
        Dataset::new(rows).unwrap()
    }

    #[test]
    fn featurize_modulus() {
        assert_eq!(featurize(&[Complex64::new(3.0, 0.0)]), vec![3.0]);
        assert!((featurize(&[Complex64::new(0.6, 0.8)])[0] - 1.0).abs() < 1e-15);
        // phase rotation leaves features unchanged
        let x = [Complex64::new(0.3, -0.4), Complex64::new(-1.0, 2.0)];
        let rot = Complex64::from_polar(1.0, 1.234);
        let y: Vec<Complex64> = x.iter().map(|v| v * rot).collect();
        for (a, b) in featurize(&x).iter().zip(featurize(&y)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn awgn_vanishes_at_high_snr() {
        let x = vec![Complex64::new(1.0, -1.0); 64];
        let y = inject_awgn(&x, 300.0, 5).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn awgn_noise_power_matches_target() {
        let x = vec![Complex64::new(1.0, 0.0); 10_000];
        for &target in &[0.0, 5.0, 10.0, 15.0] {
            let y = inject_awgn(&x, target, 99).unwrap();
            let noise_power: f64 =
                x.iter().zip(&y).map(|(a, b)| (b - a).norm_sqr()).sum::<f64>() / x.len() as f64;
            let measured_snr = 10.0 * (1.0 / noise_power).log10();
            assert!(
                (measured_snr - target).abs() <= 0.5,
                "target {target} measured {measured_snr}"
            );
        }
    }

    #[test]
    fn awgn_zero_power_is_error() {
        let x = vec![Complex64::new(0.0, 0.0); 8];
        assert!(matches!(
            inject_awgn(&x, 10.0, 1),
            Err(DataError::ZeroPowerSignal)
        ));
    }

    #[test]
    fn profile_counts_match_the_twelve_sites() {
        let p1 = profile(1).unwrap();
        assert_eq!((p1.total, p1.jammed, p1.non_jammed), (826, 793, 33));
        let p4 = profile(4).unwrap();
        assert_eq!((p4.total, p4.jammed, p4.non_jammed), (1038, 998, 40));
        for id in 1..=12 {
            let p = profile(id).unwrap();
            assert_eq!(p.jammed + p.non_jammed, p.total);
            assert!(p.jammed >= 1 && p.non_jammed >= 1);
        }
        assert!(profile(13).is_err());
    }

    #[test]
    fn build_profile_counts_and_determinism() {
        let p = DatasetProfile {
            id: 1,
            name: "desk",
            total: 12,
            jammed: 9,
            non_jammed: 3,
        };
        let params = desk_params();
        let a = build_profile(&p, &params, (0.0, 15.0), 7, &BuildOptions::default()).unwrap();
        assert_eq!(a.len(), 12);
        assert_eq!(a.count_label(1), 9);
        assert_eq!(a.count_label(0), 3);
        assert_eq!(a.q(), params.ssb_len());
        let b = build_profile(&p, &params, (0.0, 15.0), 7, &BuildOptions::default()).unwrap();
        for (x, y) in a.observations.iter().zip(&b.observations) {
            assert_eq!(x.label, y.label);
            for (u, v) in x.features.iter().zip(&y.features) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn normalize_minmax_and_constant_column() {
        let ds = normalize(&toy_dataset()).unwrap();
        let col0: Vec<f64> = ds.observations.iter().map(|o| o.features[0]).collect();
        assert_eq!(col0, vec![0.0, 0.5, 1.0]);
        // constant column maps to 0
        let col1: Vec<f64> = ds.observations.iter().map(|o| o.features[1]).collect();
        assert_eq!(col1, vec![0.0, 0.0, 0.0]);
        assert!(normalize(&ds).is_err());
    }

    #[test]
    fn normalize_inverse_restores_originals() {
        let ds = toy_dataset();
        let norm = normalize(&ds).unwrap();
        let back = denormalize(&norm).unwrap();
        for (a, b) in ds.observations.iter().zip(&back.observations) {
            // column 1 is constant: restored to its recorded minimum
            assert!((a.features[0] - b.features[0]).abs() < 1e-9);
            assert!((b.features[1] - 5.0).abs() < 1e-9);
        }
    }

    #[test]
    fn split_is_stratified_disjoint_exhaustive() {
        let mut rows = Vec::new();
        for i in 0..1000 {
            let label = u8::from(i < 900);
            rows.push(SsbObservation::new(vec![i as f64, 1.0], label).unwrap());
        }
        let ds = Dataset::new(rows).unwrap();
        let (train, test) = split_train_test(&ds, 0.8, 3).unwrap();
        assert_eq!(train.len(), 800);
        assert_eq!(test.len(), 200);
        assert_eq!(train.count_label(1), 720);
        assert_eq!(test.count_label(1), 180);
        // union = original multiset (match on the unique first feature)
        let mut seen: Vec<f64> = train
            .observations
            .iter()
            .chain(&test.observations)
            .map(|o| o.features[0])
            .collect();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expect: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(seen, expect);
    }

    #[test]
    fn split_keeps_tiny_class_in_train() {
        let rows = vec![
            SsbObservation::new(vec![1.0], 0).unwrap(),
            SsbObservation::new(vec![2.0], 1).unwrap(),
            SsbObservation::new(vec![3.0], 1).unwrap(),
        ];
        let ds = Dataset::new(rows).unwrap();
        let (train, _test) = split_train_test(&ds, 0.5, 1).unwrap();
        assert!(train.count_label(0) >= 1);
        assert!(split_train_test(&ds, 1.0, 1).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        let ds = toy_dataset();
        save_csv(&ds, &path).unwrap();
        let back = load_csv(&path).unwrap();
        assert_eq!(back.len(), ds.len());
        for (a, b) in ds.observations.iter().zip(&back.observations) {
            assert_eq!(a.label, b.label);
            for (u, v) in a.features.iter().zip(&b.features) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn csv_arity_error_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "f0,f1,label\n1.0,2.0,0\n1.0,1\n").unwrap();
        match load_csv(&path) {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_label_domain_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "f0,label\n1.0,2\n").unwrap();
        assert!(matches!(load_csv(&path), Err(DataError::Parse { .. })));
    }

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.manifest");
        let m = Manifest {
            profile_id: 3,
            seed: 42,
            snr_lo_db: 0.0,
            snr_hi_db: 15.0,
            q: 508,
            normalized: true,
        };
        save_manifest(&m, &path).unwrap();
        assert_eq!(load_manifest(&path).unwrap(), m);
    }
}
