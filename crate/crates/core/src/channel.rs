//! Lossy-channel simulation, resynchronization measurement and throughput
//! benchmarking.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf::opcount;
use crate::kernel::{CipherError, CipherParams, CipherState, Mode};

/// Field operations per 4-bit symbol of the Moustique reference cipher,
/// quoted as a fixed baseline (it is not implemented here).
pub const MOUSTIQUE_OPS_PER_SYMBOL: f64 = 6000.0;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("corruption at vector {vector}, component {component} is outside a stream of {vectors} vectors of length {ell}")]
    OutOfRange { vector: usize, component: usize, vectors: usize, ell: usize },
    #[error("replacement symbol {0} is not a field element")]
    Symbol(u8),
    #[error("corruption rate must lie in [0, 1], got {0}")]
    Rate(f64),
    #[error(transparent)]
    Cipher(#[from] CipherError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Replace component `component` of cipher vector `vector` with `value`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CorruptionEvent {
    pub vector: usize,
    pub component: usize,
    pub value: u8,
}

/// I.i.d. per-symbol corruption. Positions and replacement values depend
/// only on the seed and stream length, so a replacement can coincide with the
/// original symbol.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomCorruption {
    pub rate: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorruptionPlan {
    #[serde(default)]
    pub events: Vec<CorruptionEvent>,
    #[serde(default)]
    pub random: Option<RandomCorruption>,
}

impl CorruptionPlan {
    pub fn single(vector: usize, component: usize, value: u8) -> Self {
        CorruptionPlan { events: vec![CorruptionEvent { vector, component, value }], random: None }
    }

    pub fn random(rate: f64, seed: u64) -> Self {
        CorruptionPlan { events: vec![], random: Some(RandomCorruption { rate, seed }) }
    }

    /// Expands the plan into explicit events for a stream of `vectors`
    /// vectors of length `ell` over a field of order `q`. Explicit events
    /// override random ones at the same position.
    pub fn resolve(&self, vectors: usize, ell: usize, q: usize) -> Result<Vec<CorruptionEvent>, ChannelError> {
        let mut out: BTreeMap<(usize, usize), u8> = BTreeMap::new();
        if let Some(RandomCorruption { rate, seed }) = self.random {
            if !(0.0..=1.0).contains(&rate) {
                return Err(ChannelError::Rate(rate));
            }
            let total = vectors * ell;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let count = if total == 0 { 0 } else { Binomial::new(total as u64, rate).expect("rate checked").sample(&mut rng) };
            for pos in index::sample(&mut rng, total, count as usize) {
                out.insert((pos / ell, pos % ell), rng.random_range(0..q as u8));
            }
        }
        for e in &self.events {
            if e.vector >= vectors || e.component >= ell {
                return Err(ChannelError::OutOfRange { vector: e.vector, component: e.component, vectors, ell });
            }
            if e.value as usize >= q {
                return Err(ChannelError::Symbol(e.value));
            }
            out.insert((e.vector, e.component), e.value);
        }
        Ok(out.into_iter().map(|((vector, component), value)| CorruptionEvent { vector, component, value }).collect())
    }
}

/// Applies the plan's substitutions to a flat cipher stream of `ell`-symbol vectors.
pub fn corrupt_stream(cipher: &[u8], ell: usize, q: usize, plan: &CorruptionPlan) -> Result<Vec<u8>, ChannelError> {
    let mut out = cipher.to_vec();
    for e in plan.resolve(cipher.len() / ell.max(1), ell, q)? {
        out[e.vector * ell + e.component] = e.value;
    }
    Ok(out)
}

/// Recovery after one corrupted cipher vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ResyncEvent {
    /// Index of the corrupted vector in the stream (whitening included).
    pub vector: usize,
    /// First wrong output at or after `vector`, if any.
    pub first_error: Option<usize>,
    /// First output index from which everything up to the next event is correct.
    pub recovered_at: usize,
    /// Outputs after the corrupted one up to and including the last wrong one.
    pub delay: usize,
    pub wrong_symbols: usize,
    /// Whether the next event is far enough away for the full bound to be observable.
    pub isolated: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ResyncReport {
    pub mode: String,
    pub ell: usize,
    pub n0: Option<usize>,
    pub bound: Option<usize>,
    pub whitening: usize,
    pub events: Vec<ResyncEvent>,
    pub total_wrong: usize,
    pub max_delay: usize,
}

impl ResyncReport {
    pub fn to_csv(&self) -> Result<String, ChannelError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["vector", "first_error", "recovered_at", "delay", "wrong_symbols", "isolated"])?;
        for e in &self.events {
            w.write_record([
                e.vector.to_string(),
                e.first_error.map(|v| v.to_string()).unwrap_or_default(),
                e.recovered_at.to_string(),
                e.delay.to_string(),
                e.wrong_symbols.to_string(),
                e.isolated.to_string(),
            ])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("UTF-8"))
    }
}

/// Everything produced by one channel run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelRun {
    pub sent: Vec<u8>,
    pub received: Vec<u8>,
    /// Whitening followed by payload, as fed to the encryptor.
    pub reference: Vec<u8>,
    /// Every decryptor output, whitening included.
    pub decrypted: Vec<u8>,
    pub report: ResyncReport,
}

impl ChannelRun {
    /// Per-step trace: corrupted components of the cipher vector and
    /// `|p - p̂|` of the recovered symbol.
    pub fn difference_trace_csv(&self, ell: usize) -> Result<String, ChannelError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["index", "cipher_diff", "plain_diff"])?;
        let vectors = self.sent.chunks(ell).zip(self.received.chunks(ell));
        for (t, ((s, r), (p, ph))) in vectors.zip(self.reference.iter().zip(&self.decrypted)).enumerate() {
            let cd = s.iter().zip(r).filter(|(a, b)| a != b).count();
            w.write_record([t.to_string(), cd.to_string(), p.abs_diff(*ph).to_string()])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?).expect("UTF-8"))
    }
}

/// Encrypts `whitening ‖ payload` from `state`, corrupts the cipher stream
/// per `plan`, decrypts it from the same initial state and reports, for
/// every corrupted vector, how long the decryptor took to recover.
pub fn measure_resync(
    params: &CipherParams,
    state: &CipherState,
    whitening: &[u8],
    payload: &[u8],
    plan: &CorruptionPlan,
) -> Result<ChannelRun, ChannelError> {
    let ell = params.ell();
    let q = params.field().order();
    let sent = params.encrypt_stream(state.clone(), whitening, payload)?;
    let vectors = sent.len() / ell;
    let events = plan.resolve(vectors, ell, q)?;
    let received = corrupt_stream(&sent, ell, q, &CorruptionPlan { events: events.clone(), random: None })?;
    let decrypted = params.decrypt_stream_all(state.clone(), &received)?;
    let reference: Vec<u8> = whitening.iter().chain(payload).copied().collect();

    let n0 = params.nilpotency_index();
    let bound = match params.mode() {
        Mode::SelfSynchronous => n0.map(|n| ell + n),
        Mode::Synchronous => Some(0),
    };
    // only vectors whose content actually changed
    let mut hit: Vec<usize> = events.iter().filter(|e| sent[e.vector * ell + e.component] != e.value).map(|e| e.vector).collect();
    hit.dedup();
    let mut report_events = Vec::with_capacity(hit.len());
    for (k, &tau) in hit.iter().enumerate() {
        let end = hit.get(k + 1).copied().unwrap_or(vectors);
        let wrong: Vec<usize> = (tau..end).filter(|&t| decrypted[t] != reference[t]).collect();
        let last = wrong.last().copied();
        report_events.push(ResyncEvent {
            vector: tau,
            first_error: wrong.first().copied(),
            recovered_at: last.map_or(tau, |l| l + 1),
            delay: last.map_or(0, |l| l - tau),
            wrong_symbols: wrong.len(),
            isolated: bound.is_none_or(|b| end > tau + b + 1),
        });
    }
    let total_wrong = decrypted.iter().zip(&reference).filter(|(a, b)| a != b).count();
    let report = ResyncReport {
        mode: match params.mode() {
            Mode::SelfSynchronous => "selfsync".into(),
            Mode::Synchronous => "sync".into(),
        },
        ell,
        n0,
        bound,
        whitening: whitening.len(),
        max_delay: report_events.iter().map(|e| e.delay).max().unwrap_or(0),
        events: report_events,
        total_wrong,
    };
    Ok(ChannelRun { sent, received, reference, decrypted, report })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub symbols: usize,
    pub seconds: f64,
    pub symbols_per_sec: f64,
    pub plaintext_mib_per_sec: f64,
    pub field_ops: u64,
    pub ops_per_symbol: f64,
    pub moustique_ops_per_symbol: f64,
}

/// Times a bulk encryption of `symbols` random plaintext symbols, then counts
/// field operations over the same input in a separate instrumented pass.
/// Whitening symbols are included in both the count and the denominator.
pub fn bench_throughput(params: &CipherParams, symbols: usize, seed: u64) -> Result<BenchReport, ChannelError> {
    let q = params.field().order() as u8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state = CipherState::zeros(params.field(), params.ell());
    let whitening: Vec<u8> = (0..params.iota()).map(|_| rng.random_range(0..q)).collect();
    let payload: Vec<u8> = (0..symbols).map(|_| rng.random_range(0..q)).collect();
    let start = Instant::now();
    let out = params.encrypt_stream(state.clone(), &whitening, &payload)?;
    let seconds = start.elapsed().as_secs_f64();
    std::hint::black_box(out);
    let (res, field_ops) = opcount::measure(|| params.encrypt_stream(state, &whitening, &payload));
    res?;
    let processed = whitening.len() + symbols;
    let rate = processed as f64 / seconds.max(1e-9);
    Ok(BenchReport {
        symbols: processed,
        seconds,
        symbols_per_sec: rate,
        plaintext_mib_per_sec: rate * f64::from(q).log2() / 8.0 / (1024.0 * 1024.0),
        field_ops,
        ops_per_symbol: field_ops as f64 / processed as f64,
        moustique_ops_per_symbol: MOUSTIQUE_OPS_PER_SYMBOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf::FieldSpec;
    use crate::kernel::testing::{random_params, random_state};

    fn setup(mode: Mode, seed: u64) -> (CipherParams, CipherState, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = random_params(&mut rng, FieldSpec::Gf16, 8, mode);
        let state = random_state(&mut rng, FieldSpec::Gf16, 8);
        (params, state, rng)
    }

    fn symbols(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
        (0..n).map(|_| rng.random_range(0..16)).collect()
    }

    #[test]
    fn empty_plan_is_identity() {
        let data: Vec<u8> = (0..64).map(|i| i % 16).collect();
        assert_eq!(corrupt_stream(&data, 8, 16, &CorruptionPlan::default()).unwrap(), data);
    }

    #[test]
    fn single_substitution() {
        let data = vec![3u8; 64];
        let out = corrupt_stream(&data, 8, 16, &CorruptionPlan::single(2, 5, 9)).unwrap();
        assert_eq!(out.iter().zip(&data).filter(|(a, b)| a != b).count(), 1);
        assert_eq!(out[21], 9);
        assert!(matches!(corrupt_stream(&data, 8, 16, &CorruptionPlan::single(8, 0, 1)), Err(ChannelError::OutOfRange { .. })));
        assert!(matches!(corrupt_stream(&data, 8, 16, &CorruptionPlan::single(0, 8, 1)), Err(ChannelError::OutOfRange { .. })));
        assert!(matches!(corrupt_stream(&data, 8, 16, &CorruptionPlan::single(0, 0, 16)), Err(ChannelError::Symbol(16))));
    }

    #[test]
    fn random_rate_count_is_binomial() {
        // n = 10^4, p = 0.01: mean 100, sd 9.95; 99% interval ≈ [74, 126]
        for seed in 0..20 {
            let n = CorruptionPlan::random(0.01, seed).resolve(1250, 8, 16).unwrap().len();
            assert!((74..=126).contains(&n), "seed {seed}: {n}");
        }
        assert!(matches!(CorruptionPlan::random(1.5, 0).resolve(10, 8, 16), Err(ChannelError::Rate(_))));
    }

    #[test]
    fn corruption_is_idempotent_and_commutes() {
        let data: Vec<u8> = (0..800).map(|i| (i * 7 % 16) as u8).collect();
        let plan = CorruptionPlan::random(0.05, 3);
        let once = corrupt_stream(&data, 8, 16, &plan).unwrap();
        assert_eq!(corrupt_stream(&once, 8, 16, &plan).unwrap(), once);
        let (a, b) = (CorruptionPlan::single(1, 1, 4), CorruptionPlan::single(7, 3, 11));
        let ab = corrupt_stream(&corrupt_stream(&data, 8, 16, &a).unwrap(), 8, 16, &b).unwrap();
        let ba = corrupt_stream(&corrupt_stream(&data, 8, 16, &b).unwrap(), 8, 16, &a).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn clean_channel_has_no_delay() {
        let (params, state, mut rng) = setup(Mode::SelfSynchronous, 1);
        let w = symbols(&mut rng, params.iota());
        let p = symbols(&mut rng, 300);
        let run = measure_resync(&params, &state, &w, &p, &CorruptionPlan::default()).unwrap();
        assert_eq!(run.decrypted, run.reference);
        assert_eq!(run.report.max_delay, 0);
        assert!(run.report.events.is_empty());
    }

    #[test]
    fn single_vector_corruption_heals_within_bound() {
        for seed in 0..50 {
            let (params, state, mut rng) = setup(Mode::SelfSynchronous, seed);
            let w = symbols(&mut rng, params.iota());
            let p = symbols(&mut rng, 200);
            let tau = rng.random_range(0..150);
            let plan = CorruptionPlan {
                events: (0..8).map(|i| CorruptionEvent { vector: tau, component: i, value: rng.random_range(0..16) }).collect(),
                random: None,
            };
            let run = measure_resync(&params, &state, &w, &p, &plan).unwrap();
            assert_eq!(run.report.bound, Some(8 + params.nilpotency_index().unwrap()));
            for e in &run.report.events {
                assert!(e.delay <= 16, "seed {seed}: delay {}", e.delay);
            }
            let last_wrong = run.decrypted.iter().zip(&run.reference).rposition(|(a, b)| a != b);
            assert!(last_wrong.is_none_or(|l| l <= tau + 16));
        }
    }

    #[test]
    fn synchronous_mode_errors_do_not_propagate() {
        let (params, state, mut rng) = setup(Mode::Synchronous, 2);
        let w = symbols(&mut rng, params.iota());
        let p = symbols(&mut rng, 200);
        let plan = CorruptionPlan {
            events: vec![
                CorruptionEvent { vector: 50, component: 0, value: 0 },
                CorruptionEvent { vector: 50, component: 1, value: 0 },
                CorruptionEvent { vector: 120, component: 3, value: 5 },
            ],
            random: None,
        };
        let run = measure_resync(&params, &state, &w, &p, &plan).unwrap();
        for (t, (a, b)) in run.decrypted.iter().zip(&run.reference).enumerate() {
            if a != b {
                assert!(t == 50 || t == 120, "error at {t}");
            }
        }
        assert_eq!(run.report.max_delay, 0);
    }

    #[test]
    fn trace_has_one_row_per_step() {
        let (params, state, mut rng) = setup(Mode::SelfSynchronous, 3);
        let w = symbols(&mut rng, params.iota());
        let p = symbols(&mut rng, 50);
        let run = measure_resync(&params, &state, &w, &p, &CorruptionPlan::single(40, 0, 3)).unwrap();
        let csv = run.difference_trace_csv(8).unwrap();
        assert_eq!(csv.lines().count(), 1 + params.iota() + 50);
        let report = run.report.to_csv().unwrap();
        assert!(report.starts_with("vector,first_error,recovered_at,delay,wrong_symbols,isolated"));
    }

    #[test]
    fn op_count_is_deterministic_and_linear() {
        let (params, _, _) = setup(Mode::SelfSynchronous, 4);
        let a = bench_throughput(&params, 1000, 1).unwrap();
        let b = bench_throughput(&params, 1000, 1).unwrap();
        assert_eq!(a.field_ops, b.field_ops);
        let c = bench_throughput(&params, 2000, 1).unwrap();
        let per = a.field_ops / a.symbols as u64;
        assert_eq!(a.field_ops % a.symbols as u64, 0);
        assert_eq!(c.field_ops, per * c.symbols as u64);
        assert_eq!(2 * a.field_ops - per * params.iota() as u64, c.field_ops);
    }
}
