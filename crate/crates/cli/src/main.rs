use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand, ValueEnum};
use plcie::channel::{self, CorruptionPlan};
use plcie::chaos::{write_orbit_bits, ChaoticState};
use plcie::container::{self, Container};
use plcie::stats::{self, AnalysisReport, Direction, Granularity, PixelChoice, SensitivityKind, Width};
use plcie::{derive_params, init_from_iv, CipherParams, ErrorKind, FieldSpec, GrayImage, InitVector, KeyMaterial, Mode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[derive(Parser)]
#[command(name = "plcie", version, about = "Self-synchronizing chaotic stream cipher for grayscale images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random key file.
    Keygen(KeygenArgs),
    /// Encrypt a PGM image into a PLC1 container.
    Encrypt(EncryptArgs),
    /// Decrypt a PLC1 container back to a PGM image.
    Decrypt(DecryptArgs),
    /// Statistical analysis of images.
    Analyze(AnalyzeArgs),
    /// Corrupt a cipher stream and report how the decryptor recovers.
    Channel(ChannelArgs),
    /// Throughput and field-operation count.
    Bench(BenchArgs),
    /// Dump raw chaotic orbit bits for external randomness tests.
    OrbitBits(OrbitBitsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Selfsync,
    Sync,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Selfsync => Mode::SelfSynchronous,
            ModeArg::Sync => Mode::Synchronous,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    Histogram,
    Entropy,
    Npcr,
    Uaci,
    Correlation,
    Sensitivity,
}

#[derive(Clone, Copy, ValueEnum)]
enum GranularityArg {
    Byte,
    Symbol,
}

#[derive(Args)]
struct KeygenArgs {
    /// Chaotic map precision in bits.
    #[arg(long, default_value_t = 16, value_parser = PossibleValuesParser::new(["16", "32"]).map(|s| s.parse::<u32>().unwrap()))]
    prec: u32,
    /// Number of sparse E entries; defaults to 6 at prec 16 and 5 at prec 32.
    #[arg(long)]
    triples: Option<usize>,
    #[arg(long, default_value_t = 8)]
    ell: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; standard output when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EncryptArgs {
    #[arg(long, short)]
    key: PathBuf,
    #[arg(long = "in", short)]
    input: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Selfsync)]
    mode: ModeArg,
    /// Whitening prefix length in symbols (default 4·ℓ).
    #[arg(long)]
    iota: Option<usize>,
    /// Seed for the IV and whitening prefix.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the cipher image as PGM.
    #[arg(long)]
    cipher_image: Option<PathBuf>,
}

#[derive(Args)]
struct DecryptArgs {
    #[arg(long, short)]
    key: PathBuf,
    #[arg(long = "in", short)]
    input: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Selfsync)]
    mode: ModeArg,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Image to analyze (PGM or PLC1 container, which is read as its cipher image).
    #[arg(long)]
    image: PathBuf,
    /// Second image for NPCR and UACI.
    #[arg(long)]
    other: Option<PathBuf>,
    /// Key for the sensitivity experiments.
    #[arg(long, short)]
    key: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "histogram,entropy,correlation")]
    metrics: Vec<Metric>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Write the 256-bin histogram as CSV.
    #[arg(long)]
    histogram_out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = stats::DEFAULT_PAIRS)]
    pairs: usize,
    #[arg(long, value_enum, default_value_t = GranularityArg::Byte)]
    granularity: GranularityArg,
    /// Pixel flipped by the plaintext sensitivity run: an index or "random".
    #[arg(long, default_value = "0")]
    pixel: String,
}

#[derive(Args)]
struct ChannelArgs {
    #[arg(long, short)]
    key: PathBuf,
    /// Corruption plan as JSON: {"events": [{"vector", "component", "value"}], "random": {"rate", "seed"}}.
    #[arg(long)]
    plan: PathBuf,
    /// Plaintext image; random symbols are used when omitted.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Number of random plaintext symbols when no image is given.
    #[arg(long, default_value_t = 4096)]
    symbols: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Selfsync)]
    mode: ModeArg,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Report path; standard output when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Write the per-symbol difference trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, short)]
    key: PathBuf,
    /// Plaintext size in MiB.
    #[arg(long, default_value_t = 1.0)]
    megabytes: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct OrbitBitsArgs {
    #[arg(long, short)]
    key: PathBuf,
    /// Number of orbit iterates to write.
    #[arg(long, default_value_t = 1 << 16)]
    words: usize,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug)]
struct Failure {
    kind: ErrorKind,
    msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Failure { kind: ErrorKind::Usage, msg: msg.into() }
    }

    fn format(msg: impl Into<String>) -> Self {
        Failure { kind: ErrorKind::Format, msg: msg.into() }
    }

    fn io(path: &Path, e: io::Error) -> Self {
        Failure { kind: ErrorKind::Io, msg: format!("{}: {e}", path.display()) }
    }
}

impl<E: Into<plcie::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e = e.into();
        Failure { kind: e.kind(), msg: e.to_string() }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Io => 1,
        ErrorKind::Usage => 2,
        ErrorKind::Format => 3,
        ErrorKind::Crypto => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Keygen(a) => keygen(a),
        Command::Encrypt(a) => encrypt(a),
        Command::Decrypt(a) => decrypt(a),
        Command::Analyze(a) => analyze(a),
        Command::Channel(a) => channel(a),
        Command::Bench(a) => bench(a),
        Command::OrbitBits(a) => orbit_bits(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("plcie: {}", f.msg);
            ExitCode::from(exit_code(f.kind))
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::io(path, e))
}

fn write(path: &Path, data: &[u8]) -> Result<()> {
    fs::write(path, data).map_err(|e| Failure::io(path, e))
}

fn emit(out: Option<&Path>, data: &[u8]) -> Result<()> {
    match out {
        Some(p) => write(p, data),
        None => io::stdout().write_all(data).map_err(|e| Failure::io(Path::new("<stdout>"), e)),
    }
}

/// Explicit seed, or a fresh one from OS entropy.
fn seed_or_random(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| rand::rng().random())
}

fn load_key(path: &Path) -> Result<(KeyMaterial, usize, FieldSpec)> {
    let text = String::from_utf8(read(path)?).map_err(|_| Failure::format(format!("{}: key file is not UTF-8", path.display())))?;
    Ok(KeyMaterial::from_key_file(&text)?)
}

fn load_params(path: &Path, mode: Mode) -> Result<(KeyMaterial, CipherParams)> {
    let (km, ell, field) = load_key(path)?;
    let params = derive_params(&km, ell, field, mode)?;
    Ok((km, params))
}

fn load_image(path: &Path) -> Result<GrayImage> {
    let data = read(path)?;
    if data.starts_with(container::MAGIC) {
        Ok(Container::from_bytes(&data)?.cipher_image()?)
    } else {
        Ok(plcie::image::read_pgm(&data)?)
    }
}

fn keygen(a: KeygenArgs) -> Result<()> {
    let prec = a.prec;
    let n = a.triples.unwrap_or(if prec == 16 { 6 } else { 5 });
    let seed = seed_or_random(a.seed);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let km = KeyMaterial::random(&mut rng, prec, n, a.ell)?;
    // reject keys that cannot derive parameters now rather than at encryption
    derive_params(&km, a.ell, FieldSpec::Gf16, Mode::SelfSynchronous)?;
    eprintln!("plcie: {}-bit key, seed {seed}", km.bit_len(a.ell));
    emit(a.out.as_deref(), km.to_key_file(a.ell, FieldSpec::Gf16).as_bytes())
}

fn encrypt(a: EncryptArgs) -> Result<()> {
    let (km, mut params) = load_params(&a.key, a.mode.into())?;
    if let Some(iota) = a.iota {
        params = params.with_iota(iota);
    }
    let img = load_image(&a.input)?;
    let seed = seed_or_random(a.seed);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let c = container::encrypt_image(&params, km.prec(), &img, &mut rng)?;
    write(&a.out, &c.to_bytes())?;
    if let Some(p) = &a.cipher_image {
        write(p, &plcie::image::write_pgm(&c.cipher_image()?))?;
    }
    eprintln!("plcie: encrypted {}x{}, seed {seed}", img.width(), img.height());
    Ok(())
}

fn decrypt(a: DecryptArgs) -> Result<()> {
    let (km, params) = load_params(&a.key, a.mode.into())?;
    let c = Container::from_bytes(&read(&a.input)?)?;
    if c.prec != km.prec() {
        eprintln!("plcie: warning: container was written with a {}-bit key, this key is {}-bit", c.prec, km.prec());
    }
    let img = container::decrypt_image(&params, &c)?;
    write(&a.out, &plcie::image::write_pgm(&img))
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let img = load_image(&a.image)?;
    let seed = seed_or_random(a.seed);
    let g = match a.granularity {
        GranularityArg::Byte => Granularity::Byte,
        GranularityArg::Symbol => Granularity::Symbol,
    };
    let other = a.other.as_deref().map(load_image).transpose()?;
    let mut report = AnalysisReport::default();
    for m in &a.metrics {
        match m {
            Metric::Histogram => {
                let bins = stats::histogram(&img);
                let mean = img.pixels().len() as f64 / 256.0;
                let max = *bins.iter().max().expect("256 bins") as f64;
                report.push("histogram_max_over_mean", "bins=256", max / mean, None);
                if let Some(p) = &a.histogram_out {
                    write(p, stats::histogram_csv(&bins)?.as_bytes())?;
                }
            }
            Metric::Entropy => {
                for (name, w) in [("entropy_bit", Width::Bit), ("entropy_nibble", Width::Nibble), ("entropy_byte", Width::Byte)] {
                    report.push(name, format!("width={}", w.bits()), stats::entropy(img.pixels(), w)?, None);
                }
            }
            Metric::Npcr | Metric::Uaci => {
                let b = other.as_ref().ok_or_else(|| Failure::usage("npcr and uaci need --other"))?;
                let params = format!("granularity={}", if g == Granularity::Byte { "byte" } else { "symbol" });
                if *m == Metric::Npcr {
                    report.push("npcr", params, stats::npcr(&img, b, g)?, None);
                } else {
                    report.push("uaci", params, stats::uaci(&img, b, g)?, None);
                }
            }
            Metric::Correlation => {
                for dir in Direction::ALL {
                    let r = stats::adjacent_correlation(&img, dir, a.pairs, seed)?;
                    report.push(&format!("correlation_{dir}"), format!("pairs={}", a.pairs), r, Some(seed));
                }
            }
            Metric::Sensitivity => {
                let key = a.key.as_deref().ok_or_else(|| Failure::usage("sensitivity needs --key"))?;
                let (km, ell, _) = load_key(key)?;
                let pixel = match a.pixel.as_str() {
                    "random" => PixelChoice::Random,
                    s => PixelChoice::Index(s.parse().map_err(|_| Failure::usage(format!("bad --pixel '{s}'")))?),
                };
                for kind in [SensitivityKind::Plaintext, SensitivityKind::Key] {
                    let r = stats::sensitivity_experiment(kind, &km, ell, &img, seed, pixel)?;
                    let label = match kind {
                        SensitivityKind::Plaintext => "plaintext",
                        SensitivityKind::Key => "key",
                    };
                    let params = format!("position={}", r.position);
                    report.push(&format!("sensitivity_{label}_npcr"), params.clone(), r.npcr, Some(seed));
                    report.push(&format!("sensitivity_{label}_uaci"), params, r.uaci, Some(seed));
                }
            }
        }
    }
    let text = match a.format {
        Format::Csv => report.to_csv()?,
        Format::Json => report.to_json()?,
    };
    emit(a.out.as_deref(), text.as_bytes())
}

fn channel(a: ChannelArgs) -> Result<()> {
    let (_, params) = load_params(&a.key, a.mode.into())?;
    let plan: CorruptionPlan = serde_json::from_slice(&read(&a.plan)?)
        .map_err(|e| Failure::format(format!("{}: {e}", a.plan.display())))?;
    let seed = seed_or_random(a.seed);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let q = params.field().order() as u8;
    let payload = match &a.image {
        Some(p) => plcie::image::bytes_to_symbols(load_image(p)?.pixels()).into_symbols(),
        None => (0..a.symbols).map(|_| rng.random_range(0..q)).collect(),
    };
    let iv = InitVector::random(&mut rng, params.field(), params.ell());
    let whitening: Vec<u8> = (0..params.iota()).map(|_| rng.random_range(0..q)).collect();
    let state = init_from_iv(&iv, &params)?;
    let run = channel::measure_resync(&params, &state, &whitening, &payload, &plan)?;
    let r = &run.report;
    eprintln!(
        "plcie: {} corrupted vectors, {} wrong symbols, max delay {} (bound {}), seed {seed}",
        r.events.len(),
        r.total_wrong,
        r.max_delay,
        r.bound.map_or("none".to_string(), |b| b.to_string())
    );
    let text = match a.format {
        Format::Csv => r.to_csv()?,
        Format::Json => serde_json::to_string_pretty(r).expect("report serializes"),
    };
    emit(a.out.as_deref(), text.as_bytes())?;
    if let Some(p) = &a.trace {
        write(p, run.difference_trace_csv(params.ell())?.as_bytes())?;
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    if !(a.megabytes > 0.0 && a.megabytes.is_finite()) {
        return Err(Failure::usage("--megabytes must be positive"));
    }
    let (_, params) = load_params(&a.key, Mode::SelfSynchronous)?;
    let symbols = (a.megabytes * 2.0 * 1024.0 * 1024.0) as usize;
    let seed = seed_or_random(a.seed);
    let r = channel::bench_throughput(&params, symbols, seed)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
    } else {
        println!("symbols          {}", r.symbols);
        println!("seconds          {:.3}", r.seconds);
        println!("symbols/s        {:.0}", r.symbols_per_sec);
        println!("MiB/s            {:.2}", r.plaintext_mib_per_sec);
        println!("field ops/symbol {:.1}", r.ops_per_symbol);
        println!("Moustique        {:.0} ({:.1}x)", r.moustique_ops_per_symbol, r.moustique_ops_per_symbol / r.ops_per_symbol);
    }
    Ok(())
}

fn orbit_bits(a: OrbitBitsArgs) -> Result<()> {
    let (km, _, _) = load_key(&a.key)?;
    let seed = ChaoticState::new(km.r0() | 1, km.prec())?;
    let mut buf = Vec::with_capacity(a.words * km.prec() as usize / 8 + 1);
    write_orbit_bits(seed, km.l0(), a.words, &mut buf).expect("writing to a Vec");
    write(&a.out, &buf)
}
