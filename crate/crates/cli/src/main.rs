//! `dewst`: command-line front end for the watermark stress-test simulator.
//!
//! Subcommands mirror the library pipeline: `embed`, `edit`, and `decode`
//! operate on single images; `run` executes the full stress protocol from a
//! JSON config; `spectral` reports per-band retention; `bounds` prints the
//! schedule's information limits; `tune` searches carrier band profiles.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dewst_core::bounds::{fano_lower_bound, mi_upper_bound};
use dewst_core::edit::{coupled_edit, edit, BandGains, EditConfig, EditMode, MaskSpec};
use dewst_core::harness::{emit_report, run_dewst, EditTemplate, ProtocolConfig, ReportFormat};
use dewst_core::metrics::{bit_accuracy, psnr};
use dewst_core::schedule::{NoiseSchedule, ScheduleSpec};
use dewst_core::spectral::{spectral_retention, BandPartition};
use dewst_core::stream::derive_stream;
use dewst_core::tensor::{load_image, save_image};
use dewst_core::tune::{write_trace_csv, TuneOptions, Tuner};
use dewst_core::watermark::{
    decode_bits, decode_soft, detect_statistic, ecc_decode, ecc_encode, embed, make_carriers,
    BandProfile, Payload, WatermarkKey,
};
use dewst_core::{Image, Real};

#[derive(Parser)]
#[command(
    name = "dewst",
    version,
    about = "Stress-test additive spread-spectrum image watermarks under synthetic diffusion edits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full stress protocol from a JSON config and write reports.
    Run(RunArgs),
    /// Embed a payload into an image.
    Embed(EmbedArgs),
    /// Push an image through the synthetic diffusion edit kernel.
    Edit(EditArgs),
    /// Decode a payload from a possibly edited image.
    Decode(DecodeArgs),
    /// Per-band retention report from a coupled edit quadruple.
    Spectral(SpectralArgs),
    /// Print ᾱ, SNR, and information bounds over a schedule sweep.
    Bounds(BoundsArgs),
    /// Search carrier band profiles that survive an edit suite.
    Tune(TuneArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON file mirroring the protocol config field-for-field.
    #[arg(long, required_unless_present = "print_default_config")]
    config: Option<PathBuf>,
    /// Output directory for reports (created if missing).
    #[arg(long, required_unless_present = "print_default_config")]
    out: Option<PathBuf>,
    /// Report formats to emit.
    #[arg(long, value_enum, default_value_t = FormatArg::Both)]
    format: FormatArg,
    /// Print the default config as JSON and exit.
    #[arg(long)]
    print_default_config: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

#[derive(Args)]
struct EmbedArgs {
    /// Input image (.dws or .png).
    #[arg(long)]
    input: PathBuf,
    /// Output image (.dws or .png).
    #[arg(long)]
    output: PathBuf,
    /// Carrier key seed.
    #[arg(long, default_value_t = 7)]
    key_seed: u64,
    /// Payload as hex (4 bits per digit).
    #[arg(long, conflicts_with = "random_bits")]
    payload: Option<String>,
    /// Draw a random payload of this many bits instead (printed as hex).
    #[arg(long)]
    random_bits: Option<usize>,
    /// Seed for --random-bits.
    #[arg(long, default_value_t = 1)]
    payload_seed: u64,
    /// Repetition factor (odd).
    #[arg(long, default_value_t = 3)]
    repetition: usize,
    /// Explicit embedding strength; overrides --target-psnr.
    #[arg(long)]
    gamma: Option<f64>,
    /// Embedding fidelity target in dB when --gamma is absent.
    #[arg(long, default_value_t = 40.0)]
    target_psnr: f64,
    /// Carrier band energy fractions low,mid,high.
    #[arg(long, default_value = "0.1,0.5,0.4")]
    profile: String,
    #[command(flatten)]
    partition: PartitionArgs,
}

#[derive(Args)]
struct PartitionArgs {
    /// Low/mid band edge in cycles per pixel.
    #[arg(long, default_value_t = 0.125)]
    f1: f64,
    /// Mid/high band edge in cycles per pixel.
    #[arg(long, default_value_t = 0.25)]
    f2: f64,
}

impl PartitionArgs {
    fn build(&self) -> BandPartition {
        BandPartition {
            f1: self.f1,
            f2: self.f2,
        }
    }
}

#[derive(Args)]
struct EditArgs {
    /// Input image (.dws or .png).
    #[arg(long)]
    input: PathBuf,
    /// Output image (.dws or .png).
    #[arg(long)]
    output: PathBuf,
    /// Normalized diffusion start time in [0, 1].
    #[arg(long, default_value_t = 0.4)]
    t_star: f64,
    /// Reverse contraction steps.
    #[arg(long, default_value_t = 5)]
    steps: usize,
    /// Per-step band gains low,mid,high, each in (0, 1].
    #[arg(long, default_value = "0.98,0.85,0.55")]
    gains: String,
    /// Reverse-process flavor.
    #[arg(long, value_enum, default_value_t = ModeArg::LinearShrink)]
    mode: ModeArg,
    /// Apply the edit only inside a centered square covering this side
    /// fraction.
    #[arg(long)]
    mask_fraction: Option<f64>,
    /// Fraction of the kernel effect leaking outside the mask.
    #[arg(long, default_value_t = 0.15)]
    kappa: f64,
    /// Gaussian blur scale of the per-step anchor, in pixels.
    #[arg(long, default_value_t = 2.0)]
    anchor_sigma: f64,
    /// Noise seed.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Noise schedule as JSON, e.g.
    /// {"kind":"linear","beta_start":1e-4,"beta_end":0.2,"steps":100}.
    #[arg(long)]
    schedule: Option<String>,
    #[command(flatten)]
    partition: PartitionArgs,
    /// Write per-step residual norms as CSV (columns step,residual_norm).
    #[arg(long)]
    step_log: Option<PathBuf>,
    /// Clean counterpart image; runs the coupled kernel (shared noise and
    /// anchors) instead of a standalone edit.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Where to save the edited clean branch (requires --reference).
    #[arg(long, requires = "reference")]
    reference_out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    LinearShrink,
    Resynth,
}

#[derive(Args)]
struct DecodeArgs {
    /// Image to decode (.dws or .png).
    #[arg(long)]
    input: PathBuf,
    /// Original unwatermarked image; enables informed decoding.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Carrier key seed used at embed time.
    #[arg(long, default_value_t = 7)]
    key_seed: u64,
    /// Payload length in bits (before repetition).
    #[arg(long, default_value_t = 96)]
    payload_bits: usize,
    /// Repetition factor used at embed time (odd).
    #[arg(long, default_value_t = 3)]
    repetition: usize,
    /// Carrier band energy fractions low,mid,high.
    #[arg(long, default_value = "0.1,0.5,0.4")]
    profile: String,
    #[command(flatten)]
    partition: PartitionArgs,
    /// Expected payload hex; prints bit accuracy against it.
    #[arg(long)]
    expect: Option<String>,
}

#[derive(Args)]
struct SpectralArgs {
    /// Edited watermarked image (retention numerator, first operand).
    #[arg(long)]
    edited_wm: PathBuf,
    /// Edited clean image (retention numerator, subtracted).
    #[arg(long)]
    edited_clean: PathBuf,
    /// Watermarked input image (retention denominator, first operand).
    #[arg(long)]
    input_wm: PathBuf,
    /// Clean input image (retention denominator, subtracted).
    #[arg(long)]
    input_clean: PathBuf,
    #[command(flatten)]
    partition: PartitionArgs,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    /// Explicit embedding strength; overrides --target-psnr.
    #[arg(long)]
    gamma: Option<f64>,
    /// Strength from a fidelity target in dB when --gamma is absent.
    #[arg(long, default_value_t = 40.0)]
    target_psnr: f64,
    /// Payload length in bits (for the message-error bound).
    #[arg(long, default_value_t = 96)]
    payload_bits: usize,
    /// Embedding dimension d = height·width·channels.
    #[arg(long, default_value_t = 12288)]
    dimension: usize,
    /// Noise schedule as JSON; defaults to linear 1e-4..0.2 over 100 steps.
    #[arg(long)]
    schedule: Option<String>,
    /// Edit strengths t* to tabulate.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "0.0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    t_stars: Vec<f64>,
    /// Also write the table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    /// Embedding fidelity floor in dB (at least 30).
    #[arg(long, default_value_t = 35.0)]
    psnr_floor: f64,
    /// Fresh objective evaluation cap (at least 20).
    #[arg(long, default_value_t = 60)]
    budget: usize,
    /// Seed for the evaluation context and random restart.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Edit strengths t* the suite is sampled at.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "0.2,0.4,0.6,0.8")]
    strengths: Vec<f64>,
    /// JSON file with an array of edit templates; defaults to the standard
    /// global/local/resynth suite.
    #[arg(long)]
    suite: Option<PathBuf>,
    /// Write the evaluation trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Run an exhaustive simplex grid with this many subdivisions instead of
    /// coordinate search (20 gives the 5% grid).
    #[arg(long)]
    grid: Option<usize>,
    /// Evaluation context: number of images.
    #[arg(long, default_value_t = 2)]
    images: usize,
    /// Evaluation context: image height.
    #[arg(long, default_value_t = 32)]
    height: usize,
    /// Evaluation context: image width.
    #[arg(long, default_value_t = 32)]
    width: usize,
    /// Evaluation context: channels (1 or 3).
    #[arg(long, default_value_t = 3)]
    channels: usize,
    /// Evaluation context: raw payload bits.
    #[arg(long, default_value_t = 48)]
    payload_bits: usize,
    /// Evaluation context: noise seeds per (edit, strength) case.
    #[arg(long, default_value_t = 2)]
    seeds_per_case: usize,
}

fn main() {
    if let Err(e) = dispatch(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Embed(args) => cmd_embed(args),
        Command::Edit(args) => cmd_edit(args),
        Command::Decode(args) => cmd_decode(args),
        Command::Spectral(args) => cmd_spectral(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Tune(args) => cmd_tune(args),
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    if args.print_default_config {
        println!("{}", serde_json::to_string_pretty(&ProtocolConfig::default())?);
        return Ok(());
    }
    let config_path = args.config.expect("clap enforces --config");
    let out_dir = args.out.expect("clap enforces --out");
    let text = fs::read_to_string(&config_path)
        .with_context(|| format!("reading config {}", config_path.display()))?;
    let config: ProtocolConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", config_path.display()))?;
    let report = run_dewst(&config)?;
    let mut written = Vec::new();
    if args.format != FormatArg::Json {
        written.extend(emit_report(&report, ReportFormat::Csv, &out_dir)?);
    }
    if args.format != FormatArg::Csv {
        written.extend(emit_report(&report, ReportFormat::Json, &out_dir)?);
    }
    println!(
        "completed {} trials over {} aggregate cells",
        report.rows.len(),
        report.aggregates.len()
    );
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_embed(args: EmbedArgs) -> Result<()> {
    let x: Image = load_image(&args.input)?;
    let (h, w, c) = x.dims();
    let payload = match (&args.payload, args.random_bits) {
        (Some(hex), None) => Payload::from_hex(hex)?,
        (None, Some(bits)) => {
            let mut rng = derive_stream(args.payload_seed, &[0]);
            Payload::random(bits, &mut rng)?
        }
        (None, None) => bail!("provide either --payload or --random-bits"),
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };
    let coded = ecc_encode(&payload, args.repetition)?;
    let profile = parse_profile(&args.profile)?;
    let key = WatermarkKey::new(args.key_seed, profile)?;
    let bank = make_carriers::<Real>(&key, coded.coded_bits.len(), h, w, c, &args.partition.build())?;
    let gamma = args
        .gamma
        .unwrap_or_else(|| 10f64.powf(-args.target_psnr / 20.0));
    let x_w = embed(&x, &coded.coded_bits, &bank, gamma)?;
    save_image(&x_w, &args.output)?;
    println!("payload {}", payload.to_hex()?);
    println!("gamma {gamma}");
    println!("psnr_db {}", psnr(&x, &x_w)?);
    println!("wrote {}", args.output.display());
    Ok(())
}

fn cmd_edit(args: EditArgs) -> Result<()> {
    let x: Image = load_image(&args.input)?;
    let gains = parse_triple(&args.gains).context("parsing --gains")?;
    let config = EditConfig {
        t_star: args.t_star,
        n_steps: args.steps,
        band_gains: BandGains {
            low: gains[0],
            mid: gains[1],
            high: gains[2],
        },
        mode: match args.mode {
            ModeArg::LinearShrink => EditMode::LinearShrink,
            ModeArg::Resynth => EditMode::Resynth,
        },
        mask: args
            .mask_fraction
            .map(|side_fraction| MaskSpec::CenteredRect { side_fraction }),
        coupling_kappa: args.kappa,
        anchor_sigma: args.anchor_sigma,
        seed_lanes: vec![args.seed],
    };
    let sched = NoiseSchedule::<Real>::from_spec(parse_schedule(args.schedule.as_deref())?)?;
    let partition = args.partition.build();
    let mut rng = derive_stream(args.seed, &[0]);
    let outcome = match &args.reference {
        None => edit(&x, &config, &sched, &partition, &mut rng)?,
        Some(ref_path) => {
            let clean: Image = load_image(ref_path)?;
            coupled_edit(&x, &clean, &config, &sched, &partition, &mut rng)?
        }
    };
    save_image(&outcome.edited, &args.output)?;
    println!("start_step {}", outcome.start_step);
    println!("alpha_bar {}", outcome.realized_alpha_bar);
    match outcome.snr_empirical {
        Some(snr) => println!("snr_empirical {snr}"),
        None => println!("snr_empirical n/a"),
    }
    println!("psnr_db {}", psnr(&x, &outcome.edited)?);
    println!("wrote {}", args.output.display());
    if let Some(path) = &args.reference_out {
        let baseline = outcome
            .baseline_edited
            .as_ref()
            .expect("coupled edits always produce a baseline");
        save_image(baseline, path)?;
        println!("wrote {}", path.display());
    }
    if let Some(path) = &args.step_log {
        let mut out = fs::File::create(path)
            .with_context(|| format!("creating step log {}", path.display()))?;
        writeln!(out, "step,residual_norm")?;
        for (i, norm) in outcome.step_log.iter().enumerate() {
            writeln!(out, "{},{}", i + 1, norm)?;
        }
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_decode(args: DecodeArgs) -> Result<()> {
    let y: Image = load_image(&args.input)?;
    let reference: Option<Image> = args
        .reference
        .as_deref()
        .map(load_image::<Real>)
        .transpose()?;
    let (h, w, c) = y.dims();
    let profile = parse_profile(&args.profile)?;
    let key = WatermarkKey::new(args.key_seed, profile)?;
    let l_enc = args
        .payload_bits
        .checked_mul(args.repetition)
        .context("payload_bits * repetition overflows")?;
    let bank = make_carriers::<Real>(&key, l_enc, h, w, c, &args.partition.build())?;
    let scores = decode_soft(&y, reference.as_ref(), &bank)?;
    let coded = decode_bits(&scores);
    let (payload, _votes) = ecc_decode(&coded, args.repetition)?;
    println!("mode {}", if reference.is_some() { "informed" } else { "blind" });
    println!("payload {}", payload.to_hex()?);
    println!("detect_score {}", detect_statistic(&scores, bank.d()));
    if let Some(expect_hex) = &args.expect {
        let expected = Payload::from_hex(expect_hex)?;
        let (ba, ber) = bit_accuracy(payload.bits(), expected.bits())?;
        println!("bit_accuracy {ba}");
        println!("bit_error_rate {ber}");
        println!("message_ok {}", payload == expected);
    }
    Ok(())
}

fn cmd_spectral(args: SpectralArgs) -> Result<()> {
    let edited_wm: Image = load_image(&args.edited_wm)?;
    let edited_clean: Image = load_image(&args.edited_clean)?;
    let input_wm: Image = load_image(&args.input_wm)?;
    let input_clean: Image = load_image(&args.input_clean)?;
    let report = spectral_retention(
        &[(&edited_wm, &edited_clean)],
        &[(&input_wm, &input_clean)],
        &args.partition.build(),
    )?;
    match &args.out {
        Some(path) => {
            let file = fs::File::create(path)
                .with_context(|| format!("creating {}", path.display()))?;
            report.write_csv(file)?;
            println!("wrote {}", path.display());
        }
        None => report.write_csv(std::io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_bounds(args: BoundsArgs) -> Result<()> {
    let gamma = args
        .gamma
        .unwrap_or_else(|| 10f64.powf(-args.target_psnr / 20.0));
    if args.dimension == 0 || args.payload_bits == 0 {
        bail!("--dimension and --payload-bits must be positive");
    }
    let sched = NoiseSchedule::<Real>::from_spec(parse_schedule(args.schedule.as_deref())?)?;
    let mut rows = Vec::new();
    for &t_star in &args.t_stars {
        let step = sched.start_step(t_star)?;
        let alpha_bar = sched.alpha_bar(step)?;
        let snr = if alpha_bar < 1.0 {
            gamma * gamma * alpha_bar / (1.0 - alpha_bar)
        } else {
            f64::INFINITY
        };
        let mi = mi_upper_bound(args.dimension, gamma, alpha_bar);
        let fano = if mi.is_finite() {
            fano_lower_bound(mi, args.payload_bits)?
        } else {
            0.0
        };
        rows.push((t_star, alpha_bar, snr, mi, fano));
    }
    println!(
        "{:>8} {:>14} {:>14} {:>16} {:>12}",
        "t_star", "alpha_bar", "snr", "mi_bound_nats", "fano_bound"
    );
    for (t, ab, snr, mi, fano) in &rows {
        println!("{t:>8.3} {ab:>14.8} {snr:>14.6e} {mi:>16.6} {fano:>12.6}");
    }
    if let Some(path) = &args.csv {
        let mut out = fs::File::create(path)
            .with_context(|| format!("creating {}", path.display()))?;
        writeln!(out, "t_star,alpha_bar,snr,mi_bound_nats,fano_bound")?;
        for (t, ab, snr, mi, fano) in &rows {
            writeln!(out, "{t},{ab},{snr},{mi},{fano}")?;
        }
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_tune(args: TuneArgs) -> Result<()> {
    let suite: Vec<EditTemplate> = match &args.suite {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading suite {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing suite {}", path.display()))?
        }
        None => vec![
            EditTemplate::global(),
            EditTemplate::local(),
            EditTemplate::resynth(),
        ],
    };
    let options = TuneOptions {
        n_images: args.images,
        height: args.height,
        width: args.width,
        channels: args.channels,
        payload_bits: args.payload_bits,
        seeds_per_case: args.seeds_per_case,
        ..TuneOptions::default()
    };
    let mut rng = derive_stream(args.seed, &[0]);
    let mut tuner = Tuner::new(
        &suite,
        &args.strengths,
        args.psnr_floor,
        args.budget,
        options,
        &mut rng,
    )?;
    let (best, objective) = match args.grid {
        Some(divisions) => tuner.grid_search(divisions)?,
        None => {
            let best = tuner.run()?;
            let (ber, _) = tuner.evaluate(&best.profile)?;
            (best, ber)
        }
    };
    println!(
        "profile {},{},{}",
        best.profile.low, best.profile.mid, best.profile.high
    );
    println!("gamma {}", best.gamma);
    println!("objective_ber {objective}");
    println!("evaluations {}", tuner.evaluations_used());
    if let Some(path) = &args.trace {
        write_trace_csv(tuner.trace(), path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn parse_triple(text: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        bail!("expected three comma-separated numbers, got {text:?}");
    }
    let mut out = [0.0; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<f64>()
            .with_context(|| format!("parsing {part:?} as a number"))?;
    }
    Ok(out)
}

fn parse_profile(text: &str) -> Result<BandProfile> {
    let [low, mid, high] = parse_triple(text).context("parsing --profile")?;
    Ok(BandProfile::new(low, mid, high)?)
}

fn parse_schedule(text: Option<&str>) -> Result<ScheduleSpec> {
    match text {
        None => Ok(ScheduleSpec::default()),
        Some(json) => serde_json::from_str(json).context("parsing --schedule JSON"),
    }
}
