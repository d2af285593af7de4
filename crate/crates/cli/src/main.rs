//! `mccodec`: train transforms, encode/decode motion, and run sweeps.
//!
//! Exit codes: 0 ok, 2 bad arguments, 3 bad input data, 4 corrupt stream,
//! 5 model and data/stream disagree.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use mocap_lsdt::bench::{
    rd_gnuplot_script, rd_sweep, sparsity_gnuplot_script, write_convergence_csv, write_rd_csv,
    write_sparsity_csv,
};
use mocap_lsdt::entropy::{EntropyTables, SymbolStats};
use mocap_lsdt::io::{load_motion, save_motion, CsvFrameReader, MotionFormat};
use mocap_lsdt::lsdt::FrameSource;
use mocap_lsdt::metrics::{sparsity_distortion_curve, stream_compression_ratio, SpatialTransform};
use mocap_lsdt::motion::DEFAULT_FPS;
use mocap_lsdt::stream::{load_stream, save_stream};
use mocap_lsdt::synth::{gen_synthetic, SyntheticParams};
use mocap_lsdt::{
    decode, distortion, encode, load_model, per_joint_distortion, save_model, train_lsdt, CodecConfig,
    CodecKind, Error, InitKind, MotionSequence, TrainConfig, TrainingBatch, TransformModel,
};

#[derive(Parser, Debug)]
#[command(name = "mccodec", version, about = "Motion-capture compression with learned spatial transforms")]
struct Cli {
    /// Worker threads for the parallel parts (default: all cores).
    #[arg(long, global = true, env = "MCCODEC_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learn one orthogonal transform per axis from training motion.
    Train(TrainArgs),
    /// Compress a motion file into a .mccs stream.
    Encode(EncodeArgs),
    /// Reconstruct motion from a .mccs stream.
    Decode(DecodeArgs),
    /// Distortion between two motion files.
    Eval(EvalArgs),
    /// Rate–distortion and sparsity–distortion sweeps.
    Bench(BenchArgs),
    /// Write a synthetic motion sequence.
    Gen(GenArgs),
}

#[derive(Args, Debug)]
struct InputOpts {
    /// Input format; inferred from the extension (.csv, otherwise raw f32).
    #[arg(long)]
    format: Option<MotionFormat>,
    /// Joint count for CSV files without a header line.
    #[arg(long)]
    joints: Option<usize>,
}

impl InputOpts {
    fn load(&self, path: &Path) -> Result<MotionSequence, Failure> {
        let format = self.format.unwrap_or_else(|| MotionFormat::from_path(path));
        Ok(load_motion(path, format, self.joints)?)
    }
}

#[derive(Args, Debug)]
struct TrainOpts {
    /// Nonzero coefficients per frame vector.
    #[arg(long = "P", default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    sparsity: u64,
    /// Maximum iterations.
    #[arg(long = "K", default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    max_iters: u64,
    /// Early-stop threshold on the relative objective decrease over 10 iterations.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value = "dct")]
    init: InitKind,
    /// Train on frame differences instead of raw frames.
    #[arg(long)]
    residual: bool,
}

impl TrainOpts {
    fn config(&self, sparsity: u64) -> TrainConfig {
        TrainConfig {
            sparsity: sparsity as usize,
            max_iters: self.max_iters as usize,
            tol: self.tol,
            init: self.init,
        }
    }

    fn source(&self) -> FrameSource {
        if self.residual {
            FrameSource::Residual
        } else {
            FrameSource::Raw
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training motion files.
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    input: InputOpts,
    #[command(flatten)]
    train: TrainOpts,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// Convergence trace (default: convergence.csv next to the model).
    #[arg(long)]
    convergence: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Offline,
    Streaming,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[arg(long)]
    model: PathBuf,
    /// Motion file; `-` reads CSV from stdin (streaming mode only).
    #[arg(long = "in")]
    input_path: PathBuf,
    #[command(flatten)]
    input: InputOpts,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "clip")]
    codec: CodecKind,
    /// Clip length for the clip codec.
    #[arg(long = "L", default_value_t = 240, value_parser = clap::value_parser!(u64).range(1..=65535))]
    clip_len: u64,
    /// Quantizer bits.
    #[arg(long = "b", default_value_t = 10, value_parser = clap::value_parser!(u8).range(2..=24))]
    bits: u8,
    /// `streaming` emits each frame as it is read (frame codec only).
    #[arg(long, value_enum, default_value_t = Mode::Offline)]
    mode: Mode,
    /// Motion files whose statistics shape the fixed streaming tables.
    #[arg(long, num_args = 1..)]
    tables_from: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input_path: PathBuf,
    /// Output motion file; format from the extension.
    #[arg(long)]
    out: PathBuf,
    /// Frame rate recorded in the output.
    #[arg(long, default_value_t = DEFAULT_FPS)]
    fps: f64,
}

#[derive(Args, Debug)]
struct EvalArgs {
    original: PathBuf,
    reconstructed: PathBuf,
    #[command(flatten)]
    input: InputOpts,
    /// Write `joint,D` rows here.
    #[arg(long)]
    per_joint: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum CodecChoice {
    Frame,
    Clip,
    Both,
}

impl CodecChoice {
    fn kinds(self) -> Vec<CodecKind> {
        match self {
            CodecChoice::Frame => vec![CodecKind::Frame],
            CodecChoice::Clip => vec![CodecKind::Clip],
            CodecChoice::Both => vec![CodecKind::Frame, CodecKind::Clip],
        }
    }
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Trained model; alternatively train one per `--P` value from `--train`.
    #[arg(long, conflicts_with = "train_files", required_unless_present = "train_files")]
    model: Option<PathBuf>,
    /// Training files for a P sweep.
    #[arg(long = "train", num_args = 1..)]
    train_files: Vec<PathBuf>,
    /// P values for the sweep.
    #[arg(long = "P", value_delimiter = ',', default_value = "8", value_parser = clap::value_parser!(u64).range(1..))]
    sparsities: Vec<u64>,
    #[arg(long = "K", default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    max_iters: u64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value = "dct")]
    init: InitKind,
    #[arg(long)]
    residual: bool,
    /// Test sequences.
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    input: InputOpts,
    #[arg(long, value_enum, default_value_t = CodecChoice::Both)]
    codec: CodecChoice,
    #[arg(long = "b", value_delimiter = ',', default_value = "6,8,10,12")]
    bits: Vec<u8>,
    #[arg(long = "L", value_delimiter = ',', default_value = "60,120,240")]
    clip_lens: Vec<usize>,
    /// Kept fractions for the sparsity–distortion comparison.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5")]
    fractions: Vec<f64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Also write gnuplot scripts next to the CSV files.
    #[arg(long)]
    gnuplot: bool,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long = "J", default_value_t = 31)]
    joints: usize,
    #[arg(long = "F", default_value_t = 1200)]
    frames: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed of the shared mixing matrices and rest pose.
    #[arg(long, default_value_t = 0)]
    skeleton_seed: u64,
    /// Rank of the spatial subspace.
    #[arg(long, default_value_t = 8)]
    rank: usize,
    /// Gaussian noise std.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Spread of per-joint rest offsets.
    #[arg(long, default_value_t = 0.0)]
    rest_pose: f64,
    /// Peak amplitude of the shared translation.
    #[arg(long, default_value_t = 50.0)]
    translation: f64,
    #[arg(long, default_value_t = DEFAULT_FPS)]
    fps: f64,
    #[arg(long)]
    out: PathBuf,
}

/// An error plus the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_) | Error::InvalidSweep(_) => 2,
            Error::ChecksumMismatch { .. }
            | Error::CorruptStream(_)
            | Error::UnsupportedVersion(_)
            | Error::FormatMismatch(_)
            | Error::MissingSymbol { .. } => 4,
            Error::ModelMismatch(_) => 5,
            _ => 3,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Error::IoFailure {
        path: path.to_path_buf(),
        source: e,
    }
    .into()
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn display(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

fn check_sparsity(p: u64, joints: usize) -> Result<(), Failure> {
    if p as usize > joints {
        return Err(Failure::usage(format!("--P {p} exceeds the joint count {joints}")));
    }
    Ok(())
}

fn train_model(
    inputs: &[PathBuf],
    input: &InputOpts,
    opts: &TrainOpts,
    sparsity: u64,
) -> Result<TransformModel, Failure> {
    let seqs = inputs
        .iter()
        .map(|p| input.load(p))
        .collect::<Result<Vec<_>, _>>()?;
    check_sparsity(sparsity, seqs[0].joints())?;
    let mut batch = TrainingBatch::from_sequences(&seqs, opts.source())?;
    batch.source = display(inputs).join(";");
    Ok(train_lsdt(&batch, &opts.config(sparsity))?)
}

fn cmd_train(args: TrainArgs) -> Result<(), Failure> {
    if !(args.train.tol >= 0.0 && args.train.tol.is_finite()) {
        return Err(Failure::usage("--tol must be a finite value >= 0"));
    }
    let model = train_model(&args.inputs, &args.input, &args.train, args.train.sparsity)?;
    save_model(&model, &args.out)?;
    for (d, trace) in model.meta.objective_trace.iter().enumerate() {
        println!(
            "{}: objective {:.6e} after {} iterations",
            ["x", "y", "z"][d],
            trace.last().copied().unwrap_or(f64::NAN),
            trace.len()
        );
    }
    let conv = args.convergence.clone().unwrap_or_else(|| {
        args.out
            .parent()
            .unwrap_or_else(|| Path::new(""))
            .join("convergence.csv")
    });
    let provenance = json!({
        "command": "train",
        "in": display(&args.inputs),
        "P": args.train.sparsity,
        "K": args.train.max_iters,
        "tol": args.train.tol,
        "init": args.train.init.to_string(),
        "residual": args.train.residual,
        "frames": model.meta.frames,
        "version": env!("CARGO_PKG_VERSION"),
    });
    let mut w = create(&conv)?;
    write_convergence_csv(&mut w, &model, Some(&provenance.to_string()))
        .and_then(|_| w.flush())
        .map_err(|e| io_failure(&conv, e))?;
    Ok(())
}

fn cmd_encode(args: EncodeArgs) -> Result<(), Failure> {
    let model = load_model(&args.model)?;
    let config = match args.codec {
        CodecKind::Frame => CodecConfig::frame(args.bits),
        CodecKind::Clip => CodecConfig::clip(args.clip_len as usize, args.bits),
    };
    config.validate()?;
    if args.mode == Mode::Streaming {
        if args.codec != CodecKind::Frame {
            return Err(Failure::usage("--mode streaming needs --codec frame"));
        }
        return encode_streaming(&args, &model);
    }
    if !args.tables_from.is_empty() {
        return Err(Failure::usage("--tables-from only applies to --mode streaming"));
    }
    let seq = args.input.load(&args.input_path)?;
    let stream = encode(&seq, &model, &config)?;
    save_stream(&stream, &args.out)?;
    println!("CR {:.4} bytes {}", stream_compression_ratio(&stream), stream.byte_len());
    Ok(())
}

/// Fixed tables for streaming: smoothed statistics of offline encodes of
/// `--tables-from`, or the data-independent prior.
fn streaming_tables(args: &EncodeArgs, model: &TransformModel) -> Result<EntropyTables, Failure> {
    let j = model.joints();
    if args.tables_from.is_empty() {
        return Ok(EntropyTables::prior(j, args.bits)?);
    }
    let mut stats = SymbolStats::default();
    for path in &args.tables_from {
        let seq = args.input.load(path)?;
        let stream = encode(&seq, model, &CodecConfig::frame(args.bits))?;
        for code in stream.decode_codes()? {
            stats.add(&code);
        }
    }
    Ok(EntropyTables::covering(&stats, j, args.bits)?)
}

fn encode_streaming(args: &EncodeArgs, model: &TransformModel) -> Result<(), Failure> {
    let tables = streaming_tables(args, model)?;
    let reader: Box<dyn BufRead> = if args.input_path.as_os_str() == "-" {
        Box::new(BufReader::new(io::stdin()))
    } else {
        let file = File::open(&args.input_path).map_err(|e| io_failure(&args.input_path, e))?;
        Box::new(BufReader::new(file))
    };
    let hint = args.input.joints.or(Some(model.joints()));
    let mut frames = CsvFrameReader::new(reader, hint);
    if let Some(j) = frames.read_header()? {
        if j != model.joints() {
            return Err(Error::ModelMismatch(format!("model has J={}, data has J={j}", model.joints())).into());
        }
    }
    let j = model.joints();
    let mut encoder = mocap_lsdt::codec::StreamingFrameEncoder::new(model, args.bits, tables)?;
    let stdout = io::stdout();
    let mut axes = [vec![0.0; j], vec![0.0; j], vec![0.0; j]];
    while let Some(row) = frames.next_frame()? {
        for (k, v) in row.iter().enumerate() {
            axes[k % 3][k / 3] = *v;
        }
        let emitted = encoder.push_frame([&axes[0], &axes[1], &axes[2]])?;
        let mut out = stdout.lock();
        writeln!(out, "frame {} bits {}", emitted.index, emitted.bits)
            .and_then(|_| out.flush())
            .map_err(|e| io_failure(Path::new("<stdout>"), e))?;
    }
    let stream = encoder.finish()?;
    save_stream(&stream, &args.out)?;
    println!("CR {:.4} bytes {}", stream_compression_ratio(&stream), stream.byte_len());
    Ok(())
}

fn cmd_decode(args: DecodeArgs) -> Result<(), Failure> {
    if !(args.fps.is_finite() && args.fps > 0.0) {
        return Err(Failure::usage("--fps must be positive"));
    }
    let model = load_model(&args.model)?;
    let stream = load_stream(&args.input_path)?;
    let seq = decode(&stream, &model)?;
    let seq = MotionSequence::new(seq.into_data(), args.fps)?;
    save_motion(&seq, &args.out, MotionFormat::from_path(&args.out))?;
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    let a = args.input.load(&args.original)?;
    let b = args.input.load(&args.reconstructed)?;
    println!("D {}", distortion(&a, &b)?);
    if let Some(path) = &args.per_joint {
        let mut w = create(path)?;
        let rows = per_joint_distortion(&a, &b)?;
        let write = |w: &mut BufWriter<File>| -> io::Result<()> {
            writeln!(w, "joint,D")?;
            for (j, d) in rows.iter().enumerate() {
                writeln!(w, "{j},{d}")?;
            }
            w.flush()
        };
        write(&mut w).map_err(|e| io_failure(path, e))?;
    }
    Ok(())
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), Failure> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| io_failure(path, e))
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    if args.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(Failure::usage("--fractions must lie in (0, 1]"));
    }
    let codecs = args.codec.kinds();
    mocap_lsdt::bench::sweep_configs(&codecs, &args.bits, &args.clip_lens)?;
    let seqs = args
        .inputs
        .iter()
        .map(|p| args.input.load(p))
        .collect::<Result<Vec<_>, _>>()?;
    let names = display(&args.inputs);
    std::fs::create_dir_all(&args.out_dir).map_err(|e| io_failure(&args.out_dir, e))?;

    // (file suffix, model, P if trained here)
    let mut models: Vec<(String, TransformModel, Option<u64>)> = Vec::new();
    if let Some(path) = &args.model {
        models.push((String::new(), load_model(path)?, None));
    } else {
        let opts = TrainOpts {
            sparsity: 0,
            max_iters: args.max_iters,
            tol: args.tol,
            init: args.init,
            residual: args.residual,
        };
        for &p in &args.sparsities {
            let model = train_model(&args.train_files, &args.input, &opts, p)?;
            eprintln!("trained P={p}");
            models.push((format!("_P{p}"), model, Some(p)));
        }
    }

    for (suffix, model, p) in &models {
        let provenance = json!({
            "command": "bench",
            "in": names,
            "model": args.model.as_ref().map(|m| m.display().to_string()),
            "train": display(&args.train_files),
            "P": p.map_or(model.meta.sparsity as u64, |p| p),
            "K": p.map(|_| args.max_iters),
            "init": p.map(|_| args.init.to_string()),
            "codec": codecs.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
            "b": args.bits,
            "L": args.clip_lens,
            "fractions": args.fractions,
            "version": env!("CARGO_PKG_VERSION"),
        })
        .to_string();

        let mut rd_rows = Vec::new();
        let mut sp_rows = Vec::new();
        for (name, seq) in names.iter().zip(&seqs) {
            for point in rd_sweep(seq, model, &codecs, &args.bits, &args.clip_lens)? {
                rd_rows.push((name.as_str(), point));
            }
            for t in [SpatialTransform::Learned(model), SpatialTransform::Dct, SpatialTransform::HaarDwt] {
                for point in sparsity_distortion_curve(seq, t, &args.fractions)? {
                    sp_rows.push((name.as_str(), point));
                }
            }
        }

        let rd_name = format!("rd{suffix}.csv");
        let sp_name = format!("sparsity{suffix}.csv");
        write_file(&args.out_dir.join(&rd_name), |w| write_rd_csv(w, &rd_rows, Some(&provenance)))?;
        write_file(&args.out_dir.join(&sp_name), |w| {
            write_sparsity_csv(w, &sp_rows, Some(&provenance))
        })?;
        if args.gnuplot {
            let points: Vec<_> = rd_rows.iter().map(|r| r.1).collect();
            let script = rd_gnuplot_script(&rd_name, &points);
            write_file(&args.out_dir.join(format!("rd{suffix}.gp")), |w| w.write_all(script.as_bytes()))?;
            let points: Vec<_> = sp_rows.iter().map(|r| r.1.clone()).collect();
            let script = sparsity_gnuplot_script(&sp_name, &points);
            write_file(&args.out_dir.join(format!("sparsity{suffix}.gp")), |w| {
                w.write_all(script.as_bytes())
            })?;
        }
        println!("wrote {} ({} rows)", args.out_dir.join(&rd_name).display(), rd_rows.len());
    }
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<(), Failure> {
    let mut params = SyntheticParams::new(args.joints, args.frames, args.rank);
    params.noise = args.noise;
    params.rest_pose = args.rest_pose;
    params.translation = args.translation;
    params.frame_rate = args.fps;
    params.skeleton_seed = args.skeleton_seed;
    params.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let seq = gen_synthetic(&params, args.seed)?;
    save_motion(&seq, &args.out, MotionFormat::from_path(&args.out))?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(format!("cannot set up {n} threads: {e}")))?;
    }
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Encode(a) => cmd_encode(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Gen(a) => cmd_gen(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
