//! `fic`: encode, decode and benchmark the fractal codec from the shell.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O or parse error,
//! 3 encode/decode failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use fic_core::bench::write_bench_csv;
use fic_core::codeformat::LeafLayout;
use fic_core::metrics::format_psnr;
use fic_core::{
    compression_ratio, decode, deserialize, encode, load_pgm, run_benchmark, s_histogram, save_pgm,
    serialize, BenchImage, DecodeSettings, EncoderConfig, Execution, PoolSelection, SMode,
};

#[derive(Parser, Debug)]
#[command(
    name = "fic",
    version,
    about = "Quadtree fractal image codec for 8-bit PGM images"
)]
struct Cli {
    /// Worker threads for encoder/decoder loops (1 = sequential; default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode a PGM image into a .fic code.
    Encode {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        enc: EncoderFlags,
    },
    /// Reconstruct a PGM image from a .fic code.
    Decode {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 12)]
        iters: usize,
        #[arg(long, default_value_t = 128)]
        init_gray: u8,
        /// Stop when the largest pixel change drops below this.
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,
    },
    /// Compression ratio, encode time and PSNR for every image × pool size × mode.
    Bench {
        #[arg(short, long, num_args = 1.., required = true)]
        input: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "256,64,32")]
        pool_sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "predefined,sampled10")]
        modes: Vec<SMode>,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        enc: EncoderFlags,
    },
    /// Histogram the least-squares contrast of accepted ranges per level.
    Shist {
        #[arg(short, long)]
        input: PathBuf,
        /// Writes <prefix>_<level>.csv for every level.
        #[arg(short, long)]
        output: String,
        #[command(flatten)]
        enc: EncoderFlags,
    },
    /// Print a .fic header and quadtree statistics.
    Info {
        #[arg(short, long)]
        input: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
struct EncoderFlags {
    /// Keep the K highest-entropy domain origins per level.
    #[arg(long, conflicts_with = "min_entropy")]
    pool_size: Option<usize>,
    /// Keep domain origins with at least this entropy (nats).
    #[arg(long)]
    min_entropy: Option<f64>,
    #[arg(long, default_value = "predefined")]
    s_mode: SMode,
    /// Per-pixel RMS collage error accepted without splitting.
    #[arg(long, default_value_t = 14.0)]
    rms_tol: f64,
    /// Domain step as a multiple of the range size.
    #[arg(long, default_value_t = 1)]
    step_factor: usize,
    #[arg(long, default_value_t = 16)]
    max_range: usize,
    #[arg(long, default_value_t = 2)]
    min_range: usize,
    /// Upper clamp for the contrast factor.
    #[arg(long, default_value_t = 1.0)]
    s_max: f64,
    /// Decoder iterations used when measuring PSNR.
    #[arg(long, default_value_t = 12)]
    decode_iters: usize,
}

impl EncoderFlags {
    fn config(&self, execution: Execution) -> EncoderConfig {
        let pool_selection = match (self.pool_size, self.min_entropy) {
            (_, Some(tau)) => PoolSelection::MinEntropy(tau),
            (Some(k), None) => PoolSelection::TopK(k),
            (None, None) => PoolSelection::default(),
        };
        EncoderConfig {
            max_range: self.max_range,
            min_range: self.min_range,
            rms_tolerance: self.rms_tol,
            pool_selection,
            domain_step_factor: self.step_factor,
            s_mode: self.s_mode,
            s_max: self.s_max,
            decode_iterations: self.decode_iters,
            execution,
        }
    }
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: anyhow::Error) -> Failure {
    Failure { code: 1, error }
}

fn io(error: anyhow::Error) -> Failure {
    Failure { code: 2, error }
}

fn codec(error: anyhow::Error) -> Failure {
    Failure { code: 3, error }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn execution(threads: Option<usize>) -> Result<Execution, Failure> {
    match threads {
        None => Ok(Execution::Parallel),
        Some(0) => Err(usage(anyhow!("--threads must be at least 1"))),
        Some(1) => Ok(Execution::Sequential),
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| usage(anyhow!("cannot start {n} threads: {e}")))?;
            Ok(Execution::Parallel)
        }
    }
}

fn read_pgm(path: &Path) -> Result<fic_core::GrayImage, Failure> {
    let bytes = fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(io)?;
    load_pgm(&bytes)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(io)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(io)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let exec = execution(cli.threads)?;
    match cli.command {
        Command::Encode { input, output, enc } => {
            let config = enc.config(exec);
            config.validate().map_err(|e| usage(e.into()))?;
            let image = read_pgm(&input)?;
            let (code, stats) = encode(&image, &config).map_err(|e| codec(e.into()))?;
            let bytes = serialize(&code).map_err(|e| codec(e.into()))?;
            write_file(&output, &bytes)?;
            let leaves: Vec<String> = code
                .leaves_per_level()
                .iter()
                .map(|(b, n)| format!("leaves_{b}={n}"))
                .collect();
            println!(
                "cr={:.4} seconds={:.4} bytes={} {}",
                compression_ratio(&image, &bytes),
                stats.seconds,
                bytes.len(),
                leaves.join(" ")
            );
        }
        Command::Decode {
            input,
            output,
            iters,
            init_gray,
            epsilon,
        } => {
            if iters == 0 {
                return Err(usage(anyhow!("--iters must be at least 1")));
            }
            let bytes = fs::read(&input)
                .with_context(|| format!("reading {}", input.display()))
                .map_err(io)?;
            let code = deserialize(&bytes)
                .with_context(|| format!("parsing {}", input.display()))
                .map_err(io)?;
            let settings = DecodeSettings {
                iterations: iters,
                initial_gray: init_gray,
                convergence_epsilon: epsilon,
                execution: exec,
            };
            let out = decode(&code, &settings).map_err(|e| codec(e.into()))?;
            write_file(&output, &save_pgm(&out.image))?;
            println!(
                "iterations={} final_delta={}",
                out.iterations_used, out.final_delta
            );
        }
        Command::Bench {
            input,
            pool_sizes,
            modes,
            output,
            enc,
        } => {
            let config = enc.config(exec);
            config.validate().map_err(|e| usage(e.into()))?;
            if pool_sizes.contains(&0) {
                return Err(usage(anyhow!("pool sizes must be positive")));
            }
            let images: Vec<BenchImage> = input
                .iter()
                .map(|p| {
                    let id = p.display().to_string();
                    match read_pgm(p) {
                        Ok(img) => BenchImage::new(id, img),
                        Err(f) => {
                            eprintln!("warning: {:#}", f.error);
                            BenchImage::failed(id, format!("{:#}", f.error))
                        }
                    }
                })
                .collect();
            let rows = run_benchmark(&images, &pool_sizes, &modes, &config);
            let file = fs::File::create(&output)
                .with_context(|| format!("creating {}", output.display()))
                .map_err(io)?;
            write_bench_csv(&rows, file)
                .with_context(|| format!("writing {}", output.display()))
                .map_err(io)?;
            for row in &rows {
                match &row.outcome {
                    Ok(m) => eprintln!(
                        "{} K={} {}: cr={:.3} seconds={:.3} psnr={}",
                        row.image,
                        row.pool_size,
                        row.mode,
                        m.cr,
                        m.seconds,
                        format_psnr(m.psnr)
                    ),
                    Err(e) => eprintln!(
                        "{} K={} {}: failed: {e}",
                        row.image, row.pool_size, row.mode
                    ),
                }
            }
            if rows.iter().any(|r| r.outcome.is_err()) {
                return Err(codec(anyhow!(
                    "some benchmark rows failed; see {}",
                    output.display()
                )));
            }
        }
        Command::Shist { input, output, enc } => {
            let config = enc.config(exec);
            config.validate().map_err(|e| usage(e.into()))?;
            let image = read_pgm(&input)?;
            let hists = s_histogram(&image, &config).map_err(|e| codec(e.into()))?;
            for h in &hists {
                let path = PathBuf::from(format!("{output}_{}.csv", h.level));
                write_file(&path, h.to_csv().as_bytes())?;
                let median = h.median().map_or("-".to_string(), |m| format!("{m:.4}"));
                println!("level={} ranges={} median_s={median}", h.level, h.total());
            }
        }
        Command::Info { input } => {
            let bytes = fs::read(&input)
                .with_context(|| format!("reading {}", input.display()))
                .map_err(io)?;
            let code = deserialize(&bytes)
                .with_context(|| format!("parsing {}", input.display()))
                .map_err(io)?;
            println!("size={}x{}", code.width, code.height);
            println!("ranges={}..{}", code.max_range, code.min_range);
            println!("s_mode={} s_max={}", code.s_mode, code.s_max);
            println!("step_factor={}", code.step_factor);
            println!(
                "bytes={} cr={:.4}",
                bytes.len(),
                (code.width * code.height) as f64 / bytes.len() as f64
            );
            println!(
                "leaves={} splits={}",
                code.records.len(),
                code.split_count()
            );
            for (b, n) in code.leaves_per_level() {
                let layout = LeafLayout::for_level(&code, b);
                let (gx, gy) = code.domain_grid(b);
                println!(
                    "level {b}: leaves={n} s_candidates={:?} domain_grid={gx}x{gy} bits_per_leaf={}",
                    code.codebook(b).values,
                    layout.bits()
                );
            }
        }
    }
    Ok(())
}
