//! `aes-dfa`: simulate faulty AES encryptions and recover keys from them.
//!
//! Exit codes: 0 on success (or a converged attack), 2 when an attack ends
//! with some key bytes still ambiguous, 1 on bad input or any other error.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use dfa_core::aes::{block_from_hex, encrypt_block, from_hex, to_hex, Variant};
use dfa_core::analyzer::{run_attack_with, AttackPair, AttackStatus, LocationMode, StrategyRegistry};
use dfa_core::fault::{inject, make_campaign, ByteSelector, FaultModelRegistry, FaultSpec, Location};
use dfa_core::formats::{AttackReport, PairFile, PairRecord};
use dfa_core::key_recovery::recover_key_bytes;

#[derive(Debug, Parser)]
#[command(name = "aes-dfa", version, about = "AES differential fault analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encrypt one block.
    Encrypt {
        /// Cipher key, hex.
        #[arg(long)]
        key: String,
        /// Plaintext block, hex.
        #[arg(long)]
        pt: String,
        /// Expected variant; checked against the key length.
        #[arg(long)]
        variant: Option<Variant>,
    },
    /// Produce one correct/faulty ciphertext pair.
    Inject {
        #[arg(long)]
        key: String,
        #[arg(long)]
        pt: String,
        #[command(flatten)]
        fault: FaultArgs,
        /// Append the ground-truth record to the output line.
        #[arg(long)]
        with_truth: bool,
    },
    /// Produce a pair file of faulty runs over random plaintexts.
    Campaign {
        #[arg(long)]
        key: String,
        /// Number of pairs.
        #[arg(long)]
        count: usize,
        #[command(flatten)]
        fault: FaultArgs,
        /// Output file, or `-` for standard output.
        #[arg(long, default_value = "-")]
        out: String,
        #[arg(long)]
        with_truth: bool,
    },
    /// Recover the last round key (and the cipher key for AES-128) from a
    /// pair file.
    Attack {
        /// Pair file, or `-` for standard input.
        #[arg(long)]
        pairs: String,
        #[arg(long, value_enum, default_value_t = Loc::Unknown)]
        location: Loc,
        #[arg(long, default_value = "128")]
        variant: Variant,
        /// Analysis strategy (`column-joint` or `byte-union`).
        #[arg(long, default_value = StrategyRegistry::DEFAULT)]
        strategy: String,
        /// Also write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Rebuild the cipher key from the last Nk words of the key schedule.
    RecoverKey {
        #[arg(long, default_value = "128")]
        variant: Variant,
        /// Final key-schedule words, hex (4*Nk bytes).
        #[arg(long)]
        final_words: String,
    },
}

#[derive(Debug, Args)]
struct FaultArgs {
    /// 1: fault feeds the last MixColumns; 2: one round deeper.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    round_offset: u8,
    /// With round offset 1, pick the injection point uniformly among the
    /// intermediate states between the last two MixColumns.
    #[arg(long)]
    anywhere: bool,
    /// Byte index 0..15, or `random`.
    #[arg(long, default_value = "random", value_parser = parse_byte)]
    byte: ByteSelector,
    /// `xor:HH`, `random`, `stuck00` or `stuckFF`.
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Loc {
    Known,
    Unknown,
}

impl From<Loc> for LocationMode {
    fn from(l: Loc) -> Self {
        match l {
            Loc::Known => LocationMode::Known,
            Loc::Unknown => LocationMode::Unknown,
        }
    }
}

fn parse_byte(s: &str) -> Result<ByteSelector, String> {
    if s.eq_ignore_ascii_case("random") {
        return Ok(ByteSelector::Random);
    }
    match s.parse::<usize>() {
        Ok(b) if b < 16 => Ok(ByteSelector::Fixed(b)),
        _ => Err(format!("expected 0..15 or 'random', got '{s}'")),
    }
}

impl FaultArgs {
    fn spec(&self) -> Result<FaultSpec> {
        let location = match (self.round_offset, self.anywhere) {
            (1, false) => Location::PenultimateShiftRows,
            (1, true) => Location::LastMixWindow,
            (_, false) => Location::DeepBeforeMix,
            (_, true) => bail!("--anywhere only applies to --round-offset 1"),
        };
        let model = FaultModelRegistry::with_builtins().create(&self.model)?;
        Ok(FaultSpec::new(location, self.byte, model))
    }
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
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Encrypt { key, pt, variant } => {
            let key = from_hex(&key).context("--key")?;
            let actual = Variant::from_key_len(key.len())?;
            if let Some(v) = variant {
                if v != actual {
                    bail!("--variant {v} does not match a {}-byte key", key.len());
                }
            }
            let pt = block_from_hex(&pt).context("--pt")?;
            println!("{}", to_hex(&encrypt_block(&key, &pt)?));
        }
        Command::Inject {
            key,
            pt,
            fault,
            with_truth,
        } => {
            let key = from_hex(&key).context("--key")?;
            let pt = block_from_hex(&pt).context("--pt")?;
            let run = inject(&key, &pt, &fault.spec()?, fault.seed)?;
            println!("{}", PairRecord::from_run(&run, with_truth).to_line());
        }
        Command::Campaign {
            key,
            count,
            fault,
            out,
            with_truth,
        } => {
            let key = from_hex(&key).context("--key")?;
            let runs = make_campaign(&key, count, &fault.spec()?, fault.seed)?;
            let file = PairFile {
                seed: Some(fault.seed),
                records: runs
                    .iter()
                    .map(|r| PairRecord::from_run(r, with_truth))
                    .collect(),
            };
            let sink: Box<dyn Write> = if out == "-" {
                Box::new(io::stdout().lock())
            } else {
                Box::new(File::create(&out).with_context(|| format!("creating {out}"))?)
            };
            let mut sink = BufWriter::new(sink);
            file.write(&mut sink)?;
            sink.flush()?;
            info!("wrote {count} pairs");
        }
        Command::Attack {
            pairs,
            location,
            variant,
            strategy,
            report,
        } => {
            let registry = StrategyRegistry::with_builtins();
            let Some(strategy) = registry.get(&strategy) else {
                let known: Vec<_> = registry.names().collect();
                bail!("unknown strategy '{strategy}' (known: {})", known.join(", "));
            };
            let input: Box<dyn Read> = if pairs == "-" {
                Box::new(io::stdin().lock())
            } else {
                Box::new(File::open(&pairs).with_context(|| format!("opening {pairs}"))?)
            };
            let file = PairFile::read(BufReader::new(input)).context("reading pairs")?;
            let attack_pairs: Vec<AttackPair> = file
                .records
                .iter()
                .map(|r| r.to_attack_pair(variant))
                .collect();
            let mode = LocationMode::from(location);
            let result = run_attack_with(&attack_pairs, mode, variant, strategy.as_ref())?;
            let json = AttackReport::new(&result, mode, file.seed).to_json();
            if let Some(path) = report {
                std::fs::write(&path, format!("{json}\n"))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            println!("{json}");
            if result.status == AttackStatus::Partial {
                return Ok(ExitCode::from(2));
            }
        }
        Command::RecoverKey {
            variant,
            final_words,
        } => {
            let words = from_hex(&final_words).context("--final-words")?;
            println!("{}", to_hex(&recover_key_bytes(variant, &words)?));
        }
    }
    Ok(ExitCode::SUCCESS)
}
