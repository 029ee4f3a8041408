use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use scidc_core::backend::{DecoderBackend, MockBackend, MockScript, RemoteBackend, RemoteConfig, StubOptions, StubServer};
use scidc_core::compiler::{
    apply_expert_feedback, compile, explain_program, FixtureGllm, Gllm, HttpGllm, HttpGllmConfig, KnowledgeDoc, Turn,
    VerificationTranscript,
};
use scidc_core::engine::{run_with, RunOptions};
use scidc_core::eval::{builtin_pack, default_vocabulary, run_pack, Arm, EvalBackend, EvalOptions, TaskPack};
use scidc_core::ir::{lint_with_vocab, parse_program, serialize_program, RuleProgram};
use scidc_core::token::Vocabulary;

#[derive(Parser)]
#[command(name = "scidc", version, about = "Rule-constrained decoding toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a knowledge document into a rule program.
    Compile {
        #[arg(long)]
        doc: PathBuf,
        #[arg(long)]
        task: String,
        #[command(flatten)]
        gllm: GllmArgs,
        /// Write the program here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the intermediate reasoning framework.
        #[arg(long)]
        framework_out: Option<PathBuf>,
    },
    /// Describe a rule program in plain language.
    Explain { program: PathBuf },
    /// Revise a rule program from an expert suggestion.
    Revise {
        program: PathBuf,
        #[arg(long)]
        suggestion: String,
        #[command(flatten)]
        gllm: GllmArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report lint findings; exits non-zero on errors.
    Lint {
        program: PathBuf,
        /// Vocabulary JSON used to check that options are spellable.
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Execute a rule program once and print the run result as JSON.
    Run {
        program: PathBuf,
        #[arg(long, default_value = "")]
        prompt: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        temperature: f64,
        #[command(flatten)]
        backend: BackendArgs,
        /// Texts the mock backend prefers, in order. Without any, it emits noise.
        #[arg(long = "say")]
        say: Vec<String>,
    },
    /// Run a task pack under one or more ablation arms.
    Eval {
        /// Built-in pack id (tnm, retro, formulation) or a pack JSON file.
        #[arg(long)]
        pack: String,
        #[arg(long, value_enum, default_value_t = EvalKind::Mock)]
        backend: EvalKind,
        #[arg(long, value_delimiter = ',', default_value = "full,wo_rt,wo_rm,wo_rb,vanilla")]
        arms: Vec<Arm>,
        /// Number of seeds, run as 0..N.
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        /// Generator seed for built-in packs.
        #[arg(long, default_value_t = 0)]
        pack_seed: u64,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Serve the mock backend over HTTP until interrupted.
    ServeStub {
        #[arg(long, default_value = "127.0.0.1:8377")]
        addr: String,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        noise_seed: u64,
    },
}

#[derive(Args)]
struct GllmArgs {
    /// Directory of recorded exchanges to replay.
    #[arg(long, conflicts_with = "gllm_endpoint")]
    fixtures: Option<PathBuf>,
    /// Chat-completions endpoint of the general model.
    #[arg(long)]
    gllm_endpoint: Option<String>,
    #[arg(long, default_value = "default")]
    gllm_model: String,
    /// Environment variable holding the bearer token.
    #[arg(long)]
    gllm_auth_env: Option<String>,
}

impl GllmArgs {
    fn client(&self) -> Result<Box<dyn Gllm>> {
        if let Some(dir) = &self.fixtures {
            return Ok(Box::new(FixtureGllm::new(dir)));
        }
        let Some(endpoint) = &self.gllm_endpoint else {
            bail!("either --fixtures or --gllm-endpoint is required");
        };
        let mut config = HttpGllmConfig::new(endpoint, &self.gllm_model);
        config.auth_env = self.gllm_auth_env.clone();
        Ok(Box::new(HttpGllm::new(config)?))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Mock,
    Remote,
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value_t = BackendKind::Mock)]
    backend: BackendKind,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    auth_env: Option<String>,
    /// Vocabulary JSON; defaults to printable ASCII plus the program's options.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalKind {
    /// Deterministic simulated model that follows instance cues.
    Mock,
    /// Seeded noise logits.
    Noise,
    Remote,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_program(path: &Path) -> Result<RuleProgram> {
    parse_program(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn load_vocab(path: &Path) -> Result<Arc<Vocabulary>> {
    Ok(Arc::new(Vocabulary::from_json(&read(path)?).with_context(|| format!("loading {}", path.display()))?))
}

/// Printable ASCII, newline and the program's multi-character select options.
fn default_vocab(program: &RuleProgram) -> Result<Arc<Vocabulary>> {
    Ok(default_vocabulary(std::slice::from_ref(program))?)
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Compile {
            doc,
            task,
            gllm,
            out,
            framework_out,
        } => {
            let text = read(&doc)?;
            let name = doc.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let doc = KnowledgeDoc::new(text, name)?;
            let compiled = compile(&doc, &task, &mut gllm.client()?)?;
            if let Some(path) = framework_out {
                write_or_print(Some(&path), &compiled.framework.render())?;
            }
            write_or_print(out.as_deref(), &serialize_program(&compiled.program))?;
        }
        Command::Explain { program } => {
            println!("{}", explain_program(&load_program(&program)?).trim_end());
        }
        Command::Revise {
            program,
            suggestion,
            gllm,
            out,
        } => {
            let p = load_program(&program)?;
            let mut transcript = VerificationTranscript::start(&p);
            transcript.push(Turn::ExpertSuggestion(suggestion))?;
            let revised = apply_expert_feedback(&p, &transcript, &mut gllm.client()?)?;
            write_or_print(out.as_deref(), &serialize_program(&revised))?;
        }
        Command::Lint { program, vocab } => {
            let p = load_program(&program)?;
            let vocab = vocab.as_deref().map(load_vocab).transpose()?;
            let findings = lint_with_vocab(&p, vocab.as_deref());
            for f in &findings {
                println!("{f}");
            }
            if findings.iter().any(|f| f.is_error()) {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Run {
            program,
            prompt,
            seed,
            temperature,
            backend,
            say,
        } => {
            let p = load_program(&program)?;
            let vocab = match &backend.vocab {
                Some(path) => load_vocab(path)?,
                None => default_vocab(&p)?,
            };
            let mut b: Box<dyn DecoderBackend> = match backend.backend {
                BackendKind::Mock => {
                    let script = if say.is_empty() { MockScript::noise(seed) } else { MockScript::texts(say) };
                    Box::new(MockBackend::new(vocab, &script))
                }
                BackendKind::Remote => {
                    let Some(endpoint) = backend.endpoint else { bail!("--endpoint is required for --backend remote") };
                    let mut config = RemoteConfig::new(endpoint);
                    config.auth_env = backend.auth_env;
                    Box::new(RemoteBackend::new(config, vocab)?)
                }
            };
            let options = RunOptions {
                default_temperature: temperature,
                cache: None,
            };
            let result = run_with(&p, b.as_mut(), &prompt, seed, &options)?;
            println!("{}", result.to_json());
        }
        Command::Eval {
            pack,
            backend,
            arms,
            seeds,
            pack_seed,
            endpoint,
            vocab,
            report,
        } => {
            let pack = if Path::new(&pack).is_file() {
                TaskPack::from_json(&read(Path::new(&pack))?)?
            } else {
                builtin_pack(&pack, pack_seed)?
            };
            let backend = match backend {
                EvalKind::Mock => EvalBackend::Oracle,
                EvalKind::Noise => EvalBackend::Noise,
                EvalKind::Remote => {
                    let Some(endpoint) = endpoint else { bail!("--endpoint is required for --backend remote") };
                    EvalBackend::Remote {
                        config: RemoteConfig::new(endpoint),
                    }
                }
            };
            let options = EvalOptions {
                arms,
                seeds: (0..seeds).collect(),
                backend,
                vocab: vocab.as_deref().map(load_vocab).transpose()?,
                ..EvalOptions::default()
            };
            let metrics = run_pack(&pack, &options)?;
            let json = metrics.to_json();
            match report {
                Some(path) => {
                    std::fs::write(&path, &json).with_context(|| format!("writing {}", path.display()))?;
                    for arm in &metrics.arms {
                        println!(
                            "{:<8} validity {:>6.2}%  {} {}",
                            arm.arm.to_string(),
                            arm.validity,
                            arm.accuracy_metric.as_deref().unwrap_or("accuracy"),
                            arm.accuracy.map_or("n/a".into(), |a| format!("{a:.2}%"))
                        );
                    }
                }
                None => println!("{json}"),
            }
        }
        Command::ServeStub { addr, vocab, noise_seed } => {
            let vocab = match vocab {
                Some(path) => load_vocab(&path)?,
                None => default_vocabulary(&[])?,
            };
            let options = StubOptions {
                script: MockScript::noise(noise_seed),
                ..StubOptions::default()
            };
            let server = StubServer::start(&addr, vocab, options)?;
            eprintln!("serving on {}", server.endpoint());
            server.wait();
        }
    }
    Ok(ExitCode::SUCCESS)
}
