use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cascade::audio::wav::{read_wav, write_wav};
use cascade::costmodel::MemorySummary;
use cascade::fixtures;
use cascade::fleet::{load_fleet, Fleet};
use cascade::gating::GateConfig;
use cascade::model::{SplitModel, Task};
use cascade::netsim::{CloudLink, LinkSpec, TcpLink};
use cascade::pipeline::{
    run_stt, run_tts, sweep_bandwidth, text_to_tokens, EdgeRuntime, RunTrace, SweepInput, STANDARD_SWEEP_KBS,
};
use cascade::report::{analyze_fleet, sweep_csv, trace_csv, write_sweep_report, write_text, FleetOptions};
use cascade::service::serve;
use cascade::settings::Settings;

type BoxError = Box<dyn std::error::Error>;

#[derive(Parser)]
#[command(name = "cascade", version, about = "Edge-cloud cascaded speech inference")]
struct Cli {
    /// Configuration file; the bundled configuration when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of both models.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct LinkArgs {
    /// Address of a running `cascade serve`; a virtual link is used otherwise.
    #[arg(long)]
    cloud_addr: Option<String>,
    #[arg(long, default_value_t = 1024.0)]
    virtual_bandwidth_kbs: f64,
    /// Throttle for a real link.
    #[arg(long, default_value_t = 1.0e6)]
    real_bandwidth_kbs: f64,
    #[arg(long, default_value_t = 0.0)]
    rtt_ms: f64,
    #[arg(long)]
    force_escalate: bool,
    #[arg(long)]
    stt_threshold: Option<f64>,
    #[arg(long)]
    tts_threshold: Option<f64>,
    /// Trace CSV output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Transcribe a 16 kHz mono WAV file.
    Stt {
        /// Input WAV; a bundled 1 s synthetic utterance when omitted.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[command(flatten)]
        link: LinkArgs,
    },
    /// Synthesize speech from text.
    Tts {
        #[arg(long, default_value = fixtures::SHORT_TEXT)]
        text: String,
        /// Output WAV.
        #[arg(long)]
        wav: Option<PathBuf>,
        #[command(flatten)]
        link: LinkArgs,
    },
    /// Run the cloud encoder service.
    Serve {
        #[arg(long)]
        listen: Option<String>,
    },
    /// Forced-escalation runs over a range of virtual bandwidths.
    Sweep {
        #[arg(long, default_value = "tts")]
        task: Task,
        /// Comma-separated KB/s values.
        #[arg(long, value_delimiter = ',', default_values_t = STANDARD_SWEEP_KBS)]
        bandwidths: Vec<f64>,
        #[arg(long, default_value = fixtures::LONG_TEXT)]
        text: String,
        /// STT input WAV; a bundled 1 s utterance when omitted.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        rtt_ms: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write sweep.csv and sweep.svg here.
        #[arg(long)]
        report_dir: Option<PathBuf>,
    },
    /// Memory footprint of the toy models and the configured deployments.
    Quantize,
    /// Device-fleet feasibility analysis.
    Fleet {
        /// Fleet CSV (`model,share,memory_mb,cpu_ghz`); the bundled fixture when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "fleet-report")]
        report_dir: PathBuf,
        #[arg(long, default_value_t = 149.0)]
        mem_req: f64,
        #[arg(long, default_value = "tts")]
        task: Task,
        /// Characters for TTS, audio seconds for STT.
        #[arg(long, default_value_t = 12.0)]
        length: f64,
        /// CPU-time budget in seconds; the reference device's time when omitted.
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        unweighted: bool,
    },
}

fn settings(cli: &Cli) -> Result<Settings, BoxError> {
    let s = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::bundled(),
    };
    Ok(match cli.seed {
        Some(seed) => s.with_seed(seed),
        None => s,
    })
}

fn runtime(s: &Settings, task: Task) -> Result<EdgeRuntime, BoxError> {
    let mut rt = EdgeRuntime::new(SplitModel::build(s.model(task).clone())?);
    rt.compute = s.compute;
    Ok(rt)
}

fn open_link(rt: &EdgeRuntime, a: &LinkArgs) -> Result<Box<dyn CloudLink>, BoxError> {
    let rtt = a.rtt_ms / 1000.0;
    Ok(match &a.cloud_addr {
        Some(addr) => Box::new(TcpLink::new(addr.clone(), LinkSpec::real_kbs(a.real_bandwidth_kbs)?.with_rtt(rtt)?)),
        None => Box::new(rt.virtual_link(LinkSpec::virtual_kbs(a.virtual_bandwidth_kbs)?.with_rtt(rtt)?)),
    })
}

fn gate(s: &Settings, a: &LinkArgs) -> Result<GateConfig, BoxError> {
    Ok(GateConfig::new(
        a.stt_threshold.unwrap_or(s.gate.stt_threshold),
        a.tts_threshold.unwrap_or(s.gate.tts_threshold),
    )?)
}

fn print_trace(t: &RunTrace) {
    println!(
        "gate: metric {:.4} vs threshold {:.4} -> {}",
        t.gate.metric,
        t.gate.threshold,
        if t.gate.escalates() { "escalate" } else { "pass" }
    );
    println!(
        "escalated: {}  degraded: {}  decode passes: {}",
        t.escalated, t.degraded, t.decode_passes
    );
    if let Some(e) = &t.net_error {
        println!("network error: {e}");
    }
    println!(
        "cpu {:.6} s + cloud {:.6} s + transfer {:.6} s = wall {:.6} s",
        t.cpu_time_s(),
        t.cloud_time_s(),
        t.transfer_time_s(),
        t.wall_time_s()
    );
    println!("uplink {} B, downlink {} B", t.uplink_bytes, t.downlink_bytes);
}

fn save_trace(t: &RunTrace, out: &Option<PathBuf>) -> Result<(), BoxError> {
    if let Some(p) = out {
        write_text(p, &trace_csv(std::slice::from_ref(t))?)?;
        println!("trace written to {}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), BoxError> {
    let s = settings(&cli)?;
    match cli.cmd {
        Cmd::Stt { input, link } => {
            let rt = runtime(&s, Task::Stt)?;
            let w = match input {
                Some(p) => read_wav(p)?,
                None => fixtures::speech_like(1.0, 0),
            };
            let mut l = open_link(&rt, &link)?;
            let (tokens, trace) = run_stt(&w, &rt, &gate(&s, &link)?, l.as_mut(), link.force_escalate)?;
            let text: Vec<String> = tokens.iter().map(u32::to_string).collect();
            println!("tokens ({}): {}", tokens.len(), text.join(" "));
            print_trace(&trace);
            save_trace(&trace, &link.out)?;
        }
        Cmd::Tts { text, wav, link } => {
            let rt = runtime(&s, Task::Tts)?;
            let tokens = text_to_tokens(&text, rt.model.config().vocab_size);
            let mut l = open_link(&rt, &link)?;
            let (audio, trace) = run_tts(&tokens, &rt, &gate(&s, &link)?, l.as_mut(), link.force_escalate)?;
            println!("synthesized {:.3} s of audio from {} characters", audio.duration_s(), tokens.len());
            print_trace(&trace);
            if let Some(p) = wav {
                write_wav(&p, &audio)?;
                println!("audio written to {}", p.display());
            }
            save_trace(&trace, &link.out)?;
        }
        Cmd::Serve { listen } => {
            let mut cfg = s.service_config();
            if let Some(l) = listen {
                cfg.listen = l;
            }
            let handle = serve(&cfg)?;
            println!("serving on {}", handle.local_addr());
            handle.wait();
        }
        Cmd::Sweep {
            task,
            bandwidths,
            text,
            input,
            rtt_ms,
            out,
            report_dir,
        } => {
            let rt = runtime(&s, task)?;
            let template = LinkSpec::virtual_kbs(1.0)?.with_rtt(rtt_ms / 1000.0)?;
            let rows = match task {
                Task::Tts => {
                    let tokens = text_to_tokens(&text, rt.model.config().vocab_size);
                    sweep_bandwidth(SweepInput::Tokens(&tokens), &bandwidths, &rt, template)?
                }
                Task::Stt => {
                    let w = match input {
                        Some(p) => read_wav(p)?,
                        None => fixtures::speech_like(1.0, 0),
                    };
                    sweep_bandwidth(SweepInput::Audio(&w), &bandwidths, &rt, template)?
                }
            };
            let csv = sweep_csv(&rows)?;
            match out {
                Some(p) => {
                    write_text(&p, &csv)?;
                    println!("sweep written to {}", p.display());
                }
                None => print!("{csv}"),
            }
            if let Some(dir) = report_dir {
                for p in write_sweep_report(&rows, &dir)? {
                    println!("wrote {}", p.display());
                }
            }
        }
        Cmd::Quantize => {
            for task in [Task::Stt, Task::Tts] {
                let mut m = SplitModel::build(s.model(task).clone())?;
                m.quantize_edge()?;
                let fp32 = m.edge_fp32_bytes();
                let int8 = m.edge_int8_bytes().unwrap_or(0);
                println!(
                    "toy {task}: edge {} params ({:.1}% of model), {fp32} B fp32 -> {int8} B int8",
                    m.param_count(cascade::model::Part::Edge),
                    100.0 * m.edge_fraction(),
                );
            }
            for spec in &s.cost.deployments {
                println!("{}", MemorySummary::of(spec));
            }
        }
        Cmd::Fleet {
            data,
            report_dir,
            mem_req,
            task,
            length,
            t_max,
            unweighted,
        } => {
            let fleet = match data {
                Some(p) => load_fleet(p)?,
                None => Fleet::bundled(),
            };
            let opts = FleetOptions {
                required_mb: mem_req,
                task,
                input_length: length,
                t_max_s: t_max,
                unweighted,
                ..FleetOptions::default()
            };
            let report = analyze_fleet(&fleet, &opts, &s.cost.timings)?;
            print!("{}", report.summary_csv()?);
            for p in report.write(&report_dir)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
