//! Command line surface for the `acwp` binary.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error. Diagnostics go
//! to stderr; output a script would consume goes to stdout. Long-running
//! subcommands (`broker serve`, `bridge run`, `demo owner`) print one
//! readiness line and then stay up until killed.

use std::io::Write as _;
use std::path::{Path as FsPath, PathBuf};
use std::sync::mpsc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::broker::{BrokerConfig, SYS_TOPICS};
use crate::federation::BridgeConfig;
use crate::net::{run_bridge, serve, ClientConfig, LiveClient};
use crate::protocol::{
    load_schema_files, load_schema_search_path, Document, Envelope, SchemaSet, Value,
};
use crate::sim::components::FplOwnerState;
use crate::sim::{Scenario, SimWorld};

/// Colon-separated list of schema files and directories read by `pub`,
/// `req`, and `demo owner` so outgoing documents are validated locally.
pub const SCHEMA_PATH_VAR: &str = "ACWP_SCHEMA_PATH";

type Failure = Box<dyn std::error::Error>;

#[derive(Parser)]
#[command(
    name = "acwp",
    version,
    about = "Broker, bridge, and client tooling for topic-based working-position messaging"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a message broker
    Broker {
        #[command(subcommand)]
        command: BrokerCmd,
    },
    /// Run a federation bridge between a local and a central broker
    Bridge {
        #[command(subcommand)]
        command: BridgeCmd,
    },
    /// Publish one document to a topic
    #[command(name = "pub")]
    Publish(PublishArgs),
    /// Subscribe to a topic and print deliveries as documents
    #[command(name = "sub")]
    Subscribe(SubscribeArgs),
    /// Publish a request and print the correlated reply
    #[command(name = "req")]
    Request(RequestArgs),
    /// Schema file tools
    Schema {
        #[command(subcommand)]
        command: SchemaCmd,
    },
    /// Print a broker's topic table with delivery counters
    Topics(TopicsArgs),
    /// Deterministic simulation runs
    Sim {
        #[command(subcommand)]
        command: SimCmd,
    },
    /// Long-running demo components
    Demo {
        #[command(subcommand)]
        command: DemoCmd,
    },
}

#[derive(Subcommand)]
enum BrokerCmd {
    /// Start serving on the configured listen address
    Serve {
        /// Broker config file
        #[arg(long)]
        config: PathBuf,
        /// Deployment role label; overrides the config's `broker.role`
        #[arg(long, value_parser = ["central", "local"])]
        role: Option<String>,
    },
}

#[derive(Subcommand)]
enum BridgeCmd {
    /// Connect both sides and start forwarding
    Run {
        /// Bridge config file
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum SchemaCmd {
    /// Parse schema files and report the declared message types
    Lint {
        /// Schema files or directories
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SimCmd {
    /// Build a world from a config, drive it with a scenario, print the log
    Run {
        /// World config file
        world: PathBuf,
        /// Scenario script
        scenario: PathBuf,
        /// Seed for all randomness in the run
        #[arg(long)]
        seed: u64,
        /// Compare the log against this file; mismatch exits 1 with a diff
        #[arg(long)]
        golden: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum DemoCmd {
    /// Run the flight-plan owner against a live broker
    Owner(OwnerArgs),
}

#[derive(Args)]
struct PublishArgs {
    /// Broker endpoint, host:port
    endpoint: String,
    topic: String,
    /// Message type of the document
    message_type: String,
    /// Document file, or `-` for standard input
    doc: String,
    /// Client id to connect as
    #[arg(long)]
    client_id: Option<String>,
    /// Extra schema files beside ACWP_SCHEMA_PATH
    #[arg(long = "schema")]
    schemas: Vec<PathBuf>,
}

#[derive(Args)]
struct SubscribeArgs {
    /// Broker endpoint, host:port
    endpoint: String,
    topic: String,
    /// Exit after this many deliveries (default: run until killed)
    #[arg(long)]
    count: Option<u64>,
    /// Client id to connect as
    #[arg(long)]
    client_id: Option<String>,
}

#[derive(Args)]
struct RequestArgs {
    /// Broker endpoint, host:port
    endpoint: String,
    topic: String,
    /// Message type of the request document
    message_type: String,
    /// Document file, or `-` for standard input
    doc: String,
    /// How long to wait for the reply, in milliseconds
    #[arg(long, default_value_t = 5000)]
    timeout: u64,
    /// Client id to connect as
    #[arg(long)]
    client_id: Option<String>,
    /// Extra schema files beside ACWP_SCHEMA_PATH
    #[arg(long = "schema")]
    schemas: Vec<PathBuf>,
}

#[derive(Args)]
struct TopicsArgs {
    /// Broker endpoint, host:port
    endpoint: String,
    /// Client id to connect as
    #[arg(long)]
    client_id: Option<String>,
}

#[derive(Args)]
struct OwnerArgs {
    /// Broker endpoint, host:port
    endpoint: String,
    /// Domain to claim; the reducer speaks the flight-plan types
    #[arg(long, default_value = "fpl")]
    domain: String,
    /// Client id to connect as
    #[arg(long, default_value = "fdps")]
    client_id: String,
    /// Extra schema files beside ACWP_SCHEMA_PATH
    #[arg(long = "schema")]
    schemas: Vec<PathBuf>,
}

/// Runs the CLI, returning the process exit code.
pub fn run(args: Vec<String>) -> i32 {
    let mut argv = vec!["acwp".to_string()];
    argv.extend(args);
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            1
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Broker {
            command: BrokerCmd::Serve { config, role },
        } => broker_serve(&config, role),
        Cmd::Bridge {
            command: BridgeCmd::Run { config },
        } => bridge_run(&config),
        Cmd::Publish(args) => publish(args),
        Cmd::Subscribe(args) => subscribe(args),
        Cmd::Request(args) => request(args),
        Cmd::Schema {
            command: SchemaCmd::Lint { files },
        } => schema_lint(&files),
        Cmd::Topics(args) => topics(args),
        Cmd::Sim {
            command:
                SimCmd::Run {
                    world,
                    scenario,
                    seed,
                    golden,
                },
        } => sim_run(&world, &scenario, seed, golden.as_deref()),
        Cmd::Demo {
            command: DemoCmd::Owner(args),
        } => demo_owner(args),
    }
}

fn broker_serve(path: &FsPath, role: Option<String>) -> Result<(), Failure> {
    let mut config = BrokerConfig::load(path)?;
    if role.is_some() {
        config.role = role;
    }
    let label = config.role.clone().unwrap_or_else(|| "broker".into());
    let id = config.id.clone();
    let handle = serve(config)?;
    println!("listening {}", handle.addr());
    flush_stdout();
    log::info!("{label} {id} serving on {}", handle.addr());
    park_forever()
}

fn bridge_run(path: &FsPath) -> Result<(), Failure> {
    let config = BridgeConfig::load(path)?;
    let local = config.local_broker.clone();
    let central = config.central_broker.clone();
    let _handle = run_bridge(config)?;
    println!("bridge up {local} {central}");
    flush_stdout();
    park_forever()
}

fn publish(args: PublishArgs) -> Result<(), Failure> {
    let doc = read_document(&args.doc)?;
    let schemas = operator_schemas(&args.schemas)?;
    let client = connect_client(&args.endpoint, args.client_id, schemas)?;
    let result = client.publish_confirmed(&args.topic, &args.message_type, doc);
    client.close();
    println!("{}", result?);
    Ok(())
}

fn subscribe(args: SubscribeArgs) -> Result<(), Failure> {
    let client = connect_client(&args.endpoint, args.client_id, SchemaSet::new())?;
    let (tx, rx) = mpsc::channel();
    client.subscribe(&args.topic, move |env| {
        let _ = tx.send(envelope_document(env));
    })?;
    // Readiness marker for scripts that race a publisher against us.
    eprintln!("subscribed {}", args.topic);
    let mut seen = 0u64;
    while args.count.is_none_or(|n| seen < n) {
        let doc = match rx.recv_timeout(Duration::from_millis(200)) {
            Ok(doc) => doc,
            Err(mpsc::RecvTimeoutError::Timeout) => {
                if client.is_closed() {
                    return Err("connection closed".into());
                }
                continue;
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => return Err("connection closed".into()),
        };
        // One document per delivery, groups separated by a blank line.
        print!("{}", doc.encode_string());
        println!();
        flush_stdout();
        seen += 1;
    }
    client.close();
    Ok(())
}

fn request(args: RequestArgs) -> Result<(), Failure> {
    let doc = read_document(&args.doc)?;
    let schemas = operator_schemas(&args.schemas)?;
    let client = connect_client(&args.endpoint, args.client_id, schemas)?;
    let result = client.request(
        &args.topic,
        &args.message_type,
        doc,
        Some(Duration::from_millis(args.timeout)),
    );
    client.close();
    print!("{}", envelope_document(&result?).encode_string());
    Ok(())
}

fn schema_lint(files: &[PathBuf]) -> Result<(), Failure> {
    let set = load_schema_files(files)?;
    println!("ok: {} message types", set.schemas().count());
    Ok(())
}

fn topics(args: TopicsArgs) -> Result<(), Failure> {
    let client = connect_client(&args.endpoint, args.client_id, SchemaSet::new())?;
    let result = client.request(SYS_TOPICS, "sys.topics.request", Document::new(), None);
    client.close();
    print!("{}", result?.payload.encode_string());
    Ok(())
}

fn sim_run(
    world: &FsPath,
    scenario: &FsPath,
    seed: u64,
    golden: Option<&FsPath>,
) -> Result<(), Failure> {
    let text = read_file(world)?;
    let scenario = Scenario::load(scenario)?;
    let mut sim = SimWorld::build_from_str(&text, seed)?;
    sim.run_scenario(&scenario);
    let log = sim.render_log();
    print!("{log}");
    flush_stdout();
    if let Some(path) = golden {
        let want = read_file(path)?;
        if log != want {
            return Err(golden_diff(path, &want, &log).into());
        }
    }
    Ok(())
}

fn demo_owner(args: OwnerArgs) -> Result<(), Failure> {
    let schemas = operator_schemas(&args.schemas)?;
    let client = connect_client(&args.endpoint, Some(args.client_id.clone()), schemas)?;
    client.on_error(|e| log::warn!("owner: {e}"));
    let mut state = FplOwnerState::new();
    client.own_domain(&args.domain, move |contribution| {
        vec![state.apply(contribution)]
    })?;
    println!("owner ready {}", args.client_id);
    flush_stdout();
    while !client.is_closed() {
        std::thread::sleep(Duration::from_millis(100));
    }
    Err("connection closed".into())
}

/// The delivery as one flat document: envelope fields at the top level,
/// payload fields under `payload.`.
fn envelope_document(env: &Envelope) -> Document {
    let mut doc = Document::new();
    doc.put("topic", Value::text(&env.topic));
    doc.put("message_id", Value::text(&env.message_id));
    doc.put("sender_id", Value::text(&env.sender_id));
    doc.put("message_type", Value::text(&env.message_type));
    doc.put("timestamp", Value::Int(env.timestamp_ms));
    if let Some(correlation) = &env.correlation_id {
        doc.put("correlation_id", Value::text(correlation));
    }
    if let Some(reply_to) = &env.reply_to {
        doc.put("reply_to", Value::text(reply_to));
    }
    for (i, hop) in env.hop_trace.iter().enumerate() {
        doc.put(&format!("hop_trace.{i}"), Value::text(hop));
    }
    for (path, value) in env.payload.iter() {
        if let Ok(prefixed) = path.prefixed("payload") {
            doc.set(prefixed, value.clone());
        }
    }
    doc
}

fn operator_schemas(extra: &[PathBuf]) -> Result<SchemaSet, Failure> {
    let mut set = match std::env::var(SCHEMA_PATH_VAR) {
        Ok(search) if !search.is_empty() => load_schema_search_path(&search)?,
        _ => SchemaSet::new(),
    };
    if !extra.is_empty() {
        set.merge(load_schema_files(extra)?)?;
    }
    Ok(set)
}

fn connect_client(
    endpoint: &str,
    client_id: Option<String>,
    schemas: SchemaSet,
) -> Result<LiveClient, Failure> {
    let id = client_id.unwrap_or_else(|| format!("cli{}", std::process::id()));
    Ok(LiveClient::connect(ClientConfig::new(endpoint, id, schemas))?)
}

fn read_document(source: &str) -> Result<Document, Failure> {
    let text = if source == "-" {
        std::io::read_to_string(std::io::stdin())
            .map_err(|e| format!("cannot read standard input: {e}"))?
    } else {
        std::fs::read_to_string(source).map_err(|e| format!("cannot read {source}: {e}"))?
    };
    Ok(Document::parse_str(&text)?)
}

fn read_file(path: &FsPath) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()).into())
}

fn golden_diff(path: &FsPath, want: &str, got: &str) -> String {
    for (i, (w, g)) in want.lines().zip(got.lines()).enumerate() {
        if w != g {
            return format!(
                "golden mismatch vs {}: line {}:\n golden: {w}\n actual: {g}",
                path.display(),
                i + 1
            );
        }
    }
    format!(
        "golden mismatch vs {}: lengths differ (golden {} lines, actual {} lines)",
        path.display(),
        want.lines().count(),
        got.lines().count()
    )
}

fn flush_stdout() {
    let _ = std::io::stdout().flush();
}

fn park_forever() -> Result<(), Failure> {
    loop {
        std::thread::park();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> i32 {
        run(args.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn no_subcommand_is_a_usage_error() {
        assert_eq!(run_args(&[]), 2);
    }

    #[test]
    fn unknown_subcommand_is_a_usage_error() {
        assert_eq!(run_args(&["frobnicate"]), 2);
    }

    #[test]
    fn missing_positionals_are_usage_errors() {
        assert_eq!(run_args(&["pub", "localhost:0"]), 2);
        assert_eq!(run_args(&["sim", "run", "only-world.cfg"]), 2);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run_args(&["--help"]), 0);
        assert_eq!(run_args(&["sub", "--help"]), 0);
    }

    #[test]
    fn schema_lint_counts_message_types() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ats.schema");
        std::fs::write(&path, crate::sim::components::ATS_SCHEMA).unwrap();
        assert_eq!(run_args(&["schema", "lint", path.to_str().unwrap()]), 0);
    }

    #[test]
    fn schema_lint_bad_file_fails() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.schema");
        std::fs::write(&path, "message met.update v1 {\n").unwrap();
        assert_eq!(run_args(&["schema", "lint", path.to_str().unwrap()]), 1);
    }

    #[test]
    fn broker_serve_with_missing_config_fails() {
        assert_eq!(
            run_args(&["broker", "serve", "--config", "/nonexistent/b.cfg"]),
            1
        );
    }

    #[test]
    fn sim_run_checks_goldens() {
        let dir = tempfile::tempdir().unwrap();
        let world = dir.path().join("world.cfg");
        std::fs::write(
            &world,
            "central.id = \"central\"\ncwp.count = 1\nlink.latency_ms = 10\nlink.jitter_ms = 6\n",
        )
        .unwrap();
        let scenario = dir.path().join("s.scn");
        std::fs::write(
            &scenario,
            "at 0 cwp1 contribute fpl fpl.create callsign=\"DLH1\"\n",
        )
        .unwrap();

        let text = std::fs::read_to_string(&world).unwrap();
        let mut sim = SimWorld::build_from_str(&text, 7).unwrap();
        sim.run_scenario(&Scenario::load(&scenario).unwrap());
        let golden = dir.path().join("run.log");
        std::fs::write(&golden, sim.render_log()).unwrap();

        let args = [
            "sim",
            "run",
            world.to_str().unwrap(),
            scenario.to_str().unwrap(),
            "--seed",
            "7",
            "--golden",
            golden.to_str().unwrap(),
        ];
        assert_eq!(run_args(&args), 0);

        // Another seed jitters delivery times, so the comparison must fail.
        let mut other = args;
        other[5] = "8";
        assert_eq!(run_args(&other), 1);
    }

    #[test]
    fn envelope_documents_are_canonical() {
        let mut payload = Document::new();
        payload.put("callsign", Value::text("DLH123"));
        payload.put("route.0.fix", Value::text("OSN"));
        let mut env = Envelope::new("fpl.publication", "fdps:1", "fdps", "fpl.state", 42, payload);
        env.hop_trace.push("central".into());
        env.correlation_id = Some("cwp1:1".into());

        let doc = envelope_document(&env);
        let text = doc.encode_string();
        let parsed = Document::parse_str(&text).unwrap();
        assert_eq!(parsed, doc);
        assert_eq!(parsed.get_text("payload.callsign"), Some("DLH123"));
        assert_eq!(parsed.get_text("hop_trace.0"), Some("central"));
        assert_eq!(parsed.get_int("timestamp"), Some(42));
    }
}
