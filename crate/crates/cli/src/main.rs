//! `sisco`: check a data set, search it, and run main-condition sessions
//! from the terminal.
//!
//! Exit codes: 0 ok, 1 validation failure or rejected input, 2 usage or
//! I/O error.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sisco_core::api::{self, DEFAULT_AUTOCOMPLETE_LIMIT, DEFAULT_SEARCH_LIMIT};
use sisco_core::engine::{run_scripted, DecisionEngine, Interaction, InteractionType, Transcript};
use sisco_core::ingest::{load_configured, Bundle, IngestError};
use sisco_core::text::{AttributeWeightTable, SearchError, SearchIndex};
use sisco_core::Section;

#[derive(Debug, Parser)]
#[command(name = "sisco", version, about = "ICD-9-CM coding support from the command line")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Source manifest; the bundled sample data when omitted.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Decision-tree file replacing the one listed in the manifest.
    #[arg(long, global = true)]
    tree: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and validate every source, then report record counts.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Weighted search with related terms.
    Search {
        section: Section,
        #[arg(required = true, num_args = 1..)]
        query: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_SEARCH_LIMIT)]
        limit: usize,
        /// One JSON line, the same body the HTTP service returns.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Suggestions for a typed prefix.
    Autocomplete {
        section: Section,
        prefix: String,
        #[arg(long, default_value_t = DEFAULT_AUTOCOMPLETE_LIMIT)]
        limit: usize,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Code details and, with --selected, coding-rule alerts.
    Details {
        section: Section,
        code: String,
        /// Codes already selected, comma-separated (may be empty).
        #[arg(long)]
        selected: Option<String>,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Guided identification of the main condition.
    Wizard {
        /// Diagnosis codes, comma-separated.
        #[arg(long, value_delimiter = ',', required = true)]
        pc: Vec<String>,
        /// Procedure codes, comma-separated.
        #[arg(long, value_delimiter = ',')]
        pi: Vec<String>,
        /// One answer per line (codes comma-separated, or YES/NO); blank
        /// lines and lines starting with `#` are skipped.
        #[arg(long)]
        answers_file: Option<PathBuf>,
        /// One JSON interaction per line.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        data: DataArgs,
    },
}

enum Failure {
    Invalid(String),
    Usage(String),
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io { .. } => Failure::Usage(e.to_string()),
            other => Failure::Invalid(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = io::stdout().lock();
    match run(cli.command, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("sisco: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("sisco: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load(data: &DataArgs) -> Result<Bundle, Failure> {
    Ok(load_configured(data.manifest.as_deref(), data.tree.as_deref())?)
}

fn json_line(out: &mut dyn Write, value: &impl serde::Serialize) -> io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    writeln!(out)
}

fn search_failure(e: SearchError) -> Failure {
    Failure::Usage(e.to_string())
}

fn run(command: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Ingest { data } => ingest(&data, out),
        Command::Search {
            section,
            query,
            limit,
            json,
            data,
        } => {
            let bundle = load(&data)?;
            let index = SearchIndex::build(&bundle.kb, AttributeWeightTable::default());
            let body = api::search_body(&index, section, &query.join(" "), limit).map_err(search_failure)?;
            if json {
                return Ok(json_line(out, &body)?);
            }
            for r in &body.results {
                writeln!(out, "{:<10} {:>6.1}  {}", r.code, r.score.as_f64(), r.title)?;
            }
            if !body.related_terms.is_empty() {
                let terms: Vec<String> = body
                    .related_terms
                    .iter()
                    .map(|t| format!("{} ({})", t.token, t.count))
                    .collect();
                writeln!(out, "related: {}", terms.join(", "))?;
            }
            Ok(())
        }
        Command::Autocomplete {
            section,
            prefix,
            limit,
            json,
            data,
        } => {
            if prefix.trim().is_empty() {
                return Err(search_failure(SearchError::EmptyQuery));
            }
            let bundle = load(&data)?;
            let index = SearchIndex::build(&bundle.kb, AttributeWeightTable::default());
            let list = index.autocomplete(&prefix, section, limit);
            if json {
                return Ok(json_line(out, &list)?);
            }
            for s in list {
                writeln!(out, "{s}")?;
            }
            Ok(())
        }
        Command::Details {
            section,
            code,
            selected,
            json,
            data,
        } => {
            let bundle = load(&data)?;
            let selected: Option<Vec<String>> = selected.map(|s| split_codes(&s));
            let body = api::code_details_body(&bundle.kb, section, &code, selected.as_deref())
                .map_err(|e| Failure::Invalid(e.to_string()))?;
            if json {
                return Ok(json_line(out, &body)?);
            }
            let d = &body.details;
            writeln!(out, "{} {}", d.code, d.title)?;
            writeln!(out, "level: {}  leaf: {}", d.level.as_str(), if d.is_leaf { "yes" } else { "no" })?;
            if !d.children.is_empty() {
                writeln!(out, "children: {}", d.children.join(", "))?;
            }
            for e in &d.exclusions {
                writeln!(out, "excludes: {}", e.text)?;
            }
            for n in d.use_additional_code.iter().chain(&d.basic_disease) {
                writeln!(out, "{}: {}", n.kind.as_str(), n.text)?;
            }
            for a in body.alerts.iter().flatten() {
                writeln!(out, "alert {:?}: {}", a.kind, a.message)?;
            }
            Ok(())
        }
        Command::Wizard {
            pc,
            pi,
            answers_file,
            json,
            data,
        } => {
            let bundle = load(&data)?;
            let engine = DecisionEngine::new(&bundle.tree, &bundle.procedure_sets, &bundle.kb);
            let pc: Vec<String> = pc.iter().map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect();
            let pi: Vec<String> = pi.iter().map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect();
            match answers_file {
                Some(path) => {
                    let text = fs::read_to_string(&path)
                        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
                    let answers = parse_answers(&text);
                    match run_scripted(&engine, SESSION_ID, &pc, &pi, &answers) {
                        Ok((transcript, _)) => write_transcript(out, &transcript, json),
                        Err(e) => Err(Failure::Invalid(e.to_string())),
                    }
                }
                None => interactive(&engine, &pc, &pi, json, out),
            }
        }
    }
}

const SESSION_ID: &str = "cli";

fn split_codes(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_answers(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(split_codes)
        .collect()
}

fn ingest(data: &DataArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let bundle = match load(data) {
        Ok(b) => b,
        Err(Failure::Invalid(msg)) => {
            writeln!(out, "FAILED")?;
            return Err(Failure::Invalid(msg));
        }
        Err(e) => return Err(e),
    };
    for (source, count) in &bundle.kb.provenance().0 {
        writeln!(out, "{source:<24} {count:>8}")?;
    }
    writeln!(out, "{:<24} {:>8}", "procedure_sets", bundle.procedure_sets.len())?;
    writeln!(out, "{:<24} {:>8}", "decision_tree", bundle.tree.len())?;
    writeln!(out, "{:<24} {:>8}", "total terms", bundle.kb.total_terms())?;
    writeln!(out, "OK")?;
    Ok(())
}

fn describe(out: &mut dyn Write, i: &Interaction) -> io::Result<()> {
    match i.kind {
        InteractionType::Result => {
            writeln!(out, "[{}] {}", i.state, i.message)?;
            writeln!(out, "main condition: {}", i.verdict.clone().unwrap_or_default().join(", "))
        }
        _ => {
            writeln!(out, "[{}] {}", i.state, i.message)?;
            let kind = match i.kind {
                InteractionType::AskMulticode => "choose one or more",
                InteractionType::AskSingleCode => "choose one",
                _ => "answer",
            };
            writeln!(
                out,
                "    {kind}: {}",
                i.allowed_answers.clone().unwrap_or_default().join(" | ")
            )
        }
    }
}

fn write_transcript(out: &mut dyn Write, t: &Transcript, json: bool) -> Result<(), Failure> {
    if json {
        for step in &t.steps {
            json_line(out, &step.interaction)?;
        }
        return Ok(());
    }
    writeln!(out, "conditions: {}", t.pc.join(", "))?;
    writeln!(out, "procedures: {}", t.pi.join(", "))?;
    for step in &t.steps {
        describe(out, &step.interaction)?;
        if let Some(answer) = &step.answer {
            writeln!(out, "    > {}", answer.join(", "))?;
        }
    }
    Ok(())
}

fn interactive(
    engine: &DecisionEngine<'_>,
    pc: &[String],
    pi: &[String],
    json: bool,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let (mut session, mut interaction) = engine
        .start_session(SESSION_ID, pc, pi)
        .map_err(|e| Failure::Invalid(e.to_string()))?;
    let stdin = io::stdin();
    let mut lines = stdin.lock().lines();
    loop {
        if json {
            json_line(out, &interaction)?;
        } else {
            describe(out, &interaction)?;
        }
        if interaction.kind == InteractionType::Result {
            return Ok(());
        }
        loop {
            if !json {
                write!(out, "> ")?;
            }
            out.flush()?;
            let Some(line) = lines.next().transpose()? else {
                return Err(Failure::Invalid(format!("input ended at node {}", session.current)));
            };
            match engine.answer(&mut session, interaction.state, &split_codes(&line)) {
                Ok(next) => {
                    interaction = next;
                    break;
                }
                Err(e) => eprintln!("sisco: {e}"),
            }
        }
    }
}
