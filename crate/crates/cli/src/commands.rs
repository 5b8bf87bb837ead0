use std::io::{BufRead, IsTerminal, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context as _, Result};
use stylemirror::embedding::RemoteEmbedder;
use stylemirror::evaluator::{evaluate, fraction_sweep, LmConfig, NGramLM, SweepParams};
use stylemirror::ingest::read_corpus;
use stylemirror::session::{Session, SessionLock, SessionSettings};
use stylemirror::transformer::GecHook;
use stylemirror::{normalize, transform, Embedder, Error, Exec, Sentence, StopwordSet, TransformConfig};

use crate::config::{Config, EmbedderChoice};
use crate::{Cli, Command, EvalArgs, IngestArgs, StateCommand, TransformArgs};

const NO_PATTERNS: &str = "no patterns available; ingest more data";

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    cfg.apply_env(|k| std::env::var(k).ok())?;
    if let Some(s) = cli.state {
        cfg.state_path = s;
    }
    match cli.command {
        Command::Ingest(a) => ingest(&cfg, a),
        Command::Transform(a) => transform_cmd(&cfg, a),
        Command::Eval(a) => eval(&cfg, a),
        Command::State(c) => state(&cfg, c),
    }
}

fn stopwords(cfg: &Config) -> Result<StopwordSet> {
    Ok(match &cfg.stopword_path {
        Some(p) => StopwordSet::load(p)?,
        None => StopwordSet::default(),
    })
}

fn open(cfg: &Config) -> Result<(SessionLock, Session)> {
    let lock = SessionLock::acquire(&cfg.state_path)?;
    let settings = SessionSettings {
        min_support: cfg.min_support,
        seed: cfg.seed,
    };
    let session = Session::open(&cfg.state_path, settings, stopwords(cfg)?)
        .with_context(|| format!("opening {}", cfg.state_path.display()))?;
    Ok((lock, session))
}

fn embedder(cfg: &Config, session: &Session) -> Result<Box<dyn Embedder>> {
    Ok(match &cfg.embedder {
        EmbedderChoice::Builtin => Box::new(session.embedder()),
        EmbedderChoice::Remote(url) => Box::new(
            RemoteEmbedder::connect(url, Duration::from_secs(cfg.remote_timeout_secs))
                .with_context(|| format!("connecting to embedder at {url}"))?,
        ),
    })
}

fn transform_config(cfg: &Config, chunk_mode: Option<stylemirror::ChunkMode>) -> TransformConfig {
    TransformConfig {
        chunk_mode: chunk_mode.unwrap_or(cfg.chunk_mode),
        candidate_cap: cfg.candidate_cap,
        gec: cfg.gec_command.as_ref().map(|c| Arc::new(GecHook::new(c.clone()))),
        exec: Exec::auto(),
    }
}

fn lm_config(cfg: &Config) -> LmConfig {
    LmConfig {
        order: cfg.lm_order,
        k: cfg.smoothing_k,
        ..LmConfig::default()
    }
}

/// Non-blank lines of a text file.
fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

fn ingest(cfg: &Config, args: IngestArgs) -> Result<()> {
    // Read everything before touching the session so a bad file commits nothing.
    let mut sentences: Vec<Sentence> = Vec::new();
    for p in &args.paths {
        let batch = read_corpus(p, !args.prose)?;
        if batch.is_empty() {
            log::warn!("{}: no sentences", p.display());
        }
        sentences.extend(batch);
    }
    if sentences.is_empty() {
        eprintln!("warning: nothing to ingest");
        return Ok(());
    }
    let (_lock, mut session) = open(cfg)?;
    let summary = session.ingest(sentences, Exec::auto());
    session.save(&cfg.state_path)?;
    let inc = &summary.increment;
    println!(
        "ingested {} sentences (total {}); promoted {}, demoted {}; {} patterns{}",
        inc.new_sentences,
        session.miner().total_sentences(),
        inc.promoted,
        inc.demoted,
        summary.patterns,
        if summary.rebuilt { " (rebuilt)" } else { "" }
    );
    Ok(())
}

fn has_patterns(session: &Session) -> bool {
    session.store().records().any(|r| r.is_insertable())
}

fn transform_one(
    raw: &str,
    session: &Session,
    emb: &dyn Embedder,
    tcfg: &TransformConfig,
    verbose: bool,
    out: &mut impl Write,
) -> Result<()> {
    let res = match transform(raw, session.store(), emb, tcfg) {
        Ok(r) => r,
        Err(Error::NoPatterns) => bail!(NO_PATTERNS),
        Err(Error::EmptyInput) => {
            log::warn!("{raw:?} has no tokens");
            writeln!(out)?;
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };
    if verbose {
        writeln!(out, "input: {}", res.input.text())?;
        writeln!(out, "pattern: {} (score {:.6})", res.selected_pattern, res.selection_score)?;
        let chunks: Vec<String> = res.chunks.chunks().iter().map(|c| format!("[{}]", c.join(" "))).collect();
        writeln!(out, "chunks ({}): {}", res.chunk_mode, chunks.join(" "))?;
        writeln!(out, "candidates:")?;
        for c in &res.candidates {
            writeln!(out, "  {:.6}  {}", c.score, c.tokens.join(" "))?;
        }
        if res.corrected {
            writeln!(out, "before correction: {}", res.pattern_output)?;
        }
        writeln!(out, "output: {}", res.output.text())?;
    } else {
        writeln!(out, "{}", res.output.text())?;
    }
    Ok(())
}

fn transform_cmd(cfg: &Config, args: TransformArgs) -> Result<()> {
    let (_lock, session) = open(cfg)?;
    if !has_patterns(&session) {
        bail!(NO_PATTERNS);
    }
    let emb = embedder(cfg, &session)?;
    let tcfg = transform_config(cfg, args.chunk_mode);
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if let Some(s) = &args.sentence {
        transform_one(s, &session, emb.as_ref(), &tcfg, args.verbose, &mut out)?;
    } else if let Some(f) = &args.file {
        for line in read_lines(f)? {
            transform_one(&line, &session, emb.as_ref(), &tcfg, args.verbose, &mut out)?;
        }
    } else {
        let stdin = std::io::stdin();
        let interactive = stdin.is_terminal();
        loop {
            if interactive {
                eprint!("> ");
            }
            let mut line = String::new();
            if stdin.lock().read_line(&mut line)? == 0 {
                break;
            }
            if line.trim().is_empty() {
                continue;
            }
            transform_one(line.trim(), &session, emb.as_ref(), &tcfg, args.verbose, &mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn eval(cfg: &Config, args: EvalArgs) -> Result<()> {
    let (_lock, session) = open(cfg)?;
    let corpus = session.miner().corpus();
    if corpus.is_empty() {
        bail!("session has no corpus; ingest data first");
    }
    let raw_inputs = read_lines(&args.inputs)?;
    let inputs: Vec<Sentence> = raw_inputs.iter().map(|l| normalize(l)).collect();
    if let Some(i) = inputs.iter().position(Sentence::is_empty) {
        return Err(anyhow!(Error::EmptyInput)).with_context(|| format!("input line {:?}", raw_inputs[i]));
    }
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| Error::Io { path: args.out_dir.clone(), source: e })?;
    let tcfg = transform_config(cfg, None);

    if let Some(fractions) = &args.fractions {
        let params = SweepParams {
            min_support: session.settings().min_support,
            stopwords: session.stopwords().clone(),
            seed: session.settings().seed,
            transform: tcfg,
            lm: lm_config(cfg),
        };
        let sweep = fraction_sweep(corpus, &inputs, fractions, &params)?;
        sweep.write(&args.out_dir)?;
        println!("fraction  sentences  patterns  median_perplexity  mean_similarity");
        for e in &sweep.entries {
            println!(
                "{:<8}  {:<9}  {:<8}  {:<17.4}  {:.4}",
                e.fraction, e.prefix_sentences, e.patterns, e.median_perplexity, e.mean_similarity
            );
        }
        return Ok(());
    }

    let outputs: Vec<Sentence> = if args.run {
        if !has_patterns(&session) {
            bail!(NO_PATTERNS);
        }
        let emb = embedder(cfg, &session)?;
        raw_inputs
            .iter()
            .map(|l| transform(l, session.store(), emb.as_ref(), &tcfg).map(|r| r.output))
            .collect::<stylemirror::Result<_>>()?
    } else {
        let path = args.outputs.as_ref().expect("clap enforces a mode");
        read_lines(path)?.iter().map(|l| normalize(l)).collect()
    };
    let lm = NGramLM::train(corpus, &lm_config(cfg))?;
    let report = evaluate(&inputs, &outputs, &lm, &session.embedder(), Exec::auto())?;
    let (csv, json) = report.write(&args.out_dir, "eval")?;
    let s = report.summary();
    println!(
        "n={} median_perplexity={:.4} mean_similarity={:.4}",
        s.n, s.median_perplexity, s.mean_similarity
    );
    log::info!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

fn state(cfg: &Config, cmd: StateCommand) -> Result<()> {
    match cmd {
        StateCommand::Save { path } => {
            let (_lock, session) = open(cfg)?;
            session.save(&path)?;
            println!("saved {}", path.display());
        }
        StateCommand::Load { path } => {
            let loaded = Session::load(&path, stopwords(cfg)?)
                .with_context(|| format!("loading {}", path.display()))?;
            let _lock = SessionLock::acquire(&cfg.state_path)?;
            loaded.save(&cfg.state_path)?;
            println!(
                "loaded {} ({} sentences, {} patterns)",
                path.display(),
                loaded.miner().total_sentences(),
                loaded.store().len()
            );
        }
        StateCommand::Show { limit } => {
            let (_lock, session) = open(cfg)?;
            show(&session, limit.unwrap_or(usize::MAX))?;
        }
    }
    Ok(())
}

fn show(session: &Session, limit: usize) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let miner = session.miner();
    let n = miner.total_sentences();
    writeln!(out, "sentences: {n}")?;
    writeln!(out, "min_support: {}", session.settings().min_support)?;
    writeln!(out, "seed: {}", session.settings().seed)?;
    writeln!(out, "stopwords: {}", session.stopwords().source())?;
    let frequent = miner.frequent_by_support();
    writeln!(out, "frequent n-grams: {}", frequent.len())?;
    for (g, c) in frequent.iter().take(limit) {
        writeln!(out, "  {:.4}  {:>6}  {}", *c as f64 / n as f64, c, g)?;
    }
    writeln!(out, "border: {}", miner.border().len())?;
    writeln!(out, "patterns: {}", session.store().len())?;
    for r in session.store().records().take(limit) {
        writeln!(out, "  {:>6}  {}", r.contexts().len(), r.pattern())?;
    }
    Ok(())
}
