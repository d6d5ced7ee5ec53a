use std::io::{BufRead, Write};
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use lexner::corpus::EntityClass;
use lexner::lexicon::{harvest_candidates, validate_unambiguous, Candidate, Lexicon, LexiconEntry};

use crate::manifest::{existing, read_docs, write_text, ConfigFile, CorpusFormat};
use crate::{usage, Global};

#[derive(Debug, Args)]
pub struct HarvestArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "unlabeled")]
    pub format: CorpusFormat,
    /// Number of ranked candidates to keep.
    #[arg(long, default_value_t = 200)]
    pub top_n: usize,
    /// Prompt for a class per candidate on stdin and save a lexicon to --out.
    #[arg(long)]
    pub interactive: bool,
    /// Entries wanted per class in interactive mode.
    #[arg(long, default_value_t = 10)]
    pub per_class: usize,
}

pub fn run(global: &Global, args: HarvestArgs) -> Result<()> {
    let cfg = ConfigFile::from_global(global)?;
    let corpus = existing(args.corpus, cfg.inputs.corpus, "corpus")?;
    if args.interactive && global.out.is_none() {
        return Err(usage("interactive harvesting needs --out for the lexicon"));
    }
    if global.dry_run {
        log::info!("dry run: inputs and configuration are valid");
        return Ok(());
    }
    let docs = read_docs(&corpus, args.format)?;
    let candidates = harvest_candidates(&docs, &cfg.pipeline.pattern, args.top_n)?;
    log::info!("{} candidates from {}", candidates.len(), corpus.display());
    if args.interactive {
        let stdin = std::io::stdin();
        let lexicon = pick(&candidates, &cfg.pipeline.classes, args.per_class, stdin.lock(), std::io::stderr())?;
        let out = global.out.as_ref().expect("checked above");
        lexicon.save(out)?;
        log::info!("saved {} entries to {}", lexicon.len(), out.display());
        return Ok(());
    }
    let text: String = candidates.iter().map(|c| format!("{}\t{}\n", c.surface.join(" "), c.frequency)).collect();
    match &global.out {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

enum Reply {
    Accept(EntityClass),
    Manual(EntityClass, String),
    Skip,
    Quit,
    Unknown,
}

fn parse_reply(line: &str, classes: &[EntityClass]) -> Reply {
    let line = line.trim();
    let find = |name: &str| classes.iter().find(|c| c.as_str().eq_ignore_ascii_case(name)).cloned();
    if line.is_empty() || line.eq_ignore_ascii_case("s") {
        return Reply::Skip;
    }
    if line.eq_ignore_ascii_case("q") {
        return Reply::Quit;
    }
    if let Some(rest) = line.strip_prefix('+') {
        if let Some((name, surface)) = rest.split_once(char::is_whitespace) {
            if let Some(c) = find(name) {
                return Reply::Manual(c, surface.trim().to_string());
            }
        }
        return Reply::Unknown;
    }
    find(line).map_or(Reply::Unknown, Reply::Accept)
}

/// Tries to add an entry; prints the reason when it is refused.
fn offer<W: Write>(lexicon: &mut Lexicon, class: EntityClass, surface: &str, freq: u64, per_class: usize, out: &mut W) -> Result<()> {
    if lexicon.entries(&class).len() >= per_class {
        writeln!(out, "rejected: {class} already has {per_class} entries")?;
        return Ok(());
    }
    let mut trial = lexicon.clone();
    trial.insert(class.clone(), LexiconEntry::new(surface, freq));
    let violations = validate_unambiguous(&trial);
    if violations.is_empty() {
        *lexicon = trial;
        writeln!(out, "added `{surface}` as {class}")?;
    } else {
        for v in violations {
            let classes: Vec<&str> = v.classes.iter().map(|c| c.as_str()).collect();
            writeln!(out, "rejected: `{}` would be listed under {}", v.surface, classes.join(" and "))?;
        }
    }
    Ok(())
}

/// Walks the ranked candidates asking for a class each. Replies: a class
/// name, empty or `s` to skip, `+CLASS words` for an entry not in the list,
/// `q` to stop.
pub fn pick<R: BufRead, W: Write>(
    candidates: &[Candidate],
    classes: &[EntityClass],
    per_class: usize,
    mut input: R,
    mut out: W,
) -> Result<Lexicon> {
    let mut lexicon = Lexicon::new();
    let names: Vec<&str> = classes.iter().map(|c| c.as_str()).collect();
    let full = |lex: &Lexicon| classes.iter().all(|c| lex.entries(c).len() >= per_class);
    let mut i = 0;
    while i < candidates.len() && !full(&lexicon) {
        let cand = &candidates[i];
        let surface = cand.surface.join(" ");
        write!(out, "[{}/{}] {surface} ({}) class? [{} | s | +CLASS words | q] ", i + 1, candidates.len(), cand.frequency, names.join("/"))?;
        out.flush()?;
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        match parse_reply(&line, classes) {
            Reply::Accept(c) => offer(&mut lexicon, c, &surface, cand.frequency, per_class, &mut out)?,
            Reply::Manual(c, s) => {
                offer(&mut lexicon, c, &s, 0, per_class, &mut out)?;
                continue;
            }
            Reply::Skip => {}
            Reply::Quit => break,
            Reply::Unknown => {
                writeln!(out, "unrecognized reply `{}`", line.trim())?;
                continue;
            }
        }
        i += 1;
    }
    Ok(lexicon)
}
