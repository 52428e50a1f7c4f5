//! Command-line front end: script runner, REPL and database file handling.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::PathBuf;

use clap::Parser;

use crate::demo;
use crate::engine::{Output, ScriptError};
use crate::error::Error;
use crate::lang::{self, SpannedCommand};
use crate::storage::Database;

#[derive(Debug, Parser)]
#[command(name = "overrel", version, about = "Object-relational database shell")]
pub struct Args {
    /// Database file, loaded at start when it exists and written back at exit.
    #[arg(long, value_name = "PATH")]
    pub db: Option<PathBuf>,
    /// Script to run; may be repeated. Without scripts an interactive session starts.
    #[arg(long = "script", value_name = "PATH")]
    pub scripts: Vec<PathBuf>,
    /// Print every command before its result.
    #[arg(long)]
    pub echo: bool,
    /// Populate the database with demo data generated from this seed.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_ENGINE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

fn report(out: &mut dyn Write, err: &mut dyn Write, echo: bool, db: &Database, sc: &SpannedCommand, r: Result<&Output, &Error>) {
    if echo {
        let _ = writeln!(out, "> {};", lang::pretty::command(&sc.cmd));
    }
    match r {
        Ok(o) => {
            let _ = writeln!(out, "{}", db.render(o));
        }
        Err(e) => {
            let _ = writeln!(err, "error at line {}: {e}", sc.span.line);
        }
    }
    for w in db.warnings() {
        let _ = writeln!(err, "warning: {w}");
    }
}

fn run_source(db: &mut Database, src: &str, echo: bool, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), ScriptError> {
    db.run_script_with(src, |db, sc, r| report(out, err, echo, db, sc, r))
}

/// `true` once the buffer holds a complete command: it ends with `;` and
/// every bracket and `BEGIN ... END` block is closed.
fn complete(buf: &str) -> bool {
    use crate::lang::lexer::{tokenize, Tok};
    let Ok(toks) = tokenize(buf) else { return false };
    let toks: Vec<&Tok> = toks.iter().map(|t| &t.tok).filter(|t| **t != Tok::Eof).collect();
    let mut depth = 0i64;
    for (i, t) in toks.iter().enumerate() {
        match t {
            Tok::LParen | Tok::LBrace | Tok::LBracket => depth += 1,
            Tok::RParen | Tok::RBrace | Tok::RBracket => depth -= 1,
            Tok::Ident(w) if w.eq_ignore_ascii_case("END") => depth -= 1,
            Tok::Ident(w) if w.eq_ignore_ascii_case("BEGIN") => {
                let tx = matches!(toks.get(i + 1), Some(Tok::Ident(n)) if n.eq_ignore_ascii_case("TRANSACTION"));
                if !tx {
                    depth += 1;
                }
            }
            _ => {}
        }
    }
    depth <= 0 && toks.last() == Some(&&Tok::Semi)
}

fn meta(db: &Database, line: &str, out: &mut dyn Write) -> bool {
    let mut parts = line.split_whitespace();
    match parts.next() {
        Some("\\q") => return false,
        Some("\\d") => match parts.next() {
            Some(ty) => match db.describe(ty) {
                Ok(s) => {
                    let _ = write!(out, "{s}");
                }
                Err(e) => {
                    let _ = writeln!(out, "error: {e}");
                }
            },
            None => {
                for name in db.state.types.tuples.keys() {
                    let _ = writeln!(out, "tuple {name}");
                }
                for name in db.state.types.classes.keys() {
                    let _ = writeln!(out, "class {name}");
                }
                for name in db.state.globals.keys() {
                    let _ = writeln!(out, "global {name}");
                }
            }
        },
        _ => {
            let _ = writeln!(out, "meta commands: \\d [type]  describe a type or list all names;  \\q  quit");
        }
    }
    true
}

fn repl(db: &mut Database, echo: bool, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) {
    let mut buf = String::new();
    loop {
        let _ = write!(out, "{}", if buf.is_empty() { "overrel> " } else { "    ...> " });
        let _ = out.flush();
        let mut line = String::new();
        match input.read_line(&mut line) {
            Ok(0) | Err(_) => break,
            Ok(_) => {}
        }
        if buf.is_empty() && line.trim_start().starts_with('\\') {
            if !meta(db, line.trim(), out) {
                break;
            }
            continue;
        }
        buf.push_str(&line);
        if !complete(&buf) {
            continue;
        }
        let src = std::mem::take(&mut buf);
        let _ = run_source(db, &src, echo, out, err);
    }
    let _ = writeln!(out);
}

/// Runs the shell with `args` (without the program name) and returns the exit status.
pub fn run<I, T>(args: I, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv = std::iter::once(OsString::from("overrel")).chain(args.into_iter().map(Into::into));
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    if let Some(p) = &args.db {
        let parent = p.parent().filter(|d| !d.as_os_str().is_empty());
        if parent.is_some_and(|d| !d.is_dir()) {
            let _ = writeln!(err, "error: directory of {} does not exist", p.display());
            return EXIT_USAGE;
        }
    }
    let mut db = Database::new();
    if let Some(p) = args.db.as_ref().filter(|p| p.exists()) {
        if let Err(e) = db.load_from(p) {
            let _ = writeln!(err, "error: cannot load {}: {e}", p.display());
            return EXIT_ENGINE;
        }
    }
    if let Some(seed) = args.seed {
        if let Err(e) = run_source(&mut db, &demo::seeded_script(seed), false, &mut std::io::sink(), err) {
            let _ = writeln!(err, "error: demo data: {e}");
            return EXIT_ENGINE;
        }
    }
    let mut status = EXIT_OK;
    if args.scripts.is_empty() {
        repl(&mut db, args.echo, input, out, err);
    } else {
        for p in &args.scripts {
            let src = match std::fs::read_to_string(p) {
                Ok(s) => s,
                Err(e) => {
                    let _ = writeln!(err, "error: cannot read {}: {e}", p.display());
                    status = EXIT_ENGINE;
                    break;
                }
            };
            if let Err(e) = run_source(&mut db, &src, args.echo, out, err) {
                let _ = writeln!(err, "{}: failed at {e}", p.display());
                status = EXIT_ENGINE;
                break;
            }
        }
    }
    if let Some(p) = &args.db {
        if status == EXIT_OK {
            if db.in_transaction() {
                let _ = writeln!(err, "warning: open transaction discarded");
                let _ = db.execute(&lang::Command::Rollback);
            }
            if let Err(e) = db.dump_to(p) {
                let _ = writeln!(err, "error: cannot write {}: {e}", p.display());
                status = EXIT_ENGINE;
            }
        }
    }
    status
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let stdin = std::io::stdin();
    let mut input = stdin.lock();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let stderr = std::io::stderr();
    let mut err = stderr.lock();
    run(std::env::args_os().skip(1), &mut input, &mut out, &mut err)
}
