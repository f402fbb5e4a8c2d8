use std::fs;
use std::io::Write as _;
use std::path::Path;

use super::{Label, LogTemplate, Session, Token};
use crate::error::{Error, Result};

/// Templates file: one template per line, `<id>\t<tokens joined by spaces>`,
/// wildcards rendered as `<*>`. UTF-8, LF endings.
pub fn write_templates<'a>(
    path: &Path,
    templates: impl IntoIterator<Item = &'a LogTemplate>,
) -> Result<()> {
    let mut out = Vec::new();
    for t in templates {
        writeln!(out, "{}\t{}", t.id, t.render()).expect("write to vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_templates(path: &Path) -> Result<Vec<LogTemplate>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut templates = Vec::new();
    for (no, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (id, body) = line
            .split_once('\t')
            .ok_or_else(|| Error::Input(format!("{}:{}: missing tab", path.display(), no + 1)))?;
        let id: u32 = id
            .parse()
            .map_err(|_| Error::Input(format!("{}:{}: bad template id", path.display(), no + 1)))?;
        let tokens: Vec<Token> = body
            .split(' ')
            .filter(|t| !t.is_empty())
            .map(|t| if t == "<*>" { Token::Wild } else { Token::Lit(t.to_string()) })
            .collect();
        if tokens.is_empty() {
            return Err(Error::Input(format!("{}:{}: empty template", path.display(), no + 1)));
        }
        templates.push(LogTemplate { id, tokens, match_count: 0 });
    }
    Ok(templates)
}

/// Sessions file: `<key>\t<label>\t<space-separated template ids>` with
/// label 0, 1 or `-` for unlabeled.
pub fn write_sessions<'a>(
    path: &Path,
    sessions: impl IntoIterator<Item = &'a Session>,
) -> Result<()> {
    let mut out = Vec::new();
    for s in sessions {
        let ids: Vec<String> = s.event_ids.iter().map(|i| i.to_string()).collect();
        writeln!(out, "{}\t{}\t{}", s.key, s.label.as_str(), ids.join(" ")).expect("write to vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_sessions(path: &Path) -> Result<Vec<Session>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut sessions = Vec::new();
    for (no, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Input(format!("{}:{}: {what}", path.display(), no + 1));
        let mut parts = line.splitn(3, '\t');
        let key = parts.next().ok_or_else(|| bad("missing key"))?;
        let label = Label::parse(parts.next().ok_or_else(|| bad("missing label"))?)?;
        let ids = parts.next().ok_or_else(|| bad("missing event ids"))?;
        let event_ids: Vec<u32> = ids
            .split(' ')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<u32>().map_err(|_| bad("bad template id")))
            .collect::<Result<_>>()?;
        if event_ids.is_empty() {
            return Err(bad("session with no events"));
        }
        sessions.push(Session { key: key.to_string(), event_ids, label });
    }
    if sessions.is_empty() {
        return Err(Error::EmptySessions(format!("{} holds no sessions", path.display())));
    }
    Ok(sessions)
}
