//! Word alignments produced by an external forced aligner.
//!
//! Two input formats are accepted: a CSV with `word,start_s,end_s` rows (an
//! optional header is skipped) and a long-format Praat TextGrid, from which
//! the tier named `words` is read, or the first interval tier otherwise.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordToken {
    /// Case-folded with punctuation removed.
    pub word: String,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WordAlignment {
    pub tokens: Vec<WordToken>,
}

/// Lowercase and keep only alphanumerics and inner apostrophes.
pub fn normalize_word(raw: &str) -> String {
    let kept: String = raw
        .chars()
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_alphanumeric() || *c == '\'')
        .collect();
    kept.trim_matches('\'').to_string()
}

impl WordAlignment {
    /// Build from raw tokens, normalizing text and dropping empty labels
    /// (silence intervals in TextGrids are usually blank).
    pub fn new(raw: Vec<(String, f64, f64)>) -> Result<Self> {
        let tokens: Vec<WordToken> = raw
            .into_iter()
            .filter_map(|(w, start_s, end_s)| {
                let word = normalize_word(&w);
                (!word.is_empty()).then_some(WordToken {
                    word,
                    start_s,
                    end_s,
                })
            })
            .collect();
        let out = Self { tokens };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.tokens.iter().enumerate() {
            if !(t.start_s.is_finite() && t.end_s.is_finite()) || t.start_s < 0.0 {
                return Err(Error::MalformedAlignment(format!(
                    "token {i} `{}` has invalid times",
                    t.word
                )));
            }
            if t.end_s <= t.start_s {
                return Err(Error::MalformedAlignment(format!(
                    "token {i} `{}` ends at {} before it starts at {}",
                    t.word, t.end_s, t.start_s
                )));
            }
            if let Some(prev) = i.checked_sub(1).map(|j| &self.tokens[j]) {
                if t.start_s < prev.end_s {
                    return Err(Error::MalformedAlignment(format!(
                        "token {i} `{}` starts at {} inside `{}` ending at {}",
                        t.word, t.start_s, prev.word, prev.end_s
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut raw = Vec::new();
        let mut first = true;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 3 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected word,start_s,end_s; got {} columns", cols.len()),
                });
            }
            let is_first = std::mem::replace(&mut first, false);
            match (cols[1].parse::<f64>(), cols[2].parse::<f64>()) {
                (Ok(s), Ok(e)) => raw.push((cols[0].to_string(), s, e)),
                _ if is_first => continue,
                _ => {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        message: format!("bad time value in `{line}`"),
                    })
                }
            }
        }
        Self::new(raw)
    }

    pub fn parse_textgrid(text: &str) -> Result<Self> {
        let tiers = textgrid_tiers(text)?;
        let tier = tiers
            .iter()
            .find(|t| t.name.eq_ignore_ascii_case("words"))
            .or_else(|| tiers.first())
            .ok_or_else(|| Error::MalformedAlignment("TextGrid has no interval tier".into()))?;
        Self::new(tier.intervals.clone())
    }

    /// Pick the parser by extension (`.TextGrid` or anything else as CSV).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_textgrid = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("textgrid"))
            || text.trim_start().starts_with("File type = \"ooTextFile\"");
        if is_textgrid {
            Self::parse_textgrid(&text)
        } else {
            Self::parse_csv(&text)
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("word,start_s,end_s\n");
        for t in &self.tokens {
            out.push_str(&format!("{},{:.6},{:.6}\n", t.word, t.start_s, t.end_s));
        }
        out
    }
}

struct Tier {
    name: String,
    intervals: Vec<(String, f64, f64)>,
}

fn unquote(v: &str) -> String {
    let v = v.trim();
    let inner = v
        .strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(v);
    inner.replace("\"\"", "\"")
}

/// Interval tiers of a long-format TextGrid. Point tiers are skipped.
fn textgrid_tiers(text: &str) -> Result<Vec<Tier>> {
    let mut tiers: Vec<Tier> = Vec::new();
    let mut in_interval_tier = false;
    let mut pending: (Option<f64>, Option<f64>) = (None, None);
    for (lineno, line) in text.lines().enumerate() {
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        let key = key.trim();
        let parse_num = |v: &str| {
            v.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: lineno + 1,
                message: format!("bad number `{}`", v.trim()),
            })
        };
        match key {
            "class" => {
                in_interval_tier = unquote(value) == "IntervalTier";
                if in_interval_tier {
                    tiers.push(Tier {
                        name: String::new(),
                        intervals: Vec::new(),
                    });
                }
            }
            "name" if in_interval_tier => {
                if let Some(t) = tiers.last_mut() {
                    t.name = unquote(value);
                }
            }
            "xmin" if in_interval_tier => pending.0 = Some(parse_num(value)?),
            "xmax" if in_interval_tier => pending.1 = Some(parse_num(value)?),
            "text" if in_interval_tier => {
                let (Some(s), Some(e)) = pending else {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        message: "interval text without xmin/xmax".into(),
                    });
                };
                if let Some(t) = tiers.last_mut() {
                    t.intervals.push((unquote(value), s, e));
                }
                pending = (None, None);
            }
            _ => {}
        }
    }
    Ok(tiers)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GRID: &str = r#"File type = "ooTextFile"
Object class = "TextGrid"

xmin = 0
xmax = 2.0
tiers? <exists>
size = 2
item []:
    item [1]:
        class = "IntervalTier"
        name = "phones"
        xmin = 0
        xmax = 2.0
        intervals: size = 1
        intervals [1]:
            xmin = 0
            xmax = 2.0
            text = "DH"
    item [2]:
        class = "IntervalTier"
        name = "words"
        xmin = 0
        xmax = 2.0
        intervals: size = 3
        intervals [1]:
            xmin = 0
            xmax = 1.0
            text = "The,"
        intervals [2]:
            xmin = 1.0
            xmax = 1.3
            text = ""
        intervals [3]:
            xmin = 1.3
            xmax = 2.0
            text = "the"
"#;

    #[test]
    fn normalizes_words() {
        assert_eq!(normalize_word("The,"), "the");
        assert_eq!(normalize_word("'Don't!'"), "don't");
        assert_eq!(normalize_word("..."), "");
    }

    #[test]
    fn csv_with_header() {
        let a = WordAlignment::parse_csv("word,start_s,end_s\nThe,1.0,1.2\nthe,1.3,1.5\n").unwrap();
        assert_eq!(a.tokens.len(), 2);
        assert_eq!(a.tokens[0].word, "the");
        let again = WordAlignment::parse_csv(&a.to_csv()).unwrap();
        assert_eq!(again, a);
    }

    #[test]
    fn csv_errors_carry_line() {
        match WordAlignment::parse_csv("a,0,1\nb,x,2\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_overlap_and_retrograde() {
        assert!(matches!(
            WordAlignment::parse_csv("a,0,1\nb,0.5,2\n"),
            Err(Error::MalformedAlignment(_))
        ));
        assert!(matches!(
            WordAlignment::parse_csv("a,1,0.5\n"),
            Err(Error::MalformedAlignment(_))
        ));
    }

    #[test]
    fn textgrid_words_tier() {
        let a = WordAlignment::parse_textgrid(GRID).unwrap();
        let words: Vec<_> = a.tokens.iter().map(|t| t.word.as_str()).collect();
        assert_eq!(words, ["the", "the"]);
        assert_eq!(a.tokens[1].start_s, 1.3);
    }

    #[test]
    fn textgrid_first_tier_fallback() {
        let grid = GRID.replace("\"words\"", "\"w\"");
        let a = WordAlignment::parse_textgrid(&grid).unwrap();
        assert_eq!(a.tokens[0].word, "dh");
    }
}
