//! Line-oriented text formats.
//!
//! Vectors and matrices are written with 17 significant digits, which is
//! enough for every `f64` to parse back to the identical bit pattern.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{EmbeddingSet, Record, Trial, TrialLabel, TrialList};
use crate::error::{Error, Result};
use crate::lda::LdaTransform;
use crate::linalg::SymMatrix;
use crate::metrics::{ScoreSet, ScoredTrial};
use crate::plda::PldaModel;

const MODEL_MAGIC: &str = "plda-model";
const LDA_MAGIC: &str = "lda-transform";
const FORMAT_VERSION: &str = "v1";

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn io_err(name: &str) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: name.into(),
        source,
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_floats<W: Write>(w: &mut W, xs: impl IntoIterator<Item = f64>) -> std::io::Result<()> {
    let mut first = true;
    for x in xs {
        if !first {
            w.write_all(b" ")?;
        }
        first = false;
        w.write_all(fmt_f64(x).as_bytes())?;
    }
    Ok(())
}

fn parse_float(tok: &str, source: &str, line: usize) -> Result<f64> {
    let x: f64 = tok
        .parse()
        .map_err(|_| Error::parse(source, line, format!("invalid number `{tok}`")))?;
    if !x.is_finite() {
        return Err(Error::parse(source, line, format!("non-finite value `{tok}`")));
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// Embeddings

pub fn write_embeddings<W: Write>(set: &EmbeddingSet, mut w: W) -> std::io::Result<()> {
    writeln!(w, "#dim {}", set.dim())?;
    for r in set.records() {
        write!(w, "{} {} ", r.utterance_id, r.speaker_id.as_deref().unwrap_or("-"))?;
        write_floats(&mut w, r.vector.iter().copied())?;
        writeln!(w)?;
    }
    w.flush()
}

pub fn save_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_embeddings(set, create(path)?).map_err(write_err(path))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    parse_embeddings(open(path)?, &path.display().to_string())
}

pub fn parse_embeddings<R: BufRead>(reader: R, source: &str) -> Result<EmbeddingSet> {
    let mut set: Option<EmbeddingSet> = None;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(io_err(source))?;
        if line.trim().is_empty() {
            continue;
        }
        let Some(set) = set.as_mut() else {
            let dim = line
                .strip_prefix("#dim ")
                .and_then(|d| d.trim().parse::<usize>().ok())
                .filter(|&d| d > 0)
                .ok_or_else(|| Error::parse(source, lineno, "expected header `#dim <d>`"))?;
            set = Some(EmbeddingSet::new(dim)?);
            continue;
        };
        let mut toks = line.split_whitespace();
        let utt = toks.next().expect("non-empty line");
        let spk = toks
            .next()
            .ok_or_else(|| Error::parse(source, lineno, "missing speaker field"))?;
        let values = toks
            .map(|t| parse_float(t, source, lineno))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != set.dim() {
            return Err(Error::parse(
                source,
                lineno,
                format!("expected {} components, found {}", set.dim(), values.len()),
            ));
        }
        let speaker = (spk != "-").then_some(spk);
        set.push(Record::new(utt, speaker, DVector::from_vec(values)))
            .map_err(|e| Error::parse(source, lineno, e.to_string()))?;
    }
    set.ok_or_else(|| Error::parse(source, 1, "empty file, expected header `#dim <d>`"))
}

// ---------------------------------------------------------------------------
// Trials

pub fn write_trials<W: Write>(trials: &[Trial], mut w: W) -> std::io::Result<()> {
    for t in trials {
        match t.label {
            Some(l) => writeln!(w, "{} {} {}", t.enroll, t.test, l.as_str())?,
            None => writeln!(w, "{} {}", t.enroll, t.test)?,
        }
    }
    w.flush()
}

pub fn save_trials(trials: &[Trial], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_trials(trials, create(path)?).map_err(write_err(path))
}

pub fn load_trials(path: impl AsRef<Path>) -> Result<TrialList> {
    let path = path.as_ref();
    parse_trials(open(path)?, &path.display().to_string())
}

fn parse_label(tok: &str, source: &str, line: usize) -> Result<Option<TrialLabel>> {
    match tok {
        "target" => Ok(Some(TrialLabel::Target)),
        "nontarget" => Ok(Some(TrialLabel::Nontarget)),
        "-" => Ok(None),
        other => Err(Error::parse(source, line, format!("unknown trial label `{other}`"))),
    }
}

pub fn parse_trials<R: BufRead>(reader: R, source: &str) -> Result<TrialList> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(io_err(source))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] => continue,
            [e, t] => out.push(Trial::new(*e, *t, None)),
            [e, t, l] => out.push(Trial::new(*e, *t, parse_label(l, source, lineno)?)),
            _ => {
                return Err(Error::parse(
                    source,
                    lineno,
                    "expected `<enroll_id> <test_id> [target|nontarget|-]`",
                ))
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Scores

/// Writes `<enroll> <test> <score>` lines with 9 significant digits.
pub fn write_scores<W: Write>(scores: &ScoreSet, mut w: W) -> std::io::Result<()> {
    for t in &scores.trials {
        writeln!(w, "{} {} {:.8e}", t.enroll, t.test, t.score)?;
    }
    w.flush()
}

pub fn save_scores(scores: &ScoreSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_scores(scores, create(path)?).map_err(write_err(path))
}

pub fn load_scores(path: impl AsRef<Path>) -> Result<ScoreSet> {
    let path = path.as_ref();
    parse_scores(open(path)?, &path.display().to_string())
}

/// Accepts an optional fourth `target|nontarget|-` column.
pub fn parse_scores<R: BufRead>(reader: R, source: &str) -> Result<ScoreSet> {
    let mut trials = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(io_err(source))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        let (e, t, s, label) = match toks.as_slice() {
            [] => continue,
            [e, t, s] => (e, t, s, None),
            [e, t, s, l] => (e, t, s, parse_label(l, source, lineno)?),
            _ => {
                return Err(Error::parse(
                    source,
                    lineno,
                    "expected `<enroll_id> <test_id> <score> [label]`",
                ))
            }
        };
        trials.push(ScoredTrial {
            enroll: e.to_string(),
            test: t.to_string(),
            score: parse_float(s, source, lineno)?,
            label,
        });
    }
    Ok(ScoreSet { trials })
}

// ---------------------------------------------------------------------------
// Models

/// Line cursor over a model file that turns premature EOF into a corrupt-file error.
struct Cursor<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    source: &'a str,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str, source: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate(),
            source,
            line: 0,
        }
    }

    fn corrupt(&self, message: impl Into<String>) -> Error {
        Error::Corrupt {
            source_name: self.source.to_string(),
            message: format!("line {}: {}", self.line, message.into()),
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        match self.lines.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => {
                self.line += 1;
                Err(self.corrupt("unexpected end of file"))
            }
        }
    }

    fn header(&mut self, magic: &str) -> Result<()> {
        let line = self.next_line()?;
        let mut toks = line.split_whitespace();
        if toks.next() != Some(magic) {
            return Err(self.corrupt(format!("expected `{magic} {FORMAT_VERSION}`")));
        }
        match (toks.next(), toks.next()) {
            (Some(FORMAT_VERSION), None) => Ok(()),
            (Some(v), None) => Err(Error::Version {
                found: v.to_string(),
                expected: FORMAT_VERSION.to_string(),
            }),
            _ => Err(self.corrupt(format!("expected `{magic} {FORMAT_VERSION}`"))),
        }
    }

    fn keyed_usize(&mut self, key: &str) -> Result<usize> {
        let line = self.next_line()?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [k, v] if *k == key => v
                .parse::<usize>()
                .ok()
                .filter(|&d| d > 0)
                .ok_or_else(|| self.corrupt(format!("invalid `{key}` value"))),
            _ => Err(self.corrupt(format!("expected `{key} <n>`"))),
        }
    }

    fn floats(&mut self, toks: &[&str], expected: usize) -> Result<Vec<f64>> {
        if toks.len() != expected {
            return Err(self.corrupt(format!("expected {expected} values, found {}", toks.len())));
        }
        toks.iter()
            .map(|t| parse_float(t, self.source, self.line).map_err(|e| self.corrupt(e.to_string())))
            .collect()
    }

    fn keyed_vector(&mut self, key: &str, len: usize) -> Result<Vec<f64>> {
        let line = self.next_line()?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.first() != Some(&key) {
            return Err(self.corrupt(format!("expected `{key}` line")));
        }
        self.floats(&toks[1..], len)
    }

    fn keyed_matrix(&mut self, key: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let line = self.next_line()?;
        if line.trim() != key {
            return Err(self.corrupt(format!("expected `{key}` line")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = self.next_line()?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            data.extend(self.floats(&toks, cols)?);
        }
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }

    fn finish(&mut self) -> Result<()> {
        for (i, l) in self.lines.by_ref() {
            if !l.trim().is_empty() {
                self.line = i + 1;
                return Err(self.corrupt("trailing content"));
            }
        }
        Ok(())
    }
}

fn write_matrix<W: Write>(w: &mut W, m: &DMatrix<f64>) -> std::io::Result<()> {
    for row in m.row_iter() {
        write_floats(w, row.iter().copied())?;
        writeln!(w)?;
    }
    Ok(())
}

fn read_text<R: Read>(mut reader: R, source: &str) -> Result<String> {
    let mut text = String::new();
    reader.read_to_string(&mut text).map_err(io_err(source))?;
    Ok(text)
}

pub fn write_model<W: Write>(model: &PldaModel, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{MODEL_MAGIC} {FORMAT_VERSION}")?;
    writeln!(w, "dim {}", model.dim())?;
    write!(w, "mu ")?;
    write_floats(&mut w, model.mu().iter().copied())?;
    writeln!(w)?;
    writeln!(w, "phi_b")?;
    write_matrix(&mut w, model.phi_b().as_matrix())?;
    writeln!(w, "phi_w")?;
    write_matrix(&mut w, model.phi_w().as_matrix())?;
    w.flush()
}

pub fn save_model(model: &PldaModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_model(model, create(path)?).map_err(write_err(path))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<PldaModel> {
    let path = path.as_ref();
    parse_model(open(path)?, &path.display().to_string())
}

pub fn parse_model<R: Read>(reader: R, source: &str) -> Result<PldaModel> {
    let text = read_text(reader, source)?;
    let mut cur = Cursor::new(&text, source);
    cur.header(MODEL_MAGIC)?;
    let dim = cur.keyed_usize("dim")?;
    let mu = cur.keyed_vector("mu", dim)?;
    let phi_b = cur.keyed_matrix("phi_b", dim, dim)?;
    let phi_w = cur.keyed_matrix("phi_w", dim, dim)?;
    cur.finish()?;
    PldaModel::new(DVector::from_vec(mu), SymMatrix::new(phi_b)?, SymMatrix::new(phi_w)?)
}

pub fn write_lda<W: Write>(lda: &LdaTransform, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{LDA_MAGIC} {FORMAT_VERSION}")?;
    writeln!(w, "in_dim {}", lda.in_dim())?;
    writeln!(w, "out_dim {}", lda.out_dim())?;
    write!(w, "mean ")?;
    write_floats(&mut w, lda.mean().iter().copied())?;
    writeln!(w)?;
    writeln!(w, "projection")?;
    write_matrix(&mut w, lda.projection())?;
    w.flush()
}

pub fn save_lda(lda: &LdaTransform, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_lda(lda, create(path)?).map_err(write_err(path))
}

pub fn load_lda(path: impl AsRef<Path>) -> Result<LdaTransform> {
    let path = path.as_ref();
    parse_lda(open(path)?, &path.display().to_string())
}

pub fn parse_lda<R: Read>(reader: R, source: &str) -> Result<LdaTransform> {
    let text = read_text(reader, source)?;
    let mut cur = Cursor::new(&text, source);
    cur.header(LDA_MAGIC)?;
    let in_dim = cur.keyed_usize("in_dim")?;
    let out_dim = cur.keyed_usize("out_dim")?;
    let mean = cur.keyed_vector("mean", in_dim)?;
    let projection = cur.keyed_matrix("projection", out_dim, in_dim)?;
    cur.finish()?;
    LdaTransform::new(DVector::from_vec(mean), projection)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor as IoCursor;

    fn model() -> PldaModel {
        PldaModel::new(
            DVector::from_vec(vec![0.1, -1.0 / 3.0]),
            SymMatrix::from_row_slice(2, &[2.0, 0.3, 0.3, 1.0 / 7.0]).unwrap(),
            SymMatrix::from_row_slice(2, &[1.0, -0.2, -0.2, std::f64::consts::PI]).unwrap(),
        )
        .unwrap()
    }

    fn model_text() -> String {
        let mut buf = Vec::new();
        write_model(&model(), &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn labeled_embeddings_parse() {
        let text = "#dim 2\nu1 spkA 1.0 2.0\nu2 spkB -0.5 3e-1\n";
        let set = parse_embeddings(IoCursor::new(text), "mem").unwrap();
        assert_eq!(set.dim(), 2);
        assert_eq!(set.len(), 2);
        assert!(set.is_labeled());
        assert_eq!(set.get("u2").unwrap().vector[1], 0.3);
    }

    #[test]
    fn unlabeled_marker() {
        let set = parse_embeddings(IoCursor::new("#dim 1\nu1 - 4\n"), "mem").unwrap();
        assert_eq!(set.records()[0].speaker_id, None);
    }

    #[test]
    fn short_row_names_line() {
        let text = "#dim 3\nu1 a 1 2 3\nu2 a 1 2\n";
        match parse_embeddings(IoCursor::new(text), "emb.txt") {
            Err(Error::Parse { line, source_name, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(source_name, "emb.txt");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_and_bad_numbers_rejected() {
        let dup = "#dim 1\nu1 a 1\nu1 b 2\n";
        assert!(matches!(parse_embeddings(IoCursor::new(dup), "m"), Err(Error::Parse { line: 3, .. })));
        let bad = "#dim 1\nu1 a x\n";
        assert!(matches!(parse_embeddings(IoCursor::new(bad), "m"), Err(Error::Parse { line: 2, .. })));
        let nan = "#dim 1\nu1 a NaN\n";
        assert!(parse_embeddings(IoCursor::new(nan), "m").is_err());
        assert!(parse_embeddings(IoCursor::new("u1 a 1\n"), "m").is_err());
        assert!(parse_embeddings(IoCursor::new(""), "m").is_err());
    }

    #[test]
    fn trial_lines() {
        let text = "e1 t1 target\ne1 t2 nontarget\ne2 t1 -\ne2 t2\n";
        let trials = parse_trials(IoCursor::new(text), "m").unwrap();
        assert_eq!(trials.len(), 4);
        assert_eq!(trials[0].label, Some(TrialLabel::Target));
        assert_eq!(trials[1].label, Some(TrialLabel::Nontarget));
        assert_eq!(trials[2].label, None);
        assert_eq!(trials[3].label, None);
        assert!(parse_trials(IoCursor::new("e1 t1 maybe\n"), "m").is_err());
        assert!(parse_trials(IoCursor::new("e1\n"), "m").is_err());
    }

    #[test]
    fn score_lines() {
        let text = "e1 t1 1.5\ne1 t2 -2.0 nontarget\n";
        let s = parse_scores(IoCursor::new(text), "m").unwrap();
        assert_eq!(s.trials[0].label, None);
        assert_eq!(s.trials[1].label, Some(TrialLabel::Nontarget));
        assert_eq!(s.trials[1].score, -2.0);
        let mut buf = Vec::new();
        write_scores(&s, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "e1 t1 1.50000000e0\ne1 t2 -2.00000000e0\n");
    }

    #[test]
    fn model_round_trip_is_bit_exact() {
        let text = model_text();
        let back = parse_model(IoCursor::new(text.as_bytes()), "m").unwrap();
        assert_eq!(back, model());
    }

    #[test]
    fn truncated_model_is_corrupt() {
        let text = model_text();
        let cut = &text[..text.len() - 30];
        assert!(matches!(parse_model(IoCursor::new(cut), "m"), Err(Error::Corrupt { .. })));
        let half: String = text.lines().take(4).collect::<Vec<_>>().join("\n");
        assert!(matches!(parse_model(IoCursor::new(half), "m"), Err(Error::Corrupt { .. })));
        assert!(matches!(parse_model(IoCursor::new(""), "m"), Err(Error::Corrupt { .. })));
    }

    #[test]
    fn future_model_version_rejected() {
        let text = model_text().replacen("plda-model v1", "plda-model v2", 1);
        assert!(matches!(
            parse_model(IoCursor::new(text), "m"),
            Err(Error::Version { found, .. }) if found == "v2"
        ));
    }

    #[test]
    fn lda_round_trip() {
        let lda = LdaTransform::new(
            DVector::from_vec(vec![1.0, 2.0, 3.0]),
            DMatrix::from_row_slice(2, 3, &[1.0, 0.5, 0.0, 0.0, 1.0 / 3.0, 2.0]),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_lda(&lda, &mut buf).unwrap();
        let back = parse_lda(IoCursor::new(buf), "m").unwrap();
        assert_eq!(back, lda);
    }
}
