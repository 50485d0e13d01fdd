//! Example sets on disk: a named-tensor container (`x`, `mask`: `[n, D, B]`,
//! `y`: `[n, M]` with 1/0/-1 codes) plus a JSONL index with one
//! `{"row", "patient_id", "t"}` object per example.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::window::{Example, Label};
use crate::container::NamedTensors;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleSetMeta {
    pub labs: Vec<String>,
    pub diseases: Vec<String>,
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleSet {
    pub meta: ExampleSetMeta,
    pub examples: Vec<Example>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexLine {
    row: usize,
    patient_id: u64,
    t: u32,
}

pub fn container_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.bin"))
}

pub fn index_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.jsonl"))
}

impl ExampleSet {
    pub fn refs(&self) -> Vec<&Example> {
        self.examples.iter().collect()
    }

    /// Number of positive entries per disease.
    pub fn positives(&self) -> Vec<usize> {
        (0..self.meta.diseases.len())
            .map(|m| {
                self.examples
                    .iter()
                    .filter(|e| e.y[m] == Label::Pos)
                    .count()
            })
            .collect()
    }

    pub fn save(&self, dir: &Path, name: &str) -> Result<()> {
        let (d, b, m) = (
            self.meta.labs.len(),
            self.meta.window,
            self.meta.diseases.len(),
        );
        let n = self.examples.len();
        let mut x = Vec::with_capacity(n * d * b);
        let mut mask = Vec::with_capacity(n * d * b);
        let mut y = Vec::with_capacity(n * m);
        for e in &self.examples {
            e.x.expect_shape(&[d, b])?;
            x.extend_from_slice(e.x.data());
            mask.extend_from_slice(e.mask.data());
            y.extend(e.y.iter().map(|l| l.code()));
        }
        let mut nt = NamedTensors::new(serde_json::to_value(&self.meta)?);
        nt.push("x", Tensor::new(vec![n, d, b], x)?);
        nt.push("mask", Tensor::new(vec![n, d, b], mask)?);
        nt.push("y", Tensor::new(vec![n, m], y)?);
        nt.write(&container_path(dir, name))?;

        let path = index_path(dir, name);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for (row, e) in self.examples.iter().enumerate() {
            let line = serde_json::to_string(&IndexLine {
                row,
                patient_id: e.patient_id,
                t: e.t,
            })?;
            writeln!(w, "{line}").map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path, name: &str) -> Result<Self> {
        let mut nt = NamedTensors::read(&container_path(dir, name))?;
        let meta: ExampleSetMeta = serde_json::from_value(nt.meta.clone())?;
        let (d, b, m) = (meta.labs.len(), meta.window, meta.diseases.len());
        let x = nt.take("x")?;
        let mask = nt.take("mask")?;
        let y = nt.take("y")?;
        let n = x.shape().first().copied().unwrap_or(0);
        for (t, shape) in [
            (&x, vec![n, d, b]),
            (&mask, vec![n, d, b]),
            (&y, vec![n, m]),
        ] {
            if t.shape() != shape.as_slice() {
                return Err(Error::Format(format!(
                    "example tensor shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }

        let path = index_path(dir, name);
        let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut index = Vec::with_capacity(n);
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            let entry: IndexLine = serde_json::from_str(&line).map_err(|e| Error::Malformed {
                path: path.clone(),
                line: i as u64 + 1,
                message: e.to_string(),
            })?;
            if entry.row != i {
                return Err(Error::Malformed {
                    path: path.clone(),
                    line: i as u64 + 1,
                    message: format!("row {} out of order", entry.row),
                });
            }
            index.push(entry);
        }
        if index.len() != n {
            return Err(Error::Format(format!(
                "index has {} rows, container {n}",
                index.len()
            )));
        }

        let per = d * b;
        let mut examples = Vec::with_capacity(n);
        for (i, entry) in index.into_iter().enumerate() {
            examples.push(Example {
                patient_id: entry.patient_id,
                t: entry.t,
                x: Tensor::new(vec![d, b], x.data()[i * per..(i + 1) * per].to_vec())?,
                mask: Tensor::new(vec![d, b], mask.data()[i * per..(i + 1) * per].to_vec())?,
                y: y.data()[i * m..(i + 1) * m]
                    .iter()
                    .map(|&v| Label::from_code(v))
                    .collect::<Result<_>>()?,
            });
        }
        Ok(Self { meta, examples })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let meta = ExampleSetMeta {
            labs: vec!["A".into(), "B".into()],
            diseases: vec!["1".into(), "2".into(), "3".into()],
            window: 2,
        };
        let examples = vec![
            Example {
                patient_id: 4,
                t: 9,
                x: Tensor::new(vec![2, 2], vec![0.5, 0.0, -1.0, 2.0]).unwrap(),
                mask: Tensor::new(vec![2, 2], vec![1.0, 0.0, 1.0, 1.0]).unwrap(),
                y: vec![Label::Pos, Label::Excluded, Label::Neg],
            },
            Example {
                patient_id: 8,
                t: 3,
                x: Tensor::zeros(&[2, 2]),
                mask: Tensor::zeros(&[2, 2]),
                y: vec![Label::Neg, Label::Neg, Label::Pos],
            },
        ];
        let set = ExampleSet { meta, examples };
        set.save(dir.path(), "train").unwrap();
        assert_eq!(ExampleSet::load(dir.path(), "train").unwrap(), set);
        assert_eq!(set.positives(), vec![1, 0, 1]);
    }

    #[test]
    fn empty_set_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let set = ExampleSet {
            meta: ExampleSetMeta {
                labs: vec!["A".into()],
                diseases: vec!["1".into()],
                window: 4,
            },
            examples: vec![],
        };
        set.save(dir.path(), "val").unwrap();
        assert_eq!(ExampleSet::load(dir.path(), "val").unwrap(), set);
    }
}
