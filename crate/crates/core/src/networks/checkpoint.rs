//! Plain-text model checkpoints.
//!
//! ```text
//! tdda-checkpoint 1
//! network <name> <activation> <head> <width0> <width1> ...
//! param <name> <rows> <cols>
//! <row-major values, one matrix row per line>
//! ...
//! end
//! ```
//!
//! Networks appear in group order (encoder, classifier, task_disc,
//! prior_disc, domain_disc); each is followed by its `param` blocks sorted
//! by name. Values use Rust's shortest round-trip exponent form, so a
//! save/load cycle is bit-exact.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{Mlp, MlpSpec, Model};
use crate::error::{Error, Result};
use crate::grad::{Matrix, ParamSet};

pub const CHECKPOINT_VERSION: u32 = 1;

const MAGIC: &str = "tdda-checkpoint";

pub fn write_model(model: &Model, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{MAGIC} {CHECKPOINT_VERSION}")?;
    for net in model.nets() {
        let spec = net.spec();
        write!(out, "network {} {} {}", net.name(), spec.activation, spec.head)?;
        for w in &spec.widths {
            write!(out, " {w}")?;
        }
        writeln!(out)?;
        for (name, m) in net.params().iter() {
            writeln!(out, "param {name} {} {}", m.nrows(), m.ncols())?;
            for row in m.rows() {
                let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
                writeln!(out, "{}", line.join(" "))?;
            }
        }
    }
    writeln!(out, "end")
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_model(model, &mut buf).expect("writing to memory");
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Checkpoint(format!("line {line}: {msg}"))
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    number: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<String> {
        self.number += 1;
        match self.inner.next() {
            Some(Ok(l)) => Ok(l),
            Some(Err(e)) => Err(bad(self.number, e)),
            None => Err(bad(self.number, "unexpected end of file")),
        }
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T> {
    s.parse().map_err(|_| bad(line, format!("bad number `{s}`")))
}

pub fn read_model(input: impl Read) -> Result<Model> {
    let mut lines = Lines {
        inner: BufReader::new(input).lines(),
        number: 0,
    };
    let header = lines.next_line()?;
    match header.split_once(' ') {
        Some((MAGIC, v)) if v.trim() == CHECKPOINT_VERSION.to_string() => {}
        Some((MAGIC, v)) => return Err(bad(1, format!("unsupported version `{v}`"))),
        _ => return Err(bad(1, "not a tdda checkpoint")),
    }

    let mut nets = Vec::new();
    let mut line = lines.next_line()?;
    loop {
        let n = lines.number;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.first().copied() {
            Some("end") => break,
            Some("network") if fields.len() >= 6 => {}
            _ => return Err(bad(n, format!("expected `network` or `end`, got `{line}`"))),
        }
        let name = fields[1].to_owned();
        let spec = MlpSpec {
            activation: fields[2].parse().map_err(|e| bad(n, e))?,
            head: fields[3].parse().map_err(|e| bad(n, e))?,
            widths: fields[4..]
                .iter()
                .map(|w| parse_num(n, w))
                .collect::<Result<_>>()?,
        };
        spec.validate().map_err(|e| bad(n, e))?;

        let mut params = ParamSet::new();
        loop {
            line = lines.next_line()?;
            let n = lines.number;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.first() != Some(&"param") {
                break;
            }
            if fields.len() != 4 {
                return Err(bad(n, "expected `param <name> <rows> <cols>`"));
            }
            let rows: usize = parse_num(n, fields[2])?;
            let cols: usize = parse_num(n, fields[3])?;
            let mut data = Vec::with_capacity(rows.saturating_mul(cols));
            for _ in 0..rows {
                let row = lines.next_line()?;
                let n = lines.number;
                let before = data.len();
                for v in row.split_whitespace() {
                    data.push(parse_num::<f64>(n, v)?);
                }
                if data.len() - before != cols {
                    return Err(bad(n, format!("expected {cols} values")));
                }
            }
            let m = Matrix::from_shape_vec((rows, cols), data).map_err(|e| bad(n, e))?;
            params.insert(fields[1], m);
        }
        nets.push(Mlp::from_params(&name, spec, params).map_err(|e| bad(n, e))?);
    }

    let nets: [Mlp; 5] = nets
        .try_into()
        .map_err(|v: Vec<Mlp>| Error::Checkpoint(format!("expected 5 networks, found {}", v.len())))?;
    Model::from_nets(nets)
}

pub fn load_model(path: &Path) -> Result<Model> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(file)
}
