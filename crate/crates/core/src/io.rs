//! `mfnet-v1` text serialization for networks and trees.
//!
//! ```text
//! mfnet-v1
//! convention meanfield        # or raw, or tree
//! depth 2
//! input_dim 1
//! widths 2 1                  # trees: branching b_1 … b_L
//! layer 0 2 2                 # index, rows, cols; then one line per row
//! 3 1
//! 0.5 -2
//! layer 1 1 2
//! 1 1
//! outer 1
//! 2
//! ```
//!
//! Trees list `level <k> <len>` followed by one line of values. Numbers use the
//! shortest representation that parses back to the same float.

use std::fmt::Display;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::netcore::{MeanFieldNet, NeuralTree, RawWeights};
use crate::{Error, Matrix, Result, Scalar};

pub const MAGIC: &str = "mfnet-v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Convention {
    MeanField,
    Raw,
}

/// A loaded model file.
#[derive(Clone, Debug, PartialEq)]
pub enum Model<T> {
    Net(MeanFieldNet<T>),
    Tree(NeuralTree<T>),
}

fn join<T: Display>(xs: &[T]) -> String {
    xs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn write_net<T: Scalar, W: Write>(net: &MeanFieldNet<T>, convention: Convention, mut w: W) -> Result<()> {
    let (tag, hidden, outer) = match convention {
        Convention::MeanField => ("meanfield", net.hidden().to_vec(), net.outer().to_vec()),
        Convention::Raw => {
            let raw = net.to_raw();
            ("raw", raw.hidden, raw.outer)
        }
    };
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "convention {tag}")?;
    writeln!(w, "depth {}", net.depth())?;
    writeln!(w, "input_dim {}", net.input_dim())?;
    writeln!(w, "widths {}", join(&net.widths()))?;
    for (l, a) in hidden.iter().enumerate() {
        writeln!(w, "layer {l} {} {}", a.rows(), a.cols())?;
        for i in 0..a.rows() {
            writeln!(w, "{}", join(a.row(i)))?;
        }
    }
    writeln!(w, "outer {}", outer.len())?;
    writeln!(w, "{}", join(&outer))?;
    Ok(())
}

pub fn write_tree<T: Scalar, W: Write>(tree: &NeuralTree<T>, mut w: W) -> Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "convention tree")?;
    writeln!(w, "depth {}", tree.depth())?;
    writeln!(w, "input_dim {}", tree.input_dim())?;
    writeln!(w, "branching {}", join(tree.branching()))?;
    for (k, level) in tree.levels().iter().enumerate() {
        writeln!(w, "level {k} {}", level.len())?;
        writeln!(w, "{}", join(level))?;
    }
    Ok(())
}

/// Line reader that skips blanks and `#` comments and tracks line numbers.
struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<Option<(usize, String)>> {
        for l in self.inner.by_ref() {
            self.line += 1;
            let l = l?;
            let content = l.split('#').next().unwrap_or("").trim();
            if !content.is_empty() {
                return Ok(Some((self.line, content.to_string())));
            }
        }
        Ok(None)
    }

    fn expect_line(&mut self, what: &str) -> Result<(usize, String)> {
        self.next_line()?.ok_or(Error::Parse {
            line: self.line + 1,
            msg: format!("unexpected end of file, expected {what}"),
        })
    }

    fn keyed(&mut self, key: &str) -> Result<(usize, Vec<String>)> {
        let (line, s) = self.expect_line(key)?;
        let mut toks = s.split_whitespace();
        if toks.next() != Some(key) {
            return Err(Error::Parse {
                line,
                msg: format!("expected '{key}'"),
            });
        }
        Ok((line, toks.map(str::to_string).collect()))
    }
}

fn parse_tok<V: std::str::FromStr>(line: usize, tok: &str) -> Result<V> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse '{tok}'"),
    })
}

fn parse_all<V: std::str::FromStr>(line: usize, toks: &[String]) -> Result<Vec<V>> {
    toks.iter().map(|t| parse_tok(line, t)).collect()
}

fn single<V: std::str::FromStr>(line: usize, toks: &[String]) -> Result<V> {
    match toks {
        [t] => parse_tok(line, t),
        _ => Err(Error::Parse {
            line,
            msg: "expected exactly one value".into(),
        }),
    }
}

fn values<T: Scalar, R: BufRead>(lines: &mut Lines<R>, n: usize) -> Result<Vec<T>> {
    let (line, s) = lines.expect_line("values")?;
    let toks: Vec<String> = s.split_whitespace().map(str::to_string).collect();
    if toks.len() != n {
        return Err(Error::Parse {
            line,
            msg: format!("expected {n} values, got {}", toks.len()),
        });
    }
    parse_all(line, &toks)
}

pub fn read_model<T: Scalar, R: BufRead>(r: R) -> Result<Model<T>> {
    let mut lines = Lines {
        inner: r.lines(),
        line: 0,
    };
    let (line, magic) = lines.expect_line("header")?;
    if magic != MAGIC {
        return Err(Error::Parse {
            line,
            msg: format!("expected header '{MAGIC}', found '{magic}'"),
        });
    }
    let (line, conv) = lines.keyed("convention")?;
    let conv: String = single(line, &conv)?;
    let (line, depth) = lines.keyed("depth")?;
    let depth: usize = single(line, &depth)?;
    let (line, d) = lines.keyed("input_dim")?;
    let d: usize = single(line, &d)?;

    if conv == "tree" {
        let (line, b) = lines.keyed("branching")?;
        let branching: Vec<usize> = parse_all(line, &b)?;
        if branching.len() != depth {
            return Err(Error::Parse {
                line,
                msg: format!("branching has {} entries, depth is {depth}", branching.len()),
            });
        }
        let mut levels = Vec::with_capacity(depth + 1);
        for k in 0..=depth {
            let (line, hdr) = lines.keyed("level")?;
            let hdr: Vec<usize> = parse_all(line, &hdr)?;
            if hdr.len() != 2 || hdr[0] != k {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected 'level {k} <len>'"),
                });
            }
            levels.push(values(&mut lines, hdr[1])?);
        }
        return Ok(Model::Tree(NeuralTree::new(d, branching, levels)?));
    }

    let convention = match conv.as_str() {
        "meanfield" => Convention::MeanField,
        "raw" => Convention::Raw,
        other => {
            return Err(Error::Parse {
                line,
                msg: format!("unknown convention '{other}'"),
            })
        }
    };
    let (line, w) = lines.keyed("widths")?;
    let widths: Vec<usize> = parse_all(line, &w)?;
    if widths.len() != depth {
        return Err(Error::Parse {
            line,
            msg: format!("widths has {} entries, depth is {depth}", widths.len()),
        });
    }
    let mut hidden = Vec::with_capacity(depth);
    for l in 0..depth {
        let (line, hdr) = lines.keyed("layer")?;
        let hdr: Vec<usize> = parse_all(line, &hdr)?;
        if hdr.len() != 3 || hdr[0] != l {
            return Err(Error::Parse {
                line,
                msg: format!("expected 'layer {l} <rows> <cols>'"),
            });
        }
        let (rows, cols) = (hdr[1], hdr[2]);
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(values::<T, R>(&mut lines, cols)?);
        }
        hidden.push(Matrix::from_vec(rows, cols, data));
    }
    let (line, n) = lines.keyed("outer")?;
    let n: usize = single(line, &n)?;
    let outer = values(&mut lines, n)?;
    if let Some((line, _)) = lines.next_line()? {
        return Err(Error::Parse {
            line,
            msg: "trailing content".into(),
        });
    }
    let net = match convention {
        Convention::MeanField => MeanFieldNet::new(d, hidden, outer)?,
        Convention::Raw => MeanFieldNet::from_raw(d, RawWeights { hidden, outer })?,
    };
    if net.widths() != widths {
        return Err(Error::Shape(format!(
            "declared widths {widths:?} do not match layer shapes {:?}",
            net.widths()
        )));
    }
    Ok(Model::Net(net))
}

pub fn read_net<T: Scalar, R: BufRead>(r: R) -> Result<MeanFieldNet<T>> {
    match read_model(r)? {
        Model::Net(n) => Ok(n),
        Model::Tree(_) => Err(Error::InvalidArgument("expected a network file, found a tree".into())),
    }
}

pub fn read_tree<T: Scalar, R: BufRead>(r: R) -> Result<NeuralTree<T>> {
    match read_model(r)? {
        Model::Tree(t) => Ok(t),
        Model::Net(_) => Err(Error::InvalidArgument("expected a tree file, found a network".into())),
    }
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<Model<T>> {
    read_model(BufReader::new(File::open(path)?))
}

pub fn load_net<T: Scalar>(path: impl AsRef<Path>) -> Result<MeanFieldNet<T>> {
    read_net(BufReader::new(File::open(path)?))
}

pub fn load_tree<T: Scalar>(path: impl AsRef<Path>) -> Result<NeuralTree<T>> {
    read_tree(BufReader::new(File::open(path)?))
}

pub fn save_net<T: Scalar>(net: &MeanFieldNet<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_net(net, Convention::MeanField, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn save_tree<T: Scalar>(tree: &NeuralTree<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tree(tree, &mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{random_net, WeightLaw};
    use crate::net_to_tree;

    #[test]
    fn net_round_trip_is_exact() {
        let net = random_net::<f64>(&[3, 2], 2, 1.7, WeightLaw::Gaussian, 11).unwrap();
        let mut buf = Vec::new();
        write_net(&net, Convention::MeanField, &mut buf).unwrap();
        let back: MeanFieldNet<f64> = read_net(buf.as_slice()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn f32_round_trip_is_exact() {
        let net = random_net::<f32>(&[4], 3, 1.0, WeightLaw::Uniform, 2).unwrap();
        let mut buf = Vec::new();
        write_net(&net, Convention::MeanField, &mut buf).unwrap();
        assert_eq!(read_net::<f32, _>(buf.as_slice()).unwrap(), net);
    }

    #[test]
    fn raw_convention_loads_same_function() {
        let net = random_net::<f64>(&[3, 2], 1, 1.0, WeightLaw::Uniform, 5).unwrap();
        let mut buf = Vec::new();
        write_net(&net, Convention::Raw, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).contains("convention raw"));
        let back: MeanFieldNet<f64> = read_net(buf.as_slice()).unwrap();
        for x in [-0.9, 0.1, 0.7] {
            let (a, b) = (net.forward(&[x]).unwrap(), back.forward(&[x]).unwrap());
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn tree_round_trip_is_exact() {
        let net = random_net::<f64>(&[2, 3], 2, 1.0, WeightLaw::Gaussian, 8).unwrap();
        let tree = net_to_tree(&net);
        let mut buf = Vec::new();
        write_tree(&tree, &mut buf).unwrap();
        assert_eq!(read_tree::<f64, _>(buf.as_slice()).unwrap(), tree);
    }

    #[test]
    fn parses_handwritten_file() {
        let text = "mfnet-v1\n# single neuron\nconvention meanfield\ndepth 1\ninput_dim 1\nwidths 1\nlayer 0 1 2\n3 1\nouter 1\n2\n";
        let net: MeanFieldNet<f64> = read_net(text.as_bytes()).unwrap();
        assert_eq!(net.forward(&[1.0]).unwrap(), 4.0);
    }

    #[test]
    fn rejects_malformed_input() {
        let bad = [
            "mfnet-v0\n",
            "mfnet-v1\nconvention meanfield\ndepth 1\ninput_dim 1\nwidths 1\nlayer 0 1 2\n3\nouter 1\n2\n",
            "mfnet-v1\nconvention banana\ndepth 1\ninput_dim 1\n",
            "mfnet-v1\nconvention meanfield\ndepth 1\ninput_dim 1\nwidths 1\nlayer 0 1 2\n3 x\nouter 1\n2\n",
            "mfnet-v1\nconvention meanfield\ndepth 1\ninput_dim 1\nwidths 2\nlayer 0 1 2\n3 1\nouter 1\n2\n",
        ];
        for text in bad {
            assert!(read_net::<f64, _>(text.as_bytes()).is_err(), "{text}");
        }
    }
}
