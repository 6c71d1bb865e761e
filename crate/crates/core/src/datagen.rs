//! Data distributions on `[-R, R]^d`, random target networks and labelled datasets.

use std::fmt;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::netcore::MeanFieldNet;
use crate::norms::path_norm_proxy;
use crate::{Error, Matrix, Result, Scalar};

/// Independent RNG stream `index` derived from `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DistKind {
    /// Uniform on `[-R, R]^d`.
    UniformCube,
    /// Uniform on the Euclidean sphere of radius `R` (inside the ℓ∞ ball).
    SphereSurface,
    /// `N(0, (R/2)^2)` per coordinate, clamped to `[-R, R]`.
    GaussianClipped,
}

/// Sampling distribution whose support lies in the ℓ∞ ball of radius `radius`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DataDistribution {
    pub kind: DistKind,
    pub dim: usize,
    pub radius: f64,
}

impl DataDistribution {
    pub fn new(kind: DistKind, dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("distribution dimension must be positive".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
        }
        Ok(Self { kind, dim, radius })
    }

    pub fn uniform_cube(dim: usize, radius: f64) -> Self {
        Self::new(DistKind::UniformCube, dim, radius).expect("valid uniform cube")
    }

    /// Parse `uniform_cube`, `sphere_surface` or `gaussian_clipped`.
    pub fn parse_kind(s: &str) -> Result<DistKind> {
        match s {
            "uniform_cube" | "uniform" => Ok(DistKind::UniformCube),
            "sphere_surface" | "sphere" => Ok(DistKind::SphereSurface),
            "gaussian_clipped" | "gaussian" => Ok(DistKind::GaussianClipped),
            other => Err(Error::InvalidArgument(format!("unknown distribution '{other}'"))),
        }
    }

    pub fn draw<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let r = self.radius;
        match self.kind {
            DistKind::UniformCube => (0..self.dim).map(|_| T::lit(rng.random_range(-r..=r))).collect(),
            DistKind::SphereSurface => loop {
                let g: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(rng)).collect();
                let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > 1e-300 {
                    break g.iter().map(|v| T::lit((r * v / n).clamp(-r, r))).collect();
                }
            },
            DistKind::GaussianClipped => (0..self.dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    T::lit((0.5 * r * z).clamp(-r, r))
                })
                .collect(),
        }
    }

    /// `n` i.i.d. points as an `n × d` matrix; deterministic in `seed`.
    pub fn sample<T: Scalar>(&self, n: usize, seed: u64) -> Matrix<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(n, &mut rng)
    }

    pub fn sample_with<T: Scalar, R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Matrix<T> {
        let mut data = Vec::with_capacity(n * self.dim);
        for _ in 0..n {
            data.extend(self.draw::<T, R>(rng));
        }
        Matrix::from_vec(n, self.dim, data)
    }

    /// Whether every point lies in the declared support `[-R, R]^d`.
    pub fn contains<T: Scalar>(&self, x: &[T]) -> bool {
        x.len() == self.dim && x.iter().all(|v| v.as_f64().abs() <= self.radius)
    }
}

impl fmt::Display for DataDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            DistKind::UniformCube => "uniform_cube",
            DistKind::SphereSurface => "sphere_surface",
            DistKind::GaussianClipped => "gaussian_clipped",
        };
        write!(f, "{name}(d={},R={})", self.dim, self.radius)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightLaw {
    Uniform,
    Gaussian,
}

/// Random mean-field net with i.i.d. weights whose outer layer is rescaled so
/// that the path-norm proxy equals `proxy_target`.
///
/// Weights are drawn at unit scale (uniform on `[-1, 1]` or standard normal);
/// the mean-field `1/fan-in` averaging already keeps the layer norms `O(1)`.
pub fn random_net<T: Scalar>(
    widths: &[usize],
    input_dim: usize,
    proxy_target: T,
    law: WeightLaw,
    seed: u64,
) -> Result<MeanFieldNet<T>> {
    if !(proxy_target > T::zero()) {
        return Err(Error::InvalidArgument("proxy_target must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> T {
        match law {
            WeightLaw::Uniform => T::lit(rng.random_range(-1.0..=1.0)),
            WeightLaw::Gaussian => T::lit(StandardNormal.sample(&mut rng)),
        }
    };
    let mut net = MeanFieldNet::zeros(input_dim, widths)?;
    for l in 0..=net.depth() {
        for v in net.layer_mut(l) {
            *v = draw();
        }
    }
    let proxy = path_norm_proxy(&net);
    if proxy == T::zero() {
        return Err(Error::DegenerateNet);
    }
    let d = net.depth();
    net.scale_layer(d, proxy_target / proxy);
    Ok(net)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub distribution: String,
    pub target: String,
    pub seed: u64,
}

/// Labelled sample `(x_i, y_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub xs: Matrix<T>,
    pub ys: Vec<T>,
    pub provenance: Provenance,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(xs: Matrix<T>, ys: Vec<T>, provenance: Provenance) -> Result<Self> {
        if xs.rows() != ys.len() {
            return Err(Error::DimensionMismatch {
                expected: xs.rows(),
                got: ys.len(),
            });
        }
        if !xs.is_finite() || ys.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("dataset has non-finite entries".into()));
        }
        Ok(Self { xs, ys, provenance })
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.xs.cols()
    }

    pub fn x(&self, i: usize) -> &[T] {
        self.xs.row(i)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# mflab-dataset dist={} target={} seed={}",
            self.provenance.distribution, self.provenance.target, self.provenance.seed
        )?;
        let header: Vec<String> = (0..self.dim()).map(|k| format!("x{k}")).chain(["y".into()]).collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let row: Vec<String> = self.x(i).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{}", row.join(","), self.ys[i])?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut provenance = Provenance {
            distribution: String::new(),
            target: String::new(),
            seed: 0,
        };
        let mut dim = None;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                for tok in meta.split_whitespace() {
                    if let Some(v) = tok.strip_prefix("dist=") {
                        provenance.distribution = v.into();
                    } else if let Some(v) = tok.strip_prefix("target=") {
                        provenance.target = v.into();
                    } else if let Some(v) = tok.strip_prefix("seed=") {
                        provenance.seed = v.parse().map_err(|_| Error::Parse {
                            line: lineno,
                            msg: format!("bad seed '{v}'"),
                        })?;
                    }
                }
                continue;
            }
            if dim.is_none() {
                let cols = line.split(',').count();
                if cols < 2 {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: "header needs at least one x column and y".into(),
                    });
                }
                dim = Some(cols - 1);
                continue;
            }
            let d = dim.unwrap_or(0);
            let vals: Vec<T> = line
                .split(',')
                .map(|t| {
                    t.trim().parse::<T>().map_err(|_| Error::Parse {
                        line: lineno,
                        msg: format!("bad number '{t}'"),
                    })
                })
                .collect::<Result<_>>()?;
            if vals.len() != d + 1 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected {} columns, got {}", d + 1, vals.len()),
                });
            }
            xs.extend_from_slice(&vals[..d]);
            ys.push(vals[d]);
        }
        let d = dim.ok_or(Error::Parse {
            line: 0,
            msg: "missing header".into(),
        })?;
        let n = ys.len();
        Self::new(Matrix::from_vec(n, d, xs), ys, provenance)
    }
}

/// Label `points` with `net`; no noise.
pub fn label<T: Scalar>(net: &MeanFieldNet<T>, points: Matrix<T>, provenance: Provenance) -> Result<Dataset<T>> {
    label_with_noise(net, points, provenance, 0.0, 0)
}

/// Label `points` with `net` plus optional additive `N(0, noise_std²)` noise.
pub fn label_with_noise<T: Scalar>(
    net: &MeanFieldNet<T>,
    points: Matrix<T>,
    provenance: Provenance,
    noise_std: f64,
    noise_seed: u64,
) -> Result<Dataset<T>> {
    if points.rows() > 0 && points.cols() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: points.cols(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let ys = (0..points.rows())
        .map(|i| {
            let y = net.forward_unchecked(points.row(i));
            if noise_std > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                y + T::lit(noise_std * z)
            } else {
                y
            }
        })
        .collect();
    Dataset::new(points, ys, provenance)
}
