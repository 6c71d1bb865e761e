use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use mflab::approx::{maurey, rate_sweep};
use mflab::calculus;
use mflab::complexity::{
    generalization_gap_experiment, rademacher_affine, rademacher_deep_lower, AscentConfig, GenGapConfig, SampleSet,
};
use mflab::datagen::{label_with_noise, random_net, stream, DataDistribution, Provenance, WeightLaw};
use mflab::io::{load_model, load_net, save_net, save_tree, Model};
use mflab::norms::{balance, hilbert_complexity, path_norm_proxy, path_norm_proxy_tree, PathNormReport};
use mflab::train::{
    regularization_lambda, train, train_regularized, Loss, RiskData, RiskSpec, SigmaPrime, TrainConfig, TrajectoryLog,
};
use mflab::{net_to_tree, tree_to_net, Dataset, Net};

use crate::config::{parse_list, Config};
use crate::*;

type Res = Result<(), Failure>;

pub fn run(cmd: Command, cfg: &Config) -> Res {
    match cmd {
        Command::Eval(a) => eval(a, cfg),
        Command::Pathnorm(a) => pathnorm(a, cfg),
        Command::Balance(a) => convert(a, cfg, Conversion::Balance),
        Command::ToTree(a) => convert(a, cfg, Conversion::ToTree),
        Command::Flatten(a) => convert(a, cfg, Conversion::Flatten),
        Command::Maurey(a) => maurey_cmd(a, cfg),
        Command::RateSweep(a) => rate_sweep_cmd(a, cfg),
        Command::Train(a) => train_cmd(a, cfg, false),
        Command::TrainReg(a) => train_cmd(a, cfg, true),
        Command::Rademacher(a) => rademacher_cmd(a, cfg),
        Command::GenGap(a) => gen_gap_cmd(a, cfg),
        Command::Compose(a) => compose_cmd(a, cfg),
        Command::MakeTarget(a) => make_target(a, cfg),
    }
}

fn sink(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn model(path: &Path) -> anyhow::Result<Model<f64>> {
    load_model(path).with_context(|| format!("{}", path.display()))
}

fn network(path: &Path) -> anyhow::Result<Net> {
    load_net(path).with_context(|| format!("{}", path.display()))
}

fn dataset(path: &Path) -> anyhow::Result<Dataset> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Dataset::read_csv(BufReader::new(f)).with_context(|| format!("{}", path.display()))
}

fn distribution(
    cfg: &Config,
    dist: Option<String>,
    radius: Option<f64>,
    dim: usize,
) -> anyhow::Result<DataDistribution> {
    let kind = DataDistribution::parse_kind(&cfg.get("dist", dist, "uniform_cube".to_string())?)?;
    Ok(DataDistribution::new(kind, dim, cfg.get("radius", radius, 1.0)?)?)
}

fn save(path: &Path, m: &Model<f64>) -> anyhow::Result<()> {
    match m {
        Model::Net(n) => save_net(n, path),
        Model::Tree(t) => save_tree(t, path),
    }
    .with_context(|| format!("cannot write {}", path.display()))
}

fn announce_seed(seed: u64) {
    eprintln!("seed={seed}");
}

fn eval(a: EvalArgs, cfg: &Config) -> Res {
    let m = model(&cfg.require("model", a.model)?)?;
    let x: Vec<f64> = cfg
        .list("x", a.x)?
        .ok_or_else(|| anyhow!("missing required setting --x"))?;
    let y = match &m {
        Model::Net(n) => n.forward(&x)?,
        Model::Tree(t) => t.forward(&x)?,
    };
    println!("{y}");
    Ok(())
}

fn pathnorm(a: PathnormArgs, cfg: &Config) -> Res {
    let net = match model(&cfg.require("model", a.model)?)? {
        Model::Net(n) => n,
        Model::Tree(t) => {
            println!("proxy={}", path_norm_proxy_tree(&t));
            return Ok(());
        }
    };
    let rep = hilbert_complexity(&net);
    println!("proxy={}", rep.proxy);
    println!("Q={}", rep.hilbert_q);
    let norms: Vec<String> = rep.per_layer_l2.iter().map(f64::to_string).collect();
    println!("layer_norms={}", norms.join(","));
    if let Some(out) = cfg.opt::<PathBuf>("out", a.out)? {
        let mut w = sink(Some(&out))?;
        writeln!(w, "{}", PathNormReport::<f64>::csv_header(net.depth())).map_err(anyhow::Error::from)?;
        writeln!(w, "{}", rep.to_csv_row()).map_err(anyhow::Error::from)?;
        w.flush().map_err(anyhow::Error::from)?;
    }
    Ok(())
}

enum Conversion {
    Balance,
    ToTree,
    Flatten,
}

fn convert(a: ConvertArgs, cfg: &Config, how: Conversion) -> Res {
    let input = model(&cfg.require("model", a.model)?)?;
    let out: PathBuf = cfg.require("out", a.out)?;
    let result = match (how, input) {
        (Conversion::Balance, Model::Net(n)) => {
            let b = balance(&n)?;
            println!("proxy={}", path_norm_proxy(&b));
            Model::Net(b)
        }
        (Conversion::ToTree, Model::Net(n)) => {
            let t = net_to_tree(&n);
            println!("leaves={}", t.level_len(0));
            Model::Tree(t)
        }
        (Conversion::Flatten, Model::Tree(t)) => Model::Net(tree_to_net(&t)?),
        (Conversion::Flatten, Model::Net(_)) => return Err(anyhow!("flatten expects a tree file").into()),
        (_, Model::Tree(_)) => return Err(anyhow!("expected a network file, got a tree").into()),
    };
    save(&out, &result)?;
    Ok(())
}

/// Relative agreement up to `tol`, scaled by `max(1, |b|)`.
fn agrees(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

fn maurey_cmd(a: MaureyArgs, cfg: &Config) -> Res {
    let net = network(&cfg.require("model", a.model)?)?;
    let m: usize = cfg.require("m", a.m)?;
    let seed: u64 = cfg.require("seed", a.seed)?;
    let n_eval: usize = cfg.get("n_eval", a.n_eval, 4000)?;
    let dist = distribution(cfg, a.dist, a.radius, net.input_dim())?;
    announce_seed(seed);
    let r = maurey(&net, m, &dist, n_eval, seed)?;
    let tree_proxy = path_norm_proxy_tree(&r.tree);
    let mut w = sink(cfg.opt::<PathBuf>("out", a.out)?.as_deref())?;
    let io = |e: io::Error| Failure::from(anyhow::Error::from(e));
    writeln!(w, "m,seed,n_eval,target_proxy,tree_proxy,l2_error,bound").map_err(io)?;
    writeln!(
        w,
        "{m},{seed},{n_eval},{},{tree_proxy},{},{}",
        r.target_proxy, r.l2_error, r.bound
    )
    .map_err(io)?;
    w.flush().map_err(io)?;
    if let Some(p) = cfg.opt::<PathBuf>("tree_out", a.tree_out)? {
        save_tree(&r.tree, &p).with_context(|| format!("cannot write {}", p.display()))?;
    }
    if a.check || cfg.get("check", None, false)? {
        let mut failures = Vec::new();
        if r.tree.depth() != net.depth() || r.tree.branching().iter().any(|&b| b != m) {
            failures.push(format!(
                "tree shape {:?} is not {} levels of {m}",
                r.tree.branching(),
                net.depth()
            ));
        }
        if !agrees(tree_proxy, r.target_proxy, 1e-9) {
            failures.push(format!(
                "tree proxy {tree_proxy} differs from source proxy {}",
                r.target_proxy
            ));
        }
        if !(r.l2_error.is_finite() && r.l2_error >= 0.0) {
            failures.push(format!("L2 error {} is not a finite nonnegative number", r.l2_error));
        }
        let flat = tree_to_net(&r.tree)?;
        let mut rng = stream(seed, 99);
        for _ in 0..32 {
            let x: Vec<f64> = dist.draw(&mut rng);
            let (t, f) = (r.tree.forward(&x)?, flat.forward(&x)?);
            if !agrees(f, t, 1e-10) {
                failures.push(format!("flattened tree gives {f}, tree gives {t}"));
                break;
            }
        }
        if !failures.is_empty() {
            return Err(Failure::Check(failures.join("; ")));
        }
        eprintln!("check: maurey invariants hold");
    }
    Ok(())
}

fn rate_sweep_cmd(a: RateSweepArgs, cfg: &Config) -> Res {
    let net = network(&cfg.require("model", a.model)?)?;
    let ms: Vec<usize> = cfg.list("ms", a.ms)?.unwrap_or_else(|| vec![4, 16, 64, 256]);
    let seeds: usize = cfg.get("seeds", a.seeds, 20)?;
    let seed: u64 = cfg.require("seed", a.seed)?;
    let n_eval: usize = cfg.get("n_eval", a.n_eval, 4000)?;
    let dist = distribution(cfg, a.dist, a.radius, net.input_dim())?;
    announce_seed(seed);
    let sweep = rate_sweep(&net, &ms, &dist, seeds, n_eval, seed)?;
    let mut w = sink(cfg.opt::<PathBuf>("out", a.out)?.as_deref())?;
    sweep.write_csv(&mut w)?;
    w.flush().map_err(anyhow::Error::from)?;
    eprintln!("slope={}", sweep.slope);
    Ok(())
}

fn write_log(log: &TrajectoryLog, path: Option<&Path>) -> anyhow::Result<()> {
    let mut w = sink(path)?;
    log.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn train_cmd(a: TrainArgs, cfg: &Config, regularized: bool) -> Res {
    let mut net = network(&cfg.require("model", a.model)?)?;
    let loss = match cfg.get("loss", a.loss, "squared".to_string())?.as_str() {
        "squared" => Loss::Squared,
        "clipped" | "clipped_squared" => Loss::ClippedSquared {
            cap: cfg.require("cap", a.cap)?,
        },
        other => return Err(anyhow!("unknown loss '{other}' (expected squared or clipped)").into()),
    };
    let data_path: Option<PathBuf> = cfg.opt("data", a.data)?;
    let target_path: Option<PathBuf> = cfg.opt("target", a.target)?;
    let (data, seed) = match (data_path, target_path) {
        (Some(p), None) => (RiskData::Sample(dataset(&p)?), cfg.get("seed", a.seed, 0)?),
        (None, Some(p)) => {
            let target = network(&p)?;
            let dist = distribution(cfg, a.dist, a.radius, target.input_dim())?;
            let batch = cfg.get("batch", a.batch, 256)?;
            let seed: u64 = cfg.require("seed", a.seed)?;
            announce_seed(seed);
            (RiskData::Population { dist, target, batch }, seed)
        }
        (Some(_), Some(_)) => return Err(anyhow!("give either --data or --target, not both").into()),
        (None, None) => return Err(anyhow!("missing required setting --data (or --target)").into()),
    };
    let spec = RiskSpec::new(loss, data)?;
    let width = net.widths().into_iter().min().unwrap_or(1);
    let default_lambda = if regularized {
        regularization_lambda(net.depth(), width)
    } else {
        0.0
    };
    let sigma_prime = match cfg.get("sigma_prime", a.sigma_prime, 0u8)? {
        0 => SigmaPrime::Zero,
        1 => SigmaPrime::One,
        v => return Err(anyhow!("--sigma-prime must be 0 or 1, got {v}").into()),
    };
    let config = TrainConfig {
        step_size: cfg.get("step_size", a.step_size, 1e-3)?,
        steps: cfg.get("steps", a.steps, 1000)?,
        lambda: cfg.get("lambda", a.lambda, default_lambda)?,
        sigma_prime_at_zero: sigma_prime,
        seed,
        checkpoint_every: cfg.get("checkpoint_every", a.checkpoint_every, 100)?,
        grad_tol: cfg
            .opt("grad_tol", a.grad_tol)?
            .or(if regularized { Some(1e-4) } else { None }),
        track_dissipation: true,
    };
    let log_path: Option<PathBuf> = cfg.opt("log", a.log)?;
    let result = if regularized {
        train_regularized(&mut net, &spec, &config)
    } else {
        train(&mut net, &spec, &config)
    };
    let log = match result {
        Ok(log) => log,
        Err(mflab::Error::Diverged { step, risk, log }) => {
            write_log(&log, log_path.as_deref())?;
            return Err(Failure::Diverged(format!(
                "training diverged at step {step} (risk {risk:e})"
            )));
        }
        Err(e) => return Err(e.into()),
    };
    write_log(&log, log_path.as_deref())?;
    if let Some(out) = cfg.opt::<PathBuf>("out", a.out)? {
        save_net(&net, &out).with_context(|| format!("cannot write {}", out.display()))?;
    }
    if let Some(last) = log.last() {
        eprintln!(
            "steps={} risk={} proxy={} converged={}",
            log.final_step, last.risk, last.proxy, log.converged
        );
    }
    if a.check || cfg.get("check", None, false)? {
        let mut failures = Vec::new();
        if !log.is_well_formed() {
            failures.push("trajectory log has non-increasing times or non-finite entries".to_string());
        }
        if !log.growth_bounds_hold(1.05) {
            failures.push(format!(
                "growth bounds exceeded: moment ratio {:.4}, proxy ratio {:.4}",
                log.worst_moment_slack(),
                log.worst_proxy_slack()
            ));
        }
        if !net.is_finite() {
            failures.push("trained network has non-finite weights".to_string());
        }
        if !failures.is_empty() {
            return Err(Failure::Check(failures.join("; ")));
        }
        eprintln!("check: training invariants hold");
    }
    Ok(())
}

fn rademacher_cmd(a: RademacherArgs, cfg: &Config) -> Res {
    let depth: usize = cfg.get("depth", a.depth, 0)?;
    let exhaustive = a.exhaustive || cfg.get("exhaustive", None, false)?;
    let needs_seed = !(exhaustive && depth == 0) || cfg.opt::<PathBuf>("data", a.data.clone())?.is_none();
    let seed: Option<u64> = if needs_seed {
        Some(cfg.require("seed", a.seed)?)
    } else {
        cfg.opt("seed", a.seed)?
    };
    if let Some(s) = seed {
        announce_seed(s);
    }
    let seed = seed.unwrap_or(0);
    let sample = match cfg.opt::<PathBuf>("data", a.data)? {
        Some(p) => SampleSet::new(dataset(&p)?.xs)?,
        None => SampleSet::uniform(cfg.require("n", a.n)?, cfg.require("d", a.d)?, stream_seed(seed))?,
    };
    let mut w = sink(cfg.opt::<PathBuf>("out", a.out)?.as_deref())?;
    let io = |e: io::Error| Failure::from(anyhow::Error::from(e));
    writeln!(w, "class,depth,n,d,value,std_error,upper_bound,draws,exhaustive").map_err(io)?;
    let (n, d) = (sample.len(), sample.dim());
    if depth == 0 {
        let radius = cfg.get("radius", a.radius, 1.0)?;
        let draws = cfg.get("draws", a.draws, 1000)?;
        let est = rademacher_affine(&sample, radius, exhaustive, draws, seed)?;
        let bound = radius * mflab::complexity::affine_bound(d, n);
        writeln!(
            w,
            "affine,0,{n},{d},{},{},{bound},{},{}",
            est.value, est.std_error, est.draws, est.exhaustive
        )
        .map_err(io)?;
    } else {
        let defaults = AscentConfig::default();
        let ascent = AscentConfig {
            width: cfg.get("width", a.width, defaults.width)?,
            iterations: cfg.get("iterations", a.iterations, defaults.iterations)?,
            step_size: defaults.step_size,
            draws: cfg.get("draws", a.draws, defaults.draws)?,
        };
        let budget = cfg.get("budget", a.budget, 3)?;
        let est = rademacher_deep_lower(&sample, depth, budget, seed, &ascent)?;
        writeln!(
            w,
            "deep_lower,{depth},{n},{d},{},{},{},{},false",
            est.value, est.std_error, est.upper_bound, ascent.draws
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

/// Sample generation and sign draws use distinct streams of the same seed.
fn stream_seed(seed: u64) -> u64 {
    seed ^ 0x5a3e_0000_0000_0001
}

fn gen_gap_cmd(a: GenGapArgs, cfg: &Config) -> Res {
    let target = network(&cfg.require("target", a.target)?)?;
    let seeds: Vec<u64> = cfg
        .list("seeds", a.seeds)?
        .ok_or_else(|| anyhow!("missing required setting --seeds"))?;
    let defaults = GenGapConfig::new(cfg.require("n", a.n)?, cfg.require("m", a.m)?, seeds);
    let gc = GenGapConfig {
        n_test: cfg.get("n_test", a.n_test, defaults.n_test)?,
        steps: cfg.get("steps", a.steps, defaults.steps)?,
        step_size: cfg.get("step_size", a.step_size, defaults.step_size)?,
        radius: cfg.get("radius", a.radius, defaults.radius)?,
        ..defaults
    };
    let seed_list: Vec<String> = gc.seeds.iter().map(u64::to_string).collect();
    eprintln!("seeds={}", seed_list.join(","));
    let rep = generalization_gap_experiment(&target, &gc)?;
    let mut w = sink(cfg.opt::<PathBuf>("out", a.out)?.as_deref())?;
    rep.write_csv(&mut w)?;
    w.flush().map_err(anyhow::Error::from)?;
    eprintln!(
        "bound holds {}/{}, proxy holds {}/{}",
        rep.bound_hold_count(),
        rep.rows.len(),
        rep.proxy_hold_count(),
        rep.rows.len()
    );
    Ok(())
}

fn compose_cmd(a: ComposeArgs, cfg: &Config) -> Res {
    let op = cfg.get("op", a.op, "compose".to_string())?;
    let out: PathBuf = cfg.require("out", a.out)?;
    let nets = a
        .inputs
        .iter()
        .map(|p| network(p))
        .collect::<anyhow::Result<Vec<Net>>>()?;
    let arity = |k: usize| -> anyhow::Result<()> {
        if nets.len() != k {
            bail!("--op {op} takes {k} input network(s), got {}", nets.len());
        }
        Ok(())
    };
    let result = match op.as_str() {
        "compose" => {
            if nets.len() < 2 {
                return Err(anyhow!("--op compose takes the outer network followed by its inputs").into());
            }
            calculus::compose(&nets[0], &nets[1..])?
        }
        "add" => {
            arity(2)?;
            calculus::add(&nets[0], &nets[1])?
        }
        "max" => {
            arity(2)?;
            calculus::max_of(&nets[0], &nets[1])?
        }
        "min" => {
            arity(2)?;
            calculus::min_of(&nets[0], &nets[1])?
        }
        "product" => {
            arity(2)?;
            let bound = cfg.require("bound", a.bound)?;
            calculus::product_of(&nets[0], &nets[1], bound, cfg.get("quad_points", a.quad_points, 64)?)?
        }
        "abs" => {
            arity(1)?;
            calculus::abs_of(&nets[0])?
        }
        "relu" => {
            arity(1)?;
            calculus::relu_of(&nets[0])?
        }
        "scale" => {
            arity(1)?;
            calculus::scale(&nets[0], cfg.require("factor", a.factor)?)
        }
        "lift" => {
            arity(1)?;
            calculus::lift_depth(&nets[0], cfg.require("extra", a.extra)?)?
        }
        "translate" => {
            arity(1)?;
            let shift: Vec<f64> = parse_list(&cfg.require::<String>("shift", a.shift)?)?;
            calculus::translate_input(&nets[0], &shift)?
        }
        other => return Err(anyhow!("unknown --op '{other}'").into()),
    };
    println!("proxy={}", path_norm_proxy(&result));
    save(&out, &Model::Net(result))?;
    Ok(())
}

fn make_target(a: MakeTargetArgs, cfg: &Config) -> Res {
    let widths: Vec<usize> = cfg
        .list("widths", a.widths)?
        .ok_or_else(|| anyhow!("missing required setting --widths"))?;
    let d: usize = cfg.require("d", a.d)?;
    let proxy: f64 = cfg.get("proxy", a.proxy, 1.0)?;
    let law = match cfg.get("law", a.law, "uniform".to_string())?.as_str() {
        "uniform" => WeightLaw::Uniform,
        "gaussian" => WeightLaw::Gaussian,
        other => return Err(anyhow!("unknown weight law '{other}' (expected uniform or gaussian)").into()),
    };
    let seed: u64 = cfg.require("seed", a.seed)?;
    let out: PathBuf = cfg.require("out", a.out)?;
    announce_seed(seed);
    let net = random_net::<f64>(&widths, d, proxy, law, seed)?;
    save(&out, &Model::Net(net.clone()))?;
    println!("proxy={}", path_norm_proxy(&net));
    if let Some(data_path) = cfg.opt::<PathBuf>("data", a.data)? {
        let n: usize = cfg.require("n", a.n)?;
        let dist = distribution(cfg, a.dist, a.radius, d)?;
        let points = dist.sample_with(n, &mut stream(seed, 1));
        let prov = Provenance {
            distribution: dist.to_string(),
            target: out.display().to_string(),
            seed,
        };
        let noise = cfg.get("noise", a.noise, 0.0)?;
        let data = label_with_noise(&net, points, prov, noise, seed.wrapping_add(2))?;
        let mut w = sink(Some(&data_path))?;
        data.write_csv(&mut w)?;
        w.flush().map_err(anyhow::Error::from)?;
    }
    Ok(())
}
