//! Adam with cosine annealing, and the coordinator/worker training loop.
//!
//! Each network is driven by a [`NetworkWorker`] that owns its parameters,
//! optimizer moments and the precomputed Fourier features of its nodes. The
//! coordinator gathers predictions in subdomain order, evaluates the loss and
//! scatters per-subdomain gradients back. The single-threaded and threaded
//! paths run the same worker code in the same order of floating-point
//! operations, so their trajectories agree bit for bit.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::mpsc;
use std::time::Instant;

use ndarray::{s, Array2};

use crate::energy::{field_pipeline, loss, loss_backward, FieldSolution, LossReport};
use crate::error::{Error, Result};
use crate::model::{
    backward, forward_features, init_network, normalize_coords, rff_embed, Activations, Gradient, NetworkParams,
    Trainable,
};
use crate::problem::Problem;

/// Loss growth factor, relative to the epoch-10 loss, treated as divergence.
const DIVERGENCE_FACTOR: f64 = 1e3;
const DIVERGENCE_REFERENCE_EPOCH: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    #[default]
    CosineNoRestart,
    Constant,
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schedule::CosineNoRestart => "cosine_no_restart",
            Schedule::Constant => "constant",
        })
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine_no_restart" | "cosine" => Ok(Schedule::CosineNoRestart),
            "constant" => Ok(Schedule::Constant),
            other => Err(Error::Validation(format!("unknown schedule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub schedule: Schedule,
    /// Network `i` is initialized from `seed + i`.
    pub seed: u64,
    pub workers: usize,
    /// Progress is logged every `log_every` epochs (0 disables).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 1e-3,
            epochs: 20_000,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            schedule: Schedule::CosineNoRestart,
            seed: 0,
            workers: 1,
            log_every: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Validation(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if self.epochs == 0 {
            return Err(Error::Validation("epochs must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Validation("workers must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.adam_eps <= 0.0 {
            return Err(Error::Validation("invalid Adam hyperparameters".into()));
        }
        Ok(())
    }
}

/// Half-cosine decay from `lr0` at epoch 0 to 0 at `epochs`.
pub fn cosine_lr(epoch: usize, config: &TrainConfig) -> f64 {
    match config.schedule {
        Schedule::Constant => config.lr0,
        Schedule::CosineNoRestart => {
            let t = epoch.min(config.epochs) as f64 / config.epochs as f64;
            0.5 * config.lr0 * (1.0 + (std::f64::consts::PI * t).cos())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Trainable,
    pub second: Trainable,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &NetworkParams) -> Self {
        AdamState {
            first: Trainable::zeros_like(&params.spec),
            second: Trainable::zeros_like(&params.spec),
            step: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.first.is_finite() && self.second.is_finite()
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut NetworkParams, grads: &Gradient, state: &mut AdamState, lr: f64, config: &TrainConfig) {
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let p = params.trainable.slices_mut();
    let m = state.first.slices_mut();
    let v = state.second.slices_mut();
    let g = grads.slices();
    for (((p, m), v), g) in p.into_iter().zip(m).zip(v).zip(g) {
        for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + config.adam_eps);
        }
    }
    params.bump_version();
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub strain_energy: f64,
    pub external_work: f64,
    pub lr: f64,
    /// Milliseconds since the start of training.
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Checkpoint files written for the final parameters, if any.
    pub checkpoints: Vec<PathBuf>,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,loss,strain_energy,external_work,lr,wall_ms";

    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.records {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{:.3}",
                r.epoch, r.loss, r.strain_energy, r.external_work, r.lr, r.wall_ms
            )?;
        }
        Ok(())
    }

    /// Loss values only; timing excluded.
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Initializes every network of the problem, seeding network `i` with
/// `seed + i`.
pub fn init_networks(problem: &Problem, seed: u64) -> Result<Vec<NetworkParams>> {
    problem
        .networks()
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let mut spec = spec.clone();
            spec.seed = seed.wrapping_add(i as u64);
            init_network(&spec)
        })
        .collect()
}

/// Fourier features of every node served by network `net`, in subdomain
/// order, and the row ranges of each subdomain. Coordinates are normalized by
/// the joint bounding box of the network's subdomains.
fn network_features(
    problem: &Problem,
    params: &NetworkParams,
    net: usize,
) -> (Array2<f64>, Vec<(usize, usize, usize)>) {
    let subs = problem.subdomains_of(net);
    let meshes: Vec<_> = subs.iter().map(|&s| &problem.subdomains()[s].mesh).collect();
    let coords = ndarray::concatenate(
        ndarray::Axis(0),
        &meshes
            .iter()
            .map(|m| m.coordinate_array())
            .collect::<Vec<_>>()
            .iter()
            .map(|a| a.view())
            .collect::<Vec<_>>(),
    )
    .expect("subdomains of one network share a dimension");
    let (lo, hi) = crate::mesh::bounding_box(
        meshes
            .iter()
            .flat_map(|m| m.nodes().iter().map(|n| n.coords.as_slice())),
        problem.dim(),
    );
    let features = rff_embed(&normalize_coords(&coords, &lo, &hi), &params.frequencies);
    let mut ranges = Vec::with_capacity(subs.len());
    let mut start = 0;
    for (&s, m) in subs.iter().zip(&meshes) {
        ranges.push((s, start, start + m.node_count()));
        start += m.node_count();
    }
    (features, ranges)
}

/// Owner of one network during training.
struct NetworkWorker {
    index: usize,
    params: NetworkParams,
    adam: AdamState,
    features: Array2<f64>,
    /// `(subdomain, first row, end row)` in the stacked batch.
    ranges: Vec<(usize, usize, usize)>,
    cache: Option<Activations>,
}

impl NetworkWorker {
    fn new(problem: &Problem, index: usize, params: NetworkParams) -> Self {
        let (features, ranges) = network_features(problem, &params, index);
        NetworkWorker {
            index,
            adam: AdamState::new(&params),
            params,
            features,
            ranges,
            cache: None,
        }
    }

    fn forward(&mut self) -> Result<Vec<(usize, Array2<f64>)>> {
        let (y, acts) = forward_features(&self.params, self.features.clone())?;
        self.cache = Some(acts);
        Ok(self
            .ranges
            .iter()
            .map(|&(s, a, b)| (s, y.slice(s![a..b, ..]).to_owned()))
            .collect())
    }

    fn gradient(&self, upstream: &[Array2<f64>]) -> Result<Gradient> {
        let acts = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Worker(format!("network {} has no forward pass to differentiate", self.index)))?;
        let views: Vec<_> = self.ranges.iter().map(|&(s, _, _)| upstream[s].view()).collect();
        let g = ndarray::concatenate(ndarray::Axis(0), &views).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        backward(&self.params, acts, &g)
    }

    fn update(&mut self, upstream: &[Array2<f64>], lr: f64, config: &TrainConfig) -> Result<()> {
        let grad = self.gradient(upstream)?;
        if !grad.is_finite() {
            return Err(Error::Worker(format!(
                "network {} produced a non-finite gradient",
                self.index
            )));
        }
        adam_step(&mut self.params, &grad, &mut self.adam, lr, config);
        self.cache = None;
        debug_assert!(self.adam.is_finite());
        Ok(())
    }
}

/// Places per-network predictions into subdomain order.
fn gather(problem: &Problem, parts: Vec<(usize, Array2<f64>)>) -> Result<Vec<Array2<f64>>> {
    let mut slots: Vec<Option<Array2<f64>>> = vec![None; problem.subdomains().len()];
    for (s, a) in parts {
        slots[s] = Some(a);
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(s, a)| a.ok_or_else(|| Error::Worker(format!("no prediction received for subdomain {s}"))))
        .collect()
}

/// Loss and per-network parameter gradients at the given parameters.
pub fn loss_and_gradients(problem: &Problem, networks: &[NetworkParams]) -> Result<(LossReport, Vec<Gradient>)> {
    check_networks(problem, networks)?;
    let mut workers: Vec<_> = networks
        .iter()
        .enumerate()
        .map(|(i, p)| NetworkWorker::new(problem, i, p.clone()))
        .collect();
    let mut parts = Vec::new();
    for w in &mut workers {
        parts.extend(w.forward()?);
    }
    let state = loss(&gather(problem, parts)?, problem)?;
    let upstream = loss_backward(&state, problem)?;
    let grads = workers
        .iter()
        .map(|w| w.gradient(&upstream))
        .collect::<Result<Vec<_>>>()?;
    Ok((state.report, grads))
}

fn check_networks(problem: &Problem, networks: &[NetworkParams]) -> Result<()> {
    if networks.len() != problem.networks().len() {
        return Err(Error::ShapeMismatch(format!(
            "{} networks supplied, problem has {}",
            networks.len(),
            problem.networks().len()
        )));
    }
    Ok(())
}

/// Per-epoch bookkeeping shared by both training paths.
struct Monitor<'a> {
    config: &'a TrainConfig,
    start: Instant,
    reference: Option<f64>,
    history: TrainHistory,
}

impl<'a> Monitor<'a> {
    fn new(config: &'a TrainConfig) -> Self {
        Monitor {
            config,
            start: Instant::now(),
            reference: None,
            history: TrainHistory::default(),
        }
    }

    fn record(&mut self, epoch: usize, report: LossReport, lr: f64) -> Result<()> {
        let l = report.loss;
        if !l.is_finite() {
            return Err(Error::Divergence { epoch, loss: l });
        }
        if epoch == DIVERGENCE_REFERENCE_EPOCH {
            self.reference = Some(l.abs());
        }
        if let Some(r) = self.reference {
            if l > DIVERGENCE_FACTOR * r {
                return Err(Error::Divergence { epoch, loss: l });
            }
        }
        let wall_ms = self.start.elapsed().as_secs_f64() * 1e3;
        if self.config.log_every > 0 && (epoch.is_multiple_of(self.config.log_every) || epoch + 1 == self.config.epochs)
        {
            log::info!(
                "epoch {epoch:>6}  loss {l:+.6e}  strain {:.6e}  work {:.6e}  lr {lr:.3e}",
                report.strain_energy,
                report.external_work
            );
        }
        self.history.records.push(EpochRecord {
            epoch,
            loss: l,
            strain_energy: report.strain_energy,
            external_work: report.external_work,
            lr,
            wall_ms,
        });
        Ok(())
    }
}

/// Trains all networks on the calling thread.
pub fn train_single(problem: &Problem, config: &TrainConfig) -> Result<(Vec<NetworkParams>, TrainHistory)> {
    config.validate()?;
    let mut workers: Vec<_> = init_networks(problem, config.seed)?
        .into_iter()
        .enumerate()
        .map(|(i, p)| NetworkWorker::new(problem, i, p))
        .collect();
    let mut monitor = Monitor::new(config);
    for epoch in 0..config.epochs {
        let lr = cosine_lr(epoch, config);
        let mut parts = Vec::new();
        for w in &mut workers {
            parts.extend(w.forward()?);
        }
        let state = loss(&gather(problem, parts)?, problem)?;
        monitor.record(epoch, state.report, lr)?;
        let upstream = loss_backward(&state, problem)?;
        for w in &mut workers {
            w.update(&upstream, lr, config)?;
        }
    }
    Ok((workers.into_iter().map(|w| w.params).collect(), monitor.history))
}

enum Command {
    Forward,
    Update(std::sync::Arc<Vec<Array2<f64>>>, f64),
    Finish,
}

enum Reply {
    Predictions(Vec<(usize, Array2<f64>)>),
    Updated,
    Params(Vec<(usize, NetworkParams)>),
    Failed(Error),
}

fn worker_loop(
    mut owned: Vec<NetworkWorker>,
    config: &TrainConfig,
    rx: mpsc::Receiver<Command>,
    tx: mpsc::Sender<Reply>,
) {
    while let Ok(cmd) = rx.recv() {
        let reply = match cmd {
            Command::Forward => {
                let mut parts = Vec::new();
                let mut failure = None;
                for w in &mut owned {
                    match w.forward() {
                        Ok(p) => parts.extend(p),
                        Err(e) => {
                            failure = Some(e);
                            break;
                        }
                    }
                }
                match failure {
                    Some(e) => Reply::Failed(e),
                    None => Reply::Predictions(parts),
                }
            }
            Command::Update(upstream, lr) => match owned.iter_mut().try_for_each(|w| w.update(&upstream, lr, config)) {
                Ok(()) => Reply::Updated,
                Err(e) => Reply::Failed(e),
            },
            Command::Finish => {
                let params = owned.drain(..).map(|w| (w.index, w.params)).collect();
                let _ = tx.send(Reply::Params(params));
                return;
            }
        };
        if tx.send(reply).is_err() {
            return;
        }
    }
}

fn receive(rx: &mpsc::Receiver<Reply>, worker: usize) -> Result<Reply> {
    match rx.recv() {
        Ok(Reply::Failed(e)) => Err(Error::Worker(format!("worker {worker} failed: {e}"))),
        Ok(r) => Ok(r),
        Err(_) => Err(Error::Worker(format!("worker {worker} terminated unexpectedly"))),
    }
}

/// Trains with `config.workers` threads. Network `j` lives on worker
/// `j mod workers` for the whole run; the loss is evaluated centrally.
pub fn train_parallel(problem: &Problem, config: &TrainConfig) -> Result<(Vec<NetworkParams>, TrainHistory)> {
    config.validate()?;
    let k = config.workers;
    let nets = problem.networks().len();
    if k > nets {
        return Err(Error::Validation(format!(
            "{k} workers requested but the problem has only {nets} network(s)"
        )));
    }
    let mut buckets: Vec<Vec<NetworkWorker>> = (0..k).map(|_| Vec::new()).collect();
    for (i, p) in init_networks(problem, config.seed)?.into_iter().enumerate() {
        buckets[i % k].push(NetworkWorker::new(problem, i, p));
    }

    std::thread::scope(|scope| {
        let mut links = Vec::with_capacity(k);
        for owned in buckets {
            let (cmd_tx, cmd_rx) = mpsc::channel();
            let (rep_tx, rep_rx) = mpsc::channel();
            scope.spawn(move || worker_loop(owned, config, cmd_rx, rep_tx));
            links.push((cmd_tx, rep_rx));
        }
        let broadcast =
            |links: &[(mpsc::Sender<Command>, mpsc::Receiver<Reply>)], make: &dyn Fn() -> Command| -> Result<()> {
                for (w, (tx, _)) in links.iter().enumerate() {
                    tx.send(make())
                        .map_err(|_| Error::Worker(format!("worker {w} terminated unexpectedly")))?;
                }
                Ok(())
            };

        let run = || -> Result<TrainHistory> {
            let mut monitor = Monitor::new(config);
            for epoch in 0..config.epochs {
                let lr = cosine_lr(epoch, config);
                broadcast(&links, &|| Command::Forward)?;
                let mut parts = Vec::new();
                for (w, (_, rx)) in links.iter().enumerate() {
                    match receive(rx, w)? {
                        Reply::Predictions(p) => parts.extend(p),
                        _ => return Err(Error::Worker(format!("worker {w} sent an unexpected reply"))),
                    }
                }
                let state = loss(&gather(problem, parts)?, problem)?;
                monitor.record(epoch, state.report, lr)?;
                let upstream = std::sync::Arc::new(loss_backward(&state, problem)?);
                broadcast(&links, &|| Command::Update(upstream.clone(), lr))?;
                for (w, (_, rx)) in links.iter().enumerate() {
                    receive(rx, w)?;
                }
            }
            Ok(monitor.history)
        };
        let outcome = run();

        // Always collect the workers, even after a failure, so that the scope
        // can join them.
        let mut params: Vec<Option<NetworkParams>> = vec![None; nets];
        for (w, (tx, rx)) in links.iter().enumerate() {
            if tx.send(Command::Finish).is_ok() {
                if let Ok(Reply::Params(ps)) = receive(rx, w) {
                    for (i, p) in ps {
                        params[i] = Some(p);
                    }
                }
            }
        }
        drop(links);
        let history = outcome?;
        let params = params
            .into_iter()
            .enumerate()
            .map(|(i, p)| p.ok_or_else(|| Error::Worker(format!("parameters of network {i} were lost"))))
            .collect::<Result<Vec<_>>>()?;
        Ok((params, history))
    })
}

/// Dispatches on `config.workers`.
pub fn train(problem: &Problem, config: &TrainConfig) -> Result<(Vec<NetworkParams>, TrainHistory)> {
    if config.workers <= 1 {
        train_single(problem, config)
    } else {
        train_parallel(problem, config)
    }
}

/// Forward pass of trained networks followed by the field pipeline.
pub fn evaluate(networks: &[NetworkParams], problem: &Problem) -> Result<FieldSolution> {
    check_networks(problem, networks)?;
    let mut parts = Vec::new();
    for (i, p) in networks.iter().enumerate() {
        parts.extend(NetworkWorker::new(problem, i, p.clone()).forward()?);
    }
    field_pipeline(&gather(problem, parts)?, problem)
}
