//! Data-parallel training over column shards.
//!
//! Each worker owns a contiguous block of sample columns together with the
//! matching slices of every `a_l`, `z_l` and `λ`. Activation, output and
//! multiplier updates are purely local. The weight update needs the whole
//! dataset, but only through the products `z_l a_{l−1}ᵀ` and `a_{l−1} a_{l−1}ᵀ`,
//! whose sizes depend on layer widths alone: workers send those, the
//! coordinator sums them in worker order, solves for `W_l` and broadcasts it.
//!
//! Workers are threads connected to the coordinator by in-memory channels
//! carrying the binary frames of [`wire`].

pub mod wire;

use std::collections::HashMap;
use std::ops::Range;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::thread;
use std::time::Instant;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::history::{Flow, History, HistoryRow, Observer, Silent};
use crate::linalg::{factor_gram, solve_right, Matrix, SpdFactor};
use crate::network::{
    activation_update, argmax_columns, check_data, draw_hidden, gram_pair, lagrange_update, objective,
    output_update, output_update_final, scores, Architecture, Hyperparams, Model, NetworkState,
};
use crate::scalar::Scalar;

use wire::{decode, encode, Body, Control, Kind, WireMessage, HEADER_BYTES};

/// Contiguous column ranges, sizes differing by at most one, remainder to the
/// earliest shards.
pub fn shard_ranges(n_samples: usize, workers: usize) -> Result<Vec<Range<usize>>> {
    if workers == 0 {
        return Err(Error::InvalidArgument("need at least one worker".into()));
    }
    if workers > n_samples {
        return Err(Error::InvalidArgument(format!("{workers} workers for {n_samples} samples")));
    }
    if workers > u16::MAX as usize {
        return Err(Error::InvalidArgument(format!("{workers} workers exceed the wire format's u16 id")));
    }
    let base = n_samples / workers;
    let extra = n_samples % workers;
    let mut start = 0;
    Ok((0..workers)
        .map(|w| {
            let len = base + usize::from(w < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

#[derive(Clone, Debug)]
pub struct ShardInput<T> {
    pub worker: usize,
    pub columns: Range<usize>,
    pub data: Dataset<T>,
}

pub fn shard_dataset<T: Scalar>(data: &Dataset<T>, workers: usize) -> Result<Vec<ShardInput<T>>> {
    Ok(shard_ranges(data.n_samples(), workers)?
        .into_iter()
        .enumerate()
        .map(|(worker, columns)| ShardInput { worker, data: data.columns(columns.clone()), columns })
        .collect())
}

/// A worker's column block of the full state.
#[derive(Clone, Debug)]
pub struct Shard<T> {
    pub worker: usize,
    pub columns: Range<usize>,
    pub state: NetworkState<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GramContribution<T> {
    pub worker: usize,
    pub layer: usize,
    /// `z_lⁿ (a_{l−1}ⁿ)ᵀ`
    pub c: Matrix<T>,
    /// `a_{l−1}ⁿ (a_{l−1}ⁿ)ᵀ`
    pub g: Matrix<T>,
}

pub fn local_gram_contribution<T: Scalar>(shard: &mut Shard<T>, l: usize) -> Result<GramContribution<T>> {
    let (c, g) = gram_pair(&mut shard.state, l)?;
    Ok(GramContribution { worker: shard.worker, layer: l, c, g })
}

/// Sums contributions in worker-id order and solves `W = ΣC (ΣG + εI)⁻¹`.
pub fn reduce_and_solve<T: Scalar>(
    contribs: &[GramContribution<T>],
    workers: usize,
    ridge: T,
) -> Result<Matrix<T>> {
    let (c, g) = reduce(contribs, workers)?;
    let (f, _) = factor_gram(&g, ridge)?;
    solve_right(&c, &f)
}

fn reduce<T: Scalar>(contribs: &[GramContribution<T>], workers: usize) -> Result<(Matrix<T>, Matrix<T>)> {
    let mut ordered: Vec<Option<&GramContribution<T>>> = vec![None; workers];
    for c in contribs {
        let slot = ordered
            .get_mut(c.worker)
            .ok_or_else(|| Error::Protocol(format!("contribution from unknown worker {}", c.worker)))?;
        if slot.is_some() {
            return Err(Error::Protocol(format!("duplicate contribution from worker {}", c.worker)));
        }
        *slot = Some(c);
    }
    let mut parts = Vec::with_capacity(workers);
    for (w, slot) in ordered.into_iter().enumerate() {
        parts.push(slot.ok_or_else(|| Error::Protocol(format!("missing contribution from worker {w}")))?);
    }
    let layer = parts[0].layer;
    if let Some(p) = parts.iter().find(|p| p.layer != layer) {
        return Err(Error::Protocol(format!("worker {} sent layer {} during layer {layer}", p.worker, p.layer)));
    }
    let mut c = parts[0].c.clone();
    let mut g = parts[0].g.clone();
    for p in &parts[1..] {
        c.add_assign(&p.c)?;
        g.add_assign(&p.g)?;
    }
    Ok((c, g))
}

#[derive(Clone, Debug)]
pub struct DistConfig {
    pub workers: usize,
    /// Record per-worker event order (weight receipt and local updates).
    pub trace: bool,
}

impl DistConfig {
    pub fn new(workers: usize) -> Self {
        Self { workers, trace: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    ToCoordinator,
    ToWorker,
}

/// One frame that crossed a worker boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct MessageRecord {
    pub direction: Direction,
    pub iteration: u32,
    pub layer: u16,
    pub kind: Kind,
    pub worker: u16,
    pub frame_bytes: usize,
    pub payload_bytes: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    ReceivedWeights,
    ActivationUpdate,
    OutputUpdate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub worker: usize,
    pub iteration: u32,
    pub layer: usize,
    pub event: Event,
}

#[derive(Clone, Debug)]
pub struct DistOutcome<T> {
    pub model: Model<T>,
    pub history: History,
    pub messages: Vec<MessageRecord>,
    pub trace: Vec<TraceEvent>,
}

pub fn distributed_train<T: Scalar>(
    data: &Dataset<T>,
    arch: &Architecture<T>,
    hp: &Hyperparams<T>,
    workers: usize,
) -> Result<DistOutcome<T>> {
    distributed_train_with(data, arch, hp, &DistConfig::new(workers), &mut Silent)
}

/// Same iteration structure as [`crate::network::train_with`], run across
/// `cfg.workers` threads. The coordinator draws the Gaussian initialization in
/// single-node order and hands each worker its columns, so any worker count
/// starts from the same point.
pub fn distributed_train_with<T: Scalar>(
    data: &Dataset<T>,
    arch: &Architecture<T>,
    hp: &Hyperparams<T>,
    cfg: &DistConfig,
    observer: &mut impl Observer<T>,
) -> Result<DistOutcome<T>> {
    check_data(arch, data)?;
    hp.validate(arch)?;
    let ranges = shard_ranges(data.n_samples(), cfg.workers)?;
    let (hidden, outputs) = draw_hidden(arch, data.n_samples(), hp.seed);
    let mut shards = Vec::with_capacity(ranges.len());
    for (worker, cols) in ranges.iter().enumerate() {
        let state = NetworkState::from_parts(
            arch,
            data.features().columns(cols.clone()),
            data.labels().columns(cols.clone()),
            hidden.iter().map(|m| m.columns(cols.clone())).collect(),
            outputs.iter().map(|m| m.columns(cols.clone())).collect(),
            Vec::new(),
            Matrix::zeros(arch.output_dim(), cols.len()),
        )?;
        shards.push(Shard { worker, columns: cols.clone(), state });
    }
    drop((hidden, outputs));

    thread::scope(|scope| {
        let (to_coord, from_workers) = channel::<Vec<u8>>();
        let mut to_workers = Vec::with_capacity(shards.len());
        let mut handles = Vec::with_capacity(shards.len());
        for shard in shards {
            let (tx, rx) = channel::<Vec<u8>>();
            to_workers.push(tx);
            let up = to_coord.clone();
            let trace = cfg.trace;
            handles.push(scope.spawn(move || {
                let worker = shard.worker;
                let mut events = Vec::new();
                let run = catch_unwind(AssertUnwindSafe(|| {
                    worker_loop(shard, arch, hp, &rx, &up, trace.then_some(&mut events))
                }));
                let failure = match run {
                    Ok(Ok(())) => None,
                    Ok(Err(e)) => Some(e.to_string()),
                    Err(_) => Some("worker panicked".to_string()),
                };
                if let Some(message) = failure {
                    let abort = WireMessage::<T> {
                        iteration: u32::MAX,
                        layer: 0,
                        worker: worker as u16,
                        body: Body::Control(Control::Abort(message)),
                    };
                    let _ = up.send(encode(&abort));
                }
                events
            }));
        }
        drop(to_coord);

        let mut coord = Coordinator {
            arch,
            hp,
            to_workers,
            from_workers,
            messages: Vec::new(),
            factors: HashMap::new(),
            weights: Vec::new(),
        };
        let result = coord.run(data, observer);
        // dropping the senders releases any worker still waiting on a frame
        let Coordinator { to_workers, messages, weights, .. } = coord;
        drop(to_workers);
        let mut trace = Vec::new();
        for h in handles {
            trace.extend(h.join().unwrap_or_default());
        }
        let history = result?;
        Ok(DistOutcome { model: Model { arch: arch.clone(), weights }, history, messages, trace })
    })
}

struct Coordinator<'a, T> {
    arch: &'a Architecture<T>,
    hp: &'a Hyperparams<T>,
    to_workers: Vec<Sender<Vec<u8>>>,
    from_workers: Receiver<Vec<u8>>,
    messages: Vec<MessageRecord>,
    /// Last Gram matrix and factor per layer; the input layer's Gram never changes.
    factors: HashMap<usize, (Matrix<T>, SpdFactor<T>)>,
    weights: Vec<Matrix<T>>,
}

impl<T: Scalar> Coordinator<'_, T> {
    fn run(&mut self, data: &Dataset<T>, observer: &mut impl Observer<T>) -> Result<History> {
        let layers = self.arch.layers();
        let n = data.n_samples() as f64;

        // iteration 0 fits the weights to the random initialization
        let contribs = self.gather(0, 1, layers)?;
        self.weights = Vec::with_capacity(layers);
        for (l, c) in (1..=layers).zip(&contribs) {
            let w = self.solve(l, c)?;
            self.weights.push(w);
        }
        for l in 1..=layers {
            self.broadcast_weights(0, l)?;
        }

        let mut history = History::default();
        let mut elapsed = 0.0;
        for k in 1..=self.hp.total_iters() {
            let it = k as u32;
            let started = Instant::now();
            let update_lambda = k > self.hp.warmup_iters;
            self.broadcast_control(it, Control::Proceed { update_lambda })?;
            for l in 1..=layers {
                self.weights[l - 1] = self.solve_layer(it, l)?;
                self.broadcast_weights(it, l)?;
            }
            let mut reports = vec![None; self.to_workers.len()];
            for _ in 0..reports.len() {
                let msg = self.receive(it)?;
                match msg.body {
                    Body::Control(Control::Report { objective, correct }) => {
                        let w = msg.worker as usize;
                        if reports[w].replace((objective, correct)).is_some() {
                            return Err(Error::Protocol(format!("duplicate report from worker {w}")));
                        }
                    }
                    other => return Err(unexpected(&msg.worker, &other, "report")),
                }
            }
            elapsed += started.elapsed().as_secs_f64();

            let mut total = 0.0;
            let mut correct = 0u64;
            for (objective, hits) in reports.into_iter().flatten() {
                total += objective;
                correct += hits;
            }
            let mut row = HistoryRow {
                iteration: k,
                wall_seconds: elapsed,
                objective: total,
                train_accuracy: correct as f64 / n,
                test_accuracy: None,
            };
            let flow = observer.observe(&mut row, self.arch, &self.weights);
            history.rows.push(row);
            if flow == Flow::Stop {
                break;
            }
        }
        self.broadcast_control(self.hp.total_iters() as u32 + 1, Control::Shutdown)?;
        Ok(history)
    }

    fn solve_layer(&mut self, it: u32, l: usize) -> Result<Matrix<T>> {
        let mut contribs = self.gather(it, l, l)?;
        self.solve(l, &contribs.pop().expect("one layer"))
    }

    /// Receives one contribution per worker for every layer in `lo..=hi`.
    /// Frames of different layers may interleave.
    fn gather(&mut self, it: u32, lo: usize, hi: usize) -> Result<Vec<Vec<GramContribution<T>>>> {
        let workers = self.to_workers.len();
        let mut by_layer: Vec<Vec<GramContribution<T>>> = (lo..=hi).map(|_| Vec::with_capacity(workers)).collect();
        for _ in 0..workers * by_layer.len() {
            let msg = self.receive(it)?;
            let layer = msg.layer as usize;
            match msg.body {
                Body::Gram { c, g } if (lo..=hi).contains(&layer) => {
                    by_layer[layer - lo].push(GramContribution { worker: msg.worker as usize, layer, c, g })
                }
                Body::Gram { .. } => {
                    return Err(Error::Protocol(format!(
                        "worker {} sent layer {layer} while reducing layers {lo}..={hi}",
                        msg.worker
                    )))
                }
                other => return Err(unexpected(&msg.worker, &other, "Gram contribution")),
            }
        }
        Ok(by_layer)
    }

    fn solve(&mut self, l: usize, contribs: &[GramContribution<T>]) -> Result<Matrix<T>> {
        let (c, g) = reduce(contribs, self.to_workers.len())?;
        let reuse = matches!(self.factors.get(&l), Some((prev, _)) if *prev == g);
        if !reuse {
            let (f, _) = factor_gram(&g, self.hp.ridge)?;
            self.factors.insert(l, (g, f));
        }
        let (_, f) = &self.factors[&l];
        solve_right(&c, f)
    }

    fn receive(&mut self, it: u32) -> Result<WireMessage<T>> {
        let frame = self
            .from_workers
            .recv()
            .map_err(|_| Error::Protocol("all workers disconnected".into()))?;
        let msg: WireMessage<T> = decode(&frame)?;
        if let Body::Control(Control::Abort(message)) = msg.body {
            return Err(Error::WorkerFailed { worker: msg.worker as usize, message });
        }
        self.messages.push(record(Direction::ToCoordinator, &msg, frame.len()));
        if msg.iteration != it {
            return Err(Error::Protocol(format!(
                "stale message from worker {}: iteration {} during iteration {it}",
                msg.worker, msg.iteration
            )));
        }
        Ok(msg)
    }

    fn send(&mut self, worker: usize, msg: &WireMessage<T>) -> Result<()> {
        let frame = encode(msg);
        self.messages.push(record(Direction::ToWorker, msg, frame.len()));
        self.to_workers[worker]
            .send(frame)
            .map_err(|_| Error::Protocol(format!("worker {worker} disconnected")))
    }

    fn broadcast_weights(&mut self, it: u32, l: usize) -> Result<()> {
        for worker in 0..self.to_workers.len() {
            let msg = WireMessage {
                iteration: it,
                layer: l as u16,
                worker: worker as u16,
                body: Body::Weights(self.weights[l - 1].clone()),
            };
            self.send(worker, &msg)?;
        }
        Ok(())
    }

    fn broadcast_control(&mut self, it: u32, ctl: Control) -> Result<()> {
        for worker in 0..self.to_workers.len() {
            let msg = WireMessage { iteration: it, layer: 0, worker: worker as u16, body: Body::Control(ctl.clone()) };
            self.send(worker, &msg)?;
        }
        Ok(())
    }
}

fn unexpected<T>(worker: &u16, body: &Body<T>, wanted: &str) -> Error {
    let got = match body {
        Body::Gram { .. } => "Gram contribution",
        Body::Weights(_) => "weights",
        Body::Control(_) => "control",
    };
    Error::Protocol(format!("worker {worker} sent {got}, expected {wanted}"))
}

fn record<T>(direction: Direction, msg: &WireMessage<T>, frame_bytes: usize) -> MessageRecord {
    MessageRecord {
        direction,
        iteration: msg.iteration,
        layer: msg.layer,
        kind: msg.kind(),
        worker: msg.worker,
        frame_bytes,
        payload_bytes: frame_bytes - HEADER_BYTES,
    }
}

struct WorkerLink<'a> {
    worker: usize,
    rx: &'a Receiver<Vec<u8>>,
    tx: &'a Sender<Vec<u8>>,
}

impl WorkerLink<'_> {
    fn send<T: Scalar>(&self, it: u32, layer: usize, body: Body<T>) -> Result<()> {
        let msg = WireMessage { iteration: it, layer: layer as u16, worker: self.worker as u16, body };
        self.tx.send(encode(&msg)).map_err(|_| Error::Protocol("coordinator disconnected".into()))
    }

    fn receive<T: Scalar>(&self, it: Option<u32>) -> Result<WireMessage<T>> {
        let frame = self.rx.recv().map_err(|_| Error::Protocol("coordinator disconnected".into()))?;
        let msg: WireMessage<T> = decode(&frame)?;
        if let Some(it) = it {
            if msg.iteration != it {
                return Err(Error::Protocol(format!(
                    "worker {}: stale frame for iteration {} during iteration {it}",
                    self.worker, msg.iteration
                )));
            }
        }
        Ok(msg)
    }

    fn receive_weights<T: Scalar>(&self, it: u32, l: usize) -> Result<Matrix<T>> {
        let msg = self.receive::<T>(Some(it))?;
        match msg.body {
            Body::Weights(w) if msg.layer as usize == l => Ok(w),
            _ => Err(Error::Protocol(format!("worker {}: expected weights for layer {l}", self.worker))),
        }
    }
}

fn send_gram<T: Scalar>(link: &WorkerLink<'_>, shard: &mut Shard<T>, it: u32, l: usize) -> Result<()> {
    let GramContribution { c, g, .. } = local_gram_contribution(shard, l)?;
    link.send(it, l, Body::Gram { c, g })
}

fn worker_loop<T: Scalar>(
    mut shard: Shard<T>,
    arch: &Architecture<T>,
    hp: &Hyperparams<T>,
    rx: &Receiver<Vec<u8>>,
    tx: &Sender<Vec<u8>>,
    mut trace: Option<&mut Vec<TraceEvent>>,
) -> Result<()> {
    let link = WorkerLink { worker: shard.worker, rx, tx };
    let layers = arch.layers();
    let worker = shard.worker;
    let mut note = |iteration: u32, layer: usize, event: Event| {
        if let Some(t) = trace.as_deref_mut() {
            t.push(TraceEvent { worker, iteration, layer, event });
        }
    };

    for l in 1..=layers {
        send_gram(&link, &mut shard, 0, l)?;
    }
    for l in 1..=layers {
        let w = link.receive_weights(0, l)?;
        shard.state.set_weight(l, w)?;
    }

    loop {
        let msg = link.receive::<T>(None)?;
        let (it, update_lambda) = match msg.body {
            Body::Control(Control::Proceed { update_lambda }) => (msg.iteration, update_lambda),
            Body::Control(Control::Shutdown) => return Ok(()),
            _ => return Err(Error::Protocol(format!("worker {}: expected control frame", shard.worker))),
        };
        for l in 1..layers {
            send_gram(&link, &mut shard, it, l)?;
            let w = link.receive_weights(it, l)?;
            shard.state.set_weight(l, w)?;
            note(it, l, Event::ReceivedWeights);
            activation_update(&mut shard.state, arch, hp, l)?;
            note(it, l, Event::ActivationUpdate);
            output_update(&mut shard.state, arch, hp, l)?;
            note(it, l, Event::OutputUpdate);
        }
        send_gram(&link, &mut shard, it, layers)?;
        let w = link.receive_weights(it, layers)?;
        shard.state.set_weight(layers, w)?;
        note(it, layers, Event::ReceivedWeights);
        output_update_final(&mut shard.state, hp)?;
        note(it, layers, Event::OutputUpdate);
        if update_lambda {
            lagrange_update(&mut shard.state, hp)?;
        }

        let local_objective = objective(&shard.state, arch, hp)?.as_f64();
        let s = scores(arch, shard.state.weights(), shard.state.input())?;
        let pred = argmax_columns(&s);
        let truth = argmax_columns(shard.state.labels());
        let correct = pred.iter().zip(&truth).filter(|(p, t)| p == t).count() as u64;
        link.send::<T>(it, 0, Body::Control(Control::Report { objective: local_objective, correct }))?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::Activation;
    use crate::data::gen_blobs;
    use crate::network::{init_state, weight_update};

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn sizes(n: usize, w: usize) -> Vec<usize> {
        shard_ranges(n, w).unwrap().iter().map(|r| r.len()).collect()
    }

    #[test]
    fn shard_examples() {
        assert_eq!(sizes(10, 2), vec![5, 5]);
        assert_eq!(sizes(10, 3), vec![4, 3, 3]);
        assert_eq!(sizes(10, 1), vec![10]);
        assert!(shard_ranges(3, 4).is_err());
        assert!(shard_ranges(3, 0).is_err());

        let data = gen_blobs(10, 2, 2, 3.0, 1).unwrap();
        let shards = shard_dataset(&data, 1).unwrap();
        assert_eq!(shards[0].data, data);
        let shards = shard_dataset(&data, 3).unwrap();
        let back = Matrix::hstack(&shards.iter().map(|s| s.data.features().clone()).collect::<Vec<_>>()).unwrap();
        assert_eq!(&back, data.features());
    }

    fn one_layer_shard(worker: usize, a: Matrix<f64>, z: Matrix<f64>) -> Shard<f64> {
        let n = a.cols();
        let arch = Architecture::new(vec![a.rows(), z.rows()], vec![]).unwrap();
        let labels = Matrix::zeros(z.rows(), n);
        let state = NetworkState::from_parts(&arch, a, labels, vec![], vec![z], vec![], Matrix::zeros(1, n)).unwrap();
        Shard { worker, columns: 0..n, state }
    }

    #[test]
    fn contribution_examples() {
        let mut s = one_layer_shard(0, m(&[&[1.0]]), m(&[&[3.0]]));
        let c = local_gram_contribution(&mut s, 1).unwrap();
        assert_eq!((c.c, c.g), (m(&[&[3.0]]), m(&[&[1.0]])));

        let mut empty = one_layer_shard(0, Matrix::zeros(2, 0), Matrix::zeros(1, 0));
        let c = local_gram_contribution(&mut empty, 1).unwrap();
        assert_eq!((c.c, c.g), (Matrix::zeros(1, 2), Matrix::zeros(2, 2)));
    }

    #[test]
    fn reduce_examples() {
        let mut s0 = one_layer_shard(0, m(&[&[1.0]]), m(&[&[1.0]]));
        let mut s1 = one_layer_shard(1, m(&[&[1.0]]), m(&[&[3.0]]));
        let c0 = local_gram_contribution(&mut s0, 1).unwrap();
        let c1 = local_gram_contribution(&mut s1, 1).unwrap();
        let w = reduce_and_solve(&[c0.clone(), c1.clone()], 2, 0.0).unwrap();
        assert!((w.get(0, 0) - 2.0).abs() < 1e-15);
        assert_eq!(reduce_and_solve(&[c1.clone(), c0.clone()], 2, 0.0).unwrap(), w);
        match reduce_and_solve(std::slice::from_ref(&c0), 2, 0.0) {
            Err(Error::Protocol(msg)) => assert!(msg.contains("worker 1")),
            other => panic!("{other:?}"),
        }
        assert!(reduce_and_solve(&[c0.clone(), c0], 2, 0.0).is_err());
    }

    #[test]
    fn single_contribution_matches_single_node_update() {
        let data = gen_blobs(12, 3, 2, 3.0, 4).unwrap();
        let arch = Architecture::uniform(vec![3, 4, 2], Activation::Relu).unwrap();
        let hp = Hyperparams::defaults(&arch);
        let mut state = init_state(&arch, &data, &hp).unwrap();
        let mut shard = Shard { worker: 0, columns: 0..12, state: state.clone() };
        let contrib = local_gram_contribution(&mut shard, 2).unwrap();
        weight_update(&mut state, &hp, 2).unwrap();
        assert_eq!(&reduce_and_solve(&[contrib], 1, hp.ridge).unwrap(), state.weight(2));
    }

    #[test]
    fn gram_partition_sums_to_whole() {
        let data = gen_blobs(30, 3, 2, 3.0, 8).unwrap();
        let arch = Architecture::uniform(vec![3, 4, 2], Activation::Relu).unwrap();
        let hp = Hyperparams::defaults(&arch);
        let state = init_state(&arch, &data, &hp).unwrap();
        let mut whole = Shard { worker: 0, columns: 0..30, state: state.clone() };
        let full = local_gram_contribution(&mut whole, 2).unwrap();
        let mut parts = Vec::new();
        for (w, r) in shard_ranges(30, 2).unwrap().into_iter().enumerate() {
            let a = state.input().columns(r.clone());
            let sub = NetworkState::from_parts(
                &arch,
                a,
                state.labels().columns(r.clone()),
                vec![state.activation(1).columns(r.clone())],
                vec![state.output(1).columns(r.clone()), state.output(2).columns(r.clone())],
                vec![],
                Matrix::zeros(2, r.len()),
            )
            .unwrap();
            let mut shard = Shard { worker: w, columns: r, state: sub };
            parts.push(local_gram_contribution(&mut shard, 2).unwrap());
        }
        let g = parts[0].g.add(&parts[1].g).unwrap();
        assert!(g.max_abs_diff(&full.g).unwrap() <= 1e-12 * (1.0 + full.g.frobenius_norm()));
    }

    #[test]
    fn one_worker_matches_single_node() {
        let data = gen_blobs(24, 2, 2, 4.0, 6).unwrap();
        let arch = Architecture::uniform(vec![2, 5, 2], Activation::Relu).unwrap();
        let hp = Hyperparams::defaults(&arch).with_iters(3, 4).with_seed(2);
        let single = crate::network::train(&data, &arch, &hp).unwrap();
        let dist = distributed_train(&data, &arch, &hp, 1).unwrap();
        assert_eq!(single.model, dist.model);
        for (a, b) in single.history.rows.iter().zip(&dist.history.rows) {
            assert!((a.objective - b.objective).abs() <= 1e-10 * (1.0 + a.objective.abs()));
            assert_eq!(a.train_accuracy, b.train_accuracy);
        }
    }

    #[test]
    fn barrier_order_holds_in_trace() {
        let data = gen_blobs(40, 2, 2, 4.0, 6).unwrap();
        let arch = Architecture::uniform(vec![2, 4, 3, 2], Activation::Relu).unwrap();
        let hp = Hyperparams::defaults(&arch).with_iters(1, 2);
        let cfg = DistConfig { workers: 3, trace: true };
        let out = distributed_train_with(&data, &arch, &hp, &cfg, &mut Silent).unwrap();
        for w in 0..3 {
            let events: Vec<_> = out.trace.iter().filter(|e| e.worker == w).collect();
            for (i, e) in events.iter().enumerate() {
                if e.event == Event::ActivationUpdate {
                    let got = events[..i].iter().any(|p| {
                        p.event == Event::ReceivedWeights && p.iteration == e.iteration && p.layer == e.layer
                    });
                    assert!(got, "worker {w} updated a_{} in iteration {} before W arrived", e.layer, e.iteration);
                }
            }
            assert_eq!(events.iter().filter(|e| e.event == Event::ActivationUpdate).count(), 3 * 2);
        }
    }

    fn fake_coordinator<'a>(
        arch: &'a Architecture<f64>,
        hp: &'a Hyperparams<f64>,
        frames: Vec<WireMessage<f64>>,
        workers: usize,
    ) -> Result<History> {
        let (up, from_workers) = channel();
        for f in &frames {
            up.send(encode(f)).unwrap();
        }
        drop(up);
        let to_workers = (0..workers).map(|_| channel().0).collect();
        let mut coord = Coordinator {
            arch,
            hp,
            to_workers,
            from_workers,
            messages: Vec::new(),
            factors: HashMap::new(),
            weights: Vec::new(),
        };
        let data = gen_blobs(4, 1, 2, 3.0, 1).unwrap();
        coord.run(&data, &mut Silent)
    }

    #[test]
    fn abort_frame_surfaces_as_worker_failure() {
        let arch = Architecture::uniform(vec![1, 2], Activation::Relu).unwrap();
        let hp = Hyperparams::defaults(&arch).with_iters(1, 1);
        let gram = Body::Gram { c: m(&[&[1.0], &[0.0]]), g: m(&[&[1.0]]) };
        let frames = vec![
            WireMessage { iteration: 0, layer: 1, worker: 0, body: gram },
            WireMessage { iteration: 0, layer: 0, worker: 1, body: Body::Control(Control::Abort("boom".into())) },
        ];
        match fake_coordinator(&arch, &hp, frames, 2) {
            Err(Error::WorkerFailed { worker: 1, message }) => assert_eq!(message, "boom"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stale_iteration_is_rejected() {
        let arch = Architecture::uniform(vec![1, 2], Activation::Relu).unwrap();
        let hp = Hyperparams::defaults(&arch).with_iters(1, 1);
        let gram = Body::Gram { c: m(&[&[1.0], &[0.0]]), g: m(&[&[1.0]]) };
        let frames = vec![WireMessage { iteration: 5, layer: 1, worker: 0, body: gram }];
        match fake_coordinator(&arch, &hp, frames, 1) {
            Err(Error::Protocol(msg)) => assert!(msg.contains("stale"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_worker_is_named() {
        let arch = Architecture::uniform(vec![1, 2], Activation::Relu).unwrap();
        let hp = Hyperparams::defaults(&arch).with_iters(1, 1);
        let gram = Body::Gram { c: m(&[&[1.0], &[0.0]]), g: m(&[&[1.0]]) };
        let frames = vec![
            WireMessage { iteration: 0, layer: 1, worker: 0, body: gram.clone() },
            WireMessage { iteration: 0, layer: 1, worker: 0, body: gram },
        ];
        match fake_coordinator(&arch, &hp, frames, 2) {
            Err(Error::Protocol(msg)) => assert!(msg.contains("worker 0"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }
}
