//! Convolutional Q-network and the DQN defender.
//!
//! The network maps a square experience tensor through two 2x2 valid
//! convolutions (stride 1), a hidden fully connected layer and a linear output
//! layer with one Q-value per defender action. Convolutions are computed as
//! matrix products over unrolled patches so a whole minibatch goes through
//! each layer in one product.

use std::io::{Read, Write};
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::{Rng, RngCore};

use crate::environment::{argmax, run_defense, DefensePolicy, Environment, GameState, SlotRecord};
use crate::error::{Error, Result};
use crate::game::{ActionSet, Allocation, GameConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    /// Input tensors are `side x side`.
    pub side: usize,
    pub filters1: usize,
    pub filters2: usize,
    pub hidden: usize,
    pub outputs: usize,
    /// Rectify the output layer too.
    pub relu_output: bool,
}

impl Architecture {
    /// 20 and 40 filters, 180 hidden units, linear output.
    pub fn standard(side: usize, outputs: usize) -> Self {
        Self {
            side,
            filters1: 20,
            filters2: 40,
            hidden: 180,
            outputs,
            relu_output: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.side < 3 {
            return Err(Error::ShapeMismatch(format!(
                "input side {} is too small for two 2x2 convolutions",
                self.side
            )));
        }
        if self.filters1 == 0 || self.filters2 == 0 || self.hidden == 0 || self.outputs == 0 {
            return Err(Error::ShapeMismatch("every layer needs at least one unit".into()));
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.side * self.side
    }

    fn s1(&self) -> usize {
        self.side - 1
    }

    fn s2(&self) -> usize {
        self.side - 2
    }

    fn p1(&self) -> usize {
        self.s1() * self.s1()
    }

    fn p2(&self) -> usize {
        self.s2() * self.s2()
    }

    pub fn flat_len(&self) -> usize {
        self.p2() * self.filters2
    }

    /// Activation sizes: input, conv1, conv2, hidden, output.
    pub fn shape_chain(&self) -> [usize; 5] {
        [
            self.input_len(),
            self.p1() * self.filters1,
            self.flat_len(),
            self.hidden,
            self.outputs,
        ]
    }
}

/// Weights and biases. Convolution kernels are stored one filter per row; a
/// conv2 column is `(di * 2 + dj) * filters1 + f`. The hidden layer reads the
/// conv2 output position-major: column `position * filters2 + f`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    arch: Architecture,
    pub conv1_w: Array2<f64>,
    pub conv1_b: Array1<f64>,
    pub conv2_w: Array2<f64>,
    pub conv2_b: Array1<f64>,
    pub fc1_w: Array2<f64>,
    pub fc1_b: Array1<f64>,
    pub fc2_w: Array2<f64>,
    pub fc2_b: Array1<f64>,
}

impl NetworkParams {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            arch,
            conv1_w: Array2::zeros((arch.filters1, 4)),
            conv1_b: Array1::zeros(arch.filters1),
            conv2_w: Array2::zeros((arch.filters2, 4 * arch.filters1)),
            conv2_b: Array1::zeros(arch.filters2),
            fc1_w: Array2::zeros((arch.hidden, arch.flat_len())),
            fc1_b: Array1::zeros(arch.hidden),
            fc2_w: Array2::zeros((arch.outputs, arch.hidden)),
            fc2_b: Array1::zeros(arch.outputs),
        })
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        let fans = [
            (4, 4 * arch.filters1),
            (4 * arch.filters1, 4 * arch.filters2),
            (arch.flat_len(), arch.hidden),
            (arch.hidden, arch.outputs),
        ];
        let weights = [&mut p.conv1_w, &mut p.conv2_w, &mut p.fc1_w, &mut p.fc2_w];
        for (w, (fan_in, fan_out)) in weights.into_iter().zip(fans) {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            w.mapv_inplace(|_| rng.random_range(-limit..=limit));
        }
        Ok(p)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    /// The eight tensors in declared order.
    pub fn slices(&self) -> [&[f64]; 8] {
        fn s(a: Option<&[f64]>) -> &[f64] {
            a.expect("standard layout")
        }
        [
            s(self.conv1_w.as_slice()),
            s(self.conv1_b.as_slice()),
            s(self.conv2_w.as_slice()),
            s(self.conv2_b.as_slice()),
            s(self.fc1_w.as_slice()),
            s(self.fc1_b.as_slice()),
            s(self.fc2_w.as_slice()),
            s(self.fc2_b.as_slice()),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 8] {
        fn s(a: Option<&mut [f64]>) -> &mut [f64] {
            a.expect("standard layout")
        }
        [
            s(self.conv1_w.as_slice_mut()),
            s(self.conv1_b.as_slice_mut()),
            s(self.conv2_w.as_slice_mut()),
            s(self.conv2_b.as_slice_mut()),
            s(self.fc1_w.as_slice_mut()),
            s(self.fc1_b.as_slice_mut()),
            s(self.fc2_w.as_slice_mut()),
            s(self.fc2_b.as_slice_mut()),
        ]
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `self += k * other`.
    pub fn add_scaled(&mut self, k: f64, other: &NetworkParams) -> Result<()> {
        if self.arch != other.arch {
            return Err(Error::ShapeMismatch("parameter sets have different architectures".into()));
        }
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += k * s);
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs_diff(&self, other: &NetworkParams) -> f64 {
        self.slices()
            .iter()
            .zip(other.slices())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Flattened experience window, zero-padded to `side * side`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceSequence {
    side: usize,
    values: Vec<f64>,
}

impl ExperienceSequence {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Unpadded input length for `devices` devices and a window of `window` slots.
pub fn input_len(devices: usize, window: usize) -> usize {
    window * 3 * devices + 2 * devices
}

/// Smallest square side holding the input.
pub fn input_side(devices: usize, window: usize) -> usize {
    let n = input_len(devices, window);
    let mut side = (n as f64).sqrt() as usize;
    while side * side < n {
        side += 1;
    }
    side
}

fn push_state(out: &mut Vec<f64>, s: &GameState, attack_scale: f64) {
    out.extend(s.prev_attack.counts().iter().map(|&n| f64::from(n) * attack_scale));
    out.extend_from_slice(s.data.values());
}

/// Flattens the last `window` (state, defense) pairs of `history` and the
/// current state. Attacks are divided by S_N (zero when S_N = 0), defenses by
/// S_M, data sizes are used as they are. `side` overrides the padded square
/// side when given.
pub fn build_input(
    history: &[(GameState, Allocation)],
    current: &GameState,
    config: &GameConfig,
    window: usize,
    side: Option<usize>,
) -> Result<ExperienceSequence> {
    if history.len() < window {
        return Err(Error::HistoryTooShort {
            need: window,
            have: history.len(),
        });
    }
    let d = config.devices;
    let need = input_len(d, window);
    let side = side.unwrap_or_else(|| input_side(d, window));
    if side * side < need {
        return Err(Error::ShapeMismatch(format!(
            "{need} inputs do not fit a {side}x{side} tensor"
        )));
    }
    let attack_scale = if config.attack_budget == 0 {
        0.0
    } else {
        1.0 / f64::from(config.attack_budget)
    };
    let defense_scale = 1.0 / f64::from(config.defense_budget.max(1));
    let mut values = Vec::with_capacity(side * side);
    for (s, m) in &history[history.len() - window..] {
        push_state(&mut values, s, attack_scale);
        values.extend(m.counts().iter().map(|&c| f64::from(c) * defense_scale));
    }
    push_state(&mut values, current, attack_scale);
    if values.len() != need {
        return Err(Error::DimensionMismatch {
            expected: need,
            got: values.len(),
        });
    }
    values.resize(side * side, 0.0);
    Ok(ExperienceSequence { side, values })
}

/// Intermediate values from a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    patches1: Array2<f64>,
    z1: Array2<f64>,
    patches2: Array2<f64>,
    z2: Array2<f64>,
    flat: Array2<f64>,
    z3: Array2<f64>,
    a3: Array2<f64>,
    z4: Array2<f64>,
    relu_output: bool,
    /// `(batch, outputs)` Q-values.
    pub output: Array2<f64>,
}

impl ForwardCache {
    /// Signs of every pre-activation that passes through a rectifier.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut z: Vec<&Array2<f64>> = vec![&self.z1, &self.z2, &self.z3];
        if self.relu_output {
            z.push(&self.z4);
        }
        z.into_iter().flat_map(|a| a.iter().map(|&v| v > 0.0)).collect()
    }
}

fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| v.max(0.0))
}

fn add_bias(z: &mut Array2<f64>, b: &Array1<f64>) {
    z.rows_mut().into_iter().for_each(|mut r| r += b);
}

fn mask_relu(grad: &mut Array2<f64>, z: &Array2<f64>) {
    grad.zip_mut_with(z, |g, &z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
}

/// Forward pass over a `(batch, side * side)` input matrix.
pub fn forward_batch(params: &NetworkParams, inputs: ArrayView2<'_, f64>) -> Result<ForwardCache> {
    let arch = params.arch;
    if inputs.ncols() != arch.input_len() {
        return Err(Error::ShapeMismatch(format!(
            "input has {} entries, network expects {}",
            inputs.ncols(),
            arch.input_len()
        )));
    }
    let batch = inputs.nrows();
    let (side, s1, s2, p1, p2, f1) = (arch.side, arch.s1(), arch.s2(), arch.p1(), arch.p2(), arch.filters1);

    let mut patches1 = Array2::zeros((batch * p1, 4));
    for b in 0..batch {
        let x = inputs.row(b);
        for r in 0..s1 {
            for c in 0..s1 {
                let mut row = patches1.row_mut(b * p1 + r * s1 + c);
                row[0] = x[r * side + c];
                row[1] = x[r * side + c + 1];
                row[2] = x[(r + 1) * side + c];
                row[3] = x[(r + 1) * side + c + 1];
            }
        }
    }
    let mut z1 = patches1.dot(&params.conv1_w.t());
    add_bias(&mut z1, &params.conv1_b);
    let a1 = relu(&z1);

    let mut patches2 = Array2::zeros((batch * p2, 4 * f1));
    {
        let a1s = a1.as_slice().expect("standard layout");
        let ps = patches2.as_slice_mut().expect("standard layout");
        for b in 0..batch {
            for r in 0..s2 {
                for c in 0..s2 {
                    let out = (b * p2 + r * s2 + c) * 4 * f1;
                    for (k, (di, dj)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                        let src = (b * p1 + (r + di) * s1 + (c + dj)) * f1;
                        ps[out + k * f1..out + (k + 1) * f1].copy_from_slice(&a1s[src..src + f1]);
                    }
                }
            }
        }
    }
    let mut z2 = patches2.dot(&params.conv2_w.t());
    add_bias(&mut z2, &params.conv2_b);
    let flat = relu(&z2)
        .into_shape_with_order((batch, arch.flat_len()))
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;

    let mut z3 = flat.dot(&params.fc1_w.t());
    add_bias(&mut z3, &params.fc1_b);
    let a3 = relu(&z3);
    let mut z4 = a3.dot(&params.fc2_w.t());
    add_bias(&mut z4, &params.fc2_b);
    let output = if arch.relu_output { relu(&z4) } else { z4.clone() };
    Ok(ForwardCache {
        patches1,
        z1,
        patches2,
        z2,
        flat,
        z3,
        a3,
        z4,
        relu_output: arch.relu_output,
        output,
    })
}

/// Q-values for one input.
pub fn forward(params: &NetworkParams, input: &ExperienceSequence) -> Result<Vec<f64>> {
    let view = ArrayView2::from_shape((1, input.values.len()), &input.values)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Ok(forward_batch(params, view)?.output.into_raw_vec_and_offset().0)
}

/// Gradients of `sum(output_gradient * output)` with respect to every
/// parameter, summed over the batch.
pub fn backward(params: &NetworkParams, cache: &ForwardCache, output_gradient: &Array2<f64>) -> Result<NetworkParams> {
    let arch = params.arch;
    if output_gradient.dim() != cache.output.dim() {
        return Err(Error::ShapeMismatch(format!(
            "output gradient {:?} does not match output {:?}",
            output_gradient.dim(),
            cache.output.dim()
        )));
    }
    let batch = output_gradient.nrows();
    let (s1, s2, p1, p2, f1, f2) = (arch.s1(), arch.s2(), arch.p1(), arch.p2(), arch.filters1, arch.filters2);
    let mut g = NetworkParams::zeros(arch)?;

    let mut dz4 = output_gradient.clone();
    if arch.relu_output {
        mask_relu(&mut dz4, &cache.z4);
    }
    g.fc2_w = dz4.t().dot(&cache.a3);
    g.fc2_b = dz4.sum_axis(Axis(0));

    let mut dz3 = dz4.dot(&params.fc2_w);
    mask_relu(&mut dz3, &cache.z3);
    g.fc1_w = dz3.t().dot(&cache.flat);
    g.fc1_b = dz3.sum_axis(Axis(0));

    let mut dz2 = dz3
        .dot(&params.fc1_w)
        .into_shape_with_order((batch * p2, f2))
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    mask_relu(&mut dz2, &cache.z2);
    g.conv2_w = dz2.t().dot(&cache.patches2);
    g.conv2_b = dz2.sum_axis(Axis(0));

    let dpatches2 = dz2.dot(&params.conv2_w);
    let mut dz1 = Array2::<f64>::zeros((batch * p1, f1));
    {
        let dp = dpatches2.as_slice().expect("standard layout");
        let da = dz1.as_slice_mut().expect("standard layout");
        for b in 0..batch {
            for r in 0..s2 {
                for c in 0..s2 {
                    let src = (b * p2 + r * s2 + c) * 4 * f1;
                    for (k, (di, dj)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                        let dst = (b * p1 + (r + di) * s1 + (c + dj)) * f1;
                        da[dst..dst + f1]
                            .iter_mut()
                            .zip(&dp[src + k * f1..src + (k + 1) * f1])
                            .for_each(|(d, s)| *d += s);
                    }
                }
            }
        }
    }
    mask_relu(&mut dz1, &cache.z1);
    g.conv1_w = dz1.t().dot(&cache.patches1);
    g.conv1_b = dz1.sum_axis(Axis(0));
    Ok(g)
}

/// With probability `1 - epsilon` the first maximizing action, otherwise a
/// uniform pick among the other actions.
pub fn dqn_select_action<R: Rng + ?Sized>(
    params: &NetworkParams,
    phi: &ExperienceSequence,
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    let q = forward(params, phi)?;
    Ok(epsilon_greedy(&q, epsilon, rng))
}

fn epsilon_greedy<R: Rng + ?Sized>(q: &[f64], epsilon: f64, rng: &mut R) -> usize {
    let best = argmax(q);
    if q.len() < 2 || rng.random::<f64>() >= epsilon {
        return best;
    }
    let j = rng.random_range(0..q.len() - 1);
    if j >= best {
        j + 1
    } else {
        j
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub phi: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next: Vec<f64>,
}

/// FIFO experience pool.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    items: std::collections::VecDeque<Transition>,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            items: std::collections::VecDeque::with_capacity(capacity.clamp(1, 1 << 16)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// `h` distinct items chosen uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, h: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        if self.items.len() < h {
            return Err(Error::MemoryUnderfull {
                need: h,
                have: self.items.len(),
            });
        }
        Ok(index::sample(rng, self.items.len(), h)
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DqnConfig {
    pub gamma: f64,
    pub epsilon: f64,
    /// Past slots in each input.
    pub window: usize,
    pub minibatch: usize,
    pub replay_capacity: usize,
    pub learning_rate: f64,
    pub hotboot_runs: usize,
    pub hotboot_slots: u64,
    pub filters1: usize,
    pub filters2: usize,
    pub hidden: usize,
    /// Fixed input side; derived from the window when `None`.
    pub side: Option<usize>,
    pub relu_output: bool,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            epsilon: 0.1,
            window: 12,
            minibatch: 16,
            replay_capacity: 10_000,
            learning_rate: 1e-3,
            hotboot_runs: 10,
            hotboot_slots: 500,
            filters1: 20,
            filters2: 40,
            hidden: 180,
            side: None,
            relu_output: false,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidParameter(format!("gamma = {} out of range", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParameter(format!("epsilon = {} out of range", self.epsilon)));
        }
        if self.window == 0 || self.minibatch == 0 {
            return Err(Error::InvalidParameter("window and minibatch must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate {} out of range",
                self.learning_rate
            )));
        }
        Ok(())
    }

    pub fn architecture(&self, devices: usize, outputs: usize) -> Architecture {
        Architecture {
            side: self.side.unwrap_or_else(|| input_side(devices, self.window)),
            filters1: self.filters1,
            filters2: self.filters2,
            hidden: self.hidden,
            outputs,
            relu_output: self.relu_output,
        }
    }
}

fn stack(rows: impl ExactSizeIterator<Item = impl AsRef<[f64]>>, width: usize) -> Array2<f64> {
    let n = rows.len();
    let mut data = Vec::with_capacity(n * width);
    for r in rows {
        data.extend_from_slice(r.as_ref());
    }
    Array2::from_shape_vec((n, width), data).expect("rows of equal width")
}

fn targets(params: &NetworkParams, batch: &[&Transition], gamma: f64) -> Result<Vec<f64>> {
    let width = params.arch.input_len();
    let next = stack(batch.iter().map(|t| &t.next), width);
    let out = forward_batch(params, next.view())?.output;
    Ok(batch
        .iter()
        .zip(out.rows())
        .map(|(t, q)| t.reward + gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect())
}

/// One gradient step on a batch with targets computed from the parameters
/// before the step. Returns the batch loss before the step.
pub fn train_on_batch(params: &mut NetworkParams, batch: &[&Transition], gamma: f64, learning_rate: f64) -> Result<f64> {
    let g = targets(params, batch, gamma)?;
    let width = params.arch.input_len();
    let x = stack(batch.iter().map(|t| &t.phi), width);
    let cache = forward_batch(params, x.view())?;
    let h = batch.len() as f64;
    let mut dout = Array2::zeros(cache.output.dim());
    let mut loss = 0.0;
    for (j, t) in batch.iter().enumerate() {
        let err = cache.output[[j, t.action]] - g[j];
        loss += err * err;
        dout[[j, t.action]] = 2.0 * err / h;
    }
    if learning_rate != 0.0 {
        let grads = backward(params, &cache, &dout)?;
        params.add_scaled(-learning_rate, &grads)?;
    }
    Ok(loss / h)
}

/// Samples `cfg.minibatch` transitions and takes one gradient step.
pub fn train_minibatch<R: Rng + ?Sized>(
    params: &mut NetworkParams,
    memory: &ReplayMemory,
    cfg: &DqnConfig,
    rng: &mut R,
) -> Result<f64> {
    let batch = memory.sample(cfg.minibatch, rng)?;
    train_on_batch(params, &batch, cfg.gamma, cfg.learning_rate)
}

/// DQN defender: random play until a full window of history exists, then
/// epsilon-greedy on the network with one minibatch step per slot.
pub struct DqnDefender {
    cfg: DqnConfig,
    game: GameConfig,
    actions: Arc<ActionSet>,
    params: NetworkParams,
    memory: ReplayMemory,
    history: Vec<(GameState, Allocation)>,
    pending: Option<ExperienceSequence>,
}

impl DqnDefender {
    pub fn new(cfg: DqnConfig, game: GameConfig, actions: Arc<ActionSet>, params: NetworkParams) -> Result<Self> {
        cfg.validate()?;
        let expected = cfg.architecture(game.devices, actions.len());
        if *params.arch() != expected {
            return Err(Error::ShapeMismatch(format!(
                "network {:?} does not match the game's {:?}",
                params.arch(),
                expected
            )));
        }
        Ok(Self {
            memory: ReplayMemory::new(cfg.replay_capacity),
            cfg,
            game,
            actions,
            params,
            history: Vec::with_capacity(2 * cfg.window + 1),
            pending: None,
        })
    }

    pub fn cold<R: Rng + ?Sized>(cfg: DqnConfig, game: GameConfig, actions: Arc<ActionSet>, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let params = NetworkParams::init(cfg.architecture(game.devices, actions.len()), rng)?;
        Self::new(cfg, game, actions, params)
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn into_params(self) -> NetworkParams {
        self.params
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    /// Forgets the slot history before a new episode; replay and weights stay.
    pub fn reset_episode(&mut self) {
        self.history.clear();
        self.pending = None;
    }

    fn input(&self, current: &GameState) -> Result<ExperienceSequence> {
        build_input(&self.history, current, &self.game, self.cfg.window, self.cfg.side)
    }
}

impl DefensePolicy for DqnDefender {
    fn select(&mut self, state: &GameState, rng: &mut dyn RngCore) -> Result<usize> {
        if self.history.len() < self.cfg.window {
            self.pending = None;
            return Ok(rng.random_range(0..self.actions.len()));
        }
        let phi = self.input(state)?;
        let a = dqn_select_action(&self.params, &phi, self.cfg.epsilon, rng)?;
        self.pending = Some(phi);
        Ok(a)
    }

    fn update(
        &mut self,
        state: &GameState,
        action: usize,
        reward: f64,
        next: &GameState,
        rng: &mut dyn RngCore,
    ) -> Result<()> {
        self.history.push((state.clone(), self.actions.get(action).clone()));
        if self.history.len() > 2 * self.cfg.window {
            self.history.drain(..self.history.len() - self.cfg.window);
        }
        if let Some(phi) = self.pending.take() {
            let next_phi = self.input(next)?;
            self.memory.push(Transition {
                phi: phi.values,
                action,
                reward,
                next: next_phi.values,
            });
        }
        if self.memory.len() >= self.cfg.minibatch {
            train_minibatch(&mut self.params, &self.memory, &self.cfg, rng)?;
        }
        Ok(())
    }
}

/// Runs the DQN defender on `env`, starting from `warm` weights when given.
pub fn run_dqn_defense(
    env: &mut Environment,
    cfg: &DqnConfig,
    horizon: u64,
    warm: Option<&NetworkParams>,
    rng: &mut dyn RngCore,
) -> Result<Vec<SlotRecord>> {
    let game = *env.config();
    let actions = Arc::clone(env.defense_actions());
    let mut defender = match warm {
        Some(p) => DqnDefender::new(*cfg, game, actions, p.clone())?,
        None => DqnDefender::cold(*cfg, game, actions, rng)?,
    };
    run_defense(env, &mut defender, horizon, rng)
}

/// Trains one network over `cfg.hotboot_runs` emulated environments of
/// `cfg.hotboot_slots` slots each, sharing a single replay memory.
pub fn hotboot_dqn<F>(config: &GameConfig, cfg: &DqnConfig, mut sampler: F, rng: &mut dyn RngCore) -> Result<NetworkParams>
where
    F: FnMut(usize) -> Result<Environment>,
{
    if cfg.hotboot_runs == 0 || cfg.hotboot_slots == 0 {
        return Err(Error::InvalidParameter(
            "hotbooting needs at least one run of at least one slot".into(),
        ));
    }
    let mut defender: Option<DqnDefender> = None;
    for run in 0..cfg.hotboot_runs {
        let mut env = sampler(run)?;
        if env.config() != config {
            return Err(Error::InvalidConfig("emulated scenario differs from the target game".into()));
        }
        let d = match defender.as_mut() {
            Some(d) => {
                d.reset_episode();
                d
            }
            None => defender.insert(DqnDefender::cold(*cfg, *config, Arc::clone(env.defense_actions()), rng)?),
        };
        run_defense(&mut env, d, cfg.hotboot_slots, rng)?;
    }
    Ok(defender.expect("at least one run").into_params())
}

pub const PARAMS_MAGIC: &[u8; 8] = b"BLTQNET\0";
const PARAMS_VERSION: u32 = 1;

/// Writes magic, version, the six architecture fields and the config hash,
/// then every tensor in declared order as little-endian `f64`.
pub fn write_params<W: Write>(params: &NetworkParams, config_hash: u64, mut out: W) -> Result<()> {
    let a = params.arch;
    let mut buf = Vec::with_capacity(64 + params.len() * 8);
    buf.extend_from_slice(PARAMS_MAGIC);
    buf.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
    for v in [a.side, a.filters1, a.filters2, a.hidden, a.outputs, usize::from(a.relu_output)] {
        let v = u32::try_from(v).map_err(|_| Error::Artifact(format!("layer size {v} too large")))?;
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&config_hash.to_le_bytes());
    for s in params.slices() {
        for v in s {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Reads parameters written by [`write_params`] and checks them against `config`.
pub fn read_params<R: Read>(config: &GameConfig, mut input: R) -> Result<NetworkParams> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let mut take = |n: usize| -> Result<&[u8]> {
        let chunk = bytes
            .get(pos..pos + n)
            .ok_or_else(|| Error::Artifact("parameter file is truncated".into()))?;
        pos += n;
        Ok(chunk)
    };
    if take(8)? != PARAMS_MAGIC {
        return Err(Error::Artifact("not a network parameter file".into()));
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
    let version = u32_at(take(4)?);
    if version != PARAMS_VERSION {
        return Err(Error::Artifact(format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 6];
    for d in &mut dims {
        *d = u32_at(take(4)?) as usize;
    }
    let hash = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
    let expected = config.config_hash();
    if hash != expected {
        return Err(Error::HashMismatch {
            expected: format!("{expected:016x}"),
            found: format!("{hash:016x}"),
        });
    }
    let arch = Architecture {
        side: dims[0],
        filters1: dims[1],
        filters2: dims[2],
        hidden: dims[3],
        outputs: dims[4],
        relu_output: dims[5] != 0,
    };
    let mut params = NetworkParams::zeros(arch)?;
    for s in params.slices_mut() {
        for v in s.iter_mut() {
            *v = f64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
        }
    }
    if pos != bytes.len() {
        return Err(Error::Artifact(format!("{} trailing bytes", bytes.len() - pos)));
    }
    Ok(params)
}
