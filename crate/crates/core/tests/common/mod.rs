//! Finite-difference gradient checking and randomized small instances shared
//! by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use decfine::ccwgan::{combine, d_loss, g_loss, mask_random, train_step, GanConfig, GanNets, ObsReplayBuffer};
use decfine::env::{mask_by_distance, JointLayout, ParticleEnv, ScenarioKind, ScenarioSpec, WorldState};
use decfine::harness::{Algorithm, ExperimentConfig};
use decfine::marl::ddpg::ddpg_policy_objective;
use decfine::marl::inference::infer_joint_observation;
use decfine::marl::{
    approx_policy_loss, critic_input, critic_loss, policy_objective, DdpgAgent, MaddpgAgent, MarlConfig, ACTION_DIM,
};
use decfine::nn::{AdamConfig, Mlp, MlpShape, OutputActivation};

pub const STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;
/// Entries with both gradients below this are compared absolutely.
pub const FLOOR: f64 = 1e-4;
pub const INSTANCES: u64 = 20;

#[derive(Debug, Clone, Copy, Default)]
pub struct FdReport {
    pub max_rel: f64,
    pub checked: usize,
    /// Coordinates where the one-sided differences disagree, i.e. a ReLU
    /// kink lies within the step.
    pub skipped: usize,
}

impl FdReport {
    pub fn merge(self, other: FdReport) -> FdReport {
        FdReport {
            max_rel: self.max_rel.max(other.max_rel),
            checked: self.checked + other.checked,
            skipped: self.skipped + other.skipped,
        }
    }

    pub fn passes(&self) -> bool {
        self.max_rel < TOLERANCE && self.checked > 0 && (self.skipped as f64) <= 0.05 * self.checked as f64
    }
}

/// Compares `analytic` with central differences of `f` around `x`.
pub fn check_gradient<F>(x: &[f64], analytic: &[f64], mut f: F) -> FdReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(x.len(), analytic.len());
    let f0 = f(x);
    let mut report = FdReport::default();
    let mut probe = x.to_vec();
    for k in 0..x.len() {
        probe[k] = x[k] + STEP;
        let fp = f(&probe);
        probe[k] = x[k] - STEP;
        let fm = f(&probe);
        probe[k] = x[k];
        let forward = (fp - f0) / STEP;
        let backward = (f0 - fm) / STEP;
        if (forward - backward).abs() > TOLERANCE * forward.abs().max(backward.abs()).max(FLOOR) {
            report.skipped += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * STEP);
        let rel = (analytic[k] - numeric).abs() / analytic[k].abs().max(numeric.abs()).max(FLOOR);
        report.max_rel = report.max_rel.max(rel);
        report.checked += 1;
    }
    report
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

/// Copy of `net` with its parameters replaced by `flat`.
pub fn with_params(net: &Mlp, flat: &[f64]) -> Mlp {
    let mut n = net.clone();
    n.set_flat_params(flat);
    n
}

fn small_marl() -> MarlConfig {
    MarlConfig {
        hidden: 8,
        ..MarlConfig::default()
    }
}

const BATCH: usize = 4;

pub fn layout() -> JointLayout {
    JointLayout::uniform(2, 3)
}

pub fn critic_td(seed: u64) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = layout();
    let agent = MaddpgAgent::new(0, &l, &small_marl(), &mut rng);
    let obs = random_matrix(&mut rng, BATCH, l.total_len(), 1.0);
    let actions = random_matrix(&mut rng, BATCH, ACTION_DIM * 2, 1.0);
    let targets = random_matrix(&mut rng, BATCH, 1, 2.0).column(0).to_owned();
    let input = critic_input(obs.view(), actions.view());
    let (_, grad) = critic_loss(&agent.critic, input.view(), &targets).unwrap();
    check_gradient(&agent.critic.flat_params(), &grad.to_flat(), |p| {
        critic_loss(&with_params(&agent.critic, p), input.view(), &targets)
            .unwrap()
            .0
    })
}

pub fn policy_chain(seed: u64, preact_reg: f64) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = layout();
    let agent = MaddpgAgent::new(1, &l, &small_marl(), &mut rng);
    let obs = random_matrix(&mut rng, BATCH, l.total_len(), 1.0);
    let (_, grad) = policy_objective(&agent, obs.view(), &l, preact_reg).unwrap();
    check_gradient(&agent.policy.flat_params(), &grad.to_flat(), |p| {
        let mut probe = agent.clone();
        probe.policy.set_flat_params(p);
        policy_objective(&probe, obs.view(), &l, preact_reg).unwrap().0
    })
}

pub fn ddpg_policy_chain(seed: u64) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agent = DdpgAgent::new(0, 3, &small_marl(), &mut rng);
    let obs = random_matrix(&mut rng, BATCH, 3, 1.0);
    let (_, grad) = ddpg_policy_objective(&agent, obs.view(), 1e-3).unwrap();
    check_gradient(&agent.policy.flat_params(), &grad.to_flat(), |p| {
        let mut probe = agent.clone();
        probe.policy.set_flat_params(p);
        ddpg_policy_objective(&probe, obs.view(), 1e-3).unwrap().0
    })
}

pub fn approx_policy(seed: u64) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Mlp::init(
        &MlpShape::three_layer(3, 8, ACTION_DIM, OutputActivation::Tanh),
        &mut rng,
    );
    let obs = random_matrix(&mut rng, BATCH, 3, 1.0);
    let actions = random_matrix(&mut rng, BATCH, ACTION_DIM, 1.0);
    let (_, grad) = approx_policy_loss(&net, obs.view(), actions.view(), -1.0, 1e-3).unwrap();
    check_gradient(&net.flat_params(), &grad.to_flat(), |p| {
        approx_policy_loss(&with_params(&net, p), obs.view(), actions.view(), -1.0, 1e-3)
            .unwrap()
            .0
    })
}

/// Random batch of `(full, partial, mask)` with per-row agent masks.
pub fn masked_rows(rng: &mut ChaCha8Rng, l: &JointLayout) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let full = random_matrix(rng, BATCH, l.total_len(), 1.0);
    let mut partial = full.clone();
    let mut mask = Array2::ones(full.dim());
    for r in 0..BATCH {
        let hidden = rng.random_range(0..l.n_agents());
        for k in l.agent_range(hidden) {
            mask[[r, k]] = 0.0;
            partial[[r, k]] = rng.random_range(-1.0..1.0);
        }
    }
    (full, partial, mask)
}

pub fn generator_through_combine(seed: u64) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = layout();
    let nets = GanNets::new(l.total_len(), 8, &mut rng);
    let (full, partial, mask) = masked_rows(&mut rng, &l);
    let (_, grad) = g_loss(&nets, full.view(), partial.view(), mask.view()).unwrap();
    check_gradient(&nets.generator.flat_params(), &grad.to_flat(), |p| {
        let probe = GanNets {
            generator: with_params(&nets.generator, p),
            discriminator: nets.discriminator.clone(),
        };
        g_loss(&probe, full.view(), partial.view(), mask.view()).unwrap().0
    })
}

pub fn discriminator_with_penalty(seed: u64) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = layout().total_len();
    let nets = GanNets::new(len, 8, &mut rng);
    let real = random_matrix(&mut rng, BATCH, len, 1.0);
    let fake = random_matrix(&mut rng, BATCH, len, 1.0);
    let eps: Vec<f64> = (0..BATCH).map(|_| rng.random()).collect();
    let d = &nets.discriminator;
    let loss = d_loss(d, real.view(), fake.view(), 10.0, &eps).unwrap();
    check_gradient(&d.flat_params(), &loss.grad.to_flat(), |p| {
        d_loss(&with_params(d, p), real.view(), fake.view(), 10.0, &eps)
            .unwrap()
            .total
    })
}

/// Input gradient of `Σ c ⊙ net(x)` against finite differences in `x`.
pub fn input_gradient(seed: u64, act: OutputActivation) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Mlp::init(&MlpShape::three_layer(5, 8, 3, act), &mut rng);
    let x = random_matrix(&mut rng, BATCH, 5, 1.0);
    let c = random_matrix(&mut rng, BATCH, 3, 1.0);
    let tape = net.forward(x.view()).unwrap();
    let (_, gx) = net.backward(&tape, c.view()).unwrap();
    let eval = |flat: &[f64]| {
        let xs = ArrayView2::from_shape((BATCH, 5), flat).unwrap();
        (net.forward(xs).unwrap().output() * &c).sum()
    };
    check_gradient(x.as_slice().unwrap(), gx.as_slice().unwrap(), eval)
}

/// Runs `case` on `INSTANCES` seeds and merges the reports.
pub fn over_instances(case: impl Fn(u64) -> FdReport) -> FdReport {
    (0..INSTANCES)
        .map(|s| case(1000 + s))
        .fold(FdReport::default(), FdReport::merge)
}

/// Checks one random masking/inference instance; returns a description of
/// the first violated property.
pub fn masking_instance(seed: u64, gan: &GanNets, spec: &ScenarioSpec) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = spec.joint_layout();
    let n = layout.n_agents();
    let mut env = ParticleEnv::new(spec.clone());
    env.reset(&mut rng);
    let positions = env.state().positions();
    let truth = env.observe().flatten();
    let range = rng.random_range(0.0..3.0);
    let p = mask_by_distance(&env.observe(), layout, &positions, range, &mut rng);
    let partial = p.partial.flatten();

    let mut about = vec![None; layout.total_len()];
    for j in 0..n {
        for k in layout.elements_about(j) {
            about[k] = Some(j);
        }
    }
    for i in 0..n {
        for k in layout.agent_range(i) {
            let expected = match about[k] {
                Some(j) if j != i => {
                    let d = (positions[i][0] - positions[j][0]).hypot(positions[i][1] - positions[j][1]);
                    if d <= range {
                        1.0
                    } else {
                        0.0
                    }
                }
                _ => 1.0,
            };
            if p.mask[k] != expected {
                return Err(format!(
                    "seed {seed}: mask[{k}] = {} for agent {i}, expected {expected}",
                    p.mask[k]
                ));
            }
            if p.mask[k] == 1.0 && partial[k] != truth[k] {
                return Err(format!("seed {seed}: visible entry {k} changed"));
            }
        }
        for j in 0..n {
            if p.graph.sees(i, j) != p.graph.sees(j, i) {
                return Err(format!("seed {seed}: visibility of {i},{j} is asymmetric"));
            }
        }
    }

    let inferred = infer_joint_observation(gan, layout, &truth, &p.graph, &mut rng);
    for view in &inferred.components {
        for k in 0..truth.len() {
            if view.mask[k] == 1.0 && view.inferred[k] != truth[k] {
                return Err(format!("seed {seed}: observed entry {k} altered by inference"));
            }
        }
        if view.generated == view.mask.iter().all(|&m| m == 1.0) {
            return Err(format!("seed {seed}: generator use does not match the mask"));
        }
        for &i in &view.members {
            for k in layout.agent_range(i) {
                let outsider = about[k].is_some_and(|j| !view.members.contains(&j));
                if view.mask[k] != if outsider { 0.0 } else { 1.0 } {
                    return Err(format!("seed {seed}: member {i} entry {k} has mask {}", view.mask[k]));
                }
            }
        }
    }
    let (assembled, mask) = inferred.assembled(layout);
    if mask
        .iter()
        .zip(&assembled)
        .zip(&truth)
        .any(|((&m, &a), &t)| m == 1.0 && a != t)
    {
        return Err(format!(
            "seed {seed}: assembled view differs from truth on observed entries"
        ));
    }

    let sample = mask_random(&truth, layout, &mut rng);
    let hidden = sample.masked_agents.len();
    if hidden == 0 || hidden >= n {
        return Err(format!("seed {seed}: random mask hides {hidden} of {n} agents"));
    }
    for k in 0..truth.len() {
        let owner = (0..n).find(|&i| layout.agent_range(i).contains(&k)).unwrap();
        let refers = about[k].is_some_and(|j| sample.masked_agents.contains(&j));
        let expected = if sample.masked_agents.contains(&owner) || refers {
            0.0
        } else {
            1.0
        };
        if sample.mask[k] != expected {
            return Err(format!(
                "seed {seed}: random mask[{k}] = {}, expected {expected}",
                sample.mask[k]
            ));
        }
    }
    let g = gan.generate(&sample.partial, &sample.mask);
    let once = combine(&sample.partial, &sample.mask, &g);
    if combine(&once, &sample.mask, &g) != once {
        return Err(format!("seed {seed}: combine is not idempotent"));
    }
    if once
        .iter()
        .zip(&truth)
        .zip(&sample.mask)
        .any(|((&c, &t), &m)| m == 1.0 && c != t)
    {
        return Err(format!("seed {seed}: m ⊙ ô differs from m ⊙ o"));
    }
    Ok(())
}

/// Shared cooperative-navigation reward computed from scratch.
pub fn navigation_oracle(state: &WorldState) -> f64 {
    let d = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let mut r = 0.0;
    for l in &state.landmarks {
        let mut best = f64::INFINITY;
        for a in &state.agents {
            best = best.min(d(a.position, l.position));
        }
        r -= best;
    }
    for (i, a) in state.agents.iter().enumerate() {
        for b in &state.agents[i + 1..] {
            if d(a.position, b.position) < a.size + b.size {
                r -= 1.0;
            }
        }
    }
    r
}

/// Random navigation state, with agents sometimes placed in contact.
pub fn random_navigation_state(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> WorldState {
    let mut env = ParticleEnv::new(spec.clone());
    env.reset(rng);
    let mut state = env.state().clone();
    for a in state.agents.iter_mut() {
        a.position = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
        a.velocity = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    }
    if rng.random_bool(0.5) {
        let p = state.agents[0].position;
        let r = rng.random_range(0.0..0.4);
        let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        state.agents[1].position = [p[0] + r * t.cos(), p[1] + r * t.sin()];
    }
    for l in state.landmarks.iter_mut() {
        l.position = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
    }
    state
}

/// Two agents with two-dimensional slices whose matching coordinates have
/// correlation `CORRELATION`.
pub const CORRELATION: f64 = 0.9;

pub fn correlated_gaussian(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let z: [f64; 4] = std::array::from_fn(|_| rng.sample(rand_distr::StandardNormal));
    let s = (1.0 - CORRELATION * CORRELATION).sqrt();
    vec![z[0], z[1], CORRELATION * z[0] + s * z[2], CORRELATION * z[1] + s * z[3]]
}

#[derive(Debug, Clone, Copy)]
pub struct InferenceScore {
    /// Mean squared error over masked entries with generator filling.
    pub gan: f64,
    /// The same with the standard normal fill the generator starts from.
    pub noise: f64,
}

/// Trains a CC-WGAN on the correlated Gaussian for `steps` generator updates
/// and scores it on fresh randomly masked samples.
pub fn gaussian_inference(steps: usize, seed: u64) -> InferenceScore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = JointLayout::uniform(2, 2);
    let cfg = GanConfig {
        batch_size: 64,
        hidden: 32,
        generator_adam: AdamConfig::with_lr(1e-3),
        discriminator_adam: AdamConfig::with_lr(1e-3),
        ..GanConfig::default()
    };
    let mut buffer = ObsReplayBuffer::new(10_000);
    for _ in 0..10_000 {
        buffer.push(correlated_gaussian(&mut rng));
    }
    let mut nets = GanNets::new(l.total_len(), cfg.hidden, &mut rng);
    for _ in 0..steps {
        train_step(&mut nets, &buffer, &l, &cfg, &mut rng);
    }
    let (mut gan, mut noise, mut count) = (0.0, 0.0, 0usize);
    for _ in 0..4000 {
        let o = correlated_gaussian(&mut rng);
        let s = mask_random(&o, &l, &mut rng);
        let (inferred, _) = nets.infer(&s.partial, &s.mask);
        for k in 0..o.len() {
            if s.mask[k] == 0.0 {
                gan += (inferred[k] - o[k]).powi(2);
                noise += (s.partial[k] - o[k]).powi(2);
                count += 1;
            }
        }
    }
    InferenceScore {
        gan: gan / count as f64,
        noise: noise / count as f64,
    }
}

/// Few short episodes with small networks, enough to exercise both phases
/// and every update path.
pub fn tiny_config(scenario: ScenarioKind, algorithm: Algorithm) -> ExperimentConfig {
    ExperimentConfig {
        scenario,
        algorithm,
        episodes_centralized: 3,
        episodes_decentralized: 2,
        trials: 2,
        seed: 11,
        perturb: true,
        batch_size: 32,
        hidden: 8,
        gan_hidden: 8,
        gan_batch_size: 16,
        ..ExperimentConfig::default()
    }
}

/// Every file with extension `ext` under `dir`, keyed by relative path.
pub fn files_with_extension(dir: &Path, ext: &str) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == ext) {
                out.insert(
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}
