//! Training loop. Each iteration samples a handful of meta-tasks and runs
//! three stages in a fixed order:
//!
//!   1. the discriminator ascends the adversarial objective on task supports;
//!   2. the classifier head descends its cross entropy on labeled supports;
//!   3. the shared encoder adapts per task on supports (plain SGD on the
//!      combined task objective), then takes one meta step on the summed
//!      query gradients.
//!
//! The meta gradient is first order by default; the exact second-order form
//! chains Hessian-vector products back through the inner trajectory.
//! `inner_steps = 0` degenerates to joint training on the pooled splits,
//! which is the no-meta ablation baseline. An empty target pool with
//! `beta = 0` degenerates further to plain source-only training.

pub mod adam;
pub mod task;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{
    eval_batch, eval_loss, hvp_theta_e, Batch, LossKind, NetworkConfig, NetworkParams, Seq,
};
use adam::AdamState;
use task::{shuffle, MetaTask, TaskSampler};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparams {
    /// Inner-loop SGD rate for the per-task encoder adaptation.
    pub delta: f64,
    /// Adam rate for the discriminator head.
    pub lambda_d: f64,
    /// Adam rate for the classifier head.
    pub kappa: f64,
    /// Scale on the meta step; the effective outer rate is alpha * meta_lr.
    pub alpha: f64,
    pub meta_lr: f64,
    /// Weight of the adversarial term in the task objective.
    pub beta: f64,
    /// Weight of the classification term in the task objective.
    pub gamma: f64,
    /// Sessions drawn per meta-task before the support/query halving.
    pub batch_size: usize,
    /// Inner adaptation steps per task; 0 disables meta-learning entirely.
    pub inner_steps: usize,
    /// Meta-tasks per iteration.
    pub meta_batch: usize,
    /// First-order meta gradient when true; exact second order otherwise.
    pub first_order: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            delta: 3e-3,
            lambda_d: 3e-3,
            kappa: 3e-3,
            alpha: 1.0,
            meta_lr: 3e-3,
            beta: 2.0,
            gamma: 2.5,
            batch_size: 256,
            inner_steps: 1,
            meta_batch: 4,
            first_order: true,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive: [(&str, f64); 5] = [
            ("delta", self.delta),
            ("lambda_d", self.lambda_d),
            ("kappa", self.kappa),
            ("alpha", self.alpha),
            ("meta_lr", self.meta_lr),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if self.meta_batch == 0 {
            return Err(Error::Config("meta_batch must be at least 1".into()));
        }
        Ok(())
    }

    fn task_kind(&self) -> LossKind {
        LossKind::Task { beta: self.beta, gamma: self.gamma }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StopCriterion {
    pub max_iterations: u64,
    /// Consecutive non-improving holdout evaluations tolerated before
    /// stopping; 0 disables early stopping and the holdout split.
    pub early_stop_patience: u32,
    /// Fraction of labeled source sessions held out for the stop metric.
    pub holdout_fraction: f64,
}

impl Default for StopCriterion {
    fn default() -> Self {
        StopCriterion { max_iterations: 300, early_stop_patience: 10, holdout_fraction: 0.1 }
    }
}

impl StopCriterion {
    pub fn validate(&self) -> Result<()> {
        // max_iterations 0 is legal: training returns the initialization.
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config(format!(
                "holdout_fraction must be in [0, 1), got {}",
                self.holdout_fraction
            )));
        }
        Ok(())
    }
}

/// Pre-embedded training inputs. Target sessions carry no labels anywhere in
/// this structure; nothing downstream of it can read one.
#[derive(Debug, Clone, Default)]
pub struct TrainData {
    pub src: Vec<Seq>,
    pub src_y: Vec<f64>,
    pub tgt: Vec<Seq>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub iteration: u64,
    /// Mean support classification loss across this iteration's tasks.
    pub loss_c: f64,
    /// Mean support adversarial loss across tasks; 0 when beta is 0.
    pub loss_ad: f64,
    /// Mean query task objective at the adapted parameters.
    pub loss_task: f64,
    /// Classification loss on the holdout split, when one exists.
    pub holdout_loss: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainEvent {
    Iteration(HistoryRow),
    /// Non-finite loss or gradient; the iteration was rolled back.
    SkippedStep { iteration: u64, consecutive: u32 },
    EarlyStop { iteration: u64, best_iteration: u64, best_loss: f64 },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub history: Vec<HistoryRow>,
    pub iterations_run: u64,
    pub stopped_early: bool,
    pub skipped_steps: u64,
}

/// Plain SGD adaptation of the encoder on one support split. Returns the
/// adapted parameters and the trajectory of iterates before each step (the
/// second-order chain walks it backwards). None on non-finite math.
pub fn inner_adapt(
    cfg: &NetworkConfig,
    theta_e: &[f64],
    tw: &[f64],
    td: &[f64],
    support: &Batch<'_>,
    delta: f64,
    steps: usize,
    kind: LossKind,
) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut cur = theta_e.to_vec();
    let mut trajectory = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (loss, g) = eval_batch::<f64>(cfg, &cur, tw, td, support, kind);
        if !loss.is_finite() || !g.is_finite() {
            return None;
        }
        trajectory.push(cur.clone());
        for (p, gi) in cur.iter_mut().zip(&g.e) {
            *p -= delta * gi;
        }
    }
    Some((cur, trajectory))
}

/// One task's contribution to the meta gradient: adapt on the support split,
/// evaluate the task objective on the query split, and differentiate with
/// respect to the pre-adaptation encoder. First order stops at the adapted
/// parameters; second order multiplies through (I - delta H) per inner step.
pub fn task_meta_gradient(
    cfg: &NetworkConfig,
    theta_e: &[f64],
    tw: &[f64],
    td: &[f64],
    support: &Batch<'_>,
    query: &Batch<'_>,
    hp: &Hyperparams,
) -> Option<(f64, Vec<f64>)> {
    let kind = hp.task_kind();
    let (adapted, trajectory) =
        inner_adapt(cfg, theta_e, tw, td, support, hp.delta, hp.inner_steps, kind)?;
    let (lq, gq) = eval_batch::<f64>(cfg, &adapted, tw, td, query, kind);
    if !lq.is_finite() || !gq.is_finite() {
        return None;
    }
    if hp.first_order {
        return Some((lq, gq.e));
    }
    let mut v = gq.e;
    for iterate in trajectory.iter().rev() {
        let hv = hvp_theta_e(cfg, iterate, tw, td, &v, support, kind);
        if hv.iter().any(|x| !x.is_finite()) {
            return None;
        }
        for (vi, hvi) in v.iter_mut().zip(&hv) {
            *vi -= hp.delta * hvi;
        }
    }
    Some((lq, v))
}

/// One splitmix64 round of `seed ^ salt`; every component that needs its own
/// stream derives it this way so streams never alias across purposes.
pub(crate) fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = (seed ^ salt).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn gather<'a>(data: &'a [Seq], map: &[usize], idx: &[usize]) -> Vec<&'a [Vec<f64>]> {
    idx.iter().map(|&i| data[map[i]].as_slice()).collect()
}

fn gather_y(ys: &[f64], map: &[usize], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| ys[map[i]]).collect()
}

const MAX_CONSECUTIVE_SKIPS: u32 = 3;

struct IterationSnapshot {
    params: NetworkParams,
    adam_e: AdamState,
    adam_w: AdamState,
    adam_d: AdamState,
}

/// Runs the full loop. `network.init_seed` fixes the starting weights; `seed`
/// fixes every sampling decision. Identical inputs give identical outcomes.
///
/// When early stopping is active the returned parameters are the best
/// holdout snapshot, not the final iterate.
pub fn train(
    data: &TrainData,
    network: NetworkConfig,
    hp: &Hyperparams,
    stop: &StopCriterion,
    seed: u64,
    on_event: &mut dyn FnMut(&TrainEvent),
) -> Result<TrainOutcome> {
    hp.validate()?;
    stop.validate()?;
    if data.src.is_empty() {
        return Err(Error::Input("no source sessions to train on".into()));
    }
    if data.src.len() != data.src_y.len() {
        return Err(Error::Input(format!(
            "{} source sessions but {} labels",
            data.src.len(),
            data.src_y.len()
        )));
    }
    for &y in &data.src_y {
        if y != 0.0 && y != 1.0 {
            return Err(Error::Input(format!("labels must be 0 or 1, got {y}")));
        }
    }
    for seq in data.src.iter().chain(&data.tgt) {
        for v in seq {
            if v.len() != network.input_dim {
                return Err(Error::Config(format!(
                    "embedding dimension {} does not match network input {}",
                    v.len(),
                    network.input_dim
                )));
            }
        }
    }

    let mut params = NetworkParams::init(network);
    let enc_len = params.theta_e.len();
    let head_len = params.theta_omega.len();
    let mut adam_e = AdamState::new(enc_len, hp.alpha * hp.meta_lr);
    let mut adam_w = AdamState::new(head_len, hp.kappa);
    let mut adam_d = AdamState::new(head_len, hp.lambda_d);

    // Carve the holdout before any task sampling so the pools never mix.
    let early_stopping = stop.early_stop_patience > 0 && stop.holdout_fraction > 0.0;
    let n_src = data.src.len();
    let (holdout, src_map): (Vec<usize>, Vec<usize>) = if early_stopping {
        let mut all: Vec<usize> = (0..n_src).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x686f_6c64));
        shuffle(&mut all, &mut rng);
        let m = ((stop.holdout_fraction * n_src as f64).round() as usize)
            .min(n_src.saturating_sub(2));
        let mut holdout = all[..m].to_vec();
        let mut pool = all[m..].to_vec();
        holdout.sort_unstable();
        pool.sort_unstable();
        (holdout, pool)
    } else {
        (Vec::new(), (0..n_src).collect())
    };
    let early_stopping = early_stopping && !holdout.is_empty();
    let tgt_map: Vec<usize> = (0..data.tgt.len()).collect();

    let mut sampler = TaskSampler::new(
        src_map.len(),
        tgt_map.len(),
        hp.batch_size,
        derive_seed(seed, 0x7461_736b),
    );
    let hold_refs = gather(&data.src, &holdout, &(0..holdout.len()).collect::<Vec<_>>());
    let hold_y = gather_y(&data.src_y, &holdout, &(0..holdout.len()).collect::<Vec<_>>());

    let kind = hp.task_kind();
    let mut history = Vec::new();
    let mut skipped_steps = 0u64;
    let mut consecutive = 0u32;
    let mut best: Option<(f64, u64, NetworkParams)> = None;
    let mut bad_evals = 0u32;
    let mut stopped_early = false;
    let mut iterations_run = 0u64;

    for iteration in 1..=stop.max_iterations {
        let snapshot = IterationSnapshot {
            params: params.clone(),
            adam_e: adam_e.clone(),
            adam_w: adam_w.clone(),
            adam_d: adam_d.clone(),
        };
        let tasks: Vec<MetaTask> = (0..hp.meta_batch).map(|_| sampler.next_task()).collect();
        let k = tasks.len() as f64;
        let mut ok = true;
        let mut loss_ad = 0.0;
        let mut loss_c = 0.0;
        let mut loss_task = 0.0;

        // Stage 1: discriminator ascent on the summed support adversarial
        // objectives. Skipped entirely when the encoder would never feel it.
        if hp.beta != 0.0 {
            let mut g_d = vec![0.0; head_len];
            let mut l_sum = 0.0;
            for t in &tasks {
                let src = gather(&data.src, &src_map, &t.sup_src);
                let src_y = gather_y(&data.src_y, &src_map, &t.sup_src);
                let tgt = gather(&data.tgt, &tgt_map, &t.sup_tgt);
                let batch = Batch { src: &src, src_y: &src_y, tgt: &tgt };
                let (l, g) = eval_batch::<f64>(
                    &network,
                    &params.theta_e,
                    &params.theta_omega,
                    &params.theta_d,
                    &batch,
                    LossKind::Adversarial,
                );
                l_sum += l;
                for (acc, gi) in g_d.iter_mut().zip(&g.d) {
                    *acc += gi;
                }
            }
            if l_sum.is_finite() && g_d.iter().all(|g| g.is_finite()) {
                for g in &mut g_d {
                    *g = -*g;
                }
                adam_d.step(&mut params.theta_d, &g_d);
                loss_ad = l_sum / k;
            } else {
                ok = false;
            }
        }

        // Stage 2: classifier head descent on the summed support cross
        // entropies. Labels exist only on the source side.
        if ok {
            let mut g_w = vec![0.0; head_len];
            let mut l_sum = 0.0;
            for t in &tasks {
                let src = gather(&data.src, &src_map, &t.sup_src);
                let src_y = gather_y(&data.src_y, &src_map, &t.sup_src);
                let batch = Batch::source_only(&src, &src_y);
                let (l, g) = eval_batch::<f64>(
                    &network,
                    &params.theta_e,
                    &params.theta_omega,
                    &params.theta_d,
                    &batch,
                    LossKind::Classification,
                );
                l_sum += l;
                for (acc, gi) in g_w.iter_mut().zip(&g.omega) {
                    *acc += gi;
                }
            }
            if l_sum.is_finite() && g_w.iter().all(|g| g.is_finite()) {
                adam_w.step(&mut params.theta_omega, &g_w);
                loss_c = l_sum / k;
            } else {
                ok = false;
            }
        }

        // Stage 3: per-task encoder adaptation, then one meta step on the
        // summed query gradients. inner_steps = 0 pools support and query
        // into one joint step instead.
        if ok {
            let mut g_e = vec![0.0; enc_len];
            let mut l_sum = 0.0;
            'tasks: for t in &tasks {
                if hp.inner_steps == 0 {
                    let all_src: Vec<usize> =
                        t.sup_src.iter().chain(&t.qry_src).copied().collect();
                    let all_tgt: Vec<usize> =
                        t.sup_tgt.iter().chain(&t.qry_tgt).copied().collect();
                    let src = gather(&data.src, &src_map, &all_src);
                    let src_y = gather_y(&data.src_y, &src_map, &all_src);
                    let tgt = gather(&data.tgt, &tgt_map, &all_tgt);
                    let batch = Batch { src: &src, src_y: &src_y, tgt: &tgt };
                    let (l, g) = eval_batch::<f64>(
                        &network,
                        &params.theta_e,
                        &params.theta_omega,
                        &params.theta_d,
                        &batch,
                        kind,
                    );
                    if !l.is_finite() || !g.is_finite() {
                        ok = false;
                        break 'tasks;
                    }
                    l_sum += l;
                    for (acc, gi) in g_e.iter_mut().zip(&g.e) {
                        *acc += gi;
                    }
                } else {
                    let sup_src = gather(&data.src, &src_map, &t.sup_src);
                    let sup_y = gather_y(&data.src_y, &src_map, &t.sup_src);
                    let sup_tgt = gather(&data.tgt, &tgt_map, &t.sup_tgt);
                    let support = Batch { src: &sup_src, src_y: &sup_y, tgt: &sup_tgt };
                    let qry_src = gather(&data.src, &src_map, &t.qry_src);
                    let qry_y = gather_y(&data.src_y, &src_map, &t.qry_src);
                    let qry_tgt = gather(&data.tgt, &tgt_map, &t.qry_tgt);
                    let query = Batch { src: &qry_src, src_y: &qry_y, tgt: &qry_tgt };
                    match task_meta_gradient(
                        &network,
                        &params.theta_e,
                        &params.theta_omega,
                        &params.theta_d,
                        &support,
                        &query,
                        hp,
                    ) {
                        Some((lq, g)) => {
                            l_sum += lq;
                            for (acc, gi) in g_e.iter_mut().zip(&g) {
                                *acc += gi;
                            }
                        }
                        None => {
                            ok = false;
                            break 'tasks;
                        }
                    }
                }
            }
            if ok && l_sum.is_finite() && g_e.iter().all(|g| g.is_finite()) {
                adam_e.step(&mut params.theta_e, &g_e);
                loss_task = l_sum / k;
            } else {
                ok = false;
            }
        }

        if !ok {
            params = snapshot.params;
            adam_e = snapshot.adam_e;
            adam_w = snapshot.adam_w;
            adam_d = snapshot.adam_d;
            skipped_steps += 1;
            consecutive += 1;
            on_event(&TrainEvent::SkippedStep { iteration, consecutive });
            if consecutive >= MAX_CONSECUTIVE_SKIPS {
                return Err(Error::Numeric(format!(
                    "{consecutive} consecutive non-finite training steps, last at iteration {iteration}"
                )));
            }
            iterations_run = iteration;
            continue;
        }
        consecutive = 0;
        iterations_run = iteration;

        let holdout_loss = if early_stopping {
            let batch = Batch::source_only(&hold_refs, &hold_y);
            Some(eval_loss(
                &network,
                &params.theta_e,
                &params.theta_omega,
                &params.theta_d,
                &batch,
                LossKind::Classification,
            ))
        } else {
            None
        };
        let row = HistoryRow { iteration, loss_c, loss_ad, loss_task, holdout_loss };
        history.push(row);
        on_event(&TrainEvent::Iteration(row));

        if let Some(hl) = holdout_loss {
            let improved = match &best {
                Some((b, _, _)) => hl < b - 1e-12,
                None => true,
            };
            if improved {
                best = Some((hl, iteration, params.clone()));
                bad_evals = 0;
            } else {
                bad_evals += 1;
                if bad_evals >= stop.early_stop_patience {
                    let (b, bi, _) = best.as_ref().expect("improved at least once");
                    on_event(&TrainEvent::EarlyStop {
                        iteration,
                        best_iteration: *bi,
                        best_loss: *b,
                    });
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    if let Some((_, _, best_params)) = best {
        params = best_params;
    }
    Ok(TrainOutcome { params, history, iterations_run, stopped_early, skipped_steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_network() -> NetworkConfig {
        NetworkConfig {
            input_dim: 3,
            hidden_dim: 4,
            attention_dim: 3,
            head_hidden_dim: 3,
            init_seed: 5,
        }
    }

    fn tiny_data(n_src: usize, n_tgt: usize) -> TrainData {
        // Anomalous sessions carry a distinct direction in the embedding.
        let mut data = TrainData::default();
        for i in 0..n_src {
            let anom = i % 3 == 0;
            let base = if anom { [0.8, -0.6, 0.2] } else { [-0.4, 0.5, 0.1] };
            let len = 1 + (i % 3);
            let seq: Seq = (0..len)
                .map(|t| {
                    let w = 0.1 * (t as f64 + 1.0) * ((i % 7) as f64 - 3.0) / 3.0;
                    vec![base[0] + w * 0.05, base[1] - w * 0.03, base[2] + w * 0.02]
                })
                .collect();
            data.src.push(seq);
            data.src_y.push(if anom { 1.0 } else { 0.0 });
        }
        for i in 0..n_tgt {
            let len = 1 + (i % 2);
            let seq: Seq = (0..len)
                .map(|t| vec![0.2 + 0.01 * i as f64, -0.1, 0.3 - 0.02 * t as f64])
                .collect();
            data.tgt.push(seq);
        }
        data
    }

    fn quick_hp() -> Hyperparams {
        Hyperparams { batch_size: 8, meta_batch: 2, ..Hyperparams::default() }
    }

    fn quick_stop(iters: u64) -> StopCriterion {
        StopCriterion { max_iterations: iters, early_stop_patience: 0, holdout_fraction: 0.0 }
    }

    fn sink() -> impl FnMut(&TrainEvent) {
        |_: &TrainEvent| {}
    }

    #[test]
    fn single_inner_step_is_one_sgd_step() {
        let net = tiny_network();
        let params = NetworkParams::init(net);
        let data = tiny_data(6, 0);
        let src: Vec<&[Vec<f64>]> = data.src.iter().map(|s| s.as_slice()).collect();
        let batch = Batch::source_only(&src, &data.src_y);
        let kind = LossKind::Task { beta: 0.0, gamma: 2.5 };
        let (_, g) = eval_batch::<f64>(
            &net,
            &params.theta_e,
            &params.theta_omega,
            &params.theta_d,
            &batch,
            kind,
        );
        let delta = 0.01;
        let (adapted, traj) = inner_adapt(
            &net,
            &params.theta_e,
            &params.theta_omega,
            &params.theta_d,
            &batch,
            delta,
            1,
            kind,
        )
        .unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj[0], params.theta_e);
        for (i, a) in adapted.iter().enumerate() {
            assert!((a - (params.theta_e[i] - delta * g.e[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn first_order_meta_gradient_is_query_gradient_at_adapted_params() {
        let net = tiny_network();
        let params = NetworkParams::init(net);
        let data = tiny_data(8, 4);
        let src: Vec<&[Vec<f64>]> = data.src[..4].iter().map(|s| s.as_slice()).collect();
        let qsrc: Vec<&[Vec<f64>]> = data.src[4..].iter().map(|s| s.as_slice()).collect();
        let tgt: Vec<&[Vec<f64>]> = data.tgt[..2].iter().map(|s| s.as_slice()).collect();
        let qtgt: Vec<&[Vec<f64>]> = data.tgt[2..].iter().map(|s| s.as_slice()).collect();
        let support = Batch { src: &src, src_y: &data.src_y[..4], tgt: &tgt };
        let query = Batch { src: &qsrc, src_y: &data.src_y[4..], tgt: &qtgt };
        let hp = Hyperparams { inner_steps: 2, delta: 0.01, ..quick_hp() };
        let kind = hp.task_kind();
        let (lq, g) = task_meta_gradient(
            &net,
            &params.theta_e,
            &params.theta_omega,
            &params.theta_d,
            &support,
            &query,
            &hp,
        )
        .unwrap();
        let (adapted, _) = inner_adapt(
            &net,
            &params.theta_e,
            &params.theta_omega,
            &params.theta_d,
            &support,
            hp.delta,
            hp.inner_steps,
            kind,
        )
        .unwrap();
        let (lq2, gq) = eval_batch::<f64>(
            &net,
            &adapted,
            &params.theta_omega,
            &params.theta_d,
            &query,
            kind,
        );
        assert!((lq - lq2).abs() < 1e-15);
        assert_eq!(g, gq.e);
    }

    // phi(theta) = L_query(theta - delta * grad L_support(theta)); the exact
    // meta gradient must match central differences of phi.
    #[test]
    fn second_order_meta_gradient_matches_finite_differences() {
        let net = tiny_network();
        let params = NetworkParams::init(net);
        let data = tiny_data(8, 4);
        let src: Vec<&[Vec<f64>]> = data.src[..4].iter().map(|s| s.as_slice()).collect();
        let qsrc: Vec<&[Vec<f64>]> = data.src[4..].iter().map(|s| s.as_slice()).collect();
        let tgt: Vec<&[Vec<f64>]> = data.tgt[..2].iter().map(|s| s.as_slice()).collect();
        let qtgt: Vec<&[Vec<f64>]> = data.tgt[2..].iter().map(|s| s.as_slice()).collect();
        let support = Batch { src: &src, src_y: &data.src_y[..4], tgt: &tgt };
        let query = Batch { src: &qsrc, src_y: &data.src_y[4..], tgt: &qtgt };
        let hp = Hyperparams {
            inner_steps: 1,
            delta: 0.05,
            first_order: false,
            ..quick_hp()
        };
        let kind = hp.task_kind();
        let (_, g) = task_meta_gradient(
            &net,
            &params.theta_e,
            &params.theta_omega,
            &params.theta_d,
            &support,
            &query,
            &hp,
        )
        .unwrap();
        let phi = |theta: &[f64]| -> f64 {
            let (adapted, _) = inner_adapt(
                &net,
                theta,
                &params.theta_omega,
                &params.theta_d,
                &support,
                hp.delta,
                1,
                kind,
            )
            .unwrap();
            eval_loss(&net, &adapted, &params.theta_omega, &params.theta_d, &query, kind)
        };
        let h = 1e-5;
        let mut theta = params.theta_e.clone();
        for i in 0..theta.len() {
            let orig = theta[i];
            theta[i] = orig + h;
            let lp = phi(&theta);
            theta[i] = orig - h;
            let lm = phi(&theta);
            theta[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let denom = fd.abs().max(g[i].abs()).max(1e-6);
            assert!((fd - g[i]).abs() / denom < 1e-4, "coord {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = tiny_data(24, 10);
        let hp = quick_hp();
        let stop = quick_stop(5);
        let a = train(&data, tiny_network(), &hp, &stop, 7, &mut sink()).unwrap();
        let b = train(&data, tiny_network(), &hp, &stop, 7, &mut sink()).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.history, b.history);
        let c = train(&data, tiny_network(), &hp, &stop, 8, &mut sink()).unwrap();
        assert_ne!(a.params.theta_e, c.params.theta_e);
    }

    #[test]
    fn stages_touch_only_their_parameter_groups() {
        let data = tiny_data(24, 10);
        let stop = quick_stop(1);
        let init = NetworkParams::init(tiny_network());
        // Only the discriminator rate is live.
        let hp =
            Hyperparams { kappa: 0.0, meta_lr: 0.0, lambda_d: 3e-3, ..quick_hp() };
        let out = train(&data, tiny_network(), &hp, &stop, 3, &mut sink()).unwrap();
        assert_eq!(out.params.theta_e, init.theta_e);
        assert_eq!(out.params.theta_omega, init.theta_omega);
        assert_ne!(out.params.theta_d, init.theta_d);
        // Only the classifier head rate is live.
        let hp =
            Hyperparams { kappa: 3e-3, meta_lr: 0.0, lambda_d: 0.0, ..quick_hp() };
        let out = train(&data, tiny_network(), &hp, &stop, 3, &mut sink()).unwrap();
        assert_eq!(out.params.theta_e, init.theta_e);
        assert_ne!(out.params.theta_omega, init.theta_omega);
        assert_eq!(out.params.theta_d, init.theta_d);
        // Only the meta rate is live.
        let hp =
            Hyperparams { kappa: 0.0, meta_lr: 3e-3, lambda_d: 0.0, ..quick_hp() };
        let out = train(&data, tiny_network(), &hp, &stop, 3, &mut sink()).unwrap();
        assert_ne!(out.params.theta_e, init.theta_e);
        assert_eq!(out.params.theta_omega, init.theta_omega);
        assert_eq!(out.params.theta_d, init.theta_d);
    }

    #[test]
    fn source_only_and_no_meta_paths_run() {
        let mut data = tiny_data(24, 0);
        data.tgt.clear();
        let hp = Hyperparams { beta: 0.0, ..quick_hp() };
        let out = train(&data, tiny_network(), &hp, &quick_stop(4), 1, &mut sink()).unwrap();
        assert_eq!(out.history.len(), 4);
        assert!(out.history.iter().all(|r| r.loss_ad == 0.0));

        let data = tiny_data(24, 10);
        let hp = Hyperparams { inner_steps: 0, ..quick_hp() };
        let out = train(&data, tiny_network(), &hp, &quick_stop(4), 1, &mut sink()).unwrap();
        assert_eq!(out.history.len(), 4);
        assert!(out.history.iter().all(|r| r.loss_task.is_finite()));
    }

    #[test]
    fn constant_holdout_loss_triggers_early_stop() {
        let data = tiny_data(30, 0);
        // All rates zero: parameters never move, holdout loss never improves.
        let hp = Hyperparams {
            beta: 0.0,
            kappa: 0.0,
            meta_lr: 0.0,
            lambda_d: 0.0,
            ..quick_hp()
        };
        let stop = StopCriterion {
            max_iterations: 100,
            early_stop_patience: 3,
            holdout_fraction: 0.2,
        };
        let mut events = Vec::new();
        let out =
            train(&data, tiny_network(), &hp, &stop, 2, &mut |e| events.push(*e)).unwrap();
        assert!(out.stopped_early);
        // First evaluation sets the best; the next `patience` fail to improve.
        assert_eq!(out.iterations_run, 1 + 3);
        assert!(events
            .iter()
            .any(|e| matches!(e, TrainEvent::EarlyStop { best_iteration: 1, .. })));
        assert_eq!(out.params, NetworkParams::init(tiny_network()));
    }

    #[test]
    fn non_finite_data_aborts_after_three_skips() {
        let mut data = tiny_data(12, 0);
        data.src[0][0][0] = f64::NAN;
        let hp = Hyperparams { beta: 0.0, batch_size: 24, ..quick_hp() };
        let mut events = Vec::new();
        let err = train(&data, tiny_network(), &hp, &quick_stop(10), 1, &mut |e| {
            events.push(*e)
        })
        .unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
        assert_eq!(err.exit_code(), crate::error::EXIT_NUMERIC);
        let skips = events
            .iter()
            .filter(|e| matches!(e, TrainEvent::SkippedStep { .. }))
            .count();
        assert_eq!(skips, 3);
    }

    #[test]
    fn rejects_bad_inputs() {
        let data = TrainData::default();
        let hp = quick_hp();
        assert!(train(&data, tiny_network(), &hp, &quick_stop(1), 0, &mut sink()).is_err());
        let mut data = tiny_data(6, 0);
        data.src_y[0] = 0.5;
        assert!(train(&data, tiny_network(), &hp, &quick_stop(1), 0, &mut sink()).is_err());
        let mut data = tiny_data(6, 0);
        data.src[0][0] = vec![1.0, 2.0];
        assert!(train(&data, tiny_network(), &hp, &quick_stop(1), 0, &mut sink()).is_err());
        let bad = Hyperparams { batch_size: 1, ..quick_hp() };
        assert!(bad.validate().is_err());
    }
}
